mod common;

use common::cv_dataset;
use proptest::prelude::*;
use rkn_core::ssm::*;

#[test]
fn generation_order_does_not_matter() {
    let model = make_cv_model(CV_DT, CV_SIGMA_V).unwrap();
    let init = InitialLaw::cv_default();
    let ds = generate_dataset(&model, &named_mix("s2", 9).unwrap(), &init, 30, 11, Split::Val).unwrap();
    // rebuild episodes one by one, last first, on this thread
    for k in (0..ds.len()).rev() {
        let ep = &ds.episodes[k];
        let sched = make_schedule(ep.schedule.scenario(), 30).unwrap();
        let again = simulate_episode(&model, &sched, &init, 30, episode_seed(11, Split::Val, k as u64)).unwrap();
        assert_eq!(again.x, ep.x);
        assert_eq!(again.z, ep.z);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let threaded = pool
        .install(|| generate_dataset(&model, &named_mix("s2", 9).unwrap(), &init, 30, 11, Split::Val))
        .unwrap();
    assert_eq!(threaded, ds);
}

#[test]
fn splits_draw_different_noise() {
    let a = cv_dataset(ScenarioId::S1, 3, 10, 5, Split::Train);
    let b = cv_dataset(ScenarioId::S1, 3, 10, 5, Split::Test);
    assert_ne!(a.episodes[0].z, b.episodes[0].z);
}

#[test]
fn measurement_noise_variance_matches_schedule() {
    let ds = cv_dataset(ScenarioId::S1, 2000, 150, 99, Split::Train);
    let n = ds.len() as f64;
    for t in 0..150 {
        let var = ds.episodes.iter().map(|e| (e.z[t][0] - e.x[t][0]).powi(2)).sum::<f64>() / n;
        let expect = ds.episodes[0].schedule.variance(t);
        assert!((var / expect - 1.0).abs() < 0.15, "t = {t}: {var} vs {expect}");
    }
}

#[test]
fn s2_mix_is_balanced_and_interleaved() {
    let ds = cv_dataset(ScenarioId::S1, 1, 5, 0, Split::Train);
    assert_eq!(ds.episodes[0].schedule.scenario(), ScenarioId::S1);
    let mix = named_mix("s2", 5).unwrap();
    assert_eq!(mix, vec![(ScenarioId::S2a, 3), (ScenarioId::S2b, 2)]);
    assert_eq!(
        interleave_mix(&mix),
        vec![ScenarioId::S2a, ScenarioId::S2b, ScenarioId::S2a, ScenarioId::S2b, ScenarioId::S2a]
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dataset_round_trips_bit_exactly(seed in any::<u64>(), count in 1usize..5, len in 1usize..20, mix in 0usize..4) {
        let name = ["s1", "s2", "s3", "s3b"][mix];
        let model = make_cv_model(CV_DT, CV_SIGMA_V).unwrap();
        let ds = generate_dataset(&model, &named_mix(name, count).unwrap(), &InitialLaw::cv_default(), len, seed, Split::Train).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = parse_dataset(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn parser_never_panics_on_mangled_input(cut in 0usize..4000, byte in any::<u8>()) {
        let ds = cv_dataset(ScenarioId::S1, 2, 5, 1, Split::Test);
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let i = cut % buf.len();
        buf[i] = byte;
        if let Ok(text) = std::str::from_utf8(&buf) {
            let _ = parse_dataset(text);
        }
        let _ = parse_dataset(std::str::from_utf8(&buf[..i]).unwrap_or(""));
    }
}
