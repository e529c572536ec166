mod common;

use common::{cv_dataset, rel_diff};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rkn_core::eval::{decorrelation_stat, gain_trace};
use rkn_core::kalman::*;
use rkn_core::linalg::is_spd;
use rkn_core::ssm::{make_cv_model, InitialLaw, NoiseSchedule, ScenarioId, Split, StateSpaceModel};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn spd(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (matrix(dim, dim), 0.05f64..1.0).prop_map(move |(a, d)| &a * a.transpose() + DMatrix::identity(dim, dim) * d)
}

type System = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// (F, H, Q, R, P) with m ≤ 4, n ≤ 2.
fn system() -> impl Strategy<Value = System> {
    (1usize..=4, 1usize..=2).prop_flat_map(|(m, n)| (matrix(m, m), matrix(n, m), spd(m), spd(n), spd(m)))
}

fn corrected(p: DMatrix<f64>) -> FilterState {
    FilterState { x_hat: DVector::zeros(p.nrows()), p, t: 0, phase: Phase::Corrected }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn joseph_matches_standard_form((f, h, q, r, p) in system()) {
        let pred = kf_predict(&corrected(p), &f, &q).unwrap();
        let inn = kf_innovate(&pred, &DVector::zeros(h.nrows()), &h, &r).unwrap();
        let k = kalman_gain(&pred.p, &h, &inn.s).unwrap();
        let standard = kf_update(&pred, &k, &inn.y, &h).unwrap().p;
        let joseph = joseph_update(&pred.p, &k, &h, &r).unwrap();
        prop_assert!(rel_diff(&joseph, &standard) < 1e-10);
    }

    #[test]
    fn split_sums_to_joseph((f, h, q, r, p) in system(), kraw in matrix(4, 2)) {
        let (m, n) = (f.nrows(), h.nrows());
        let k = GainMatrix(kraw.view((0, 0), (m, n)).into_owned());
        let (a, b) = covariance_split(&p, &k, &f, &h, &q, &r).unwrap();
        let pred = symmetrize_pred(&f, &p, &q);
        let joseph = joseph_update(&pred, &k, &h, &r).unwrap();
        prop_assert!(rel_diff(&(a + b), &joseph) < 1e-10);
    }

    #[test]
    fn kalman_gain_minimizes_trace((f, h, q, r, p) in system(), delta in matrix(4, 2), sign in prop::bool::ANY) {
        let (m, n) = (f.nrows(), h.nrows());
        let pred = symmetrize_pred(&f, &p, &q);
        let s = &h * &pred * h.transpose() + &r;
        let k = kalman_gain(&pred, &h, &s).unwrap();
        let eps = if sign { 1e-4 } else { -1e-4 };
        let d = delta.view((0, 0), (m, n)).into_owned();
        prop_assume!(d.norm() > 1e-3);
        let best = joseph_update(&pred, &k, &h, &r).unwrap().trace();
        let other = joseph_update(&pred, &GainMatrix(&k.0 + d * eps), &h, &r).unwrap().trace();
        prop_assert!(other >= best, "{other} < {best}");
    }

    #[test]
    fn covariances_stay_spd_along_runs(sigma in 0.05f64..3.0, seed in 0u64..1000, fixed in prop::option::of(0.01f64..5.0)) {
        let model = make_cv_model(1.0, 0.01).unwrap();
        let sched = NoiseSchedule::custom(vec![sigma; 40]).unwrap();
        let ep = rkn_core::ssm::simulate_episode(&model, &sched, &InitialLaw::cv_default(), 40, seed).unwrap();
        let noise = fixed.map_or(MeasurementNoiseModel::Oracle, |r| MeasurementNoiseModel::fixed(r).unwrap());
        let run = run_kf(&model, noise, &InitialLaw::cv_default(), &ep).unwrap();
        for s in &run.steps {
            prop_assert!(is_spd(&s.p_corr));
            prop_assert!(is_spd(s.p_pred.as_ref().unwrap()));
            prop_assert!(is_spd(s.innovation_cov.as_ref().unwrap()));
        }
    }
}

fn symmetrize_pred(f: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    kf_predict(&corrected(p.clone()), f, q).unwrap().p
}

#[test]
fn oracle_filter_decorrelates_error_and_innovation() {
    let test = cv_dataset(ScenarioId::S1, 1000, 150, 7, Split::Test);
    let model = make_cv_model(1.0, 0.01).unwrap();
    let runs: Vec<_> = test
        .episodes
        .iter()
        .map(|e| run_kf(&model, MeasurementNoiseModel::Oracle, &test.initial, e).unwrap())
        .collect();
    let d = decorrelation_stat(&runs, &test.episodes, 50).unwrap();
    assert_eq!(d.samples, 50_000);
    assert!(d.max_z_score() < 4.0, "z = {}", d.max_z_score());
}

#[test]
fn fixed_noise_gain_ignores_the_schedule() {
    let model: StateSpaceModel = make_cv_model(1.0, 0.01).unwrap();
    let noise = MeasurementNoiseModel::fixed(1.0).unwrap();
    let mut traces = Vec::new();
    for scenario in [ScenarioId::S1, ScenarioId::S2a, ScenarioId::S3b] {
        let ds = cv_dataset(scenario, 20, 150, 3, Split::Test);
        let runs: Vec<_> = ds.episodes.iter().map(|e| run_kf(&model, noise, &ds.initial, e).unwrap()).collect();
        traces.push(gain_trace(&runs).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
}

#[test]
fn steady_state_gain_is_a_fixed_point() {
    let model = make_cv_model(1.0, 0.01).unwrap();
    for sigma in [0.35, 1.75] {
        let r = DMatrix::from_element(1, 1, sigma * sigma);
        let k = steady_state_gain(model.f(), model.h(), model.q(), &r).unwrap();
        // run the filter recursion long enough and compare
        let mut p = model.q().clone();
        for _ in 0..5000 {
            let s = model.h() * &p * model.h().transpose() + &r;
            let kk = kalman_gain(&p, model.h(), &s).unwrap();
            let pc = (DMatrix::identity(2, 2) - &kk.0 * model.h()) * &p;
            p = model.f() * pc * model.f().transpose() + model.q();
        }
        let s = model.h() * &p * model.h().transpose() + &r;
        let expect = kalman_gain(&p, model.h(), &s).unwrap();
        assert!((k.0 - expect.0).amax() < 1e-9);
    }
}
