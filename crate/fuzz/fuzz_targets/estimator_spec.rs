#![no_main]
use libfuzzer_sys::fuzz_target;
use rkn_cli::estimator::{parse_estimator_list, EstimatorSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = s.parse::<EstimatorSpec>() {
        let shown = spec.to_string();
        assert_eq!(shown.parse::<EstimatorSpec>().unwrap(), spec, "{shown}");
    }
    let _ = parse_estimator_list(s);
});
