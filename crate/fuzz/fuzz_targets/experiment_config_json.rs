#![no_main]
use libfuzzer_sys::fuzz_target;
use rkn_cli::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(s) {
            let _ = cfg.training_scenarios();
        }
    }
});
