#![no_main]
use libfuzzer_sys::fuzz_target;
use rkn_core::eval::{compare, read_metrics_csv, DEFAULT_PROBES};

fuzz_target!(|data: &[u8]| {
    if let Ok(reports) = read_metrics_csv(data) {
        if let Ok(table) = compare(&reports, &DEFAULT_PROBES) {
            let _ = table.render();
        }
    }
});
