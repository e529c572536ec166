#![no_main]
use libfuzzer_sys::fuzz_target;
use rkn_core::checkpoint::{parse_checkpoint, Checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_checkpoint(text) {
        let json = Checkpoint::from_model(&model, None).to_json();
        parse_checkpoint(&json).expect("re-encoded checkpoint loads");
    }
});
