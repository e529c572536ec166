#![no_main]
use libfuzzer_sys::fuzz_target;
use rkn_core::ssm::{parse_dataset, write_dataset};

// Anything that parses must survive a write/parse round trip unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ds) = parse_dataset(text) else { return };
    let mut buf = Vec::new();
    write_dataset(&ds, &mut buf).expect("parsed dataset is writable");
    let again = parse_dataset(std::str::from_utf8(&buf).unwrap()).expect("written dataset parses");
    let mut buf2 = Vec::new();
    write_dataset(&again, &mut buf2).unwrap();
    assert_eq!(buf, buf2);
});
