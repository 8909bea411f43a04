#![no_main]

use acousto_core::embeddings::{parse_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ds) = parse_dataset(text, "fuzz") {
        let again = parse_dataset(&write_dataset(&ds), "fuzz").expect("written dataset parses");
        assert_eq!(again.len(), ds.len());
        assert_eq!(again.dim(), ds.dim());
    }
});
