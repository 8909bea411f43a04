#![no_main]

use acousto_core::probe::TrainHistory;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(h) = TrainHistory::from_csv(text) {
        let again = TrainHistory::from_csv(&h.to_csv()).expect("written history parses");
        assert_eq!(again.records.len(), h.records.len());
    }
});
