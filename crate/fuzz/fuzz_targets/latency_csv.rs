#![no_main]

use acousto_core::telemetry::{latency_csv, parse_latency_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_latency_csv(text) {
        assert_eq!(
            parse_latency_csv(&latency_csv(&records)).expect("written csv parses"),
            records
        );
    }
});
