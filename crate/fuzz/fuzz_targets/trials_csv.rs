#![no_main]

use acousto_core::telemetry::{parse_trials_csv, trials_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trials) = parse_trials_csv(text) {
        assert_eq!(
            parse_trials_csv(&trials_csv(&trials)).expect("written csv parses"),
            trials
        );
    }
});
