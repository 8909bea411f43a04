#![no_main]

use acousto_core::sim::{default_sim_config, Scenario};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = Scenario::from_toml_str(text) {
        let _ = s.validate(&default_sim_config());
    }
});
