#![no_main]

use acousto_core::CoordinatorConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = CoordinatorConfig::from_toml_str(text) {
        CoordinatorConfig::from_toml_str(&c.to_toml_string()).expect("written config parses");
    }
});
