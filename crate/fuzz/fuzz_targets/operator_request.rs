#![no_main]

use acousto_core::operator::parse_request;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(req) = parse_request(line) {
        let _ = req.body.injection();
    }
});
