#![no_main]

use acousto_core::embeddings::sidecar::decode_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&dim, body)) = data.split_first() else {
        return;
    };
    if let Ok(e) = decode_response(body, dim as usize) {
        assert_eq!(e.dim(), dim as usize);
    }
});
