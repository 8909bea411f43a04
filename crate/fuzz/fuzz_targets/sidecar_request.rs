#![no_main]

use acousto_core::embeddings::sidecar::{encode_request, read_request};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let mut r = data;
    while let Ok(Some(payload)) = read_request(&mut r) {
        let encoded = encode_request(&payload);
        assert_eq!(
            read_request(&mut encoded.as_slice()).unwrap(),
            Some(payload)
        );
    }
});
