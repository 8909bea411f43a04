#![no_main]

use acousto_core::wire::Datagram;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(d) = Datagram::decode(data) {
        let bytes = d.encode().expect("decoded datagram re-encodes");
        assert_eq!(
            Datagram::decode(&bytes).expect("re-encoded datagram decodes"),
            d
        );
    }
});
