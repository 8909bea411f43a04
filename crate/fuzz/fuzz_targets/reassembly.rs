#![no_main]

use std::collections::HashSet;

use acousto_core::wire::{Datagram, Reassembler, ReassemblyConfig};
use libfuzzer_sys::fuzz_target;

// Input is a stream of `len u16 LE | datagram` records.
fuzz_target!(|data: &[u8]| {
    let mut r = Reassembler::new(ReassemblyConfig::default());
    let mut seen = HashSet::new();
    let mut rest = data;
    let mut now = 0u64;
    while rest.len() >= 2 {
        let len = u16::from_le_bytes([rest[0], rest[1]]) as usize;
        rest = &rest[2..];
        let chunk = &rest[..len.min(rest.len())];
        rest = &rest[chunk.len()..];
        now += 1_000;
        if let Ok(Datagram::Frame(f)) = Datagram::decode(chunk) {
            if let Some(done) = r.push(f, now) {
                assert!(!done.payload.is_empty());
                assert!(
                    seen.insert((done.camera_id, done.frame_seq)),
                    "frame emitted twice"
                );
            }
        }
    }
});
