#![no_main]

use acousto_core::probe::{load_checkpoint, save_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(probe) = load_checkpoint(data) {
        let bytes = save_checkpoint(&probe);
        let again = load_checkpoint(&bytes).expect("saved checkpoint loads");
        assert_eq!(save_checkpoint(&again), bytes);
    }
});
