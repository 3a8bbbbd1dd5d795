#![no_main]

use libfuzzer_sys::fuzz_target;
use ldo_core::ingest::{decode_points, encode_points};

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = decode_points(data) {
        let again = decode_points(&encode_points(&points)).expect("re-encoded points decode");
        assert_eq!(points.len(), again.len());
    }
});
