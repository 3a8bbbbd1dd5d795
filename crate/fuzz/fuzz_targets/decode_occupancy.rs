#![no_main]

use libfuzzer_sys::fuzz_target;
use ldo_core::voxelizer::{decode_occupancy, encode_occupancy};

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = decode_occupancy(data) {
        assert_eq!(decode_occupancy(&encode_occupancy(&grid)).ok(), Some(grid));
    }
});
