#![no_main]

use libfuzzer_sys::fuzz_target;
use ldo_core::tensor_file::decode_tensors;

fuzz_target!(|data: &[u8]| {
    let _ = decode_tensors(data);
});
