#![no_main]

use bbm_core::spine::{read_spine_csv, spine_decomposition_series, SpineMeasure};
use bbm_core::ModelParams;
use libfuzzer_sys::fuzz_target;

// Input: skeleton CSV, a NUL byte, then the fission CSV.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (skeleton, rest) = data.split_at(split);
    let fissions = rest.get(1..).unwrap_or(&[]);
    if let Ok(path) = read_spine_csv(skeleton, fissions, SpineMeasure::TowardOriginPm) {
        let params = ModelParams::binary(1.0, 1.0).unwrap();
        let _ = spine_decomposition_series(&path, &params);
    }
});
