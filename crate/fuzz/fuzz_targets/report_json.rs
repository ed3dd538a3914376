#![no_main]

use bbm_core::experiments::ExperimentReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = ExperimentReport::from_json_str(s) {
            let back = r.to_json().unwrap();
            assert!(ExperimentReport::from_json_str(&back).is_ok());
        }
    }
});
