#![no_main]

use bbm_core::ModelParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = ModelParams::from_json_str(s) {
            let d = p.derive();
            assert!(d.lambda_crit.is_finite() && d.lambda_crit >= 0.0);
            let back = serde_json::to_string(&p).unwrap();
            assert_eq!(ModelParams::from_json_str(&back).unwrap(), p);
        }
    }
});
