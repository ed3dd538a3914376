#![no_main]

use bbm_core::experiments::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json_str(s) {
            let _ = cfg.validate();
            let back = serde_json::to_string(&cfg).unwrap();
            assert!(ExperimentConfig::from_json_str(&back).is_ok());
        }
    }
});
