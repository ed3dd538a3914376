#![no_main]

use bbm_core::population::ParticleLabel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(l) = s.parse::<ParticleLabel>() {
            assert_eq!(l.to_string().parse::<ParticleLabel>().unwrap(), l);
        }
    }
});
