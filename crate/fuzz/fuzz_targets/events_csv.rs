#![no_main]

use bbm_core::population::snapshot::read_events_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = read_events_csv(data);
});
