#![no_main]

use bbm_core::population::snapshot::{read_snapshots_csv, write_snapshots_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(snaps) = read_snapshots_csv(data) {
        let mut buf = Vec::new();
        write_snapshots_csv(&mut buf, &snaps).unwrap();
        assert_eq!(read_snapshots_csv(&buf[..]).unwrap().len(), snaps.len());
        for s in &snaps {
            let _ = s.check_antichain();
            let _ = s.rightmost();
        }
    }
});
