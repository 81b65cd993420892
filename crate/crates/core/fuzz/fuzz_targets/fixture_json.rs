#![no_main]

use libfuzzer_sys::fuzz_target;
use renyi_qmc::oracle::fixtures::FixtureFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = FixtureFile::from_json(text) {
        for e in &f.entries {
            let _ = e.lattice();
            let _ = e.diagnostics();
        }
    }
});
