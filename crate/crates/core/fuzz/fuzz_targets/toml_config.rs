#![no_main]

use libfuzzer_sys::fuzz_target;
use renyi_qmc::runner::grid::SweepConfig;
use renyi_qmc::runner::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_toml(text) {
        let _ = c.resolve();
    }
    if let Ok(c) = SweepConfig::from_toml(text) {
        // resolving large grids is the expensive part; the parse is what is under test
        if c.grid.l.len() * c.grid.j.len() * c.grid.p.len() <= 64 {
            let _ = c.cells();
        }
    }
});
