#![no_main]

use libfuzzer_sys::fuzz_target;
use renyi_qmc::estimators::read_csv;
use renyi_qmc::runner::Summary;

// One input feeds both summary decoders: the JSON document and the
// measurement CSV.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Summary::from_json(text);
    }
    let _ = read_csv(data, 9);
});
