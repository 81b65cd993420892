#![no_main]

use libfuzzer_sys::fuzz_target;
use renyi_qmc::contour::dump;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = dump::from_text(text) {
        s.validate().expect("decoded contour must validate");
        let again = dump::from_text(&dump::to_text(&s)).expect("re-encoded dump must parse");
        assert_eq!(dump::to_text(&again), dump::to_text(&s));
    }
});
