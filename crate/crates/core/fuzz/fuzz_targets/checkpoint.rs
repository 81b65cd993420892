#![no_main]

use libfuzzer_sys::fuzz_target;
use renyi_qmc::runner::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(st) = checkpoint::decode(data) {
        st.validate().expect("decoded chain must validate");
        let bytes = checkpoint::encode(&st).expect("encode");
        assert_eq!(checkpoint::decode(&bytes).expect("round trip"), st);
    }
});
