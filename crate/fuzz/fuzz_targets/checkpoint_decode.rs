#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelpolicy::netlib::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        // anything accepted must survive a round trip byte for byte
        let bytes = ck.encode();
        let again = Checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(again.encode(), bytes);
    }
});
