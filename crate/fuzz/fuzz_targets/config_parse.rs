#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelpolicy::harness::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = TrainConfig::parse(text) {
        let canonical = cfg.to_text();
        let again = TrainConfig::parse(&canonical).expect("canonical text parses");
        assert_eq!(again.to_text(), canonical);
    }
});
