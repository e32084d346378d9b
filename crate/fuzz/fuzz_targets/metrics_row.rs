#![no_main]

use libfuzzer_sys::fuzz_target;
use pixelpolicy::harness::SeasonMetrics;

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(row) = SeasonMetrics::parse_row(line) {
        let text = row.to_row();
        let again = SeasonMetrics::parse_row(&text).expect("written row parses");
        assert_eq!(again.to_row(), text);
    }
});
