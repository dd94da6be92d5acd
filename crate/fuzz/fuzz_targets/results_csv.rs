#![no_main]

use libfuzzer_sys::fuzz_target;
use p2aecf::harness::{parse_results_csv, results_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_results_csv(text) {
        let again = results_csv(&rows);
        assert_eq!(parse_results_csv(&again).expect("written csv parses"), rows);
    }
});
