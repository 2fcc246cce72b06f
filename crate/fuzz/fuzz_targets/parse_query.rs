#![no_main]

use dpm_core::query::{parse_query, render};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_query(text) {
        Ok(q) => {
            let canonical = render(&q);
            assert_eq!(parse_query(&canonical).expect("canonical form parses"), q);
        }
        Err(e) => {
            if let Some(offset) = e.offset() {
                assert!(offset <= text.len());
            }
        }
    }
});
