#![no_main]

use dpm_core::{json, Dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(dataset) = json::from_str::<Dataset>(text) {
        let canonical = json::to_string(&dataset);
        assert_eq!(json::from_str::<Dataset>(&canonical).expect("canonical dataset parses"), dataset);
    }
});
