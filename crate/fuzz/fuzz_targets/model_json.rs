#![no_main]

use dpm_core::HmmModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = HmmModel::from_json(text) {
        let canonical = model.to_json();
        assert_eq!(HmmModel::from_json(&canonical).expect("canonical model parses"), model);
    }
});
