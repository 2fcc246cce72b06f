#![no_main]

use dpm_core::ingest::IngestConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = IngestConfig::from_json(text);
    }
});
