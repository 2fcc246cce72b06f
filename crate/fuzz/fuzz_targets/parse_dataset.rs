#![no_main]

//! Input is an ingest config (JSON) and a CSV body separated by the first NUL byte.

use dpm_core::ingest::{export_dataset, parse_dataset, IngestConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0) else { return };
    let (Ok(config), Ok(csv)) = (std::str::from_utf8(&data[..split]), std::str::from_utf8(&data[split + 1..])) else {
        return;
    };
    let Ok(config) = IngestConfig::from_json(config) else { return };
    if let Ok(dataset) = parse_dataset(csv, &config) {
        let exported = export_dataset(&dataset);
        assert_eq!(parse_dataset(&exported, &config).expect("export re-parses"), dataset);
    }
});
