#![no_main]

use dpm_core::query::{evaluate, parse_query};
use dpm_core::DecodingSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(decodings) = DecodingSet::from_json(text) {
        let _ = evaluate(&parse_query("S0 ~> S1").expect("valid query"), &decodings);
    }
});
