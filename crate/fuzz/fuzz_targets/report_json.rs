//! Scenario reports read back from disk.

#![no_main]

use cavity_gme_cli::Report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(r) = Report::from_json(s) {
        let back = Report::from_json(&r.to_json()).expect("re-read own output");
        assert_eq!(back, r);
    }
});
