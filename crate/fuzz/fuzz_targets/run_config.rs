//! Arbitrary bytes as a run configuration: parsing, validation and the
//! cavity/trajectory constructors must reject bad input without panicking.

#![no_main]

use cavity_gme_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = RunConfig::from_json(s) else { return };
    if cfg.validate().is_err() {
        return;
    }
    let _ = cfg.cavity();
    if let Ok(t) = cfg.trajectory() {
        let _ = cfg.eval_h(&t);
    }
    // accepted configs survive a write/read cycle
    let again = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
});
