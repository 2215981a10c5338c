#![no_main]

use cavity_gme_cli::parse_pair;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((m, n)) = parse_pair(s) {
        assert_eq!(parse_pair(&format!("{m},{n}")), Ok((m, n)));
    }
});
