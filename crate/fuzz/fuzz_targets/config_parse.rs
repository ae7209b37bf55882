#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = dwstab::config::parse_config(data) {
        // Parsed configs must re-check cleanly.
        assert!(cfg.check().is_ok());
    }
});
