#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok((name, params)) = dwstab::config::parse_builtin_spec(data) {
        assert!(!name.is_empty());
        assert!(params.values().all(|v| v.is_finite()));
    }
});
