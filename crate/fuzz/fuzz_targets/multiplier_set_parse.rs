#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(set) = dwstab::report::parse_multiplier_set(data) {
        let _ = dwstab::report::to_json(&set);
    }
});
