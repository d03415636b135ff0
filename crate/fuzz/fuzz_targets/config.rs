#![no_main]

use libfuzzer_sys::fuzz_target;

use esi_core::config::{self, KvConfig, KNOWN_KEYS};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = KvConfig::parse(text) else { return };
    let _ = cfg.expect_known(&KNOWN_KEYS);
    // every typed extractor must fail cleanly, never panic
    let _ = config::scene_from_config(&cfg);
    let _ = config::noise_from_config(&cfg);
    let _ = config::trigger_from_config(&cfg);
    let _ = config::dt_sample_from_config(&cfg);
    let _ = config::method_from_config(&cfg);
    let _ = config::reconstruction_from_config(&cfg);
});
