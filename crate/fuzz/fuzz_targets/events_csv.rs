#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // strict and lenient mode share the parser but diverge on ordering
    let _ = esi_core::evio::read_events_csv(data, true);
    if let Ok(r) = esi_core::evio::read_events_csv(data, false) {
        // lenient output must satisfy the batch ordering invariant
        assert!(r.batch.events().windows(2).all(|w| w[0].t <= w[1].t));
    }
});
