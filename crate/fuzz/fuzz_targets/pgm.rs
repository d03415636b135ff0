#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((geometry, pixels)) = esi_core::evio::read_pgm(data) {
        assert_eq!(pixels.len(), geometry.pixel_count());
    }
});
