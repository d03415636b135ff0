#![no_main]

use libfuzzer_sys::fuzz_target;

use esi_core::evio::BinEventReader;

fuzz_target!(|data: &[u8]| {
    let _ = esi_core::evio::read_events_bin(data);

    // chunked path must agree with the whole-file path
    if let Ok(mut reader) = BinEventReader::new(data) {
        let mut chunked = Vec::new();
        loop {
            match reader.read_chunk(17, &mut chunked) {
                Ok(0) => break,
                Ok(_) => {}
                Err(_) => return,
            }
        }
        if let Ok((_, batch)) = esi_core::evio::read_events_bin(data) {
            assert_eq!(chunked, batch.events());
        }
    }
});
