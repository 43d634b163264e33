#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::model_client::parse_completion;

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    let _ = parse_completion(body);
});
