#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::structured_text::{extract_retrieval_spans, strip_tags, think_interior};

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    let _ = extract_retrieval_spans(raw);
    let _ = think_interior(raw);
    let stripped = strip_tags(raw);
    assert_eq!(strip_tags(&stripped), stripped);
    assert!(extract_retrieval_spans(&stripped).spans.is_empty());
});
