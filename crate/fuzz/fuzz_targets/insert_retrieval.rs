#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::structured_text::{insert_retrieval_tokens, strip_tags};

// Input: reasoning, then facts, separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.split('\0');
    let reasoning = parts.next().unwrap_or_default();
    let facts: Vec<&str> = parts.collect();
    if let Ok(marked) = insert_retrieval_tokens(reasoning, &facts) {
        if strip_tags(reasoning) == reasoning {
            assert_eq!(strip_tags(&marked), reasoning);
        }
    }
});
