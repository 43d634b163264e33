#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::sft_pipeline::{mark_retrieval, parse_instances};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(instances) = parse_instances(text, "fuzz") else { return };
    for inst in instances {
        let _ = inst.facts_outside_context();
        if let Some(facts) = &inst.supporting_facts {
            let _ = mark_retrieval(&inst.context, facts, &inst.answer);
        }
    }
});
