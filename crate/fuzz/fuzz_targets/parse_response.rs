#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::rewards::{total_reward, RewardWeights, TextNormalizationPolicy};
use rar_core::structured_text::{check_format, extract_answer, parse_response};

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    let check = check_format(raw);
    match parse_response(raw) {
        Ok(parsed) => {
            assert!(check.ok);
            for span in &parsed.retrieval_spans {
                assert_eq!(&parsed.think_text[span.start..span.end], span.text);
            }
            assert!(extract_answer(raw).is_ok());
        }
        Err(violations) => {
            assert!(!check.ok);
            assert!(!violations.is_empty());
            assert!(violations.windows(2).all(|w| w[0].location <= w[1].location));
        }
    }
    let b = total_reward(raw, "gold", raw, &RewardWeights::default(), &TextNormalizationPolicy::squad());
    assert!((0.0..=1.0).contains(&b.r_total));
});
