#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::eval_metrics::{corpus_bleu, qa_f1, rouge_l_f1, tokenize_intl};

// Input: hypothesis and reference separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (hyp, reference) = text.split_once('\0').unwrap_or((text, text));
    let _ = tokenize_intl(hyp);
    let bleu = corpus_bleu(&[hyp], &[reference]).unwrap();
    assert!((0.0..=100.0).contains(&bleu));
    let rouge = rouge_l_f1(hyp, reference);
    assert!((0.0..=1.0).contains(&rouge));
    let f1 = qa_f1(hyp, reference);
    assert!((0.0..=1.0).contains(&f1));
});
