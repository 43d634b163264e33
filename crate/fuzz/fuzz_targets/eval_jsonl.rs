#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::eval_metrics::{evaluate_metric, parse_jsonl, EvalMetric, GoldRecord, PredictionRecord};

// Input: prediction lines, a NUL byte, then gold lines.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (preds, golds) = text.split_once('\0').unwrap_or((text, ""));
    let Ok(preds) = parse_jsonl::<PredictionRecord>(preds, "predictions") else { return };
    let Ok(golds) = parse_jsonl::<GoldRecord>(golds, "gold") else { return };
    for metric in EvalMetric::ALL {
        if let Ok(out) = evaluate_metric(metric, &preds, &golds) {
            for report in out.reports.values() {
                assert!(report.aggregate.is_finite());
            }
        }
    }
});
