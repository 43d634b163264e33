//! Toolkit for training language models to quote evidence from their own
//! context while reasoning.
//!
//! * [`structured_text`] parses and builds `<think>`/`<retrieval>` tagged output.
//! * [`rewards`] scores responses for accuracy, format and grounded retrieval.
//! * [`grpo`] implements the group-relative policy objective and its gradient.
//! * [`curriculum`] mixes easy and hard training pools on a linear schedule.
//! * [`sft_pipeline`] and [`model_client`] generate supervised training data.
//! * [`eval_metrics`] provides QA F1, corpus BLEU and ROUGE-L.
//! * [`toy_lab`] runs the whole curriculum training loop on synthetic tasks.

pub mod grpo;
pub mod rewards;
pub mod structured_text;
pub mod curriculum;
pub mod eval_metrics;
pub mod model_client;
pub mod sft_pipeline;
pub mod toy_lab;
