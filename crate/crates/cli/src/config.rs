use std::path::Path;

use rar_core::grpo::GrpoConfig;
use rar_core::model_client::ClientConfig;
use rar_core::rewards::RewardWeights;
use rar_core::sft_pipeline::PipelineConfig;
use rar_core::toy_lab::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Settings file shared by all subcommands. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub client: ClientConfig,
    pub pipeline: PipelineConfig,
    pub weights: RewardWeights,
    pub grad_check: GrpoConfig,
    pub train: TrainConfig,
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Logs the settings a command will actually run with.
pub fn print_resolved<T: Serialize>(command: &str, resolved: &T) {
    let json = serde_json::to_string(resolved).expect("config serializes");
    eprintln!("resolved config ({command}): {json}");
}
