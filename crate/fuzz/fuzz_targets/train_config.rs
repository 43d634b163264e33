#![no_main]

use libfuzzer_sys::fuzz_target;
use rar_core::toy_lab::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = serde_json::from_slice::<TrainConfig>(data) {
        let _ = config.validate();
        let round = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&round).unwrap(), config);
    }
});
