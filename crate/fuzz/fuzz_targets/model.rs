#![no_main]

use libfuzzer_sys::fuzz_target;
use thermoclust::model::ModelConfig;

fuzz_target!(|data: &[u8]| {
    if data.len() > 2048 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = ModelConfig::from_json(text) else {
        return;
    };
    if let Ok(spec) = config.build() {
        assert!(spec.a() >= 0.0 && spec.a() < 1.0);
        let rebuilt = ModelConfig::from_json(&spec.to_json())
            .expect("serialized spec parses")
            .build()
            .expect("serialized spec builds");
        assert_eq!(rebuilt.to_json(), spec.to_json());
    }
});
