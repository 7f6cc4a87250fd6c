#![no_main]

use libfuzzer_sys::fuzz_target;
use thermoclust_cli::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = ExperimentConfig::parse(text) else {
        return;
    };
    let json = serde_json::to_string(&config).expect("config serializes");
    let again = ExperimentConfig::parse(&json).expect("serialized config parses");
    assert_eq!(again, config);
});
