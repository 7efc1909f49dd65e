#![no_main]

use libfuzzer_sys::fuzz_target;
use taylode_cli::config::BenchConfig;

fuzz_target!(|data: &str| {
    if let Ok(config) = BenchConfig::from_json(data) {
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(BenchConfig::from_json(&text).unwrap(), config);
    }
});
