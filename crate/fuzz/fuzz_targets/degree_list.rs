#![no_main]

use libfuzzer_sys::fuzz_target;
use taylode_cli::method::{parse_degree_list, MAX_DEGREE};

fuzz_target!(|data: &str| {
    if let Ok(degrees) = parse_degree_list(data) {
        assert!(!degrees.is_empty());
        assert!(degrees.iter().all(|p| (1..=MAX_DEGREE).contains(p)));
    }
});
