#![no_main]

use libfuzzer_sys::fuzz_target;
use taylode_cli::method::MethodSpec;

fuzz_target!(|data: &str| {
    if let Ok(method) = data.parse::<MethodSpec>() {
        assert_eq!(method.to_string().parse::<MethodSpec>(), Ok(method));
    }
});
