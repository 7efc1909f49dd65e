#![no_main]

use libfuzzer_sys::fuzz_target;
use taylode::integrate::ControllerKind;

fuzz_target!(|data: &str| {
    let _ = data.parse::<ControllerKind>();
});
