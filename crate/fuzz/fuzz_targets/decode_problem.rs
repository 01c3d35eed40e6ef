#![no_main]

use coded_mv::decoding::{decode, DecodeProblem};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(p) = serde_json::from_slice::<DecodeProblem>(data) else {
        return;
    };
    if p.k_bar > 64 {
        return;
    }
    if let Ok(p) = DecodeProblem::new(p.k_bar, p.returned) {
        let _ = decode(&p);
    }
});
