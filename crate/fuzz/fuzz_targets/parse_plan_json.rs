#![no_main]

use coded_mv::coding::CodingPlan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(plan) = CodingPlan::from_json(data) {
        // Cheap structural checks only; full enumeration is exponential.
        let _ = coded_mv::decoding::neighborhood_violations(
            &plan,
            &(0..plan.k_bar.min(plan.workers.len())).collect::<Vec<_>>(),
        );
    }
});
