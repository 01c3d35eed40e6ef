#![no_main]

use coded_mv_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = ExperimentConfig::from_json(data) {
        let _ = cfg.validate();
        let _ = cfg.hash();
    }
});
