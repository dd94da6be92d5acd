#![no_main]

use libfuzzer_sys::fuzz_target;
use p2aecf::harness::{generate_workload, ScenarioConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mut cfg) = ScenarioConfig::from_json(text) else { return };
    // a validated config must generate its workload without panicking
    cfg.workload.count = cfg.workload.count.min(64);
    let _ = generate_workload(&cfg, 1);
});
