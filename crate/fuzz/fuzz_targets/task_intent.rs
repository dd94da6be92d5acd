#![no_main]

use libfuzzer_sys::fuzz_target;
use p2aecf::prompt::{compile_to_graph, topological_layers, TaskIntent};

fuzz_target!(|data: &[u8]| {
    let Ok(intent) = serde_json::from_slice::<TaskIntent>(data) else { return };
    if let Ok(g) = compile_to_graph(&intent) {
        let layered: usize = topological_layers(&g).iter().map(Vec::len).sum();
        assert_eq!(layered, g.len());
    }
});
