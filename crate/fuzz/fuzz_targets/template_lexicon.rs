#![no_main]

use libfuzzer_sys::fuzz_target;
use p2aecf::prompt::{compile_to_graph, extract_intent, parse_prompt, TemplateLexicon};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(lex) = TemplateLexicon::from_json(text) else { return };
    for t in lex.templates() {
        let doc =
            format!(r#"{{"template": {}, "deadline_ms": 1000, "energy_budget_j": 10}}"#, serde_json::json!(t.key));
        if let Ok(p) = parse_prompt(&doc, &lex) {
            let _ = compile_to_graph(&extract_intent(&p, &lex));
        }
    }
});
