#![no_main]

use libfuzzer_sys::fuzz_target;
use p2aecf::prompt::{compile_to_graph, extract_intent, parse_prompt, TemplateLexicon};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let lex = TemplateLexicon::builtin();
    if let Ok(p) = parse_prompt(text, &lex) {
        // anything the parser accepts must compile
        let g = compile_to_graph(&extract_intent(&p, &lex)).expect("template graphs are acyclic");
        assert_eq!(g.topological_order().len(), g.len());
    }
});
