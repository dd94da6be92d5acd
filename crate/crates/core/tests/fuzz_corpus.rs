use p2aecf::harness::{generate_workload, parse_results_csv, results_csv, ScenarioConfig};
use p2aecf::prompt::{compile_to_graph, extract_intent, parse_prompt, TaskIntent, TemplateLexicon};
use std::path::PathBuf;

/// Seed files of one fuzz target, as (file name, contents).
fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "{target}");
    out
}

#[test]
fn prompt_seeds() {
    let lex = TemplateLexicon::builtin();
    let mut ok = 0;
    for (name, text) in seeds("prompt_document") {
        if let Ok(p) = parse_prompt(&text, &lex) {
            compile_to_graph(&extract_intent(&p, &lex)).unwrap_or_else(|e| panic!("{name}: {e}"));
            ok += 1;
        }
    }
    assert!(ok >= 2);
}

#[test]
fn lexicon_seeds() {
    let ok = seeds("template_lexicon").iter().filter(|(_, t)| TemplateLexicon::from_json(t).is_ok()).count();
    assert!(ok >= 1);
}

#[test]
fn scenario_seeds() {
    for (name, text) in seeds("scenario_config") {
        let cfg = ScenarioConfig::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        generate_workload(&cfg, 1).unwrap();
    }
}

#[test]
fn results_seeds() {
    let mut ok = 0;
    for (_, text) in seeds("results_csv") {
        if let Ok(rows) = parse_results_csv(&text) {
            assert_eq!(results_csv(&rows), text);
            ok += 1;
        }
    }
    assert!(ok >= 1);
}

#[test]
fn intent_seeds() {
    let parsed: Vec<_> = seeds("task_intent")
        .into_iter()
        .map(|(name, t)| (name, serde_json::from_str::<TaskIntent>(&t).expect("seed deserializes")))
        .collect();
    let compiled = parsed.iter().filter(|(_, i)| compile_to_graph(i).is_ok()).count();
    assert_eq!((parsed.len(), compiled), (2, 1));
}
