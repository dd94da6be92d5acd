use clap::{Parser, Subcommand};
use p2aecf::canonical::to_canonical;
use p2aecf::harness::{
    calibrate, compute_scores, results_csv, run_sweep, scores_csv, simulate, summary_csv, HarnessError, Method,
    MetricsRow, ScenarioConfig,
};
use p2aecf::prompt::{compile_to_graph, extract_intent, parse_prompt, TemplateLexicon};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "p2aecf", version, about = "Prompt-driven agent orchestration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single (method, latency, seed) cell.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "p2aecf")]
        method: String,
        /// Base link latency; the first sweep point when omitted.
        #[arg(long)]
        latency: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one canonical JSON trace per mission under OUT/traces.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Run every (method, latency, seed) cell and write the CSV files.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Comma-separated subset of methods.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Override the configured seeds with 1..=N.
        #[arg(long)]
        seeds: Option<u64>,
        /// Run cells one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Solve for the energy-efficiency reference on the configured sweep.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Parse and validate a scenario config.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compile a prompt (free text or JSON document) into its task graph.
    Compile {
        /// Prompt text; read from standard input when omitted.
        prompt: Option<String>,
        /// Template lexicon; the built-in one when omitted.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

fn fail(kind: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message.to_string() }));
    ExitCode::from(2)
}

fn harness_fail(e: HarnessError) -> ExitCode {
    let kind = match &e {
        HarnessError::Config(_) => "config",
        HarnessError::Io(_) => "io",
        HarnessError::Csv(_) => "csv",
    };
    fail(kind, e)
}

fn load(config: &Path, seeds: Option<u64>) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(n) = seeds {
        cfg.sweep.seeds = (1..=n).collect();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run { config, method, latency, seed, out, dump_traces } => {
            let cfg = load(&config, None)?;
            let method: Method = method.parse()?;
            let latency = latency.unwrap_or(cfg.sweep.latency_points_ms[0]);
            if !(latency.is_finite() && latency > 0.0) {
                return Err(HarnessError::Config("--latency must be > 0".into()));
            }
            let base = simulate(&cfg, method, latency, seed, false, dump_traces)?;
            let stressed = simulate(&cfg, method, latency, seed, true, false)?;
            let scores = compute_scores(&base.counters, &stressed.counters, &cfg.metrics);
            let row = MetricsRow::new(method, latency, seed, &base.counters, &scores);
            let csv = results_csv(&[row]);
            print!("{csv}");
            if let Some(dir) = out {
                write(&dir.join("results.csv"), &csv)?;
                if dump_traces {
                    for t in &base.traces {
                        write(&dir.join("traces").join(format!("mission-{:05}.json", t.mission_id)), &to_canonical(t))?;
                    }
                }
            } else if dump_traces {
                return Err(HarnessError::Config("--dump-traces needs --out".into()));
            }
        }
        Command::Sweep { config, out, methods, seeds, sequential } => {
            let mut cfg = load(&config, seeds)?;
            if let Some(ms) = methods {
                cfg.sweep.methods = ms.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
                cfg.validate()?;
            }
            let report = run_sweep(&cfg, !sequential)?;
            write(&out.join("results.csv"), &results_csv(&report.rows))?;
            write(&out.join("summary.csv"), &summary_csv(&report.summary))?;
            write(&out.join("scores.csv"), &scores_csv(&report.scores))?;
            print!("{}", summary_csv(&report.summary));
            print!("{}", scores_csv(&report.scores));
        }
        Command::Calibrate { config, seeds } => {
            let cfg = load(&config, seeds)?;
            let rep = calibrate(&cfg, true)?;
            println!("{}", serde_json::to_string_pretty(&rep).expect("serializable report"));
        }
        Command::ValidateConfig { config } => {
            let cfg = load(&config, None)?;
            let cells = cfg.sweep.methods.len() * cfg.sweep.latency_points_ms.len() * cfg.sweep.seeds.len();
            println!(
                "{}",
                serde_json::json!({ "ok": true, "hosts": cfg.world.host_count(), "agents": cfg.world.roster().len(), "cells": cells })
            );
        }
        Command::Compile { prompt, lexicon } => {
            let lex = match lexicon {
                Some(p) => TemplateLexicon::from_json(&fs::read_to_string(p)?)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
                None => TemplateLexicon::builtin(),
            };
            let text = match prompt {
                Some(t) => t,
                None => std::io::read_to_string(std::io::stdin())?,
            };
            let parsed = parse_prompt(&text, &lex).map_err(|e| HarnessError::Config(format!("prompt: {e}")))?;
            let intent = extract_intent(&parsed, &lex);
            let graph = compile_to_graph(&intent).map_err(|e| HarnessError::Config(format!("graph: {e}")))?;
            println!(
                "{}",
                to_canonical(&serde_json::json!({ "prompt": parsed, "objective": intent.objective, "graph": graph }))
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().lines().next().unwrap_or("invalid arguments")),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => harness_fail(e),
    }
}
