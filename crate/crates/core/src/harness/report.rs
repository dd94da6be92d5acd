use super::{HarnessError, Method, MetricsConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Raw per-run counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub issued: usize,
    pub completed_on_time: usize,
    /// Completed on time without any failure or substitution.
    pub clean: usize,
    pub total_energy_j: f64,
    pub substitutions: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub completion_rate: f64,
    pub energy_efficiency: f64,
    pub adaptability: f64,
    pub reliability: f64,
    /// Set when nothing was issued and the ratios are undefined.
    pub division_guard: bool,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores one cell from its counters and those of the paired perturbed run.
pub fn compute_scores(base: &Counters, perturbed: &Counters, metrics: &MetricsConfig) -> Scores {
    if base.issued == 0 {
        return Scores { division_guard: true, ..Scores::default() };
    }
    let completion_rate = ratio(base.completed_on_time, base.issued);
    let energy_efficiency = if base.completed_on_time == 0 {
        0.0
    } else if base.total_energy_j <= 0.0 {
        1.0
    } else {
        (base.completed_on_time as f64 / base.total_energy_j / metrics.e_ref).min(1.0)
    };
    let perturbed_rate = ratio(perturbed.completed_on_time, perturbed.issued);
    let adaptability = if completion_rate > 0.0 { (perturbed_rate / completion_rate).min(1.0) } else { 0.0 };
    let reliability = ratio(base.clean, base.issued);
    Scores { completion_rate, energy_efficiency, adaptability, reliability, division_guard: false }
}

/// One row of `results.csv`. Real-valued fields carry six decimals so the
/// row survives a CSV round trip unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: Method,
    pub latency_ms: f64,
    pub seed: u64,
    pub issued: usize,
    pub completed_on_time: usize,
    pub completion_rate: f64,
    pub total_energy_j: f64,
    pub energy_efficiency: f64,
    pub adaptability: f64,
    pub reliability: f64,
    pub substitutions: usize,
    pub failures: usize,
}

pub(crate) fn q6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

/// Rounds to six significant digits.
pub(crate) fn q6_sig(x: f64) -> f64 {
    format!("{x:.5e}").parse().expect("formatted float parses")
}

impl MetricsRow {
    pub fn new(method: Method, latency_ms: f64, seed: u64, c: &Counters, s: &Scores) -> Self {
        Self {
            method,
            latency_ms: q6(latency_ms),
            seed,
            issued: c.issued,
            completed_on_time: c.completed_on_time,
            completion_rate: q6(s.completion_rate),
            total_energy_j: q6(c.total_energy_j),
            energy_efficiency: q6(s.energy_efficiency),
            adaptability: q6(s.adaptability),
            reliability: q6(s.reliability),
            substitutions: c.substitutions,
            failures: c.failures,
        }
    }

    fn fields(&self) -> [String; 12] {
        [
            self.method.to_string(),
            format!("{:.6}", self.latency_ms),
            self.seed.to_string(),
            self.issued.to_string(),
            self.completed_on_time.to_string(),
            format!("{:.6}", self.completion_rate),
            format!("{:.6}", self.total_energy_j),
            format!("{:.6}", self.energy_efficiency),
            format!("{:.6}", self.adaptability),
            format!("{:.6}", self.reliability),
            self.substitutions.to_string(),
            self.failures.to_string(),
        ]
    }
}

pub const RESULTS_HEADER: [&str; 12] = [
    "method",
    "latency_ms",
    "seed",
    "issued",
    "completed_on_time",
    "completion_rate",
    "total_energy_j",
    "energy_efficiency",
    "adaptability",
    "reliability",
    "substitutions",
    "failures",
];

fn write_records<I: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: I) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

pub fn results_csv(rows: &[MetricsRow]) -> String {
    write_records(&RESULTS_HEADER, rows.iter().map(|r| r.fields().to_vec()))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| HarnessError::Csv(e.to_string()))?;
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(HarnessError::Csv("unexpected header".into()));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Csv(e.to_string()))?;
        let bad = |col: &str| HarnessError::Csv(format!("row {}: bad `{col}`", line + 1));
        if rec.len() != RESULTS_HEADER.len() {
            return Err(HarnessError::Csv(format!("row {}: expected {} fields", line + 1, RESULTS_HEADER.len())));
        }
        let real = |i: usize| -> Result<f64, HarnessError> {
            rec[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(RESULTS_HEADER[i]))
        };
        let int = |i: usize| -> Result<usize, HarnessError> { rec[i].parse().map_err(|_| bad(RESULTS_HEADER[i])) };
        out.push(MetricsRow {
            method: rec[0].parse().map_err(|_| bad("method"))?,
            latency_ms: real(1)?,
            seed: rec[2].parse().map_err(|_| bad("seed"))?,
            issued: int(3)?,
            completed_on_time: int(4)?,
            completion_rate: real(5)?,
            total_energy_j: real(6)?,
            energy_efficiency: real(7)?,
            adaptability: real(8)?,
            reliability: real(9)?,
            substitutions: int(10)?,
            failures: int(11)?,
        });
    }
    Ok(out)
}

/// Mean and sample deviation of one score over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

fn spread(xs: &[f64]) -> Spread {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Spread { mean: 0.0, std: 0.0 };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Spread { mean, std: var.sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub latency_ms: f64,
    pub seeds: usize,
    pub completion_rate: Spread,
    pub energy_efficiency: Spread,
    pub adaptability: Spread,
    pub reliability: Spread,
}

/// Groups rows by (method, latency) in that order.
pub fn summarize(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, u64), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.latency_ms.to_bits())).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let col = |f: fn(&MetricsRow) -> f64| spread(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                method: g[0].method,
                latency_ms: g[0].latency_ms,
                seeds: g.len(),
                completion_rate: col(|r| r.completion_rate),
                energy_efficiency: col(|r| r.energy_efficiency),
                adaptability: col(|r| r.adaptability),
                reliability: col(|r| r.reliability),
            }
        })
        .collect();
    out.sort_by(|a, b| a.method.cmp(&b.method).then(a.latency_ms.total_cmp(&b.latency_ms)));
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let header = [
        "method",
        "latency_ms",
        "seeds",
        "completion_rate_mean",
        "completion_rate_std",
        "energy_efficiency_mean",
        "energy_efficiency_std",
        "adaptability_mean",
        "adaptability_std",
        "reliability_mean",
        "reliability_std",
    ];
    write_records(
        &header,
        rows.iter().map(|r| {
            let mut v = vec![r.method.to_string(), format!("{:.6}", r.latency_ms), r.seeds.to_string()];
            for s in [r.completion_rate, r.energy_efficiency, r.adaptability, r.reliability] {
                v.push(format!("{:.6}", s.mean));
                v.push(format!("{:.6}", s.std));
            }
            v
        }),
    )
}

/// Whole-sweep scores of one method: the mean of each score over every
/// (latency, seed) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: Method,
    pub cells: usize,
    pub completion_rate: f64,
    pub energy_efficiency: f64,
    pub adaptability: f64,
    pub reliability: f64,
}

pub fn method_scores(rows: &[MetricsRow]) -> Vec<MethodScores> {
    let mut groups: BTreeMap<Method, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.method).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(method, g)| {
            let mean = |f: fn(&MetricsRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / g.len() as f64;
            MethodScores {
                method,
                cells: g.len(),
                completion_rate: mean(|r| r.completion_rate),
                energy_efficiency: mean(|r| r.energy_efficiency),
                adaptability: mean(|r| r.adaptability),
                reliability: mean(|r| r.reliability),
            }
        })
        .collect()
}

pub fn scores_csv(scores: &[MethodScores]) -> String {
    let header = ["method", "cells", "completion_rate", "energy_efficiency", "adaptability", "reliability"];
    write_records(
        &header,
        scores.iter().map(|s| {
            vec![
                s.method.to_string(),
                s.cells.to_string(),
                format!("{:.6}", s.completion_rate),
                format!("{:.6}", s.energy_efficiency),
                format!("{:.6}", s.adaptability),
                format!("{:.6}", s.reliability),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(issued: usize, done: usize, clean: usize, energy: f64) -> Counters {
        Counters { issued, completed_on_time: done, clean, total_energy_j: energy, substitutions: 0, failures: 0 }
    }

    #[test]
    fn ratio_examples() {
        let m = MetricsConfig { e_ref: 0.005, ..MetricsConfig::default() };
        let s = compute_scores(&counters(50, 48, 48, 100.0), &counters(50, 48, 48, 100.0), &m);
        assert_eq!(s.completion_rate, 0.96);
        assert_eq!(s.reliability, 0.96);
        let s = compute_scores(&counters(50, 40, 0, 10_000.0), &counters(50, 30, 0, 1.0), &m);
        assert!((s.energy_efficiency - 0.8).abs() < 1e-12);
        assert!((s.adaptability - 0.75).abs() < 1e-12);
        let s = compute_scores(&counters(10, 8, 0, 1.0), &counters(10, 6, 0, 1.0), &m);
        assert!((s.adaptability - 0.75).abs() < 1e-12);
    }

    #[test]
    fn division_guard() {
        let s = compute_scores(&Counters::default(), &Counters::default(), &MetricsConfig::default());
        assert!(s.division_guard);
        assert_eq!((s.completion_rate, s.energy_efficiency, s.adaptability, s.reliability), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            MetricsRow::new(
                Method::P2aecf,
                10.0,
                1,
                &counters(50, 48, 40, 1234.5678912),
                &Scores {
                    completion_rate: 0.96,
                    energy_efficiency: 0.1234567891,
                    adaptability: 1.0,
                    reliability: 0.8,
                    division_guard: false,
                },
            ),
            MetricsRow::new(Method::CloudCentric, 1500.0, 20, &counters(50, 0, 0, 0.0), &Scores::default()),
        ];
        let text = results_csv(&rows);
        assert!(text.starts_with("method,latency_ms,seed,issued,completed_on_time,completion_rate,total_energy_j,"));
        assert!(text.contains("p2aecf,10.000000,1,50,48,0.960000,1234.567891,0.123457,1.000000,0.800000,0,0\n"));
        assert_eq!(parse_results_csv(&text).unwrap(), rows);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(parse_results_csv("a,b\n1,2\n").is_err());
        let bad = format!("{}\np2aecf,x,1,1,1,1,1,1,1,1,0,0\n", RESULTS_HEADER.join(","));
        assert!(parse_results_csv(&bad).is_err());
    }

    #[test]
    fn summary_orders_latencies() {
        let c = counters(10, 5, 5, 1.0);
        let s = Scores { completion_rate: 0.5, ..Scores::default() };
        let rows: Vec<MetricsRow> = [500.0, 10.0, 100.0]
            .iter()
            .flat_map(|&l| (0..3).map(move |seed| (l, seed)))
            .map(|(l, seed)| MetricsRow::new(Method::FixedGraph, l, seed, &c, &s))
            .collect();
        let sum = summarize(&rows);
        assert_eq!(sum.iter().map(|r| r.latency_ms).collect::<Vec<_>>(), vec![10.0, 100.0, 500.0]);
        assert!(sum.iter().all(|r| r.seeds == 3 && r.completion_rate.mean == 0.5 && r.completion_rate.std == 0.0));
    }
}
