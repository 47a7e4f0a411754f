//! Batch experiments: grids of configs, run across a worker pool or
//! sequentially, JSONL reports, per-cell summaries and CSV export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adversary::AdversarySpec;
use crate::config::{AlgorithmId, Params, Profile, SimConfig};
use crate::error::{Result, SimError};
use crate::expanders::{build, lse_checkable, sample_graph, verify, ExpanderKind, ExpanderParams, Verdict};
use crate::input::InputSpec;
use crate::runner::{run, SimReport};

/// A grid over (n, k, β, δ, algorithm, adversary) with an explicit seed list.
/// Inputs are `Density { delta }` unless `input` overrides them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub beta: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    pub algorithms: Vec<AlgorithmId>,
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<AdversarySpec>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub input: Option<InputSpec>,
}

fn default_delta() -> Vec<f64> {
    vec![0.5]
}

fn default_adversaries() -> Vec<AdversarySpec> {
    vec![AdversarySpec::none()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub delta: f64,
    pub algorithm: AlgorithmId,
    pub adversary: AdversarySpec,
}

impl Cell {
    pub fn config(&self, plan: &ExperimentPlan, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::new(self.algorithm, self.n, self.k, self.beta, seed).with_profile(plan.profile);
        cfg.params = plan.params.clone();
        cfg
    }
}

impl ExperimentPlan {
    pub fn empty() -> Self {
        ExperimentPlan {
            n: Vec::new(),
            k: Vec::new(),
            beta: Vec::new(),
            delta: default_delta(),
            algorithms: Vec::new(),
            adversaries: default_adversaries(),
            seeds: Vec::new(),
            params: Params::new(),
            profile: Profile::Paper,
            input: None,
        }
    }

    /// Cells in grid order: algorithm, n, k, β, δ, adversary.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &algorithm in &self.algorithms {
            for &n in &self.n {
                for &k in &self.k {
                    for &beta in &self.beta {
                        for &delta in &self.delta {
                            for adversary in &self.adversaries {
                                out.push(Cell { n, k, beta, delta, algorithm, adversary: adversary.clone() });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Every cell's config must validate before anything runs.
    pub fn validate(&self) -> Result<()> {
        for c in self.cells() {
            c.config(self, 0).validate().map_err(|e| {
                SimError::Config(format!("cell n={} k={} beta={} {}: {e}", c.n, c.k, c.beta, c.algorithm))
            })?;
        }
        Ok(())
    }
}

/// A single run as read by `cca run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algorithm: AlgorithmId,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "default_input")]
    pub input: InputSpec,
    #[serde(default = "AdversarySpec::none")]
    pub adversary: AdversarySpec,
}

fn default_input() -> InputSpec {
    InputSpec::Density { delta: 0.5 }
}

impl RunSpec {
    pub fn config(&self) -> SimConfig {
        let mut cfg = SimConfig::new(self.algorithm, self.n, self.k, self.beta, self.seed).with_profile(self.profile);
        cfg.params = self.params.clone();
        cfg
    }

    pub fn run(&self) -> Result<SimReport> {
        let input = self.input.generate(self.n, self.seed)?;
        let mut r = run(&self.config(), &input, &self.adversary)?;
        r.delta = self.input.nominal_delta(self.n);
        Ok(r)
    }
}

/// One line of a result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Report(Box<SimReport>),
    Fault { fault: String, cell: Box<Cell>, seed: u64 },
}

pub fn run_cell_seed(plan: &ExperimentPlan, cell: &Cell, seed: u64) -> Result<SimReport> {
    let cfg = cell.config(plan, seed);
    let spec = plan.input.clone().unwrap_or(InputSpec::Density { delta: cell.delta });
    let input = spec.generate(cell.n, seed)?;
    let mut r = run(&cfg, &input, &cell.adversary)?;
    r.delta = cell.delta;
    Ok(r)
}

fn map_runs<T: Send, F: Fn(usize) -> T + Sync + Send>(count: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Runs every (cell, seed) pair, in parallel when the `parallel` feature is
/// on. Records come back in (cell, seed) order either way. A failing run
/// ends its cell with a fault record; later seeds of that cell are dropped.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<Record>> {
    plan.validate()?;
    let cells = plan.cells();
    let s = plan.seeds.len();
    let results = map_runs(cells.len() * s, |j| run_cell_seed(plan, &cells[j / s.max(1)], plan.seeds[j % s.max(1)]));
    Ok(collect(&cells, &plan.seeds, results))
}

/// Single-threaded reference path, used by the bench and equivalence tests.
pub fn run_plan_sequential(plan: &ExperimentPlan) -> Result<Vec<Record>> {
    plan.validate()?;
    let cells = plan.cells();
    let mut results = Vec::new();
    for c in &cells {
        for &seed in &plan.seeds {
            results.push(run_cell_seed(plan, c, seed));
        }
    }
    Ok(collect(&cells, &plan.seeds, results))
}

fn collect(cells: &[Cell], seeds: &[u64], results: Vec<Result<SimReport>>) -> Vec<Record> {
    let mut out = Vec::new();
    let mut it = results.into_iter();
    for c in cells {
        let mut aborted = false;
        for &seed in seeds {
            let r = it.next().expect("one result per run");
            if aborted {
                continue;
            }
            match r {
                Ok(rep) => out.push(Record::Report(Box::new(rep))),
                Err(e) => {
                    out.push(Record::Fault { fault: e.to_string(), cell: Box::new(c.clone()), seed });
                    aborted = true;
                }
            }
        }
    }
    out
}

pub fn to_jsonl(records: &[Record]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// Reports from JSONL text. Fault lines are passed over; lines that are
/// neither are counted in the second value.
pub fn parse_jsonl(text: &str) -> (Vec<SimReport>, usize) {
    let mut reports = Vec::new();
    let mut bad = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<Record>(line) {
            Ok(Record::Report(r)) => reports.push(*r),
            Ok(Record::Fault { .. }) => {}
            Err(_) => bad += 1,
        }
    }
    (reports, bad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub delta: f64,
    pub alg: String,
    pub adversary: String,
    pub runs: usize,
    pub q_max_med: f64,
    pub q_max_p95: f64,
    pub t_mean: f64,
    pub m_mean: f64,
    pub correct_rate: f64,
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[u64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1] as f64
}

/// Median, averaging the two middle values for even counts.
pub fn median(sorted: &[u64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        l if l % 2 == 1 => sorted[l / 2] as f64,
        l => (sorted[l / 2 - 1] + sorted[l / 2]) as f64 / 2.0,
    }
}

/// Groups reports by cell, keeping first-appearance order.
pub fn summarize(reports: &[SimReport]) -> Vec<CellSummary> {
    let mut groups: Vec<(CellSummary, Vec<&SimReport>)> = Vec::new();
    for r in reports {
        let key = CellSummary {
            n: r.config.n,
            k: r.config.k,
            beta: r.config.beta,
            delta: r.delta,
            alg: r.config.algorithm.name().to_string(),
            adversary: r.adversary.clone(),
            runs: 0,
            q_max_med: 0.0,
            q_max_p95: 0.0,
            t_mean: 0.0,
            m_mean: 0.0,
            correct_rate: 0.0,
        };
        match groups.iter_mut().find(|(g, _)| same_cell(g, &key)) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(mut s, rs)| {
            let mut q: Vec<u64> = rs.iter().map(|r| r.q_max).collect();
            q.sort_unstable();
            let len = rs.len() as f64;
            s.runs = rs.len();
            s.q_max_med = median(&q);
            s.q_max_p95 = percentile(&q, 0.95);
            s.t_mean = rs.iter().map(|r| r.t_rounds as f64).sum::<f64>() / len;
            s.m_mean = rs.iter().map(|r| r.m_total as f64).sum::<f64>() / len;
            s.correct_rate = rs.iter().filter(|r| r.correct).count() as f64 / len;
            s
        })
        .collect()
}

fn same_cell(a: &CellSummary, b: &CellSummary) -> bool {
    a.n == b.n && a.k == b.k && a.beta == b.beta && a.delta == b.delta && a.alg == b.alg && a.adversary == b.adversary
}

pub const CSV_HEADER: &str = "n,k,beta,delta,alg,adversary,q_max_med,q_max_p95,t_mean,m_mean,correct_rate";

pub fn to_csv(summaries: &[CellSummary]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for c in summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.n,
            c.k,
            c.beta,
            c.delta,
            c.alg,
            c.adversary,
            c.q_max_med,
            c.q_max_p95,
            c.t_mean,
            c.m_mean,
            c.correct_rate
        );
    }
    s
}

/// JSONL text to CSV text; returns the CSV and the number of skipped lines.
pub fn export_csv(jsonl: &str) -> (String, usize) {
    let (reports, bad) = parse_jsonl(jsonl);
    (to_csv(&summarize(&reports)), bad)
}

/// Result of `verify_expander`: a verdict for a graph built from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpanderCheck {
    pub params: ExpanderParams,
    pub seed: u64,
    pub degree: usize,
    pub verdict: Verdict,
}

impl ExpanderCheck {
    pub fn describe(&self) -> String {
        let kind = match self.params.kind {
            ExpanderKind::Lse => "LSE",
            ExpanderKind::Glse => "GLSE",
        };
        match &self.verdict.witness {
            None => format!("PASS {kind} n={} k={} d={}", self.params.n, self.params.k, self.degree),
            Some(w) => format!(
                "FAIL {kind} n={} k={} d={} witness S={:?} T={:?}",
                self.params.n, self.params.k, self.degree, w.s, w.t
            ),
        }
    }
}

/// Builds the seeded graph and checks it exhaustively. When the seeded
/// construction finds no passing graph, the first sample is checked instead
/// so the failure comes with a witness. Oversized instances are refused.
pub fn verify_expander(params: &ExpanderParams, seed: u64) -> Result<ExpanderCheck> {
    if !lse_checkable(params.k, params.n, params.beta) {
        return Err(SimError::TooLarge(format!(
            "n={} k={} beta={} is too large for the exhaustive check; keep C(k, floor(beta k)) * n below 5e7 and k <= 64",
            params.n, params.k, params.beta
        )));
    }
    let g = match build(params, seed) {
        Ok(g) => g,
        Err(SimError::Config(_)) => sample_graph(params, seed, 0),
        Err(e) => return Err(e),
    };
    let verdict = verify(&g, params)?;
    Ok(ExpanderCheck { params: params.clone(), seed, degree: params.degree(), verdict })
}
