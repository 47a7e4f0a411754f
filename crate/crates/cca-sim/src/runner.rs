//! One simulation from config to report, with the correctness verdict
//! computed from the input directly.

use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, AdversarySpec, CorruptionMode};
use crate::alg::{execute, Output, Outputs};
use crate::config::{Problem, SimConfig};
use crate::engine::{BlacklistEvent, Diagnostics, EngineOptions, Sim};
use crate::error::Result;
use crate::input::InputArray;
use crate::payload::MachineId;
use crate::rng::{RandomTape, STREAM_HARNESS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub adversary: String,
    /// Nominal input density of the cell (the measured one unless the harness
    /// sets it).
    pub delta: f64,
    /// Measured density of the input.
    pub density: f64,
    pub q_max: u64,
    pub q_per_machine: Vec<u64>,
    pub m_total: u64,
    pub t_rounds: u64,
    pub correct: bool,
    pub corrupted_set: Vec<MachineId>,
    pub blacklist_events: Vec<BlacklistEvent>,
    pub diagnostics: Diagnostics,
}

impl SimReport {
    /// No sampling bad event was flagged during the run.
    pub fn clean(&self) -> bool {
        !self.diagnostics.flags.iter().any(|f| f.starts_with("bad_event"))
    }

    pub fn unjustified_blacklists(&self) -> usize {
        self.blacklist_events.iter().filter(|e| !e.justified).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// A report plus what the engine saw, for tests that need more than metrics.
pub struct RunDetail {
    pub report: SimReport,
    pub outputs: Outputs,
    /// Per index, the machines that queried it (empty unless recorded).
    pub query_log: Vec<Vec<MachineId>>,
    pub corruption_log: Vec<(u64, MachineId)>,
}

/// Whether every honest output solves the algorithm's problem on `input`.
pub fn verdict(problem: Problem, input: &InputArray, outputs: &[Option<Output>], honest: &[bool]) -> bool {
    let n = input.n();
    let mut covered = vec![false; n];
    let ok = outputs.iter().zip(honest).filter(|(_, h)| **h).all(|(o, _)| match (problem, o) {
        (Problem::Download | Problem::Resolve, Some(Output::Bits(b))) => b.as_slice() == input.bits(),
        (Problem::Disjunction, Some(Output::Bit(b))) => *b == input.or(),
        (Problem::Parity | Problem::ResolveParity, Some(Output::Bit(b))) => *b == input.xor(),
        (Problem::ExplicitDisjunction | Problem::Spread, Some(Output::Index(i))) => match i {
            Some(i) => *i < n && input.get(*i),
            None => !input.or(),
        },
        (Problem::Convergecast, Some(Output::Slices(s))) => s.iter().all(|(start, bits)| {
            bits.iter().enumerate().all(|(j, &b)| {
                let i = start + j;
                if i < n {
                    covered[i] = true;
                }
                i < n && input.get(i) == b
            })
        }),
        _ => false,
    });
    ok && (problem != Problem::Convergecast || covered.iter().all(|&c| c))
}

fn run_once(cfg: &SimConfig, input: &InputArray, adv: Adversary, options: EngineOptions) -> Result<RunDetail> {
    let label = adv.spec.label();
    let mut sim = Sim::new(cfg, input.clone(), adv, options)?;
    let outputs = execute(&mut sim)?;
    let out = sim.finish();
    let honest = &out.honest_at_end;
    let correct = verdict(cfg.algorithm.problem(), input, &outputs, honest);
    let q_max = out.ledger.queries.iter().zip(honest).filter(|(_, h)| **h).map(|(q, _)| *q).max().unwrap_or(0);
    let mut diagnostics = out.diag;
    let unjustified = out.ledger.blacklist_events.iter().filter(|e| !e.justified).count();
    if unjustified > 0 {
        diagnostics.set("unjustified_blacklists", unjustified as f64);
        diagnostics.flag("honest_blacklisted");
    }
    let mut corrupted_set = out.corrupted;
    corrupted_set.sort_unstable();
    Ok(RunDetail {
        report: SimReport {
            config: cfg.clone(),
            adversary: label,
            delta: input.density(),
            density: input.density(),
            q_max,
            q_per_machine: out.ledger.queries,
            m_total: out.ledger.honest_messages,
            t_rounds: out.ledger.rounds,
            correct,
            corrupted_set,
            blacklist_events: out.ledger.blacklist_events,
            diagnostics,
        },
        outputs,
        query_log: out.query_log,
        corruption_log: out.corruption_log,
    })
}

/// Candidate corruption sets for the omniscient search: the machines covering
/// the least-covered bit of the failure-free run (when few enough), any
/// explicit list, the lowest and highest ids, then seeded random sets.
fn candidates(cfg: &SimConfig, input: &InputArray, spec: &AdversarySpec, budget: usize) -> Result<Vec<Vec<MachineId>>> {
    let k = cfg.k;
    let want = spec.candidate_count().max(1);
    let mut out: Vec<Vec<MachineId>> = Vec::new();
    let push = |mut c: Vec<MachineId>, out: &mut Vec<Vec<MachineId>>| {
        c.sort_unstable();
        c.dedup();
        if c.len() <= budget && out.len() < want && !out.contains(&c) {
            out.push(c);
        }
    };
    if budget == 0 {
        return Ok(vec![Vec::new()]);
    }
    let quiet = Adversary::new(AdversarySpec::none(), cfg)?;
    let clean = run_once(cfg, input, quiet, EngineOptions { record_queries: true, ..Default::default() })?;
    if let Some(min) = clean.query_log.iter().min_by_key(|q| {
        let mut q = (*q).clone();
        q.sort_unstable();
        q.dedup();
        q.len()
    }) {
        let mut cover = min.clone();
        cover.sort_unstable();
        cover.dedup();
        if cover.len() <= budget {
            // pad with the lowest other ids so the full budget is used
            let mut set = cover.clone();
            set.extend((0..k).filter(|m| !cover.contains(m)).take(budget - cover.len()));
            push(set, &mut out);
        }
    }
    if let Some(ms) = spec.machines() {
        push(ms, &mut out);
    }
    push((0..budget).collect(), &mut out);
    push((k - budget..k).collect(), &mut out);
    let mut tape = RandomTape::new(cfg.seed, STREAM_HARNESS);
    let mut tries = 0;
    while out.len() < want && tries < 64 * want {
        let mut ids: Vec<MachineId> = (0..k).collect();
        tape.shuffle(&mut ids);
        push(ids[..budget].to_vec(), &mut out);
        tries += 1;
    }
    Ok(out)
}

/// Runs one simulation. Under `DetOmniscient` the adversary tries each
/// candidate corruption set and keeps the worst run: an incorrect one if any,
/// else the one with the largest `q_max`.
pub fn run_detailed(cfg: &SimConfig, input: &InputArray, spec: &AdversarySpec, options: EngineOptions) -> Result<RunDetail> {
    cfg.validate()?;
    if input.n() != cfg.n {
        return crate::error::config(format!("input has {} bits, config says n = {}", input.n(), cfg.n));
    }
    let adv = Adversary::new(spec.clone(), cfg)?;
    if spec.mode != CorruptionMode::DetOmniscient {
        return run_once(cfg, input, adv, options);
    }
    let sets = candidates(cfg, input, spec, adv.budget())?;
    let mut worst: Option<RunDetail> = None;
    for set in &sets {
        let mut a = adv.clone();
        a.force(set.clone());
        let d = run_once(cfg, input, a, options)?;
        let worse = match &worst {
            None => true,
            Some(w) => (w.report.correct && !d.report.correct) || (w.report.correct == d.report.correct && d.report.q_max > w.report.q_max),
        };
        if worse {
            worst = Some(d);
        }
    }
    let mut w = worst.expect("at least one candidate");
    w.report.diagnostics.set("candidates_tried", sets.len() as f64);
    Ok(w)
}

pub fn run(cfg: &SimConfig, input: &InputArray, spec: &AdversarySpec) -> Result<SimReport> {
    Ok(run_detailed(cfg, input, spec, EngineOptions::default())?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::StrategyId;
    use crate::config::AlgorithmId;

    #[test]
    fn naive_download_report() {
        let input = InputArray::parse("0110100111010001").unwrap();
        let cfg = SimConfig::new(AlgorithmId::NaiveDownload, 16, 4, 0.25, 1);
        let r = run(&cfg, &input, &AdversarySpec::stat(StrategyId::BitFlipLiar)).unwrap();
        assert!(r.correct);
        assert_eq!((r.q_max, r.t_rounds, r.m_total), (16, 0, 0));
        assert_eq!(r.corrupted_set.len(), 1);
    }

    #[test]
    fn verdict_rejects_missing_outputs() {
        let input = InputArray::parse("01").unwrap();
        let outs = vec![Some(Output::Bit(true)), None];
        assert!(!verdict(Problem::Disjunction, &input, &outs, &[true, true]));
        assert!(verdict(Problem::Disjunction, &input, &outs, &[true, false]));
        assert!(!verdict(Problem::Parity, &InputArray::parse("11").unwrap(), &outs, &[true, false]));
    }

    #[test]
    fn convergecast_verdict_needs_cover() {
        let input = InputArray::parse("0110").unwrap();
        let half = vec![Some(Output::Slices(vec![(0, vec![false, true])]))];
        assert!(!verdict(Problem::Convergecast, &input, &half, &[true]));
        let full = vec![Some(Output::Slices(vec![(0, vec![false, true]), (2, vec![true, false])]))];
        assert!(verdict(Problem::Convergecast, &input, &full, &[true]));
    }

    #[test]
    fn omniscient_picks_from_candidates() {
        let input = InputArray::parse("0000000000000001").unwrap();
        let cfg = SimConfig::new(AlgorithmId::RoundRobinDownload, 16, 4, 0.25, 9);
        let spec = AdversarySpec::new(CorruptionMode::DetOmniscient, StrategyId::BitFlipLiar);
        let r = run(&cfg, &input, &spec).unwrap();
        assert!(r.correct);
        assert!(r.diagnostics.get("candidates_tried") >= 2.0);
    }
}
