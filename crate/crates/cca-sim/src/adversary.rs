//! Corruption scheduling and the Byzantine strategy library.
//!
//! Honest code computes a template action for every machine, corrupted or
//! not. For corrupted machines the engine hands that template to
//! [`Adversary::act`], which returns what the machine actually sends.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::SimConfig;
use crate::error::{config, Result};
use crate::input::InputArray;
use crate::payload::{Dest, Envelope, MachineId, Payload};
use crate::rng::{RandomTape, STREAM_ADVERSARY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorruptionMode {
    StaticBeforeRound0,
    AdaptivePerRound,
    DetOmniscient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyId {
    /// Crash: sends nothing.
    Silent,
    /// Follows the protocol; useful with planted false knowledge.
    Honest,
    BitFlipLiar,
    SplitVote,
    Infiltrator,
    KTARequester,
    TieForcer,
    /// Replays per-machine bit scripts in place of every reported bit.
    Scripted,
    /// Infiltrator in committees, KTARequester in requests, BitFlipLiar elsewhere.
    Composite,
}

impl StrategyId {
    pub const LIBRARY: [StrategyId; 9] = [
        StrategyId::Silent,
        StrategyId::Honest,
        StrategyId::BitFlipLiar,
        StrategyId::SplitVote,
        StrategyId::Infiltrator,
        StrategyId::KTARequester,
        StrategyId::TieForcer,
        StrategyId::Scripted,
        StrategyId::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::Silent => "Silent",
            StrategyId::Honest => "Honest",
            StrategyId::BitFlipLiar => "BitFlipLiar",
            StrategyId::SplitVote => "SplitVote",
            StrategyId::Infiltrator => "Infiltrator",
            StrategyId::KTARequester => "KTARequester",
            StrategyId::TieForcer => "TieForcer",
            StrategyId::Scripted => "Scripted",
            StrategyId::Composite => "Composite",
        }
    }
}

/// `{mode, strategy, params}`.
///
/// Recognised params:
/// * selection: `select` = "random" | "lowest" | "highest", `machines` = explicit list
/// * adaptive: `initial` (default budget/2), `per_round` (default 1)
/// * omniscient: `candidates` (default 8)
/// * `budget`: optional cap below βk
/// * TieForcer: `group_size` (2), `stride` (1), `offset` (0)
/// * Infiltrator: `report` = "split" | "flip", `extra` claims beyond the cap (0)
/// * Scripted: `scripts` = {"machine id": [bools]}, replayed over reported bits in
///   order, or read as per-position beliefs when answering XOR queries; on a
///   next-index step a set bit sends the index for the opposite belief
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub mode: CorruptionMode,
    pub strategy: StrategyId,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl AdversarySpec {
    pub fn new(mode: CorruptionMode, strategy: StrategyId) -> Self {
        AdversarySpec { mode, strategy, params: BTreeMap::new() }
    }

    pub fn stat(strategy: StrategyId) -> Self {
        Self::new(CorruptionMode::StaticBeforeRound0, strategy)
    }

    pub fn none() -> Self {
        Self::stat(StrategyId::Silent).with("budget", 0)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn label(&self) -> String {
        let mode = match self.mode {
            CorruptionMode::StaticBeforeRound0 => "static",
            CorruptionMode::AdaptivePerRound => "adaptive",
            CorruptionMode::DetOmniscient => "omniscient",
        };
        if self.params.get("budget").and_then(Value::as_u64) == Some(0) {
            return "none".to_string();
        }
        format!("{}:{}", mode, self.strategy.name())
    }

    fn num(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(Value::as_str)
    }

    pub fn machines(&self) -> Option<Vec<MachineId>> {
        self.params
            .get("machines")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_u64).map(|x| x as usize).collect())
    }

    pub fn candidate_count(&self) -> usize {
        self.num("candidates").map(|x| x as usize).unwrap_or(8)
    }
}

/// What a corrupted machine is being asked to do.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// Public-committee bit reports (fixed membership).
    Report,
    /// Private committee for `index`; a corrupted machine may claim membership.
    /// `live` tells whether any honest machine currently listens for this index.
    Committee { index: usize, phase: usize, cap: Option<f64>, live: bool },
    /// Announcing set-bit indices.
    IndexClaim,
    Flag,
    KnownList,
    Requests,
    /// Next-index answer; `lie` is what a machine believing the complemented
    /// input would send.
    NextIndex { lie: u32 },
    /// Reply about positions `l..=r` of the resolver's index list.
    XorClaim { l: usize, r: usize },
    Semiparity,
    /// Resolver-side control traffic.
    Control,
}

/// Everything visible to the adversary at the start of round `round`.
pub struct AdversaryView<'a> {
    pub round: u64,
    pub input: &'a InputArray,
    /// Honest senders during round `round - 1`.
    pub prev_senders: &'a [MachineId],
    /// Every (round, machine) coin that came up heads before `round`.
    pub heads: &'a [(u64, MachineId)],
    pub corrupted: &'a [MachineId],
}

pub struct ActContext<'a> {
    pub machine: MachineId,
    pub round: u64,
    pub step: &'a Step,
    pub input: &'a InputArray,
    pub corrupted: &'a [MachineId],
    pub k: usize,
}

#[derive(Clone, Debug)]
pub struct Adversary {
    pub spec: AdversarySpec,
    budget: usize,
    tape: RandomTape,
    /// Set picked by the omniscient search, injected by the harness.
    forced: Option<Vec<MachineId>>,
    claims: HashMap<(MachineId, usize), usize>,
    script_pos: HashMap<MachineId, usize>,
    scripts: HashMap<MachineId, Vec<bool>>,
    fakes_sent: usize,
}

impl Adversary {
    pub fn new(spec: AdversarySpec, cfg: &SimConfig) -> Result<Self> {
        let full = cfg.budget();
        let budget = match spec.num("budget") {
            Some(b) if b < 0.0 || b as usize > full => {
                return config(format!("adversary budget {b} exceeds beta*k = {full}"));
            }
            Some(b) => b as usize,
            None => full,
        };
        let mut scripts = HashMap::new();
        if let Some(obj) = spec.params.get("scripts").and_then(Value::as_object) {
            for (key, v) in obj {
                let id: usize = key.parse().map_err(|_| crate::SimError::Config(format!("bad script key {key}")))?;
                let bits = v
                    .as_array()
                    .map(|a| a.iter().map(|x| x.as_bool().unwrap_or(false)).collect())
                    .unwrap_or_default();
                scripts.insert(id, bits);
            }
        }
        if let Some(ms) = spec.machines() {
            if ms.len() > budget {
                return config("explicit corruption list exceeds the budget");
            }
            if ms.iter().any(|&m| m >= cfg.k) {
                return config("explicit corruption list names a machine outside [0, k)");
            }
        }
        Ok(Adversary {
            budget,
            tape: RandomTape::new(cfg.seed, STREAM_ADVERSARY),
            forced: None,
            claims: HashMap::new(),
            script_pos: HashMap::new(),
            scripts,
            fakes_sent: 0,
            spec,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn force(&mut self, set: Vec<MachineId>) {
        self.forced = Some(set);
    }

    fn select(&mut self, count: usize, k: usize) -> Vec<MachineId> {
        let count = count.min(k);
        if let Some(ms) = self.spec.machines() {
            return ms.into_iter().take(count).collect();
        }
        match self.spec.text("select").unwrap_or("random") {
            "lowest" => (0..count).collect(),
            "highest" => (k - count..k).collect(),
            _ => {
                let mut ids: Vec<MachineId> = (0..k).collect();
                self.tape.shuffle(&mut ids);
                let mut pick = ids[..count].to_vec();
                pick.sort_unstable();
                pick
            }
        }
    }

    /// Corruptions in force before round 0.
    pub fn initial(&mut self, k: usize) -> Vec<MachineId> {
        if let Some(f) = self.forced.clone() {
            return f;
        }
        match self.spec.mode {
            CorruptionMode::StaticBeforeRound0 | CorruptionMode::DetOmniscient => self.select(self.budget, k),
            CorruptionMode::AdaptivePerRound => {
                let init = self.spec.num("initial").map(|x| x as usize).unwrap_or(self.budget / 2);
                self.select(init.min(self.budget), k)
            }
        }
    }

    /// New corruptions at the start of a round. Only the adaptive mode acts,
    /// and only on the view (nothing from the current round is in it).
    pub fn on_round(&mut self, view: &AdversaryView<'_>) -> Vec<MachineId> {
        if self.spec.mode != CorruptionMode::AdaptivePerRound {
            return Vec::new();
        }
        let left = self.budget.saturating_sub(view.corrupted.len());
        let per_round = self.spec.num("per_round").map(|x| x as usize).unwrap_or(1);
        view.prev_senders
            .iter()
            .copied()
            .filter(|m| !view.corrupted.contains(m))
            .take(left.min(per_round))
            .collect()
    }

    pub fn act(&mut self, ctx: &ActContext<'_>, honest: Vec<Envelope>) -> Vec<Envelope> {
        use StrategyId::*;
        match self.spec.strategy {
            Silent => Vec::new(),
            Honest => honest,
            BitFlipLiar => self.flip(ctx, honest),
            SplitVote => self.split(ctx, honest),
            Infiltrator => match ctx.step {
                Step::Committee { .. } => self.infiltrate(ctx),
                _ => self.flip(ctx, honest),
            },
            KTARequester => match ctx.step {
                Step::Requests => self.request_everything(ctx),
                _ => honest,
            },
            TieForcer => match ctx.step {
                Step::Committee { index, .. } => self.tie(ctx, *index, honest),
                _ => honest,
            },
            Scripted => self.scripted(ctx, honest),
            Composite => match ctx.step {
                Step::Committee { .. } => self.infiltrate(ctx),
                Step::Requests => self.request_everything(ctx),
                _ => self.flip(ctx, honest),
            },
        }
    }

    fn fake_index(&mut self, ctx: &ActContext<'_>, j: usize) -> Option<u32> {
        // coordinated: every liar names the same zero positions
        let zeros = ctx.input.n() - ctx.input.ones();
        if zeros == 0 {
            return None;
        }
        self.fakes_sent += 1;
        ctx.input.zero_indices().nth(j % zeros).map(|i| i as u32)
    }

    fn lie_payload(&mut self, ctx: &ActContext<'_>, p: Payload, j: usize) -> Payload {
        match p {
            Payload::Index(i) => self.fake_index(ctx, j).map(Payload::Index).unwrap_or(Payload::Index(i)),
            Payload::NextIndex(i) => match ctx.step {
                Step::NextIndex { lie } => Payload::NextIndex(*lie),
                _ => Payload::NextIndex(i),
            },
            other => match other.bit() {
                Some(b) => other.with_bit(!b),
                None => other,
            },
        }
    }

    fn flip(&mut self, ctx: &ActContext<'_>, honest: Vec<Envelope>) -> Vec<Envelope> {
        match ctx.step {
            Step::IndexClaim if honest.is_empty() => {
                self.fake_index(ctx, 0).map(|i| vec![Envelope::all(Payload::Index(i))]).unwrap_or_default()
            }
            _ => honest
                .into_iter()
                .enumerate()
                .map(|(j, e)| Envelope { dest: e.dest, payload: self.lie_payload(ctx, e.payload, j) })
                .collect(),
        }
    }

    fn second_half(ctx: &ActContext<'_>, dst: MachineId) -> bool {
        dst >= ctx.k / 2
    }

    fn split(&mut self, ctx: &ActContext<'_>, honest: Vec<Envelope>) -> Vec<Envelope> {
        let template = match ctx.step {
            Step::Committee { index, .. } if honest.is_empty() => {
                vec![Envelope::all(Payload::Bit { index: *index as u32, bit: ctx.input.get(*index) })]
            }
            Step::IndexClaim if honest.is_empty() => match self.fake_index(ctx, 0) {
                // only the second half hears about a fake
                Some(i) => {
                    return (0..ctx.k)
                        .filter(|&d| d != ctx.machine && Self::second_half(ctx, d))
                        .map(|d| Envelope::to(d, Payload::Index(i)))
                        .collect();
                }
                None => return Vec::new(),
            },
            _ => honest,
        };
        let mut out = Vec::new();
        for (j, e) in template.into_iter().enumerate() {
            let dsts: Vec<MachineId> = match e.dest {
                Dest::All => (0..ctx.k).filter(|&d| d != ctx.machine).collect(),
                Dest::To(d) => vec![d],
            };
            for d in dsts {
                let hi = Self::second_half(ctx, d);
                let payload = match e.payload.bit() {
                    Some(_) => e.payload.with_bit(hi),
                    None if hi => self.lie_payload(ctx, e.payload, j),
                    None => e.payload,
                };
                out.push(Envelope::to(d, payload));
            }
        }
        out
    }

    fn infiltrate(&mut self, ctx: &ActContext<'_>) -> Vec<Envelope> {
        let (index, phase, cap, live) = match ctx.step {
            Step::Committee { index, phase, cap, live } => (*index, *phase, *cap, *live),
            _ => return Vec::new(),
        };
        if !live {
            return Vec::new();
        }
        let extra = self.spec.num("extra").unwrap_or(0.0) as usize;
        let limit = cap.map(|c| c.floor() as usize + extra).unwrap_or(usize::MAX);
        let used = self.claims.entry((ctx.machine, phase)).or_insert(0);
        if *used >= limit {
            return Vec::new();
        }
        *used += 1;
        let truth = ctx.input.get(index);
        let idx = index as u32;
        match self.spec.text("report").unwrap_or("split") {
            "flip" => vec![Envelope::all(Payload::Bit { index: idx, bit: !truth })],
            _ => (0..ctx.k)
                .filter(|&d| d != ctx.machine)
                .map(|d| Envelope::to(d, Payload::Bit { index: idx, bit: Self::second_half(ctx, d) }))
                .collect(),
        }
    }

    fn request_everything(&mut self, ctx: &ActContext<'_>) -> Vec<Envelope> {
        (0..ctx.input.n()).map(|i| Envelope::all(Payload::Request(i as u32))).collect()
    }

    fn tie(&mut self, ctx: &ActContext<'_>, index: usize, honest: Vec<Envelope>) -> Vec<Envelope> {
        let group = self.spec.num("group_size").unwrap_or(2.0).max(1.0) as usize;
        let stride = self.spec.num("stride").unwrap_or(1.0).max(1.0) as usize;
        let offset = self.spec.num("offset").unwrap_or(0.0) as usize;
        let pos = match ctx.corrupted.iter().position(|&m| m == ctx.machine) {
            Some(p) => p,
            None => return honest,
        };
        let target = offset + (pos / group) * stride;
        if target == index && index < ctx.input.n() {
            vec![Envelope::all(Payload::Bit { index: index as u32, bit: !ctx.input.get(index) })]
        } else {
            honest
        }
    }

    fn scripted(&mut self, ctx: &ActContext<'_>, honest: Vec<Envelope>) -> Vec<Envelope> {
        let script = match self.scripts.get(&ctx.machine) {
            Some(s) => s,
            None => return honest,
        };
        if let Step::XorClaim { l, r } = *ctx.step {
            // the script is a believed value per position of the index list
            let b = script.iter().skip(l).take(r + 1 - l).fold(false, |a, &x| a ^ x);
            return honest.into_iter().map(|e| Envelope { dest: e.dest, payload: e.payload.with_bit(b) }).collect();
        }
        let pos = self.script_pos.entry(ctx.machine).or_insert(0);
        if let Step::NextIndex { lie } = *ctx.step {
            // a set script bit sends the index for the opposite belief
            return honest
                .into_iter()
                .map(|e| match e.payload {
                    Payload::NextIndex(_) if *pos < script.len() => {
                        let flip = script[*pos];
                        *pos += 1;
                        if flip {
                            Envelope { dest: e.dest, payload: Payload::NextIndex(lie) }
                        } else {
                            e
                        }
                    }
                    _ => e,
                })
                .collect();
        }
        honest
            .into_iter()
            .map(|e| match e.payload.bit() {
                Some(_) if *pos < script.len() => {
                    let b = script[*pos];
                    *pos += 1;
                    Envelope { dest: e.dest, payload: e.payload.with_bit(b) }
                }
                _ => e,
            })
            .collect()
    }
}
