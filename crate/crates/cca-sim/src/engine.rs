//! Synchronous round engine.
//!
//! A round is `begin_round` (adaptive corruption hook, then the query
//! sub-round), `begin_messages`, any number of `send` calls, and `end_round`,
//! which delivers everything at once and charges the round counter. A logical
//! step whose traffic exceeds one message per link is pipelined: `end_round`
//! is told the step's worst-case duration and charges that many rounds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversary::{ActContext, Adversary, AdversaryView, Step};
use crate::config::{Model, SimConfig};
use crate::error::{fault, Result};
use crate::input::InputArray;
use crate::payload::{Dest, Envelope, MachineId, Payload};
use crate::rng::{GlobalBits, RandomTape};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistEvent {
    pub round: u64,
    pub accuser: MachineId,
    pub accused: MachineId,
    /// Whether the accused was corrupted when accused.
    pub justified: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub queries: Vec<u64>,
    pub honest_messages: u64,
    pub rounds: u64,
    pub blacklist_events: Vec<BlacklistEvent>,
}

/// Free-form counters and flags an algorithm reports next to the ledger.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub values: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    /// Per-phase series (e.g. unknown-set sizes).
    pub series: BTreeMap<String, Vec<f64>>,
}

impl Diagnostics {
    pub fn add(&mut self, key: &str, v: f64) {
        *self.values.entry(key.to_string()).or_insert(0.0) += v;
    }

    pub fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    pub fn max(&mut self, key: &str, v: f64) {
        let e = self.values.entry(key.to_string()).or_insert(v);
        if v > *e {
            *e = v;
        }
    }

    pub fn min(&mut self, key: &str, v: f64) {
        let e = self.values.entry(key.to_string()).or_insert(v);
        if v < *e {
            *e = v;
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values.get(key).copied().unwrap_or(0.0)
    }

    pub fn push(&mut self, key: &str, v: f64) {
        self.series.entry(key.to_string()).or_default().push(v);
    }

    pub fn flag(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.flags.contains(&note) {
            self.flags.push(note);
        }
    }

    pub fn has_flag(&self, note: &str) -> bool {
        self.flags.iter().any(|f| f == note)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Keep, per index, the list of machines that queried it.
    pub record_queries: bool,
    /// Invert the outcome of machine `m`'s coins during logical round `t`.
    pub flip_coin_at: Option<(u64, MachineId)>,
}

/// Round charge for a message sub-round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    /// The step's precomputed worst case. Honest traffic above it is a fault;
    /// Byzantine traffic above it is clipped.
    Fixed(u64),
    /// Charge what the honest traffic actually needs (at least one round).
    Actual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    Query,
    Message,
}

#[derive(Clone, Debug, Default)]
pub struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        BitSet { words: vec![0; len.div_ceil(64)] }
    }

    pub fn get(&self, i: usize) -> bool {
        self.words.get(i / 64).is_some_and(|w| (w >> (i % 64)) & 1 == 1)
    }

    /// Returns whether the bit was newly set.
    pub fn insert(&mut self, i: usize) -> bool {
        let w = &mut self.words[i / 64];
        let was = (*w >> (i % 64)) & 1 == 1;
        *w |= 1 << (i % 64);
        !was
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| (w >> b) & 1 == 1).map(move |b| wi * 64 + b)
        })
    }
}

/// Everything delivered in one message sub-round.
#[derive(Clone, Debug)]
pub struct Mailbox {
    broadcasts: Vec<Vec<Payload>>,
    direct: Vec<Vec<(MachineId, Payload)>>,
    /// Blacklists of receivers at delivery time (only non-empty ones kept).
    blocked: Vec<Option<BitSet>>,
}

impl Mailbox {
    pub fn delivered(&self, src: MachineId, dst: MachineId) -> bool {
        src != dst && !self.blocked[dst].as_ref().is_some_and(|b| b.get(src))
    }

    /// Broadcast list of `src`, before receiver-side filtering.
    pub fn broadcasts(&self, src: MachineId) -> &[Payload] {
        &self.broadcasts[src]
    }

    pub fn senders(&self) -> impl Iterator<Item = MachineId> + '_ {
        self.broadcasts.iter().enumerate().filter(|(_, b)| !b.is_empty()).map(|(s, _)| s)
    }

    /// Direct messages to `dst` that survive its blacklist.
    pub fn direct_to(&self, dst: MachineId) -> impl Iterator<Item = (MachineId, &Payload)> + '_ {
        self.direct[dst].iter().filter(move |(s, _)| self.delivered(*s, dst)).map(|(s, p)| (*s, p))
    }

    pub fn has_blocked(&self, dst: MachineId) -> bool {
        self.blocked[dst].is_some()
    }

    /// Everything `dst` receives: broadcasts in sender order, then directs.
    pub fn inbox(&self, dst: MachineId) -> impl Iterator<Item = (MachineId, &Payload)> + '_ {
        self.broadcasts
            .iter()
            .enumerate()
            .filter(move |(s, _)| self.delivered(*s, dst))
            .flat_map(|(s, list)| list.iter().map(move |p| (s, p)))
            .chain(self.direct_to(dst))
    }
}

pub struct Sim {
    cfg: SimConfig,
    input: InputArray,
    adversary: Adversary,
    byz: Vec<bool>,
    corrupted: Vec<MachineId>,
    corruption_log: Vec<(u64, MachineId)>,
    ledger: Ledger,
    blacklists: Vec<BitSet>,
    phase: Phase,
    /// Logical round index (one per `begin_round`).
    step: u64,
    tapes: Vec<RandomTape>,
    global: GlobalBits,
    outbox: Vec<Vec<Envelope>>,
    prev_senders: Vec<MachineId>,
    heads: Vec<(u64, MachineId)>,
    options: EngineOptions,
    query_log: Vec<Vec<MachineId>>,
    cap_bits: u32,
    pub diag: Diagnostics,
}

/// What is left of an engine after the run.
pub struct SimOutcome {
    pub ledger: Ledger,
    pub corrupted: Vec<MachineId>,
    pub corruption_log: Vec<(u64, MachineId)>,
    pub diag: Diagnostics,
    pub query_log: Vec<Vec<MachineId>>,
    pub honest_at_end: Vec<bool>,
}

impl Sim {
    pub fn new(cfg: &SimConfig, input: InputArray, mut adversary: Adversary, options: EngineOptions) -> Result<Self> {
        let k = cfg.k;
        let initial = adversary.initial(k);
        let mut sim = Sim {
            cfg: cfg.clone(),
            adversary,
            byz: vec![false; k],
            corrupted: Vec::new(),
            corruption_log: Vec::new(),
            ledger: Ledger { queries: vec![0; k], ..Ledger::default() },
            blacklists: vec![BitSet::new(k); k],
            phase: Phase::Idle,
            step: 0,
            tapes: (0..k).map(|m| RandomTape::machine(cfg.seed, m)).collect(),
            global: GlobalBits::new(cfg.seed),
            outbox: vec![Vec::new(); k],
            prev_senders: Vec::new(),
            heads: Vec::new(),
            options,
            query_log: if options.record_queries { vec![Vec::new(); input.n()] } else { Vec::new() },
            cap_bits: cfg.cap_bits(),
            input,
            diag: Diagnostics::default(),
        };
        sim.corrupt(initial)?;
        Ok(sim)
    }

    fn corrupt(&mut self, ids: Vec<MachineId>) -> Result<()> {
        for m in ids {
            if m >= self.cfg.k {
                return fault(format!("adversary named machine {m} outside [0, k)"));
            }
            if !self.byz[m] {
                if self.corrupted.len() >= self.adversary.budget() {
                    return fault("adversary exceeded its corruption budget");
                }
                self.byz[m] = true;
                self.corrupted.push(m);
                self.corruption_log.push((self.step, m));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn k(&self) -> usize {
        self.cfg.k
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn is_byz(&self, m: MachineId) -> bool {
        self.byz[m]
    }

    pub fn corrupted(&self) -> &[MachineId] {
        &self.corrupted
    }

    /// Logical round index of the current or last round.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn rounds(&self) -> u64 {
        self.ledger.rounds
    }

    pub fn queries_of(&self, m: MachineId) -> u64 {
        self.ledger.queries[m]
    }

    /// The cloud's contents. For instrumentation (clean-run checks) only;
    /// machine code learns bits through `query`.
    pub fn ground_truth(&self) -> &InputArray {
        &self.input
    }

    pub fn begin_round(&mut self) -> Result<()> {
        if self.phase != Phase::Idle {
            return fault("begin_round inside an open round");
        }
        self.step += 1;
        let view = AdversaryView {
            round: self.step,
            input: &self.input,
            prev_senders: &self.prev_senders,
            heads: &self.heads,
            corrupted: &self.corrupted,
        };
        let fresh = self.adversary.on_round(&view);
        self.corrupt(fresh)?;
        self.prev_senders.clear();
        self.phase = Phase::Query;
        Ok(())
    }

    pub fn query(&mut self, m: MachineId, i: usize) -> Result<bool> {
        if self.phase != Phase::Query {
            return fault(format!("machine {m} queried outside a query sub-round"));
        }
        if i >= self.input.n() {
            return fault(format!("machine {m} queried index {i} outside [0, {})", self.input.n()));
        }
        self.ledger.queries[m] += 1;
        if self.options.record_queries {
            self.query_log[i].push(m);
        }
        Ok(self.input.get(i))
    }

    /// Global random bit `tag`, charged as one query.
    pub fn cloud_rg(&mut self, m: MachineId, tag: u64) -> Result<bool> {
        self.charge_rg(m, 1)?;
        Ok(self.global.bit(tag))
    }

    /// Charges `count` global-bit invocations to `m`; the bits themselves are
    /// read with `global_bit`.
    pub fn charge_rg(&mut self, m: MachineId, count: u64) -> Result<()> {
        if self.cfg.model != Model::Benign {
            return fault("global random bits exist only in the Benign model");
        }
        if self.phase != Phase::Query {
            return fault("cloud_rg outside a query sub-round");
        }
        self.ledger.queries[m] += count;
        Ok(())
    }

    pub fn global_bit(&mut self, tag: u64) -> Result<bool> {
        if self.cfg.model != Model::Benign {
            return fault("global random bits exist only in the Benign model");
        }
        Ok(self.global.bit(tag))
    }

    /// A private coin of machine `m` with bias `p`.
    pub fn coin(&mut self, m: MachineId, p: f64) -> bool {
        let mut heads = self.tapes[m].coin(p);
        if self.options.flip_coin_at == Some((self.step, m)) {
            heads = !heads;
        }
        if heads {
            self.heads.push((self.step, m));
        }
        heads
    }

    pub fn sample_below(&mut self, m: MachineId, bound: usize) -> usize {
        self.tapes[m].below(bound)
    }

    pub fn tape(&mut self, m: MachineId) -> &mut RandomTape {
        &mut self.tapes[m]
    }

    /// Ends a round that carried only queries; no round is charged.
    pub fn finish_queries(&mut self) -> Result<()> {
        if self.phase != Phase::Query {
            return fault("finish_queries outside a query sub-round");
        }
        self.phase = Phase::Idle;
        Ok(())
    }

    /// Charges rounds spent waiting for the slowest machine's sequential work.
    pub fn idle_rounds(&mut self, r: u64) {
        self.ledger.rounds += r;
    }

    pub fn begin_messages(&mut self) -> Result<()> {
        match self.phase {
            Phase::Query => {
                self.phase = Phase::Message;
                Ok(())
            }
            _ => fault("begin_messages without a query sub-round"),
        }
    }

    /// Round convenience: a round with no queries.
    pub fn message_round(&mut self) -> Result<()> {
        self.begin_round()?;
        self.begin_messages()
    }

    /// Machine `m`'s sends for this sub-round. For a corrupted machine the
    /// envelopes are only a template handed to the adversary.
    pub fn send(&mut self, m: MachineId, step: &Step, envelopes: Vec<Envelope>) -> Result<()> {
        if self.phase != Phase::Message {
            return fault("send outside a message sub-round");
        }
        if !self.byz[m] {
            for e in &envelopes {
                self.check(m, e)?;
            }
            self.outbox[m].extend(envelopes);
            return Ok(());
        }
        let ctx = ActContext {
            machine: m,
            round: self.step,
            step,
            input: &self.input,
            corrupted: &self.corrupted,
            k: self.cfg.k,
        };
        let acts = self.adversary.act(&ctx, envelopes);
        for e in acts {
            if self.check(m, &e).is_ok() {
                self.outbox[m].push(e);
            } else {
                self.diag.add("clipped_byzantine_messages", 1.0);
            }
        }
        Ok(())
    }

    fn check(&self, m: MachineId, e: &Envelope) -> Result<()> {
        if let Dest::To(d) = e.dest {
            if d == m || d >= self.cfg.k {
                return fault(format!("machine {m} addressed invalid destination {d}"));
            }
        }
        let size = e.payload.size_bits(self.cfg.n, self.cfg.k);
        if size > self.cap_bits {
            return fault(format!("payload {:?} is {size} bits, cap {}", e.payload, self.cap_bits));
        }
        if e.payload.max_field() > self.cfg.n.max(self.cfg.k) as u64 {
            return fault(format!("payload {:?} has an out-of-range field", e.payload));
        }
        Ok(())
    }

    pub fn end_round(&mut self, budget: Budget) -> Result<Mailbox> {
        if self.phase != Phase::Message {
            return fault("end_round without a message sub-round");
        }
        let k = self.cfg.k;
        let mut per_link = vec![0u64; k];
        let mut needed = 0u64;
        for src in 0..k {
            if self.byz[src] || self.outbox[src].is_empty() {
                continue;
            }
            needed = needed.max(Self::max_link(&self.outbox[src], src, k, &mut per_link));
        }
        let charged = match budget {
            Budget::Fixed(r) => {
                if needed > r {
                    return fault(format!("honest traffic needs {needed} rounds on one link, step allows {r}"));
                }
                r
            }
            Budget::Actual => needed.max(1),
        };
        let mut broadcasts = vec![Vec::new(); k];
        let mut direct: Vec<Vec<(MachineId, Payload)>> = vec![Vec::new(); k];
        let blocked: Vec<Option<BitSet>> =
            self.blacklists.iter().map(|b| if b.is_empty() { None } else { Some(b.clone()) }).collect();
        for src in 0..k {
            let out = std::mem::take(&mut self.outbox[src]);
            if out.is_empty() {
                continue;
            }
            let honest = !self.byz[src];
            let out = if honest { out } else { self.clip(out, src, charged) };
            let mut eligible = 0u64;
            if honest {
                self.prev_senders.push(src);
                eligible = (0..k).filter(|&d| d != src && !blocked[d].as_ref().is_some_and(|b| b.get(src))).count() as u64;
            }
            for e in out {
                match e.dest {
                    Dest::All => {
                        if honest {
                            self.ledger.honest_messages += eligible;
                        }
                        broadcasts[src].push(e.payload);
                    }
                    Dest::To(d) => {
                        if honest && !blocked[d].as_ref().is_some_and(|b| b.get(src)) {
                            self.ledger.honest_messages += 1;
                        }
                        direct[d].push((src, e.payload));
                    }
                }
            }
        }
        self.ledger.rounds += charged;
        self.phase = Phase::Idle;
        Ok(Mailbox { broadcasts, direct, blocked })
    }

    fn max_link(out: &[Envelope], src: MachineId, k: usize, per_link: &mut [u64]) -> u64 {
        let mut all = 0u64;
        for v in per_link.iter_mut() {
            *v = 0;
        }
        for e in out {
            match e.dest {
                Dest::All => all += 1,
                Dest::To(d) => per_link[d] += 1,
            }
        }
        let direct = per_link.iter().enumerate().filter(|(d, _)| *d != src).map(|(_, &c)| c).max().unwrap_or(0);
        if k <= 1 {
            0
        } else {
            all + direct
        }
    }

    /// Drops Byzantine messages beyond `rounds` per link, keeping send order.
    fn clip(&mut self, out: Vec<Envelope>, src: MachineId, rounds: u64) -> Vec<Envelope> {
        let k = self.cfg.k;
        let mut all = 0u64;
        let mut per_link = vec![0u64; k];
        // busiest direct link other than the sender's own
        let mut worst = 0u64;
        let mut kept = Vec::with_capacity(out.len());
        let mut dropped = 0u64;
        for e in out {
            let ok = match e.dest {
                Dest::All => {
                    // a broadcast occupies every link
                    if all + worst < rounds {
                        all += 1;
                        true
                    } else {
                        false
                    }
                }
                Dest::To(d) => {
                    if all + per_link[d] < rounds {
                        per_link[d] += 1;
                        if d != src {
                            worst = worst.max(per_link[d]);
                        }
                        true
                    } else {
                        false
                    }
                }
            };
            if ok {
                kept.push(e);
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            self.diag.add("clipped_byzantine_messages", dropped as f64);
        }
        kept
    }

    pub fn is_blacklisted(&self, accuser: MachineId, accused: MachineId) -> bool {
        self.blacklists[accuser].get(accused)
    }

    pub fn blacklist_of(&self, m: MachineId) -> &BitSet {
        &self.blacklists[m]
    }

    /// `accuser` permanently ignores `accused`. Returns whether this is new.
    pub fn blacklist(&mut self, accuser: MachineId, accused: MachineId) -> bool {
        if accuser == accused || !self.blacklists[accuser].insert(accused) {
            return false;
        }
        if !self.byz[accuser] {
            self.ledger.blacklist_events.push(BlacklistEvent {
                round: self.ledger.rounds,
                accuser,
                accused,
                justified: self.byz[accused],
            });
        }
        true
    }

    pub fn finish(self) -> SimOutcome {
        SimOutcome {
            honest_at_end: self.byz.iter().map(|b| !b).collect(),
            ledger: self.ledger,
            corrupted: self.corrupted,
            corruption_log: self.corruption_log,
            diag: self.diag,
            query_log: self.query_log,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{AdversarySpec, StrategyId};
    use crate::config::AlgorithmId;
    use crate::error::SimError;

    fn sim(k: usize, beta: f64, spec: AdversarySpec, input: &str) -> Sim {
        let input = InputArray::parse(input).unwrap();
        let cfg = SimConfig::new(AlgorithmId::BlacklistDownload, input.n(), k, beta, 3);
        let adv = Adversary::new(spec, &cfg).unwrap();
        Sim::new(&cfg, input, adv, EngineOptions::default()).unwrap()
    }

    #[test]
    fn empty_round_counts() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "0000");
        s.message_round().unwrap();
        let mb = s.end_round(Budget::Fixed(1)).unwrap();
        assert_eq!(mb.inbox(0).count(), 0);
        assert_eq!(s.rounds(), 1);
    }

    #[test]
    fn query_charging_and_phase_faults() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "00001000");
        assert!(matches!(s.query(1, 4), Err(SimError::Fault(_))));
        s.begin_round().unwrap();
        assert!(s.query(1, 4).unwrap());
        assert!(!s.query(3, 0).unwrap());
        assert!(matches!(s.query(3, 8), Err(SimError::Fault(_))));
        assert_eq!(s.queries_of(1), 1);
    }

    #[test]
    fn broadcast_accounting() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "0000");
        s.message_round().unwrap();
        s.send(0, &Step::Report, vec![Envelope::all(Payload::Flag(true))]).unwrap();
        let mb = s.end_round(Budget::Fixed(1)).unwrap();
        for r in 1..4 {
            assert_eq!(mb.inbox(r).map(|(s, p)| (s, *p)).collect::<Vec<_>>(), vec![(0, Payload::Flag(true))]);
        }
        assert_eq!(mb.inbox(0).count(), 0);
        let out = s.finish();
        assert_eq!(out.ledger.honest_messages, 3);
    }

    #[test]
    fn two_honest_messages_on_one_link_fault() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "0000");
        s.message_round().unwrap();
        s.send(0, &Step::Report, vec![Envelope::to(1, Payload::Flag(true)), Envelope::to(1, Payload::Flag(false))])
            .unwrap();
        assert!(matches!(s.end_round(Budget::Fixed(1)), Err(SimError::Fault(_))));
    }

    #[test]
    fn blacklisted_sender_is_not_delivered_or_charged() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "0000");
        s.blacklist(2, 0);
        s.message_round().unwrap();
        s.send(0, &Step::Report, vec![Envelope::all(Payload::Flag(true))]).unwrap();
        let mb = s.end_round(Budget::Fixed(1)).unwrap();
        assert_eq!(mb.inbox(2).count(), 0);
        assert_eq!(mb.inbox(1).count(), 1);
        let out = s.finish();
        assert_eq!(out.ledger.honest_messages, 2);
        assert_eq!(out.ledger.blacklist_events.len(), 1);
        assert!(!out.ledger.blacklist_events[0].justified);
    }

    #[test]
    fn byzantine_excess_is_clipped() {
        let spec = AdversarySpec::stat(StrategyId::KTARequester).with("machines", vec![0]);
        let mut s = sim(4, 0.25, spec, "00000000");
        s.message_round().unwrap();
        s.send(0, &Step::Requests, Vec::new()).unwrap();
        let mb = s.end_round(Budget::Fixed(3)).unwrap();
        assert_eq!(mb.broadcasts(0).len(), 3);
        assert_eq!(s.diag.get("clipped_byzantine_messages"), 5.0);
    }

    #[test]
    fn oversized_honest_payload_faults() {
        let input = InputArray::zeros(4);
        let mut cfg = SimConfig::new(AlgorithmId::BlacklistDownload, 4, 4, 0.0, 0);
        cfg.c_msg = 1;
        let adv = Adversary::new(AdversarySpec::none(), &cfg).unwrap();
        let mut s = Sim::new(&cfg, input, adv, EngineOptions::default()).unwrap();
        s.message_round().unwrap();
        assert!(s.send(0, &Step::Report, vec![Envelope::all(Payload::Bit { index: 1, bit: true })]).is_err());
    }

    #[test]
    fn rg_only_in_benign() {
        let mut s = sim(4, 0.0, AdversarySpec::none(), "0000");
        s.begin_round().unwrap();
        assert!(s.cloud_rg(0, 7).is_err());
    }
}
