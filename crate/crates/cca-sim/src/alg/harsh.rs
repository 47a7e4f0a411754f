//! Harsh-model algorithms: Blacklist_Download, Gossip_Download, Spread,
//! Randomized_Disjunction, and a deliberately under-querying disjunction.
//!
//! Flags starting with `bad_event` mark runs where a probabilistic guarantee
//! the analysis relies on did not hold (the run is not "clean").

use std::collections::{HashMap, HashSet};

use super::{send_all, Knowledge, Output, Outputs};
use crate::adversary::Step;
use crate::committees::{elect_private, log2_ceil};
use crate::config::{Profile, SimConfig};
use crate::engine::{Budget, Mailbox, Sim};
use crate::error::{config, Result};
use crate::payload::{Envelope, MachineId, Payload};

/// `max{1, k sqrt(γβ/(8n))}`.
pub fn blacklist_rho(n: usize, k: usize, beta: f64) -> f64 {
    let gamma = 1.0 - beta;
    (k as f64 * (gamma * beta / (8.0 * n as f64)).sqrt()).max(1.0)
}

/// Distinct (sender, bit) claims about `index` that `dst` received.
fn claims_on(mb: &Mailbox, dst: MachineId, index: usize) -> (Vec<MachineId>, Vec<MachineId>) {
    let mut seen = HashSet::new();
    let (mut zeros, mut ones) = (Vec::new(), Vec::new());
    for (s, p) in mb.inbox(dst) {
        if let Payload::Bit { index: j, bit } = *p {
            if j as usize == index && seen.insert((s, bit)) {
                if bit {
                    ones.push(s);
                } else {
                    zeros.push(s);
                }
            }
        }
    }
    (zeros, ones)
}

pub fn blacklist_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let cfg = sim.config().clone();
    let rho = cfg.param_or("rho", blacklist_rho(n, k, cfg.beta));
    sim.diag.set("rho", rho);
    sim.diag.set("p", crate::committees::private_bias(n, k, cfg.gamma(), rho));
    let mut know = Knowledge::new(k, n);
    // (machine, index, zero-siders, one-siders) awaiting a verification query
    let mut pending: Vec<(MachineId, usize, Vec<MachineId>, Vec<MachineId>)> = Vec::new();

    for i in 0..=n {
        sim.begin_round()?;
        for (m, j, zeros, ones) in std::mem::take(&mut pending) {
            if sim.is_byz(m) {
                continue;
            }
            let b = know.query(sim, m, j)?;
            sim.diag.add("conflict_queries", 1.0);
            for s in if b { zeros } else { ones } {
                sim.blacklist(m, s);
            }
        }
        if i == n {
            sim.finish_queries()?;
            break;
        }
        let members = elect_private(sim, rho)?;
        let mut templates = vec![Vec::new(); k];
        let mut honest_members = 0usize;
        for m in 0..k {
            if !members[m] {
                continue;
            }
            let b = if sim.is_byz(m) {
                sim.ground_truth().get(i)
            } else {
                honest_members += 1;
                know.query(sim, m, i)?
            };
            templates[m].push(Envelope::all(Payload::Bit { index: i as u32, bit: b }));
        }
        if (honest_members as f64) < rho {
            sim.diag.add("unrepresentative_committees", 1.0);
            sim.diag.flag("bad_event_unrepresentative_committee");
        }
        sim.begin_messages()?;
        send_all(sim, &Step::Committee { index: i, phase: 0, cap: None, live: true }, templates)?;
        let mb = sim.end_round(Budget::Fixed(1))?;

        for m in 0..k {
            if sim.is_byz(m) || know.res[m][i].is_some() {
                continue;
            }
            let (zeros, ones) = claims_on(&mb, m, i);
            if zeros.len().min(ones.len()) as f64 > rho {
                pending.push((m, i, zeros, ones));
            } else {
                know.res[m][i] = Some(ones.len() > zeros.len());
            }
        }
    }
    Ok((0..k).map(|m| (!sim.is_byz(m)).then(|| Output::Bits(know.bits(m)))).collect())
}

/// Constants of the Gossip phase machine.
#[derive(Clone, Debug, PartialEq)]
pub struct GossipParams {
    pub z: f64,
    /// Slack in the work cap and in α.
    pub eps: f64,
    /// Slack in the comm-verification threshold ρ.
    pub eps_rho: f64,
    pub alpha: f64,
    pub c: f64,
    pub log_n: f64,
    pub phases: usize,
    pub w_max: f64,
}

impl GossipParams {
    /// Paper profile: Z = 445, ε = 1/10. Scaled profile: Z = 4, ε = 1/5 in α and
    /// W_max, 1/2 in ρ. Params `Z`, `eps`, `eps_rho` override either.
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let (z0, e0, er0) = match cfg.profile {
            Profile::Paper => (445.0, 0.1, 0.1),
            Profile::Scaled => (4.0, 0.2, 0.5),
        };
        let z = cfg.param_or("Z", z0);
        let eps = cfg.param_or("eps", e0);
        let eps_rho = cfg.param_or("eps_rho", er0);
        if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&eps_rho) || z <= 0.0 {
            return config("gossip needs Z > 0 and eps, eps_rho in [0, 1)");
        }
        let beta = cfg.beta;
        if 2.0 * beta >= 1.0 {
            return config(format!("gossip needs beta < 1/2, got {beta}"));
        }
        let alpha = (1.0 + eps) * beta / ((1.0 - eps) * (1.0 - 2.0 * beta));
        if alpha >= 1.0 {
            return config(format!("shrinkage factor alpha = {alpha} is not below 1"));
        }
        let c = z / cfg.gamma();
        let log_n = (cfg.n as f64).log2();
        let ratio = cfg.k as f64 / (c * log_n);
        let phases = if ratio <= 1.0 {
            0
        } else if alpha <= 0.0 {
            1
        } else {
            (ratio.ln() / (1.0 / alpha).ln()).ceil().max(1.0) as usize
        };
        let w_max = (1.0 + eps) * c * log_n * cfg.n as f64 / cfg.k as f64;
        Ok(GossipParams { z, eps, eps_rho, alpha, c, log_n, phases, w_max })
    }

    pub fn rho(&self, j: usize) -> f64 {
        (1.0 - self.eps_rho) * self.z * self.log_n / self.alpha.powi(j as i32)
    }

    /// Joining probability, uncapped.
    pub fn p_raw(&self, j: usize, k: usize) -> f64 {
        self.c * self.log_n / (self.alpha.powi(j as i32) * k as f64)
    }

    pub fn p(&self, j: usize, k: usize) -> f64 {
        self.p_raw(j, k).min(1.0)
    }
}

/// Bit claims of one message sub-round, de-duplicated per sender.
struct BitTally {
    count: [Vec<u32>; 2],
    by_sender: Vec<Vec<(usize, bool)>>,
}

impl BitTally {
    fn new(mb: &Mailbox, k: usize, n: usize) -> Self {
        let mut count = [vec![0u32; n], vec![0u32; n]];
        let mut by_sender = vec![Vec::new(); k];
        let mut stamp = vec![usize::MAX; 2 * n];
        for s in mb.senders() {
            for p in mb.broadcasts(s) {
                if let Payload::Bit { index, bit } = *p {
                    let i = index as usize;
                    if i < n && stamp[2 * i + bit as usize] != s {
                        stamp[2 * i + bit as usize] = s;
                        count[bit as usize][i] += 1;
                        by_sender[s].push((i, bit));
                    }
                }
            }
        }
        BitTally { count, by_sender }
    }

    /// φ_b as seen by `dst`: every other machine it still listens to, plus
    /// what was sent to it directly.
    fn view(&self, mb: &Mailbox, dst: MachineId, n: usize) -> [Vec<u32>; 2] {
        let mut phi = self.count.clone();
        let k = self.by_sender.len();
        for s in 0..k {
            if s == dst || !mb.delivered(s, dst) {
                for &(i, b) in &self.by_sender[s] {
                    phi[b as usize][i] -= 1;
                }
            }
        }
        let mut extra: HashMap<MachineId, HashSet<(usize, bool)>> = HashMap::new();
        for (s, p) in mb.direct_to(dst) {
            if let Payload::Bit { index, bit } = *p {
                let i = index as usize;
                if i >= n {
                    continue;
                }
                let set = extra.entry(s).or_insert_with(|| self.by_sender[s].iter().copied().collect());
                if set.insert((i, bit)) {
                    phi[bit as usize][i] += 1;
                }
            }
        }
        phi
    }
}

/// Per-machine Gossip state.
struct GossipState {
    know: Knowledge,
    kta: Vec<Vec<bool>>,
    listen: Vec<Vec<bool>>,
}

pub fn gossip_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let gp = GossipParams::from_config(sim.config())?;
    let bk = sim.config().budget();
    sim.diag.set("alpha", gp.alpha);
    sim.diag.set("phases", gp.phases as f64);
    sim.diag.set("w_max", gp.w_max);
    sim.diag.set("rho_0", gp.rho(0));
    sim.diag.set("p_0", gp.p(0, k));
    if (0..gp.phases).any(|j| gp.p_raw(j, k) >= 1.0) {
        sim.diag.flag("p_saturated");
    }
    let mut st = GossipState {
        know: Knowledge::new(k, n),
        kta: vec![vec![false; n]; k],
        listen: vec![vec![true; n]; k],
    };
    for j in 0..gp.phases {
        let u_start = unknown_union(sim, &st.know, n);
        sim.diag.push("u_start", u_start as f64);
        committee_work(sim, &mut st, &gp, j)?;
        gossip_step(sim, &mut st, bk, false)?;
        let u_mid = unknown_union(sim, &st.know, n);
        sim.diag.push("u_mid", u_mid as f64);
        if u_mid as f64 > gp.alpha * u_start as f64 {
            sim.diag.add("shrinkage_violations", 1.0);
        }
        gossip_step(sim, &mut st, bk, true)?;
        collect_requests(sim, &mut st)?;
    }
    sim.diag.push("u_start", unknown_union(sim, &st.know, n) as f64);
    sim.begin_round()?;
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        for i in 0..n {
            if st.know.res[m][i].is_none() {
                st.know.query(sim, m, i)?;
                sim.diag.add("residual_queries", 1.0);
            }
        }
    }
    sim.finish_queries()?;
    Ok((0..k).map(|m| (!sim.is_byz(m)).then(|| Output::Bits(st.know.bits(m)))).collect())
}

/// |∪ 𝒰_M| over machines honest right now.
fn unknown_union(sim: &Sim, know: &Knowledge, n: usize) -> usize {
    (0..n).filter(|&i| (0..sim.k()).any(|m| !sim.is_byz(m) && know.res[m][i].is_none())).count()
}

/// Records an acquisition and checks it against the cloud.
fn learn(sim: &mut Sim, know: &mut Knowledge, m: MachineId, i: usize, b: bool) {
    know.res[m][i] = Some(b);
    if b != sim.ground_truth().get(i) {
        sim.diag.add("wrong_acquisitions", 1.0);
    }
}

fn committee_work(sim: &mut Sim, st: &mut GossipState, gp: &GossipParams, j: usize) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    let p = gp.p(j, k);
    let rho = gp.rho(j);
    let unknown: Vec<bool> =
        (0..n).map(|i| (0..k).any(|m| !sim.is_byz(m) && st.know.res[m][i].is_none())).collect();
    // per index: distinct broadcast claims (sender, bit); per receiver: direct claims
    let mut common: Vec<Vec<(MachineId, bool)>> = vec![Vec::new(); n];
    let mut direct: Vec<Vec<(usize, MachineId, bool)>> = vec![Vec::new(); k];
    let mut joined = vec![0usize; k];
    let mut unrepresentative = 0usize;

    for i in 0..n {
        sim.begin_round()?;
        let live = (0..k).any(|m| !sim.is_byz(m) && st.listen[m][i]);
        let mut templates = vec![Vec::new(); k];
        let mut honest_in = 0usize;
        for m in 0..k {
            if sim.is_byz(m) {
                if sim.coin(m, p) {
                    templates[m].push(Envelope::all(Payload::Bit { index: i as u32, bit: sim.ground_truth().get(i) }));
                }
                continue;
            }
            if !st.listen[m][i] || !sim.coin(m, p) {
                continue;
            }
            joined[m] += 1;
            honest_in += 1;
            let b = match st.know.res[m][i] {
                Some(b) => b,
                None => st.know.query(sim, m, i)?,
            };
            templates[m].push(Envelope::all(Payload::Bit { index: i as u32, bit: b }));
        }
        if unknown[i] && (honest_in as f64) < rho {
            unrepresentative += 1;
        }
        sim.begin_messages()?;
        send_all(sim, &Step::Committee { index: i, phase: j, cap: Some(gp.w_max), live }, templates)?;
        let mb = sim.end_round(Budget::Fixed(1))?;
        for s in mb.senders() {
            let mut bits = [false; 2];
            for pl in mb.broadcasts(s) {
                if let Payload::Bit { index, bit } = *pl {
                    if index as usize == i && !bits[bit as usize] {
                        bits[bit as usize] = true;
                        common[i].push((s, bit));
                    }
                }
            }
        }
        for (m, d) in direct.iter_mut().enumerate() {
            if sim.is_byz(m) {
                continue;
            }
            let start = d.len();
            for (s, pl) in mb.direct_to(m) {
                if let Payload::Bit { index, bit } = *pl {
                    if index as usize == i && !d[start..].iter().any(|&(_, y, z)| y == s && z == bit) {
                        d.push((i, s, bit));
                    }
                }
            }
        }
    }

    let max_work = (0..k).filter(|&m| !sim.is_byz(m)).map(|m| joined[m]).max().unwrap_or(0);
    sim.diag.max("max_honest_work", max_work as f64);
    if max_work as f64 > gp.w_max {
        sim.diag.flag("bad_event_honest_over_wmax");
    }
    if unrepresentative > 0 {
        sim.diag.add("unrepresentative_committees", unrepresentative as f64);
        sim.diag.flag("bad_event_unrepresentative_committee");
    }

    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        // Work(M') over the bits M listens to
        let mut work = vec![0usize; k];
        for i in (0..n).filter(|&i| st.listen[m][i]) {
            let mut last = usize::MAX;
            for &(s, _) in &common[i] {
                if s != m && s != last && !sim.is_blacklisted(m, s) {
                    work[s] += 1;
                }
                last = s;
            }
        }
        let mut counted: HashSet<(MachineId, usize)> = HashSet::new();
        for &(i, s, _) in &direct[m] {
            if st.listen[m][i] && !common[i].iter().any(|&(x, _)| x == s) && counted.insert((s, i)) {
                work[s] += 1;
            }
        }
        for (s, &w) in work.iter().enumerate() {
            if w as f64 > gp.w_max && sim.blacklist(m, s) {
                sim.diag.add("overactive_blacklisted", 1.0);
            }
        }
        // comm-verification on the reduced committees
        let mut psi: HashMap<usize, [usize; 2]> = HashMap::new();
        for i in (0..n).filter(|&i| st.listen[m][i] && st.know.res[m][i].is_none()) {
            let t = psi.entry(i).or_insert([0, 0]);
            for &(s, b) in &common[i] {
                if s != m && !sim.is_blacklisted(m, s) {
                    t[b as usize] += 1;
                }
            }
        }
        for &(i, s, b) in &direct[m] {
            if sim.is_blacklisted(m, s) || common[i].contains(&(s, b)) {
                continue;
            }
            if let Some(t) = psi.get_mut(&i) {
                t[b as usize] += 1;
            }
        }
        let mut adopted: Vec<(usize, bool)> = psi
            .into_iter()
            .filter_map(|(i, t)| {
                let (z, o) = (t[0] as f64, t[1] as f64);
                if o >= rho && z < rho {
                    Some((i, true))
                } else if z >= rho && o < rho {
                    Some((i, false))
                } else {
                    None
                }
            })
            .collect();
        adopted.sort_unstable();
        for (i, b) in adopted {
            learn(sim, &mut st.know, m, i, b);
        }
    }
    Ok(())
}

/// Gossip (`kta = false`) or KTA_List (`kta = true`): everyone broadcasts its
/// known bits.
fn gossip_step(sim: &mut Sim, st: &mut GossipState, bk: usize, kta: bool) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    sim.message_round()?;
    let mut templates = vec![Vec::new(); k];
    for (m, t) in templates.iter_mut().enumerate() {
        for i in 0..n {
            let b = if sim.is_byz(m) { Some(sim.ground_truth().get(i)) } else { st.know.res[m][i] };
            if let Some(b) = b {
                t.push(Envelope::all(Payload::Bit { index: i as u32, bit: b }));
            }
        }
    }
    send_all(sim, &Step::KnownList, templates)?;
    let mb = sim.end_round(Budget::Fixed(n as u64))?;
    let tally = BitTally::new(&mb, k, n);
    let known_at = (bk + 1) as u32;
    let kta_at = (2 * bk + 1) as u32;
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        let phi = tally.view(&mb, m, n);
        for i in 0..n {
            let (z, o) = (phi[0][i], phi[1][i]);
            if kta && (z >= kta_at || o >= kta_at) {
                st.kta[m][i] = true;
            }
            if st.know.res[m][i].is_none() && (z >= known_at || o >= known_at) {
                learn(sim, &mut st.know, m, i, o >= known_at && o >= z);
            }
        }
    }
    Ok(())
}

fn collect_requests(sim: &mut Sim, st: &mut GossipState) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    sim.message_round()?;
    let mut templates = vec![Vec::new(); k];
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        for i in 0..n {
            let unknown = st.know.res[m][i].is_none();
            st.listen[m][i] = unknown;
            if unknown {
                templates[m].push(Envelope::all(Payload::Request(i as u32)));
            }
        }
    }
    send_all(sim, &Step::Requests, templates)?;
    let mb = sim.end_round(Budget::Fixed(n as u64))?;
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        let mut requests: Vec<(MachineId, usize)> = Vec::new();
        for (s, p) in mb.inbox(m) {
            if let Payload::Request(i) = *p {
                if (i as usize) < n {
                    requests.push((s, i as usize));
                }
            }
        }
        for &(s, i) in &requests {
            if st.kta[m][i] && sim.blacklist(m, s) {
                sim.diag.add("kta_requesters_blacklisted", 1.0);
            }
        }
        for &(s, i) in &requests {
            if !sim.is_blacklisted(m, s) {
                st.listen[m][i] = true;
            }
        }
    }
    Ok(())
}

/// Procedure Spread. `verified[m]` is m's verified set-bit index; only
/// `active` machines take part. Costs ceil(log2 k) rounds.
pub(crate) fn spread(
    sim: &mut Sim,
    know: &mut Knowledge,
    verified: &mut [Option<usize>],
    active: &[bool],
) -> Result<()> {
    let (n, k) = (sim.n(), sim.k());
    let phases = log2_ceil(k) as usize;
    let samples = (8.0 * (n as f64).ln() / sim.config().gamma()).ceil() as usize;
    let fake = sim.ground_truth().first_one();
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); k];
    for r in 0..=phases {
        sim.begin_round()?;
        for m in 0..k {
            for i in std::mem::take(&mut pending[m]) {
                if sim.is_byz(m) {
                    continue;
                }
                if know.query(sim, m, i)? && verified[m].is_none() {
                    verified[m] = Some(i);
                }
            }
        }
        let holders = (0..k).filter(|&m| !sim.is_byz(m) && active[m] && verified[m].is_some()).count();
        sim.diag.push("holders_after_phase", holders as f64);
        if r == phases {
            sim.finish_queries()?;
            break;
        }
        sim.begin_messages()?;
        let mut templates = vec![Vec::new(); k];
        for (m, t) in templates.iter_mut().enumerate() {
            let b = if sim.is_byz(m) { fake } else { verified[m].filter(|_| active[m]) };
            if let Some(b) = b {
                t.push(Envelope::all(Payload::Index(b as u32)));
            }
        }
        send_all(sim, &Step::IndexClaim, templates)?;
        let mb = sim.end_round(Budget::Fixed(1))?;
        for m in 0..k {
            if sim.is_byz(m) || !active[m] || verified[m].is_some() {
                continue;
            }
            let mut per_sender: HashMap<MachineId, Vec<Payload>> = HashMap::new();
            for (s, p) in mb.inbox(m) {
                per_sender.entry(s).or_default().push(*p);
            }
            let mut senders: Vec<MachineId> = per_sender.keys().copied().collect();
            senders.sort_unstable();
            let s_list: Vec<usize> = senders
                .iter()
                .filter_map(|s| match per_sender[s].as_slice() {
                    [Payload::Index(i)] if (*i as usize) < n => Some(*i as usize),
                    _ => None,
                })
                .collect();
            if s_list.is_empty() {
                continue;
            }
            let mut pick: Vec<usize> = (0..samples).map(|_| s_list[sim.sample_below(m, s_list.len())]).collect();
            pick.sort_unstable();
            pick.dedup();
            pending[m] = pick;
        }
    }
    Ok(())
}

/// Spread on its own: the `holders` (default 1) lowest honest machines start
/// with a uniformly chosen set bit.
pub fn spread_run(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let holders = sim.config().param_or("holders", 1.0) as usize;
    let ones: Vec<usize> = (0..n).filter(|&i| sim.ground_truth().get(i)).collect();
    let mut know = Knowledge::new(k, n);
    let mut verified = vec![None; k];
    let seeded: Vec<MachineId> = (0..k).filter(|&m| !sim.is_byz(m)).take(holders).collect();
    if seeded.is_empty() || ones.is_empty() {
        sim.diag.flag("vacuous");
    }
    if !ones.is_empty() {
        for &m in &seeded {
            let i = ones[sim.sample_below(m, ones.len())];
            know.res[m][i] = Some(true);
            verified[m] = Some(i);
        }
    }
    spread(sim, &mut know, &mut verified, &vec![true; k])?;
    Ok((0..k).map(|m| (!sim.is_byz(m)).then_some(Output::Index(verified[m]))).collect())
}

pub fn randomized_disjunction(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let gk = sim.config().gamma() * k as f64;
    let mut know = Knowledge::new(k, n);
    let mut verified: Vec<Option<usize>> = vec![None; k];
    let mut done = vec![false; k];
    let phases = log2_ceil(n) as i32;
    for r in 1..=phases {
        if (0..k).all(|m| sim.is_byz(m) || done[m]) {
            break;
        }
        let s = (2f64.powi(r) * (n as f64).ln() / gk).ceil() as usize;
        sim.begin_round()?;
        for m in 0..k {
            if sim.is_byz(m) || done[m] {
                continue;
            }
            let mut pick: Vec<usize> = (0..s).map(|_| sim.sample_below(m, n)).collect();
            pick.sort_unstable();
            pick.dedup();
            for i in pick {
                if know.query(sim, m, i)? && verified[m].is_none() {
                    verified[m] = Some(i);
                }
            }
        }
        sim.finish_queries()?;
        let active: Vec<bool> = done.iter().map(|d| !d).collect();
        spread(sim, &mut know, &mut verified, &active)?;
        for m in 0..k {
            if !done[m] && verified[m].is_some() {
                done[m] = true;
                if !sim.is_byz(m) {
                    sim.diag.max("last_phase", r as f64);
                }
            }
        }
    }
    Ok((0..k).map(|m| (!sim.is_byz(m)).then_some(Output::Bit(verified[m].is_some()))).collect())
}

/// Disjunction with a total honest query budget of `ceil(1/(2𝛅)) - 1`, split
/// evenly over the machines; finders announce and everyone believes them.
/// `delta` defaults to the input's modified density.
pub fn sparse_disjunction(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let delta = sim.config().param("delta").unwrap_or_else(|| sim.ground_truth().modified_density());
    if delta <= 0.0 {
        return config("sparse disjunction needs delta > 0");
    }
    let budget = ((1.0 / (2.0 * delta)).ceil() as usize).saturating_sub(1);
    sim.diag.set("total_budget", budget as f64);
    let mut know = Knowledge::new(k, n);
    let mut found = vec![None; k];
    sim.begin_round()?;
    for m in 0..k {
        let share = budget * (m + 1) / k - budget * m / k;
        if sim.is_byz(m) || share == 0 {
            continue;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        sim.tape(m).shuffle(&mut idx);
        for &i in idx.iter().take(share) {
            if know.query(sim, m, i)? && found[m].is_none() {
                found[m] = Some(i);
            }
        }
    }
    sim.begin_messages()?;
    let templates = (0..k)
        .map(|m| found[m].map(|i| vec![Envelope::all(Payload::Index(i as u32))]).unwrap_or_default())
        .collect();
    send_all(sim, &Step::IndexClaim, templates)?;
    let mb = sim.end_round(Budget::Fixed(1))?;
    Ok((0..k)
        .map(|m| {
            (!sim.is_byz(m)).then(|| {
                let heard = mb.inbox(m).any(|(_, p)| matches!(p, Payload::Index(_)));
                Output::Bit(found[m].is_some() || heard)
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blacklist_rho_default() {
        assert_eq!(blacklist_rho(4096, 64, 0.25), 1.0);
        let r = blacklist_rho(100, 1000, 0.5);
        assert!((r - 1000.0 * (0.25f64 / 800.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn scaled_gossip_constants() {
        let cfg = SimConfig::new(crate::config::AlgorithmId::GossipDownload, 2048, 128, 25.0 / 128.0, 1)
            .with_profile(Profile::Scaled);
        let gp = GossipParams::from_config(&cfg).unwrap();
        let beta = 25.0 / 128.0;
        assert!((gp.alpha - 1.2 * beta / (0.8 * (1.0 - 2.0 * beta))).abs() < 1e-12);
        assert_eq!(gp.phases, 2);
        assert!((gp.rho(0) - 22.0).abs() < 1e-9);
        assert!(gp.p(gp.phases - 1, 128) < 1.0);
    }

    #[test]
    fn paper_gossip_collapses_at_desk_scale() {
        let cfg = SimConfig::new(crate::config::AlgorithmId::GossipDownload, 2048, 128, 0.25, 1);
        assert_eq!(GossipParams::from_config(&cfg).unwrap().phases, 0);
    }
}
