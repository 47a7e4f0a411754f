//! Det-model algorithms: naive and round-robin download, and the three
//! expander-based disjunction algorithms.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{send_all, Knowledge, Output, Outputs};
use crate::adversary::Step;
use crate::committees::log2_ceil;
use crate::engine::{Budget, Mailbox, Sim};
use crate::error::{config, Result};
use crate::expanders::{build_cached, lse_checkable, BipartiteGraph, ExpanderParams};
use crate::payload::{Envelope, MachineId, Payload};

pub fn naive_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut out = vec![None; k];
    sim.begin_round()?;
    for (m, o) in out.iter_mut().enumerate() {
        if sim.is_byz(m) {
            continue;
        }
        let bits = (0..n).map(|i| sim.query(m, i)).collect::<Result<Vec<_>>>()?;
        *o = Some(Output::Bits(bits));
    }
    sim.finish_queries()?;
    Ok(out)
}

/// Committee size 2βk + 1.
pub fn rr_committee_size(k: usize, budget: usize) -> usize {
    (2 * budget + 1).min(k)
}

/// Members of bit i's committee: `(i c + j) mod k` for `j < c`.
pub fn rr_members(i: usize, c: usize, k: usize) -> impl Iterator<Item = MachineId> {
    (0..c).map(move |j| (i * c + j) % k)
}

/// Per-machine number of bits served.
pub fn rr_loads(n: usize, k: usize, c: usize) -> Vec<usize> {
    let mut load = vec![0; k];
    for i in 0..n {
        for m in rr_members(i, c, k) {
            load[m] += 1;
        }
    }
    load
}

pub fn roundrobin_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let c = rr_committee_size(k, sim.config().budget());
    let loads = rr_loads(n, k, c);
    let max_load = loads.iter().copied().max().unwrap_or(0);
    sim.diag.set("committee_size", c as f64);
    sim.diag.set("max_committee_load", max_load as f64);

    let mut know = Knowledge::new(k, n);
    sim.begin_round()?;
    let mut templates = vec![Vec::new(); k];
    for i in 0..n {
        for m in rr_members(i, c, k) {
            let b = if sim.is_byz(m) { sim.ground_truth().get(i) } else { know.query(sim, m, i)? };
            templates[m].push(Envelope::all(Payload::Bit { index: i as u32, bit: b }));
        }
    }
    sim.begin_messages()?;
    send_all(sim, &Step::Report, templates)?;
    let mb = sim.end_round(Budget::Fixed(max_load as u64))?;

    let mut out = vec![None; k];
    for (m, o) in out.iter_mut().enumerate() {
        if sim.is_byz(m) {
            continue;
        }
        // (ones, zeros) per index from committee members, first claim per sender
        let mut votes = vec![(0usize, 0usize); n];
        let mut seen = std::collections::HashSet::new();
        for (src, p) in mb.inbox(m) {
            if let Payload::Bit { index, bit } = *p {
                let i = index as usize;
                if i < n && rr_members(i, c, k).any(|x| x == src) && seen.insert((src, i)) {
                    if bit {
                        votes[i].0 += 1;
                    } else {
                        votes[i].1 += 1;
                    }
                }
            }
        }
        let bits = (0..n)
            .map(|i| match know.res[m][i] {
                Some(b) => b,
                None => votes[i].0 > votes[i].1,
            })
            .collect();
        *o = Some(Output::Bits(bits));
    }
    Ok(out)
}

fn graph_seed(sim: &Sim) -> u64 {
    sim.config().param_or("graph_seed", 1.0) as u64
}

/// The ladder G_1..G_L, δ_r = 2^-r, L = ceil(log2 n).
pub fn lse_ladder(n: usize, k: usize, expansion: f64, seed: u64) -> Result<Vec<Arc<BipartiteGraph>>> {
    let phases = log2_ceil(n) as i32;
    (1..=phases).map(|r| build_cached(&ExpanderParams::lse(n, k, expansion, 0.5f64.powi(r)), seed)).collect()
}

/// Right-side neighbourhoods of every graph in the ladder.
fn neighbourhoods(ladder: &[Arc<BipartiteGraph>]) -> Vec<Vec<Vec<usize>>> {
    ladder.iter().map(|g| g.by_right()).collect()
}

pub fn lse_disjunct_1(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let ladder = lse_ladder(n, k, sim.config().beta, graph_seed(sim))?;
    note_ladder(sim, &ladder, sim.config().beta);
    let gamma = neighbourhoods(&ladder);
    let mut know = Knowledge::new(k, n);
    let mut result: Vec<Option<bool>> = vec![None; k];
    let mut carried: Option<Mailbox> = None;

    for nb in gamma.iter() {
        // round A: scan Γ(M) in G_r, finders announce and stop
        sim.begin_round()?;
        let mut templates = vec![Vec::new(); k];
        for m in 0..k {
            if sim.is_byz(m) {
                if let Some(&j) = nb[m].iter().find(|&&j| sim.ground_truth().get(j)) {
                    templates[m].push(Envelope::all(Payload::Index(j as u32)));
                }
                continue;
            }
            if result[m].is_some() {
                continue;
            }
            let mut found = None;
            for &j in &nb[m] {
                if know.query(sim, m, j)? && found.is_none() {
                    found = Some(j);
                }
            }
            if let Some(j) = found {
                templates[m].push(Envelope::all(Payload::Index(j as u32)));
                result[m] = Some(true);
            }
        }
        sim.begin_messages()?;
        send_all(sim, &Step::IndexClaim, templates)?;
        let round_a = sim.end_round(Budget::Fixed(1))?;

        // round B: verify every candidate from a sender not yet blacklisted
        sim.begin_round()?;
        let mut templates = vec![Vec::new(); k];
        for m in 0..k {
            if sim.is_byz(m) {
                continue;
            }
            if result[m].is_some() {
                continue;
            }
            let mut cands: Vec<(MachineId, usize)> = Vec::new();
            for mb in carried.iter().chain(std::iter::once(&round_a)) {
                for (src, p) in mb.inbox(m) {
                    if let Payload::Index(i) = *p {
                        if (i as usize) < n {
                            cands.push((src, i as usize));
                        }
                    }
                }
            }
            cands.sort_unstable();
            cands.dedup();
            for (src, i) in cands {
                if sim.is_blacklisted(m, src) {
                    continue;
                }
                if know.query(sim, m, i)? {
                    templates[m].push(Envelope::all(Payload::Index(i as u32)));
                    result[m] = Some(true);
                    break;
                }
                sim.blacklist(m, src);
            }
        }
        for (m, t) in templates.iter_mut().enumerate() {
            if sim.is_byz(m) {
                if let Some(j) = sim.ground_truth().first_one() {
                    t.push(Envelope::all(Payload::Index(j as u32)));
                }
            }
        }
        sim.begin_messages()?;
        send_all(sim, &Step::IndexClaim, templates)?;
        carried = Some(sim.end_round(Budget::Fixed(1))?);
        sim.diag.push("active_after_phase", result.iter().enumerate().filter(|(m, r)| !sim.is_byz(*m) && r.is_none()).count() as f64);
    }

    sim.begin_round()?;
    for m in 0..k {
        if sim.is_byz(m) || result[m].is_some() {
            continue;
        }
        let mut any = false;
        for i in 0..n {
            any |= know.query(sim, m, i)?;
        }
        result[m] = Some(any);
    }
    sim.finish_queries()?;
    Ok(result.into_iter().map(|r| r.map(Output::Bit)).collect())
}

fn note_ladder(sim: &mut Sim, ladder: &[Arc<BipartiteGraph>], expansion: f64) {
    let (n, k) = (sim.n(), sim.k());
    let verified = lse_checkable(k, n, expansion);
    if !verified {
        sim.diag.flag("expanders_unverified");
    }
    for g in ladder {
        sim.diag.push("graph_left_degree", g.max_left_degree() as f64);
    }
}

pub fn lse_disjunct_2(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let expansion = 0.5 + sim.config().beta;
    if expansion >= 1.0 {
        return config("lse_disjunct2 needs beta < 1/2");
    }
    let ladder = lse_ladder(n, k, expansion, graph_seed(sim))?;
    note_ladder(sim, &ladder, expansion);
    let gamma = neighbourhoods(&ladder);
    let mut know = Knowledge::new(k, n);
    let mut y = vec![false; k];

    for nb in &gamma {
        sim.begin_round()?;
        for m in 0..k {
            if sim.is_byz(m) {
                y[m] = nb[m].iter().any(|&j| sim.ground_truth().get(j)) || y[m];
                continue;
            }
            if !y[m] {
                for &j in &nb[m] {
                    y[m] |= know.query(sim, m, j)?;
                }
            }
        }
        sim.begin_messages()?;
        let templates = (0..k).map(|m| vec![Envelope::all(Payload::Flag(y[m]))]).collect();
        send_all(sim, &Step::Flag, templates)?;
        let mb = sim.end_round(Budget::Fixed(1))?;
        for m in 0..k {
            if sim.is_byz(m) {
                continue;
            }
            let mut ones = usize::from(y[m]);
            let mut seen = vec![false; k];
            for (src, p) in mb.inbox(m) {
                if let Payload::Flag(true) = p {
                    if !seen[src] {
                        seen[src] = true;
                        ones += 1;
                    }
                }
            }
            if 2 * ones >= k {
                y[m] = true;
            }
        }
    }
    Ok(y.into_iter().map(|b| Some(Output::Bit(b))).collect())
}

/// Default `s = k sqrt(βγ/n)`.
pub fn glse_s(n: usize, k: usize, beta: f64) -> f64 {
    k as f64 * (beta * (1.0 - beta) / n as f64).sqrt()
}

pub fn glse_explicit(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let beta = sim.config().beta;
    let delta = sim.config().param("delta").unwrap_or_else(|| sim.ground_truth().modified_density());
    let s = sim.config().param("s").unwrap_or_else(|| glse_s(n, k, beta));
    let p = ExpanderParams::glse(n, k, beta, delta, s);
    if !p.glse_precondition() {
        if lse_checkable(k, n, beta) && n <= 24 {
            sim.diag.flag("glse_precondition_violated");
        } else {
            return config(format!("s = {s} violates the GLSE existence condition at n = {n}, k = {k}"));
        }
    }
    let g = build_cached(&p, graph_seed(sim))?;
    let nb = g.by_right();
    let budget = g.max_right_degree() as u64;
    sim.diag.set("glse_s", s);
    sim.diag.set("glse_degree", g.max_left_degree() as f64);

    // phase 1: scan Γ(M), announce every set index
    let mut know = Knowledge::new(k, n);
    sim.begin_round()?;
    let mut templates = vec![Vec::new(); k];
    for m in 0..k {
        for &j in &nb[m] {
            let b = if sim.is_byz(m) { sim.ground_truth().get(j) } else { know.query(sim, m, j)? };
            if b {
                templates[m].push(Envelope::all(Payload::Index(j as u32)));
            }
        }
    }
    sim.begin_messages()?;
    send_all(sim, &Step::IndexClaim, templates)?;
    let mb = sim.end_round(Budget::Fixed(budget.max(1)))?;

    // senders per index, as seen by each machine (itself included)
    let mut claims: Vec<BTreeMap<usize, Vec<MachineId>>> = vec![BTreeMap::new(); k];
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        for &j in &nb[m] {
            if know.res[m][j] == Some(true) {
                claims[m].entry(j).or_default().push(m);
            }
        }
        for (src, p) in mb.inbox(m) {
            if let Payload::Index(j) = *p {
                if (j as usize) < n {
                    let e = claims[m].entry(j as usize).or_default();
                    if !e.contains(&src) {
                        e.push(src);
                    }
                }
            }
        }
    }

    // phase 2: one verification per machine per round
    let mut result: Vec<Option<Option<usize>>> = (0..k).map(|m| if sim.is_byz(m) { Some(None) } else { None }).collect();
    let mut failures = 0u64;
    while result.iter().any(Option::is_none) {
        sim.begin_round()?;
        for m in 0..k {
            if result[m].is_some() {
                continue;
            }
            let pick = claims[m].iter().find_map(|(&j, senders)| {
                let live = senders.iter().filter(|&&t| !sim.is_blacklisted(m, t)).count();
                (live >= 1 && live as f64 >= s).then_some(j)
            });
            let Some(j) = pick else {
                result[m] = Some(None);
                continue;
            };
            if know.query(sim, m, j)? {
                result[m] = Some(Some(j));
                continue;
            }
            failures += 1;
            let senders = claims[m].remove(&j).unwrap_or_default();
            let mut fresh = 0usize;
            for t in senders {
                if sim.blacklist(m, t) {
                    fresh += 1;
                }
            }
            sim.diag.min("glse_min_blacklisted_per_failure", fresh as f64);
        }
        sim.finish_queries()?;
        sim.idle_rounds(1);
    }
    sim.diag.set("glse_failed_verifications", failures as f64);
    Ok(result.into_iter().map(|r| r.map(Output::Index)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundrobin_assignment() {
        // k = 5, βk = 1: bit 0 served by {0,1,2}, bit 1 by {3,4,0}
        let c = rr_committee_size(5, 1);
        assert_eq!(c, 3);
        assert_eq!(rr_members(0, c, 5).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(rr_members(1, c, 5).collect::<Vec<_>>(), vec![3, 4, 0]);
    }

    #[test]
    fn roundrobin_load_bound() {
        let c = rr_committee_size(8, 2);
        let loads = rr_loads(64, 8, c);
        assert!(loads.iter().all(|&l| l <= (64 * c).div_ceil(8)));
        assert_eq!(*loads.iter().max().unwrap(), 40);
    }
}
