//! Benign-model algorithms built on public committees: the convergecast
//! forest, four downloads, two parity algorithms, and stand-alone runs of the
//! resolution primitives.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::resolve::{fast_weak_resolve, weak_parity_resolve, weak_resolve, Session};
use super::{partition, send_all, Knowledge, Output, Outputs};
use crate::adversary::Step;
use crate::committees::{elect_public, election_tags, sigma_maj, sigma_weak, PublicCommittees};
use crate::engine::{Budget, Sim};
use crate::error::{config, Result};
use crate::payload::{Envelope, MachineId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestNode {
    pub tree: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Height of the node's subtree; leaves are level 1.
    pub level: usize,
    /// Indices assigned to the node (contiguous).
    pub range: Range<usize>,
}

/// Shape of a public convergecast forest F_(n,k); committees are attached
/// separately.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forest {
    pub arity: usize,
    pub trees: usize,
    pub leaves_per_tree: usize,
    pub nodes: Vec<ForestNode>,
}

/// Children counts of a complete `arity`-ary tree with `leaves` leaves, in
/// breadth-first order. The deepest level is filled left to right and every
/// internal node keeps at least two children.
fn tree_shape(arity: usize, leaves: usize) -> Vec<Vec<usize>> {
    // children lists over node ids assigned breadth-first
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    if leaves <= 1 || arity < 2 {
        return children;
    }
    let mut frontier = vec![0usize];
    let mut count = 1usize;
    // grow full levels while the next full level stays within `leaves`
    while count * arity <= leaves {
        let mut next = Vec::new();
        for &v in &frontier {
            for _ in 0..arity {
                let id = children.len();
                children.push(Vec::new());
                children[v].push(id);
                next.push(id);
            }
        }
        frontier = next;
        count *= arity;
    }
    let mut deficit = leaves - count;
    for &v in &frontier {
        if deficit == 0 {
            break;
        }
        let c = if deficit >= arity - 1 { arity } else { deficit + 1 };
        for _ in 0..c {
            let id = children.len();
            children.push(Vec::new());
            children[v].push(id);
        }
        deficit -= c - 1;
    }
    children
}

impl Forest {
    pub fn new(n: usize, k: usize) -> Self {
        let arity = (n as f64 / k as f64 + 1.0).ceil() as usize;
        let trees = n.div_ceil(k).min(k).max(1);
        let leaves_per_tree = (k * k).div_ceil(n).max(1);
        let shape = tree_shape(arity, leaves_per_tree);
        let slices = partition(n, trees * leaves_per_tree);
        let mut nodes = Vec::new();
        let mut leaf = 0usize;
        for t in 0..trees {
            let base = nodes.len();
            for _ in 0..shape.len() {
                nodes.push(ForestNode { tree: t, parent: None, children: Vec::new(), level: 1, range: 0..0 });
            }
            for (v, ch) in shape.iter().enumerate() {
                nodes[base + v].children = ch.iter().map(|c| base + c).collect();
                for &c in ch {
                    nodes[base + c].parent = Some(base + v);
                }
            }
            // depth-first: leaves take consecutive slices, parents the union
            fn assign(nodes: &mut [ForestNode], v: usize, slices: &[Range<usize>], leaf: &mut usize) {
                if nodes[v].children.is_empty() {
                    nodes[v].range = slices[*leaf].clone();
                    *leaf += 1;
                    nodes[v].level = 1;
                    return;
                }
                let ch = nodes[v].children.clone();
                let mut lo = usize::MAX;
                let mut hi = 0;
                let mut level = 0;
                for c in ch {
                    assign(nodes, c, slices, leaf);
                    lo = lo.min(nodes[c].range.start);
                    hi = hi.max(nodes[c].range.end);
                    level = level.max(nodes[c].level);
                }
                nodes[v].range = lo..hi;
                nodes[v].level = level + 1;
            }
            assign(&mut nodes, base, &slices, &mut leaf);
        }
        Forest { arity, trees, leaves_per_tree, nodes }
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].parent.is_none()).collect()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&v| self.nodes[v].children.is_empty()).collect()
    }

    pub fn height(&self) -> usize {
        self.nodes.iter().map(|v| v.level).max().unwrap_or(0)
    }
}

/// σ for weak committees, overridable with the `sigma` param.
fn weak_sigma(sim: &Sim) -> usize {
    let c = sim.config();
    c.param("sigma").map(|s| s as usize).unwrap_or_else(|| sigma_weak(c.n, c.gamma())).max(1)
}

/// Public knowledge: what every machine would know at this point if honest.
/// Session index lists are computed from it, so every machine agrees on them.
struct Public {
    knows: Vec<Vec<bool>>,
}

impl Public {
    fn new(k: usize, n: usize) -> Self {
        Public { knows: vec![vec![false; n]; k] }
    }

    fn missing(&self, m: MachineId, range: Range<usize>) -> Vec<usize> {
        range.filter(|&i| !self.knows[m][i]).collect()
    }

    fn learn(&mut self, m: MachineId, idx: &[usize]) {
        for &i in idx {
            self.knows[m][i] = true;
        }
    }
}

/// Election plus direct queries of each member's slices, in one query
/// sub-round.
fn elect_and_query(
    sim: &mut Sim,
    sigma: usize,
    slices: &[Range<usize>],
    query_all: bool,
    know: &mut Knowledge,
    public: &mut Public,
) -> Result<PublicCommittees> {
    sim.begin_round()?;
    let pc = elect_public(sim, sigma, slices.len(), election_tags(0))?;
    if query_all {
        for (c, range) in slices.iter().enumerate() {
            for &m in &pc.members[c] {
                let idx: Vec<usize> = range.clone().collect();
                if !sim.is_byz(m) {
                    for &i in &idx {
                        know.query(sim, m, i)?;
                    }
                }
                public.learn(m, &idx);
            }
        }
    }
    sim.finish_queries()?;
    if !pc.all_weak(&byz_vec(sim)) {
        sim.diag.flag("bad_event_committee_without_honest_member");
    }
    Ok(pc)
}

fn byz_vec(sim: &Sim) -> Vec<bool> {
    (0..sim.k()).map(|m| sim.is_byz(m)).collect()
}

/// Sessions letting each machine in `resolvers` fetch what it lacks of
/// `range` from `committee`.
fn sessions_for(
    public: &Public,
    resolvers: impl Iterator<Item = MachineId>,
    committee: &[MachineId],
    range: Range<usize>,
) -> Vec<Session> {
    resolvers
        .filter_map(|r| {
            let idx = public.missing(r, range.clone());
            (!idx.is_empty()).then(|| Session { resolver: r, committee: committee.to_vec(), indices: idx })
        })
        .collect()
}

fn resolve(sim: &mut Sim, know: &mut Knowledge, public: &mut Public, sessions: &[Session], fast: bool) -> Result<()> {
    if sessions.is_empty() {
        return Ok(());
    }
    if fast {
        fast_weak_resolve(sim, know, sessions)?;
    } else {
        weak_resolve(sim, know, sessions)?;
    }
    for s in sessions {
        public.learn(s.resolver, &s.indices);
    }
    Ok(())
}

fn bits_out(sim: &Sim, know: &Knowledge) -> Outputs {
    (0..sim.k()).map(|m| (!sim.is_byz(m)).then(|| Output::Bits(know.bits(m)))).collect()
}

pub fn linear_download(sim: &mut Sim, fast: bool) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let sigma = weak_sigma(sim);
    let slices = partition(n, k);
    let mut know = Knowledge::new(k, n);
    let mut public = Public::new(k, n);
    let pc = elect_and_query(sim, sigma, &slices, true, &mut know, &mut public)?;
    for i in 1..k {
        let prefix = 0..slices[i - 1].end;
        let sessions = sessions_for(&public, pc.members[i].iter().copied(), &pc.members[i - 1], prefix);
        resolve(sim, &mut know, &mut public, &sessions, fast)?;
    }
    let sessions = sessions_for(&public, 0..k, &pc.members[k - 1], 0..n);
    resolve(sim, &mut know, &mut public, &sessions, fast)?;
    Ok(bits_out(sim, &know))
}

/// Convergecast over a freshly elected forest; returns the forest and its
/// committees. Afterwards every honest root member knows its root's range.
fn convergecast(sim: &mut Sim, know: &mut Knowledge, public: &mut Public) -> Result<(Forest, PublicCommittees)> {
    let (n, k) = (sim.n(), sim.k());
    let forest = Forest::new(n, k);
    let sigma = weak_sigma(sim);
    sim.diag.set("forest_nodes", forest.nodes.len() as f64);
    sim.diag.set("forest_height", forest.height() as f64);
    let ranges: Vec<Range<usize>> = forest.nodes.iter().map(|v| v.range.clone()).collect();
    // only leaves query; elect over all nodes
    sim.begin_round()?;
    let pc = elect_public(sim, sigma, forest.nodes.len(), election_tags(0))?;
    for v in forest.leaves() {
        for &m in &pc.members[v] {
            let idx: Vec<usize> = ranges[v].clone().collect();
            if !sim.is_byz(m) {
                for &i in &idx {
                    know.query(sim, m, i)?;
                }
            }
            public.learn(m, &idx);
        }
    }
    sim.finish_queries()?;
    if !pc.all_weak(&byz_vec(sim)) {
        sim.diag.flag("bad_event_committee_without_honest_member");
    }
    for level in 2..=forest.height() {
        let mut sessions = Vec::new();
        for (v, node) in forest.nodes.iter().enumerate() {
            if node.level != level {
                continue;
            }
            for &c in &node.children {
                sessions.extend(sessions_for(public, pc.members[v].iter().copied(), &pc.members[c], ranges[c].clone()));
            }
        }
        resolve(sim, know, public, &merge_sessions(sessions), false)?;
    }
    Ok((forest, pc))
}

/// Keeps one session per (resolver, committee) pair with the indices joined,
/// and drops indices a resolver already fetches elsewhere.
fn merge_sessions(mut sessions: Vec<Session>) -> Vec<Session> {
    sessions.sort_by(|a, b| (a.resolver, &a.committee, &a.indices).cmp(&(b.resolver, &b.committee, &b.indices)));
    let mut out: Vec<Session> = Vec::new();
    let mut taken: std::collections::HashSet<(MachineId, usize)> = std::collections::HashSet::new();
    for mut s in sessions {
        s.indices.retain(|&i| taken.insert((s.resolver, i)));
        if s.indices.is_empty() {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.resolver == s.resolver && last.committee == s.committee => {
                last.indices.extend(s.indices);
                last.indices.sort_unstable();
            }
            _ => out.push(s),
        }
    }
    out
}

pub fn convergecast_run(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut know = Knowledge::new(k, n);
    let mut public = Public::new(k, n);
    let (forest, pc) = convergecast(sim, &mut know, &mut public)?;
    let roots = forest.roots();
    Ok((0..k)
        .map(|m| {
            (!sim.is_byz(m)).then(|| {
                let slices = roots
                    .iter()
                    .filter(|&&v| pc.members[v].contains(&m))
                    .map(|&v| {
                        let r = forest.nodes[v].range.clone();
                        (r.start, r.map(|i| know.res[m][i].unwrap_or(false)).collect())
                    })
                    .collect();
                Output::Slices(slices)
            })
        })
        .collect())
}

pub fn parallel_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut know = Knowledge::new(k, n);
    let mut public = Public::new(k, n);
    let (forest, pc) = convergecast(sim, &mut know, &mut public)?;
    let mut sessions = Vec::new();
    for v in forest.roots() {
        sessions.extend(sessions_for(&public, 0..k, &pc.members[v], forest.nodes[v].range.clone()));
    }
    resolve(sim, &mut know, &mut public, &merge_sessions(sessions), false)?;
    Ok(bits_out(sim, &know))
}

fn majorizing_committees(sim: &mut Sim, know: &mut Knowledge) -> Result<(Vec<Range<usize>>, PublicCommittees)> {
    let (n, k) = (sim.n(), sim.k());
    let beta = sim.config().beta;
    if beta >= 0.5 {
        return config(format!("majorizing committees need beta < 1/2, got {beta}"));
    }
    let sigma = sim.config().param("sigma").map(|s| s as usize).unwrap_or_else(|| sigma_maj(n, beta)).max(1);
    let slices = partition(n, k);
    let mut public = Public::new(k, n);
    let pc = elect_and_query(sim, sigma, &slices, true, know, &mut public)?;
    if !pc.all_majorizing(&byz_vec(sim)) {
        sim.diag.flag("bad_event_committee_without_honest_majority");
    }
    Ok((slices, pc))
}

pub fn majorizing_download(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut know = Knowledge::new(k, n);
    let (slices, pc) = majorizing_committees(sim, &mut know)?;
    let mut owner = vec![0usize; n];
    for (c, r) in slices.iter().enumerate() {
        for i in r.clone() {
            owner[i] = c;
        }
    }
    sim.message_round()?;
    let mut templates = vec![Vec::new(); k];
    let mut load = vec![0u64; k];
    for (c, r) in slices.iter().enumerate() {
        for &m in &pc.members[c] {
            load[m] += r.len() as u64;
            for i in r.clone() {
                let b = if sim.is_byz(m) { sim.ground_truth().get(i) } else { know.res[m][i].unwrap_or(false) };
                templates[m].push(Envelope::all(Payload::Bit { index: i as u32, bit: b }));
            }
        }
    }
    send_all(sim, &Step::Report, templates)?;
    let mb = sim.end_round(Budget::Fixed(load.into_iter().max().unwrap_or(0).max(1)))?;
    for m in 0..k {
        if sim.is_byz(m) {
            continue;
        }
        let mut votes = vec![[0usize; 2]; n];
        let mut seen = std::collections::HashSet::new();
        for (s, p) in mb.inbox(m) {
            if let Payload::Bit { index, bit } = *p {
                let i = index as usize;
                if i < n && pc.members[owner[i]].binary_search(&s).is_ok() && seen.insert((s, i)) {
                    votes[i][bit as usize] += 1;
                }
            }
        }
        for i in 0..n {
            if know.res[m][i].is_none() {
                know.res[m][i] = Some(votes[i][1] > votes[i][0]);
            }
        }
    }
    Ok(bits_out(sim, &know))
}

pub fn majorizing_parity(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut know = Knowledge::new(k, n);
    let (slices, pc) = majorizing_committees(sim, &mut know)?;
    sim.message_round()?;
    let mut templates = vec![Vec::new(); k];
    let mut load = vec![0u64; k];
    let mut own: Vec<Vec<Option<bool>>> = vec![vec![None; k]; k];
    for (c, r) in slices.iter().enumerate() {
        for &m in &pc.members[c] {
            load[m] += 1;
            let semi = r.clone().fold(false, |a, i| {
                a ^ if sim.is_byz(m) { sim.ground_truth().get(i) } else { know.res[m][i].unwrap_or(false) }
            });
            own[m][c] = Some(semi);
            templates[m].push(Envelope::all(Payload::Semiparity { committee: c as u32, bit: semi }));
        }
    }
    send_all(sim, &Step::Semiparity, templates)?;
    let mb = sim.end_round(Budget::Fixed(load.into_iter().max().unwrap_or(0).max(1)))?;
    Ok((0..k)
        .map(|m| {
            if sim.is_byz(m) {
                return None;
            }
            let mut votes = vec![[0usize; 2]; k];
            let mut seen = std::collections::HashSet::new();
            for (s, p) in mb.inbox(m) {
                if let Payload::Semiparity { committee, bit } = *p {
                    let c = committee as usize;
                    if c < k && pc.members[c].binary_search(&s).is_ok() && seen.insert((s, c)) {
                        votes[c][bit as usize] += 1;
                    }
                }
            }
            let parity = (0..k).fold(false, |a, c| a ^ own[m][c].unwrap_or(votes[c][1] > votes[c][0]));
            Some(Output::Bit(parity))
        })
        .collect())
}

pub fn converge_parity(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let mut know = Knowledge::new(k, n);
    let mut public = Public::new(k, n);
    let (forest, pc) = convergecast(sim, &mut know, &mut public)?;
    let roots = forest.roots();
    let mut sessions = Vec::new();
    for &v in &roots {
        let range = forest.nodes[v].range.clone();
        for r in 0..k {
            if !pc.members[v].contains(&r) {
                sessions.push(Session { resolver: r, committee: pc.members[v].clone(), indices: range.clone().collect() });
            }
        }
    }
    let results = weak_parity_resolve(sim, &know, &sessions)?;
    let mut parity = vec![false; k];
    for (s, r) in sessions.iter().zip(&results) {
        parity[s.resolver] ^= r.unwrap_or(false);
    }
    for &v in &roots {
        for &m in &pc.members[v] {
            parity[m] ^= forest.nodes[v].range.clone().fold(false, |a, i| a ^ know.res[m][i].unwrap_or(false));
        }
    }
    Ok((0..k).map(|m| (!sim.is_byz(m)).then_some(Output::Bit(parity[m]))).collect())
}

/// The first `committee` machines (default 3) know the input; everyone else
/// resolves it from them.
fn primitive_setup(sim: &Sim) -> Result<(Vec<MachineId>, Knowledge)> {
    let (n, k) = (sim.n(), sim.k());
    let c = sim.config().param_or("committee", 3.0) as usize;
    if c == 0 || c >= k {
        return config(format!("primitive runs need 1 <= committee < k, got {c}"));
    }
    let mut know = Knowledge::new(k, n);
    for m in 0..c {
        for i in 0..n {
            know.res[m][i] = Some(sim.ground_truth().get(i));
        }
    }
    Ok(((0..c).collect(), know))
}

pub fn weak_resolve_run(sim: &mut Sim, fast: bool) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let (committee, mut know) = primitive_setup(sim)?;
    let sessions: Vec<Session> = (committee.len()..k)
        .map(|r| Session { resolver: r, committee: committee.clone(), indices: (0..n).collect() })
        .collect();
    if fast {
        fast_weak_resolve(sim, &mut know, &sessions)?;
    } else {
        weak_resolve(sim, &mut know, &sessions)?;
    }
    Ok(bits_out(sim, &know))
}

pub fn weak_parity_resolve_run(sim: &mut Sim) -> Result<Outputs> {
    let (n, k) = (sim.n(), sim.k());
    let (committee, know) = primitive_setup(sim)?;
    let sessions: Vec<Session> = (committee.len()..k)
        .map(|r| Session { resolver: r, committee: committee.clone(), indices: (0..n).collect() })
        .collect();
    let results = weak_parity_resolve(sim, &know, &sessions)?;
    let mut out: Outputs = (0..k).map(|m| (!sim.is_byz(m)).then(|| Output::Bit(sim.ground_truth().xor()))).collect();
    for (s, r) in sessions.iter().zip(results) {
        out[s.resolver] = r.map(Output::Bit);
    }
    Ok(out)
}
