//! Large set expanders (LSE) and guaranteed large set expanders (GLSE).
//!
//! Left vertices are the n input indices, right vertices the k machines.
//! Graphs come from the random experiment "every left vertex samples d right
//! vertices uniformly", driven by a public seed so every machine rebuilds the
//! same graph. Duplicate samples collapse into one edge.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result, SimError};
use crate::rng::{mix, RandomTape, STREAM_EXPANDER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpanderKind {
    Lse,
    Glse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpanderParams {
    pub kind: ExpanderKind,
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub delta: f64,
    /// GLSE redundancy; ignored for LSE.
    #[serde(default)]
    pub s: f64,
    /// Left-degree override.
    #[serde(default)]
    pub d: Option<usize>,
}

impl ExpanderParams {
    pub fn lse(n: usize, k: usize, beta: f64, delta: f64) -> Self {
        ExpanderParams { kind: ExpanderKind::Lse, n, k, beta, delta, s: 0.0, d: None }
    }

    pub fn glse(n: usize, k: usize, beta: f64, delta: f64, s: f64) -> Self {
        ExpanderParams { kind: ExpanderKind::Glse, n, k, beta, delta, s, d: None }
    }

    pub fn with_degree(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    /// Number of left samples per vertex.
    pub fn degree(&self) -> usize {
        self.d.unwrap_or_else(|| match self.kind {
            ExpanderKind::Lse => lse_degree_bound(self.n, self.k, self.beta, self.delta),
            ExpanderKind::Glse => glse_degree(self.n, self.k, self.beta, self.delta, self.s),
        })
    }

    /// Whether `s` satisfies the existence condition
    /// `s < min(k, n/2 - (8/γ)(1 + k ln k / (nδ)))`.
    pub fn glse_precondition(&self) -> bool {
        let (n, k) = (self.n as f64, self.k as f64);
        let gamma = 1.0 - self.beta;
        let delta = self.delta.max(1.0 / n);
        let rhs = n / 2.0 - (8.0 / gamma) * (1.0 + k * k.ln() / (n * delta));
        self.s < k.min(rhs)
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return config("expander needs n, k > 0");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return config(format!("expander beta {} outside [0, 1)", self.beta));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return config(format!("expander delta {} outside (0, 1]", self.delta));
        }
        Ok(())
    }

    fn key(&self, seed: u64) -> String {
        format!(
            "{:?}/{}/{}/{:x}/{:x}/{:x}/{:?}/{}",
            self.kind,
            self.n,
            self.k,
            self.beta.to_bits(),
            self.delta.to_bits(),
            self.s.to_bits(),
            self.d,
            seed
        )
    }
}

/// Smallest integer strictly above
/// `max{ (1 + log(e/𝛅))/log(1/β) + (βk/(δn)) log(e/β)/log(1/β), 3k ln(2k)/n }`,
/// logs base 2.
pub fn lse_degree_bound(n: usize, k: usize, beta: f64, delta: f64) -> usize {
    if beta <= 0.0 {
        return 1;
    }
    let (nf, kf) = (n as f64, k as f64);
    let md = delta.max(1.0 / nf);
    let e = std::f64::consts::E;
    let lb = (1.0 / beta).log2();
    let first = (1.0 + (e / md).log2()) / lb + (beta * kf / (md * nf)) * (e / beta).log2() / lb;
    let second = 3.0 * kf * (2.0 * kf).ln() / nf;
    first.max(second).floor() as usize + 1
}

/// `d_th + 2s/ε` with `d_th = (8 - 6ε)/ε² (ln n + k ln k/(δn))`, ε = 1 - β.
pub fn glse_degree(n: usize, k: usize, beta: f64, delta: f64, s: f64) -> usize {
    let (nf, kf) = (n as f64, k as f64);
    let eps = 1.0 - beta;
    let md = delta.max(1.0 / nf);
    let d_th = (8.0 - 6.0 * eps) / (eps * eps) * (nf.ln() + kf * kf.ln() / (md * nf));
    (d_th + 2.0 * s / eps).ceil().max(1.0) as usize
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub n_left: usize,
    pub k_right: usize,
    /// Sorted right neighbours of every left vertex.
    pub adjacency: Vec<Vec<u32>>,
    pub left_degree_bound: usize,
    pub right_degree_bound: usize,
}

impl BipartiteGraph {
    pub fn from_adjacency(k_right: usize, mut adjacency: Vec<Vec<u32>>) -> Self {
        for a in &mut adjacency {
            a.sort_unstable();
            a.dedup();
        }
        let mut g = BipartiteGraph {
            n_left: adjacency.len(),
            k_right,
            adjacency,
            left_degree_bound: 0,
            right_degree_bound: 0,
        };
        g.left_degree_bound = g.max_left_degree();
        g.right_degree_bound = g.max_right_degree();
        g
    }

    pub fn complete(n: usize, k: usize) -> Self {
        Self::from_adjacency(k, vec![(0..k as u32).collect(); n])
    }

    pub fn empty(n: usize, k: usize) -> Self {
        Self::from_adjacency(k, vec![Vec::new(); n])
    }

    pub fn max_left_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn right_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.k_right];
        for a in &self.adjacency {
            for &r in a {
                deg[r as usize] += 1;
            }
        }
        deg
    }

    pub fn max_right_degree(&self) -> usize {
        self.right_degrees().into_iter().max().unwrap_or(0)
    }

    /// Left vertices adjacent to right vertex `r` (the indices machine r queries).
    pub fn right_neighbours(&self, r: usize) -> Vec<usize> {
        self.adjacency.iter().enumerate().filter(|(_, a)| a.binary_search(&(r as u32)).is_ok()).map(|(u, _)| u).collect()
    }

    /// Query lists of all right vertices at once.
    pub fn by_right(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k_right];
        for (u, a) in self.adjacency.iter().enumerate() {
            for &r in a {
                out[r as usize].push(u);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.adjacency).expect("adjacency serializes")
    }

    pub fn from_json(k_right: usize, s: &str) -> Result<Self> {
        let adj: Vec<Vec<u32>> = serde_json::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        if adj.iter().flatten().any(|&r| r as usize >= k_right) {
            return config("adjacency names a right vertex out of range");
        }
        Ok(Self::from_adjacency(k_right, adj))
    }

    fn masks(&self) -> Result<Vec<u64>> {
        if self.k_right > 64 {
            return Err(SimError::TooLarge(format!("exhaustive check supports k <= 64, got {}", self.k_right)));
        }
        Ok(self.adjacency.iter().map(|a| a.iter().fold(0u64, |m, &r| m | (1u64 << r))).collect())
    }
}

/// Exhaustive-check failure certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub s: Vec<usize>,
    pub t: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn pass() -> Self {
        Verdict { pass: true, witness: None }
    }
}

/// Largest enumeration an exhaustive verifier accepts.
pub const ENUMERATION_LIMIT: u128 = 50_000_000;

pub fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u128::MAX / 1024 {
            return u128::MAX / 1024;
        }
    }
    acc
}

fn set_size(n: usize, delta: f64) -> usize {
    ((n as f64 * delta) - 1e-9).ceil().max(0.0) as usize
}

fn t_size(k: usize, beta: f64) -> usize {
    ((k as f64 * beta) + 1e-9).floor() as usize
}

fn too_large(what: &str, count: u128) -> SimError {
    SimError::TooLarge(format!(
        "{what} enumeration has {count} cases, limit {ENUMERATION_LIMIT}; shrink n, k or beta"
    ))
}

/// Whether `verify_lse` would accept the instance size.
pub fn lse_checkable(k: usize, n: usize, beta: f64) -> bool {
    k <= 64 && binomial(k, t_size(k, beta)).saturating_mul(n as u128) <= ENUMERATION_LIMIT
}

/// True iff every left set of size ⌈nδ⌉ has more than βk neighbours.
///
/// Checked over right sets: the property fails exactly when some T with
/// |T| = ⌊βk⌋ contains the whole neighbourhood of ⌈nδ⌉ left vertices.
pub fn verify_lse(g: &BipartiteGraph, beta: f64, delta: f64) -> Result<Verdict> {
    let need = set_size(g.n_left, delta);
    let tk = t_size(g.k_right, beta);
    let masks = g.masks()?;
    let cases = binomial(g.k_right, tk).saturating_mul(g.n_left as u128);
    if cases > ENUMERATION_LIMIT {
        return Err(too_large("LSE", cases));
    }
    if need == 0 {
        return Ok(Verdict { pass: false, witness: Some(Witness { s: Vec::new(), t: Vec::new() }) });
    }
    for t in (0..g.k_right).combinations(tk) {
        let tm = t.iter().fold(0u64, |m, &r| m | (1u64 << r));
        let inside: Vec<usize> = (0..g.n_left).filter(|&u| masks[u] & !tm == 0).take(need).collect();
        if inside.len() >= need {
            return Ok(Verdict { pass: false, witness: Some(Witness { s: inside, t }) });
        }
    }
    Ok(Verdict::pass())
}

/// The same property checked directly over left sets of size ⌈nδ⌉.
pub fn verify_lse_by_subsets(g: &BipartiteGraph, beta: f64, delta: f64) -> Result<Verdict> {
    let need = set_size(g.n_left, delta);
    let masks = g.masks()?;
    let cases = binomial(g.n_left, need);
    if cases > ENUMERATION_LIMIT {
        return Err(too_large("LSE subset", cases));
    }
    let bk = g.k_right as f64 * beta;
    for s in (0..g.n_left).combinations(need) {
        let cover = s.iter().fold(0u64, |m, &u| m | masks[u]);
        if (cover.count_ones() as f64) <= bk + 1e-9 {
            let t: Vec<usize> = (0..g.k_right).filter(|&r| cover >> r & 1 == 1).collect();
            return Ok(Verdict { pass: false, witness: Some(Witness { s, t }) });
        }
    }
    Ok(Verdict::pass())
}

/// True iff for every S (|S| = ⌈nδ⌉) and T (|T| = ⌊βk⌋) some u ∈ S keeps at
/// least `s` neighbours outside T. Checked over T: it fails exactly when some T
/// leaves ⌈nδ⌉ vertices with fewer than `s` neighbours outside.
pub fn verify_glse(g: &BipartiteGraph, beta: f64, delta: f64, s: f64) -> Result<Verdict> {
    let need = set_size(g.n_left, delta);
    let tk = t_size(g.k_right, beta);
    let masks = g.masks()?;
    let cases = binomial(g.k_right, tk).saturating_mul(g.n_left as u128);
    if cases > ENUMERATION_LIMIT {
        return Err(too_large("GLSE", cases));
    }
    if need == 0 {
        return Ok(Verdict { pass: false, witness: Some(Witness { s: Vec::new(), t: Vec::new() }) });
    }
    for t in (0..g.k_right).combinations(tk) {
        let tm = t.iter().fold(0u64, |m, &r| m | (1u64 << r));
        let weak: Vec<usize> =
            (0..g.n_left).filter(|&u| ((masks[u] & !tm).count_ones() as f64) < s).take(need).collect();
        if weak.len() >= need {
            return Ok(Verdict { pass: false, witness: Some(Witness { s: weak, t }) });
        }
    }
    Ok(Verdict::pass())
}

/// Direct (S, T) enumeration, for cross-checking `verify_glse`.
pub fn verify_glse_by_subsets(g: &BipartiteGraph, beta: f64, delta: f64, s: f64) -> Result<Verdict> {
    let need = set_size(g.n_left, delta);
    let tk = t_size(g.k_right, beta);
    let masks = g.masks()?;
    let cases = binomial(g.n_left, need).saturating_mul(binomial(g.k_right, tk));
    if cases > ENUMERATION_LIMIT {
        return Err(too_large("GLSE subset", cases));
    }
    let ts: Vec<Vec<usize>> = (0..g.k_right).combinations(tk).collect();
    for sub in (0..g.n_left).combinations(need) {
        for t in &ts {
            let tm = t.iter().fold(0u64, |m, &r| m | (1u64 << r));
            if sub.iter().all(|&u| ((masks[u] & !tm).count_ones() as f64) < s) {
                return Ok(Verdict { pass: false, witness: Some(Witness { s: sub, t: t.clone() }) });
            }
        }
    }
    Ok(Verdict::pass())
}

pub fn verify(g: &BipartiteGraph, p: &ExpanderParams) -> Result<Verdict> {
    match p.kind {
        ExpanderKind::Lse => verify_lse(g, p.beta, p.delta),
        ExpanderKind::Glse => verify_glse(g, p.beta, p.delta, p.s),
    }
}

/// One run of the random experiment, no rejection.
pub fn sample_graph(p: &ExpanderParams, seed: u64, nonce: u64) -> BipartiteGraph {
    let d = p.degree();
    let mut tape = RandomTape::new(mix(seed, nonce), STREAM_EXPANDER);
    let adjacency = (0..p.n).map(|_| (0..d).map(|_| tape.below(p.k) as u32).collect()).collect();
    let mut g = BipartiteGraph::from_adjacency(p.k, adjacency);
    g.left_degree_bound = d.min(p.k);
    g
}

const MAX_NONCES: u64 = 500;

/// Seeded construction with rejection: resample (bumping a nonce) until the
/// right-degree cap holds and, where the instance is small enough, the
/// exhaustive verifier passes.
pub fn build(p: &ExpanderParams, seed: u64) -> Result<BipartiteGraph> {
    p.check()?;
    let d = p.degree();
    let right_cap = (2 * p.n * d).div_ceil(p.k);
    let checkable = lse_checkable(p.k, p.n, p.beta);
    for nonce in 0..MAX_NONCES {
        let mut g = sample_graph(p, seed, nonce);
        if p.kind == ExpanderKind::Lse {
            if g.max_right_degree() > right_cap {
                continue;
            }
            g.right_degree_bound = right_cap;
        }
        if !checkable || verify(&g, p)?.pass {
            return Ok(g);
        }
    }
    config(format!("no {:?} found for {:?} within {MAX_NONCES} resamples", p.kind, p))
}

type Cache = Mutex<HashMap<String, Arc<BipartiteGraph>>>;

fn cache() -> &'static Cache {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `build`, memoised process-wide. Graphs are pure functions of (params, seed).
pub fn build_cached(p: &ExpanderParams, seed: u64) -> Result<Arc<BipartiteGraph>> {
    let key = p.key(seed);
    if let Some(g) = cache().lock().expect("expander cache").get(&key) {
        return Ok(g.clone());
    }
    let g = Arc::new(build(p, seed)?);
    cache().lock().expect("expander cache").insert(key, g.clone());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_formula() {
        assert_eq!(lse_degree_bound(64, 8, 0.5, 0.25), 6);
        assert_eq!(lse_degree_bound(64, 8, 0.0, 0.25), 1);
        // 1/𝛅 is capped at n, so below 1/n the bound stops moving
        assert_eq!(lse_degree_bound(64, 8, 0.5, 1e-9), lse_degree_bound(64, 8, 0.5, 1.0 / 64.0));
    }

    #[test]
    fn complete_and_empty() {
        let c = BipartiteGraph::complete(10, 4);
        assert!(verify_lse(&c, 0.75, 0.3).unwrap().pass);
        let e = BipartiteGraph::empty(10, 4);
        assert!(!verify_lse(&e, 0.5, 1.0).unwrap().pass);
    }

    #[test]
    fn hand_built_failure() {
        // left vertices 0, 1, 2 all sit on right vertices {0, 1}
        let mut adj = vec![vec![0u32, 1, 2, 3]; 10];
        for u in 0..3 {
            adj[u] = vec![0, 1];
        }
        let g = BipartiteGraph::from_adjacency(4, adj);
        let v = verify_lse(&g, 0.5, 0.3).unwrap();
        assert!(!v.pass);
        let w = v.witness.unwrap();
        assert_eq!(w.s, vec![0, 1, 2]);
        assert!(!verify_lse_by_subsets(&g, 0.5, 0.3).unwrap().pass);
    }

    #[test]
    fn k_one() {
        let g = sample_graph(&ExpanderParams::lse(5, 1, 0.0, 0.5), 1, 0);
        assert!(g.adjacency.iter().all(|a| a == &vec![0]));
    }

    #[test]
    fn glse_trivial_cases() {
        let g = sample_graph(&ExpanderParams::glse(8, 4, 0.25, 0.5, 0.0).with_degree(2), 3, 0);
        assert!(verify_glse(&g, 0.25, 0.5, 0.0).unwrap().pass);
        let c = BipartiteGraph::complete(8, 4);
        assert!(!verify_glse(&c, 0.25, 0.5, 4.0).unwrap().pass);
    }

    #[test]
    fn oversize_is_refused() {
        let g = BipartiteGraph::complete(200, 40);
        assert!(matches!(verify_lse_by_subsets(&g, 0.5, 0.5), Err(SimError::TooLarge(_))));
    }

    #[test]
    fn json_round_trip() {
        let g = build(&ExpanderParams::lse(12, 4, 0.25, 0.5), 7).unwrap();
        let back = BipartiteGraph::from_json(4, &g.to_json()).unwrap();
        assert_eq!(back.adjacency, g.adjacency);
    }
}
