//! Private Bernoulli committees and public hash-elected committees.

use serde::{Deserialize, Serialize};

use crate::config::ceil_log2;
use crate::engine::Sim;
use crate::error::{config, Result};
use crate::hash::{bits_per_coeff, field_prime, HashFunction};
use crate::payload::MachineId;

/// `min(1, (9 ln n + 4ρ)/(γk))`.
pub fn private_bias(n: usize, k: usize, gamma: f64, rho: f64) -> f64 {
    ((9.0 * (n as f64).ln() + 4.0 * rho) / (gamma * k as f64)).min(1.0)
}

/// Every machine tosses its own coin; the flags never leave the machine
/// unless it announces them.
pub fn elect_private(sim: &mut Sim, rho: f64) -> Result<Vec<bool>> {
    let (n, k) = (sim.n(), sim.k());
    let gamma = sim.config().gamma();
    if rho > gamma * k as f64 + 1e-9 {
        return config(format!("rho = {rho} exceeds gamma*k = {}", gamma * k as f64));
    }
    let p = private_bias(n, k, gamma, rho);
    Ok((0..k).map(|m| sim.coin(m, p)).collect())
}

/// Honest heads among `flags`.
pub fn honest_members(flags: &[bool], byz: &[bool]) -> usize {
    flags.iter().zip(byz).filter(|(&f, &b)| f && !b).count()
}

/// `ceil(9 log2 n / γ)`.
pub fn sigma_weak(n: usize, gamma: f64) -> usize {
    (9.0 * (n as f64).log2() / gamma).ceil() as usize
}

/// `ceil(2 log2 n / γ)`, the smallest size the weak-committee guarantee needs.
pub fn sigma_weak_min(n: usize, gamma: f64) -> usize {
    (2.0 * (n as f64).log2() / gamma).ceil() as usize
}

/// `ceil(2 log2 n / (1/2 - β)²)`.
pub fn sigma_maj(n: usize, beta: f64) -> usize {
    let g = 0.5 - beta;
    (2.0 * (n as f64).log2() / (g * g)).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicCommittees {
    pub sigma: usize,
    pub nu: usize,
    pub k: usize,
    /// Sorted, de-duplicated members of committee i.
    pub members: Vec<Vec<MachineId>>,
}

/// Global bits one machine reads to sample σ functions `[ν] → [k]`.
pub fn public_bits(sigma: usize, nu: usize, k: usize) -> u64 {
    let p = field_prime(nu as u64, k as u64);
    (sigma * sigma) as u64 * bits_per_coeff(p) as u64
}

impl PublicCommittees {
    /// σ functions, each σ-wise independent, drawn from a shared bit source;
    /// committee i is `{h_j(i)}`.
    pub fn sample(sigma: usize, nu: usize, k: usize, mut bit: impl FnMut() -> bool) -> Self {
        let hashes: Vec<HashFunction> =
            (0..sigma).map(|_| HashFunction::sample(sigma, nu as u64, k as u64, &mut bit)).collect();
        let members = (0..nu)
            .map(|i| {
                let mut c: Vec<MachineId> = hashes.iter().map(|h| h.field_value(i as u64) as usize % k).collect();
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        PublicCommittees { sigma, nu, k, members }
    }

    pub fn loads(&self) -> Vec<usize> {
        let mut load = vec![0; self.k];
        for c in &self.members {
            for &m in c {
                load[m] += 1;
            }
        }
        load
    }

    pub fn max_load(&self) -> usize {
        self.loads().into_iter().max().unwrap_or(0)
    }

    /// `σν/k + σ²`.
    pub fn load_bound(&self) -> f64 {
        (self.sigma * self.nu) as f64 / self.k as f64 + (self.sigma * self.sigma) as f64
    }

    pub fn honest_in(&self, i: usize, byz: &[bool]) -> usize {
        self.members[i].iter().filter(|&&m| !byz[m]).count()
    }

    pub fn all_weak(&self, byz: &[bool]) -> bool {
        (0..self.nu).all(|i| self.honest_in(i, byz) >= 1)
    }

    pub fn all_majorizing(&self, byz: &[bool]) -> bool {
        (0..self.nu).all(|i| 2 * self.honest_in(i, byz) > self.members[i].len())
    }
}

/// Elect_Public inside a running simulation. Must be called in a query
/// sub-round; every machine pays for the global bits it reads. Distinct
/// elections use distinct `tag_base` values.
pub fn elect_public(sim: &mut Sim, sigma: usize, nu: usize, tag_base: u64) -> Result<PublicCommittees> {
    if sigma == 0 || nu == 0 {
        return config("elect_public needs sigma, nu >= 1");
    }
    let k = sim.k();
    let bits = public_bits(sigma, nu, k);
    for m in 0..k {
        sim.charge_rg(m, bits)?;
    }
    sim.diag.add("rg_queries_per_machine", bits as f64);
    let mut tag = tag_base;
    let mut err = None;
    let pc = PublicCommittees::sample(sigma, nu, k, || {
        let b = sim.global_bit(tag).unwrap_or_else(|e| {
            err = Some(e);
            false
        });
        tag += 1;
        b
    });
    match err {
        Some(e) => Err(e),
        None => Ok(pc),
    }
}

/// Tag space reserved for the e-th public election of a run.
pub fn election_tags(e: u64) -> u64 {
    e << 40
}

/// `ceil(log2 x)` with a floor of 1, for loop bounds.
pub fn log2_ceil(x: usize) -> u32 {
    ceil_log2(x as u64).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GlobalBits;

    #[test]
    fn private_bias_formula() {
        let p = private_bias(100, 1000, 0.5, 10.0);
        assert!((p - (9.0 * 100f64.ln() + 40.0) / 500.0).abs() < 1e-12);
        assert_eq!(private_bias(4096, 64, 0.75, 2.0), 1.0);
    }

    #[test]
    fn single_committee() {
        let mut g = GlobalBits::new(1);
        let mut t = 0;
        let pc = PublicCommittees::sample(1, 1, 8, || {
            t += 1;
            g.bit(t)
        });
        assert_eq!(pc.members.len(), 1);
        assert_eq!(pc.members[0].len(), 1);
    }

    #[test]
    fn identical_across_machines() {
        let draw = |seed| {
            let mut g = GlobalBits::new(seed);
            let mut t = 0;
            PublicCommittees::sample(5, 20, 8, move || {
                t += 1;
                g.bit(t)
            })
        };
        assert_eq!(draw(9), draw(9));
    }
}
