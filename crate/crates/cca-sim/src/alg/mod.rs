//! Honest machine code for every algorithm, written as lock-step loops over
//! all machines. Corrupted machines still get a template action each step so
//! the adversary can replace it.

use serde::{Deserialize, Serialize};

use crate::adversary::Step;
use crate::config::AlgorithmId;
use crate::engine::Sim;
use crate::error::Result;
use crate::payload::Envelope;

pub mod benign;
pub mod det;
pub mod harsh;
pub mod resolve;

/// What one honest machine ends up with.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Output {
    Bits(Vec<bool>),
    Bit(bool),
    Index(Option<usize>),
    /// Contiguous pieces of the input: (first index, bits).
    Slices(Vec<(usize, Vec<bool>)>),
}

/// One entry per machine; `None` for machines corrupted by the end.
pub type Outputs = Vec<Option<Output>>;

pub fn execute(sim: &mut Sim) -> Result<Outputs> {
    use AlgorithmId::*;
    let out = match sim.config().algorithm {
        NaiveDownload => det::naive_download(sim)?,
        RoundRobinDownload => det::roundrobin_download(sim)?,
        LseDisjunct1 => det::lse_disjunct_1(sim)?,
        LseDisjunct2 => det::lse_disjunct_2(sim)?,
        GlseExplicit => det::glse_explicit(sim)?,
        BlacklistDownload => harsh::blacklist_download(sim)?,
        GossipDownload => harsh::gossip_download(sim)?,
        Spread => harsh::spread_run(sim)?,
        RandomizedDisjunction => harsh::randomized_disjunction(sim)?,
        SparseDisjunction => harsh::sparse_disjunction(sim)?,
        LinearDownload => benign::linear_download(sim, false)?,
        FastLinearDownload => benign::linear_download(sim, true)?,
        ParallelDownload => benign::parallel_download(sim)?,
        MajorizingDownload => benign::majorizing_download(sim)?,
        ConvergeParity => benign::converge_parity(sim)?,
        MajorizingParity => benign::majorizing_parity(sim)?,
        WeakResolve => benign::weak_resolve_run(sim, false)?,
        FastWeakResolve => benign::weak_resolve_run(sim, true)?,
        WeakParityResolve => benign::weak_parity_resolve_run(sim)?,
        Convergecast => benign::convergecast_run(sim)?,
    };
    Ok(out.into_iter().enumerate().map(|(m, o)| if sim.is_byz(m) { None } else { o }).collect())
}

/// Hands every machine's template to the engine. Honest machines with nothing
/// to say are skipped; corrupted ones are always offered the step.
pub(crate) fn send_all(sim: &mut Sim, step: &Step, templates: Vec<Vec<Envelope>>) -> Result<()> {
    for (m, t) in templates.into_iter().enumerate() {
        if !t.is_empty() || sim.is_byz(m) {
            sim.send(m, step, t)?;
        }
    }
    Ok(())
}

/// Per-machine partial knowledge of the input.
#[derive(Clone, Debug)]
pub struct Knowledge {
    pub res: Vec<Vec<Option<bool>>>,
}

impl Knowledge {
    pub fn new(k: usize, n: usize) -> Self {
        Knowledge { res: vec![vec![None; n]; k] }
    }

    /// Cloud query through the machine's cache.
    pub fn query(&mut self, sim: &mut Sim, m: usize, i: usize) -> Result<bool> {
        if let Some(b) = self.res[m][i] {
            return Ok(b);
        }
        let b = sim.query(m, i)?;
        self.res[m][i] = Some(b);
        Ok(b)
    }

    pub fn bits(&self, m: usize) -> Vec<bool> {
        self.res[m].iter().map(|b| b.unwrap_or(false)).collect()
    }

    pub fn complete(&self, m: usize) -> bool {
        self.res[m].iter().all(Option::is_some)
    }
}

/// Contiguous, near-equal split of `0..n` into `parts` blocks.
pub fn partition(n: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.max(1);
    (0..parts).map(|p| (p * n / parts)..((p + 1) * n / parts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_covers() {
        let p = partition(10, 3);
        assert_eq!(p, vec![0..3, 3..6, 6..10]);
        assert_eq!(partition(2, 4).iter().map(|r| r.len()).sum::<usize>(), 2);
    }
}
