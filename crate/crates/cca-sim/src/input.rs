use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::rng::{RandomTape, STREAM_INPUT};

/// The cloud's n-bit array. Indices are 0-based throughout the crate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InputArray {
    bits: Vec<bool>,
}

impl InputArray {
    pub fn new(bits: Vec<bool>) -> Self {
        InputArray { bits }
    }

    pub fn zeros(n: usize) -> Self {
        InputArray { bits: vec![false; n] }
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.ones() as f64 / self.n() as f64
        }
    }

    /// max(1/n, density)
    pub fn modified_density(&self) -> f64 {
        self.density().max(1.0 / self.n().max(1) as f64)
    }

    pub fn or(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn xor(&self) -> bool {
        self.bits.iter().fold(false, |acc, &b| acc ^ b)
    }

    pub fn first_one(&self) -> Option<usize> {
        self.bits.iter().position(|&b| b)
    }

    pub fn zero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                c if c.is_whitespace() || c == '_' => {}
                c => return config(format!("invalid bit character {c:?}")),
            }
        }
        Ok(InputArray { bits })
    }
}

impl fmt::Display for InputArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// How a run's input is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    Zeros,
    Bits { bits: String },
    /// Exactly round(δn) ones at seeded positions (at least one when δ > 0).
    Density { delta: f64 },
    /// Independent ones with probability p.
    Bernoulli { p: f64 },
    /// Ones exactly at the listed indices.
    Planted { ones: Vec<usize> },
}

impl InputSpec {
    pub fn generate(&self, n: usize, seed: u64) -> Result<InputArray> {
        let mut tape = RandomTape::new(seed, STREAM_INPUT);
        match self {
            InputSpec::Zeros => Ok(InputArray::zeros(n)),
            InputSpec::Bits { bits } => {
                let a = InputArray::parse(bits)?;
                if a.n() != n {
                    return config(format!("input has {} bits, config says n = {n}", a.n()));
                }
                Ok(a)
            }
            InputSpec::Density { delta } => {
                if !(0.0..=1.0).contains(delta) {
                    return config(format!("density {delta} outside [0, 1]"));
                }
                let mut ones = (delta * n as f64).round() as usize;
                if *delta > 0.0 {
                    ones = ones.max(1);
                }
                let mut idx: Vec<usize> = (0..n).collect();
                tape.shuffle(&mut idx);
                let mut bits = vec![false; n];
                for &i in &idx[..ones.min(n)] {
                    bits[i] = true;
                }
                Ok(InputArray::new(bits))
            }
            InputSpec::Bernoulli { p } => Ok(InputArray::new((0..n).map(|_| tape.coin(*p)).collect())),
            InputSpec::Planted { ones } => {
                let mut bits = vec![false; n];
                for &i in ones {
                    if i >= n {
                        return config(format!("planted index {i} outside [0, {n})"));
                    }
                    bits[i] = true;
                }
                Ok(InputArray::new(bits))
            }
        }
    }

    /// Density tag used when grouping results.
    pub fn nominal_delta(&self, n: usize) -> f64 {
        match self {
            InputSpec::Zeros => 0.0,
            InputSpec::Bits { bits } => InputArray::parse(bits).map(|a| a.density()).unwrap_or(0.0),
            InputSpec::Density { delta } => *delta,
            InputSpec::Bernoulli { p } => *p,
            InputSpec::Planted { ones } => ones.len() as f64 / n.max(1) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities() {
        let a = InputArray::parse("00001000").unwrap();
        assert_eq!(a.ones(), 1);
        assert_eq!(a.density(), 0.125);
        let z = InputArray::zeros(8);
        assert_eq!(z.modified_density(), 0.125);
        assert!(!z.or());
        assert!(a.get(4));
    }

    #[test]
    fn density_spec_is_exact() {
        let a = InputSpec::Density { delta: 0.25 }.generate(64, 3).unwrap();
        assert_eq!(a.ones(), 16);
        let b = InputSpec::Density { delta: 0.25 }.generate(64, 3).unwrap();
        assert_eq!(a, b);
        let tiny = InputSpec::Density { delta: 1e-6 }.generate(64, 3).unwrap();
        assert_eq!(tiny.ones(), 1);
    }

    #[test]
    fn bits_spec_checks_length() {
        assert!(InputSpec::Bits { bits: "0101".into() }.generate(5, 0).is_err());
    }
}
