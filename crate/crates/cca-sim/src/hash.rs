//! Polynomial hash families over a prime field.
//!
//! `h(x) = (sum_{j<c} a_j x^j mod P) mod L`. With uniformly random coefficients
//! the values at any `c` distinct points are jointly uniform on the field.

use serde::{Deserialize, Serialize};

use crate::error::{fault, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFunction {
    pub c: usize,
    pub domain: u64,
    pub range: u64,
    pub prime: u64,
    pub coeffs: Vec<u64>,
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn smallest_prime_at_least(x: u64) -> u64 {
    let mut p = x.max(2);
    while !is_prime(p) {
        p += 1;
    }
    p
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Smallest prime at least `max(N, L, 2^ceil(log2 max(N, L)))`.
pub fn field_prime(domain: u64, range: u64) -> u64 {
    let m = domain.max(range).max(1);
    let pow = 1u64 << ceil_log2(m);
    smallest_prime_at_least(m.max(pow))
}

/// Random bits needed to draw one coefficient.
pub fn bits_per_coeff(prime: u64) -> u32 {
    ceil_log2(prime).max(1)
}

impl HashFunction {
    pub fn new(c: usize, domain: u64, range: u64, prime: u64, coeffs: Vec<u64>) -> Self {
        assert_eq!(coeffs.len(), c);
        HashFunction { c, domain, range, prime, coeffs }
    }

    /// Draws `c` coefficients from a bit source, `bits_per_coeff(P)` bits each,
    /// reduced mod P.
    pub fn sample(c: usize, domain: u64, range: u64, mut bit: impl FnMut() -> bool) -> Self {
        let prime = field_prime(domain, range);
        let b = bits_per_coeff(prime);
        let coeffs = (0..c)
            .map(|_| {
                let mut v = 0u64;
                for _ in 0..b {
                    v = (v << 1) | bit() as u64;
                }
                v % prime
            })
            .collect();
        HashFunction { c, domain, range, prime, coeffs }
    }

    /// Field value before the range reduction.
    pub fn field_value(&self, x: u64) -> u64 {
        if self.prime < 1 << 32 {
            let p = self.prime;
            let x = x % p;
            return self.coeffs.iter().rev().fold(0u64, |acc, &a| (acc * x + a % p) % p);
        }
        let p = self.prime as u128;
        let x = x as u128 % p;
        let mut acc: u128 = 0;
        for &a in self.coeffs.iter().rev() {
            acc = (acc * x + a as u128) % p;
        }
        acc as u64
    }

    pub fn eval(&self, x: u64) -> Result<u64> {
        if x >= self.domain {
            return fault(format!("hash argument {x} outside domain {}", self.domain));
        }
        Ok(self.field_value(x) % self.range)
    }
}
