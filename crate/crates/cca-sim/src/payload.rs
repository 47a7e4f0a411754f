use serde::{Deserialize, Serialize};

use crate::config::ceil_log2;

pub type MachineId = usize;

/// One O(log n)-bit message body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payload {
    /// Claim that x_index = bit.
    Bit { index: u32, bit: bool },
    /// Claim that x_index = 1.
    Index(u32),
    Flag(bool),
    /// Request to learn x_index.
    Request(u32),
    /// Answer in the next-index exchange; `n` is the sentinel.
    NextIndex(u32),
    /// Resolver asking for the XOR over positions l..=r of its index list.
    XorQuery { l: u32, r: u32 },
    Xor(bool),
    Semiparity { committee: u32, bit: bool },
}

const TAG_BITS: u32 = 3;

impl Payload {
    /// Serialized size given n and k: a 3-bit tag plus the fields, index fields
    /// wide enough for 0..=n.
    pub fn size_bits(&self, n: usize, k: usize) -> u32 {
        let w = ceil_log2(n as u64 + 1).max(1);
        let wk = ceil_log2(k as u64 + 1).max(1);
        TAG_BITS
            + match self {
                Payload::Bit { .. } => w + 1,
                Payload::Index(_) | Payload::Request(_) | Payload::NextIndex(_) => w,
                Payload::Flag(_) | Payload::Xor(_) => 1,
                Payload::XorQuery { .. } => 2 * w,
                Payload::Semiparity { .. } => wk + 1,
            }
    }

    /// Largest index-like field, used for range checks.
    pub fn max_field(&self) -> u64 {
        match *self {
            Payload::Bit { index, .. } | Payload::Index(index) | Payload::Request(index) | Payload::NextIndex(index) => {
                index as u64
            }
            Payload::XorQuery { l, r } => l.max(r) as u64,
            Payload::Semiparity { committee, .. } => committee as u64,
            Payload::Flag(_) | Payload::Xor(_) => 0,
        }
    }

    pub fn bit(&self) -> Option<bool> {
        match *self {
            Payload::Bit { bit, .. } | Payload::Flag(bit) | Payload::Xor(bit) | Payload::Semiparity { bit, .. } => Some(bit),
            _ => None,
        }
    }

    pub fn with_bit(self, b: bool) -> Payload {
        match self {
            Payload::Bit { index, .. } => Payload::Bit { index, bit: b },
            Payload::Flag(_) => Payload::Flag(b),
            Payload::Xor(_) => Payload::Xor(b),
            Payload::Semiparity { committee, .. } => Payload::Semiparity { committee, bit: b },
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dest {
    All,
    To(MachineId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub dest: Dest,
    pub payload: Payload,
}

impl Envelope {
    pub fn all(payload: Payload) -> Self {
        Envelope { dest: Dest::All, payload }
    }

    pub fn to(dst: MachineId, payload: Payload) -> Self {
        Envelope { dest: Dest::To(dst), payload }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_fit_default_cap() {
        for n in [2usize, 4, 6, 16, 1000, 4096] {
            let cap = 4 * ceil_log2(n as u64 + 1);
            let worst = [
                Payload::Bit { index: 0, bit: true },
                Payload::XorQuery { l: 0, r: 0 },
                Payload::NextIndex(n as u32),
            ];
            for p in worst {
                assert!(p.size_bits(n, n) <= cap, "{p:?} at n={n}");
            }
        }
    }
}
