//! Deterministic simulator of a hashed-dataset machine-learning contest
//! contract: commit-reveal dataset groups, a seeded chain whose block
//! hashes drive the train/test partition, integer fixed-point network
//! evaluation, escrowed payouts, and the probability/storage-cost
//! analytics around the design.

use std::fmt;

pub mod chain;
pub mod contract;
pub mod files;
pub mod fixed;
pub mod hashing;
pub mod nn;
pub mod partition;
pub mod report;
pub mod scenario;

/// Named account identity. The simulation has no keys or signatures;
/// actors are distinguished by name and the contract checks caller
/// identity against stored addresses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub String);

impl Address {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Address {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Default fixed-point scalar: 20 fractional bits on an `i128` mantissa,
/// wide enough for every bundled scenario without overflow.
pub type Fp = fixed::FixedPoint<i128>;
/// Narrow variant; overflows loudly instead of silently wrapping.
pub type Fp64 = fixed::FixedPoint<i64>;
/// Arbitrary-precision variant for analyses that must never overflow.
pub type FpBig = fixed::FixedPoint<num_bigint::BigInt>;
