//! Blockhash-driven train/test partitioning and the analytics around it:
//! the exact per-attempt probability of forcing a chosen training set, the
//! union-bound and complement-rule closed forms, and a Monte Carlo
//! estimator that replays the selection against freshly mined chains.
//!
//! Selection listing: with `G` groups and training fraction `TP`, the
//! organizer draws `k = G * TP` training groups. Draw `t` computes
//! `keccak256(blockhash(at_block - t))`, reduces it modulo the current
//! array length as a big-endian unsigned integer, takes that group index,
//! and swaps the last element into the hole. The remaining `G - k` entries,
//! read from the top of the array downward, form the testing set.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::chain::{ChainError, ChainState};
use crate::hashing::{keccak256, Digest};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("invalid partition config: {reason}")]
    BadConfig { reason: String },
    #[error("at_block {at_block} is too low; the first draw looks back {needed} blocks")]
    AtBlockTooLow { at_block: u64, needed: u64 },
    #[error("expected {expected} draw hashes, got {got}")]
    WrongDrawCount { expected: usize, got: usize },
    #[error("target training set must hold {expected} distinct group indexes below {group_count}")]
    BadTarget {
        expected: usize,
        group_count: usize,
    },
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Partition parameters: group count `G`, training fraction `TP`, and the
/// submission window length `L` (the number of blocks during which the
/// selection may be triggered, which bounds an adversary's attempts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionConfig {
    pub group_count: usize,
    pub training_fraction: Ratio<u64>,
    pub block_limit: u64,
}

impl PartitionConfig {
    pub fn new(
        group_count: usize,
        training_fraction: Ratio<u64>,
        block_limit: u64,
    ) -> Result<Self, PartitionError> {
        let config = Self {
            group_count,
            training_fraction,
            block_limit,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PartitionError> {
        let bad = |reason: &str| PartitionError::BadConfig {
            reason: reason.to_string(),
        };
        if self.group_count == 0 {
            return Err(bad("group count must be positive"));
        }
        if self.training_fraction <= Ratio::new(0, 1) {
            return Err(bad("training fraction must be positive"));
        }
        if self.training_fraction >= Ratio::new(1, 1) {
            return Err(bad("training fraction must be below 1"));
        }
        let scaled = self.group_count as u128 * *self.training_fraction.numer() as u128;
        if !scaled.is_multiple_of(*self.training_fraction.denom() as u128) {
            return Err(bad(
                "training fraction times group count must be a whole number",
            ));
        }
        let k = scaled / *self.training_fraction.denom() as u128;
        if k == 0 || k >= self.group_count as u128 {
            return Err(bad("both partitions must be non-empty"));
        }
        if self.block_limit == 0 {
            return Err(bad("block limit must be at least 1"));
        }
        Ok(())
    }

    /// Number of training groups, `G * TP`.
    pub fn training_count(&self) -> usize {
        let scaled = self.group_count as u128 * *self.training_fraction.numer() as u128;
        (scaled / *self.training_fraction.denom() as u128) as usize
    }

    pub fn testing_count(&self) -> usize {
        self.group_count - self.training_count()
    }
}

/// Group indexes assigned to each side, in selection order: `training[t]`
/// is the `t`-th draw; `testing` reads the leftover array top-down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionResult {
    pub training_indexes: Vec<usize>,
    pub testing_indexes: Vec<usize>,
}

/// Big-endian reduction of a 32-byte digest modulo `modulus`.
pub fn digest_to_uint_mod(digest: &Digest, modulus: usize) -> usize {
    debug_assert!(modulus > 0);
    let m = modulus as u128;
    let mut acc: u128 = 0;
    for &byte in digest.as_bytes() {
        acc = ((acc << 8) | byte as u128) % m;
    }
    acc as usize
}

/// Runs the selection listing against explicit draw hashes, where
/// `draw_hashes[t]` is the blockhash consumed by draw `t` (so callers pass
/// `blockhash(at_block)`, `blockhash(at_block - 1)`, …). Exposed separately
/// so adversarial miners can probe candidate head hashes.
pub fn select_from_hashes(
    group_count: usize,
    training_count: usize,
    draw_hashes: &[Digest],
) -> Result<PartitionResult, PartitionError> {
    if draw_hashes.len() != training_count {
        return Err(PartitionError::WrongDrawCount {
            expected: training_count,
            got: draw_hashes.len(),
        });
    }
    let mut array: Vec<usize> = (0..group_count).collect();
    let mut array_length = group_count;
    let mut training_indexes = Vec::with_capacity(training_count);
    for hash in draw_hashes {
        let digest = keccak256(hash.as_bytes());
        let random_index = digest_to_uint_mod(&digest, array_length);
        training_indexes.push(array[random_index]);
        array[random_index] = array[array_length - 1];
        array_length -= 1;
    }
    let mut testing_indexes = Vec::with_capacity(group_count - training_count);
    while array_length > 0 {
        testing_indexes.push(array[array_length - 1]);
        array_length -= 1;
    }
    Ok(PartitionResult {
        training_indexes,
        testing_indexes,
    })
}

/// Partitions group indexes using the chain's block hashes, anchoring the
/// first draw at block `at_block` and walking backwards one block per draw.
pub fn randomly_select_index(
    config: &PartitionConfig,
    chain: &ChainState,
    at_block: u64,
) -> Result<PartitionResult, PartitionError> {
    config.validate()?;
    let k = config.training_count() as u64;
    if at_block < k {
        return Err(PartitionError::AtBlockTooLow {
            at_block,
            needed: k,
        });
    }
    let draw_hashes: Vec<Digest> = (0..k)
        .map(|t| chain.blockhash(at_block - t))
        .collect::<Result<_, _>>()?;
    select_from_hashes(config.group_count, config.training_count(), &draw_hashes)
}

/// Probability that one selection lands exactly on a chosen training set:
/// the literal telescoping product over `n = G*(1-TP)+1 ..= G` of
/// `(G - n + 1) / n`, which equals `1 / C(G, G*TP)`.
fn single_attempt_probability(config: &PartitionConfig) -> BigRational {
    let g = config.group_count as i64;
    let start = (config.group_count - config.training_count()) as i64 + 1;
    let mut product = BigRational::one();
    for n in start..=g {
        product *= BigRational::new(BigInt::from(g - n + 1), BigInt::from(n));
    }
    product
}

/// Union-bound probability of forcing a chosen training set within the
/// submission window: `L` attempts times the single-attempt probability.
/// Deliberately uncapped — for small `G` it can reach or exceed 1, which
/// is the point of reading it as an upper bound.
pub fn exact_ideal_probability(config: &PartitionConfig) -> Result<BigRational, PartitionError> {
    config.validate()?;
    let single = single_attempt_probability(config);
    Ok(BigRational::from(BigInt::from(config.block_limit)) * single)
}

/// Complement-rule probability `1 - (1 - 1/C(G,k))^L`, the exact value when
/// the `L` attempts are independent.
pub fn complement_probability(config: &PartitionConfig) -> Result<BigRational, PartitionError> {
    config.validate()?;
    let single = single_attempt_probability(config);
    let miss = BigRational::one() - single;
    let mut acc = BigRational::one();
    for _ in 0..config.block_limit {
        acc *= miss.clone();
    }
    Ok(BigRational::one() - acc)
}

/// How the `L` attempts anchor onto the chain in the Monte Carlo estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttemptWindows {
    /// Attempt `a` anchors at block `k + a`: consecutive heads, so
    /// successive attempts share all but one draw hash. This models an
    /// organizer retrying the selection on every new block.
    Overlapping,
    /// Attempt `a` anchors at block `k * (a + 1)`: disjoint hash windows,
    /// making attempts exactly independent.
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub standard_error: f64,
}

/// Estimates the probability that at least one of `L` selection attempts
/// yields exactly `target_training` (as a set), by mining fresh
/// deterministic chains. Trial `t` seeds its chain with
/// `seed + (t+1) * 0x9E3779B97F4A7C15` (wrapping), so runs are reproducible
/// and trials decorrelated.
pub fn monte_carlo_ideal_probability(
    config: &PartitionConfig,
    target_training: &BTreeSet<usize>,
    trials: u64,
    seed: u64,
    windows: AttemptWindows,
) -> Result<MonteCarloEstimate, PartitionError> {
    config.validate()?;
    if trials == 0 {
        return Err(PartitionError::NoTrials);
    }
    let k = config.training_count();
    if target_training.len() != k || target_training.iter().any(|&g| g >= config.group_count) {
        return Err(PartitionError::BadTarget {
            expected: k,
            group_count: config.group_count,
        });
    }
    let target: Vec<usize> = target_training.iter().copied().collect();
    let limit = config.block_limit;
    let anchors: Vec<u64> = match windows {
        AttemptWindows::Overlapping => (0..limit).map(|a| k as u64 + a).collect(),
        AttemptWindows::Disjoint => (0..limit).map(|a| k as u64 * (a + 1)).collect(),
    };
    let blocks_needed = anchors.last().copied().unwrap() + 1;

    let successes = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let chain_seed = seed.wrapping_add((trial + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut chain = ChainState::new(chain_seed);
            for _ in 0..blocks_needed {
                chain.mine_block();
            }
            anchors.iter().any(|&at_block| {
                let result = randomly_select_index(config, &chain, at_block)
                    .expect("anchors stay within the mined chain");
                let mut got = result.training_indexes;
                got.sort_unstable();
                got == target
            })
        })
        .count() as u64;

    let estimate = successes as f64 / trials as f64;
    let standard_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
    Ok(MonteCarloEstimate {
        successes,
        trials,
        estimate,
        standard_error,
    })
}

/// Renders a probability as a percentage with `sig` significant digits,
/// matching the exact rational (no float rounding).
pub fn percent_text(p: &BigRational, sig: usize) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let pct = p * BigRational::from(BigInt::from(100));
    let negative = pct.is_negative();
    let mag = pct.abs();
    // Find the decimal exponent e with 10^e <= mag < 10^(e+1).
    let ten = BigRational::from(BigInt::from(10));
    let mut exp: i64 = 0;
    let mut scaled = mag.clone();
    while scaled >= ten {
        scaled /= ten.clone();
        exp += 1;
    }
    while scaled < BigRational::one() {
        scaled *= ten.clone();
        exp -= 1;
    }
    // Round to `sig` significant digits: digits = round(mag / 10^(e-sig+1)).
    let shift = exp - sig as i64 + 1;
    let mut shifted = mag;
    if shift > 0 {
        for _ in 0..shift {
            shifted /= ten.clone();
        }
    } else {
        for _ in 0..-shift {
            shifted *= ten.clone();
        }
    }
    let mut digits = (shifted.numer() * BigInt::from(2) + shifted.denom())
        / (shifted.denom() * BigInt::from(2));
    // Rounding can carry into an extra digit (e.g. 9.99 -> 10.0).
    let cap = BigInt::from(10).pow(sig as u32);
    if digits >= cap {
        digits /= BigInt::from(10);
        exp += 1;
    }
    let digit_str = digits.to_string();
    let sign = if negative { "-" } else { "" };
    let body = if exp >= sig as i64 || exp < -4 {
        // Scientific notation for extremes.
        let head = &digit_str[..1];
        let tail = digit_str[1..].trim_end_matches('0');
        if tail.is_empty() {
            format!("{head}e{exp}")
        } else {
            format!("{head}.{tail}e{exp}")
        }
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        let int_part = &digit_str[..split];
        let frac_part = digit_str[split..].trim_end_matches('0');
        if frac_part.is_empty() {
            int_part.to_string()
        } else {
            format!("{int_part}.{frac_part}")
        }
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        let frac = format!("{zeros}{digit_str}");
        let frac = frac.trim_end_matches('0');
        format!("0.{frac}")
    };
    format!("{sign}{body}%")
}
