//! Deterministic simulated blockchain: block production, historical block
//! hashes, an adversarial mining hook, and the storage gas schedule.
//!
//! Honest block hashes are `keccak256(seed word ‖ parent hash ‖ number word)`
//! with an all-zero parent for block 0, so the whole chain is a pure function
//! of its seed. Time is counted purely in block heights; no wall-clock block
//! interval exists anywhere in the simulator.

use thiserror::Error;

use crate::hashing::{keccak256, unsigned_word, Digest};

/// Gas units. u128 because desk-scale payloads already reach ~7e10 gas.
pub type Gas = u128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("block {number} not mined yet (chain height {height})")]
    UnknownBlock { number: u64, height: u64 },
    #[error("adversarial mining needs at least one candidate")]
    NoCandidates,
    #[error("gas schedule field {field} must be strictly positive")]
    BadSchedule { field: &'static str },
}

/// One mined block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub number: u64,
    pub hash: Digest,
}

/// How an adversarial mining call resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversarialOutcome {
    /// Candidate hashes examined (1-based count).
    pub examined: u64,
    /// Index of the candidate that was appended.
    pub chosen: u64,
    /// Whether the chosen candidate satisfied the predicate. When false, no
    /// candidate satisfied it and the last one was published anyway.
    pub satisfied: bool,
}

/// Append-only block sequence, fully determined by its seed and the sequence
/// of mining calls.
#[derive(Debug, Clone)]
pub struct ChainState {
    seed: u64,
    blocks: Vec<Block>,
}

impl ChainState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            blocks: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of mined blocks. The head block, if any, has number `height - 1`.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn head(&self) -> Option<&Block> {
        self.blocks.last()
    }

    fn parent_hash(&self) -> Digest {
        self.head().map(|b| b.hash).unwrap_or(Digest::ZERO)
    }

    fn honest_preimage(&self, number: u64) -> Vec<u8> {
        let mut preimage = Vec::with_capacity(96);
        preimage.extend_from_slice(&unsigned_word(self.seed));
        preimage.extend_from_slice(self.parent_hash().as_bytes());
        preimage.extend_from_slice(&unsigned_word(number));
        preimage
    }

    /// Mine the next block honestly.
    pub fn mine_block(&mut self) -> Block {
        let number = self.height();
        let hash = keccak256(&self.honest_preimage(number));
        let block = Block { number, hash };
        self.blocks.push(block.clone());
        block
    }

    /// Mine the next block as a miner who can discard unfavorable candidates.
    ///
    /// Candidate 0 is the honest hash; candidate j ≥ 1 appends an extra nonce
    /// word j to the honest preimage. The first candidate satisfying `choose`
    /// is appended; if none does, the last candidate is appended. With
    /// `candidates == 1` this is exactly honest mining.
    pub fn mine_block_adversarial(
        &mut self,
        candidates: u64,
        choose: impl Fn(&Digest) -> bool,
    ) -> Result<(Block, AdversarialOutcome), ChainError> {
        if candidates == 0 {
            return Err(ChainError::NoCandidates);
        }
        let number = self.height();
        let base = self.honest_preimage(number);
        let mut chosen_hash = None;
        let mut outcome = AdversarialOutcome {
            examined: 0,
            chosen: 0,
            satisfied: false,
        };
        for j in 0..candidates {
            let hash = if j == 0 {
                keccak256(&base)
            } else {
                let mut preimage = base.clone();
                preimage.extend_from_slice(&unsigned_word(j));
                keccak256(&preimage)
            };
            outcome.examined = j + 1;
            outcome.chosen = j;
            chosen_hash = Some(hash);
            if choose(&hash) {
                outcome.satisfied = true;
                break;
            }
        }
        let block = Block {
            number,
            hash: chosen_hash.expect("candidates >= 1"),
        };
        self.blocks.push(block.clone());
        Ok((block, outcome))
    }

    /// Hash of an already-mined block; stable forever once mined.
    pub fn blockhash(&self, number: u64) -> Result<Digest, ChainError> {
        self.blocks
            .get(number as usize)
            .map(|b| b.hash)
            .ok_or(ChainError::UnknownBlock {
                number,
                height: self.height(),
            })
    }
}

/// Storage and transaction gas parameters, calibrated to the headline
/// figures the simulator reproduces: 6,068,352 gas per KiB stored, an
/// 8,000,000 gas per-transaction limit, 4 gwei gas price, $1100 per ether.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GasSchedule {
    pub storage_gas_per_kib: Gas,
    pub gas_limit: Gas,
    pub gas_price_gwei: u64,
    pub eth_usd: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            storage_gas_per_kib: 6_068_352,
            gas_limit: 8_000_000,
            gas_price_gwei: 4,
            eth_usd: 1100,
        }
    }
}

/// Cost of one storage payload under a schedule, with exact decimal
/// renderings (wei stays integral because the price is whole gwei).
#[derive(Debug, Clone, PartialEq)]
pub struct StorageCostReport {
    pub payload_bytes: u64,
    pub gas: Gas,
    pub wei: u128,
    pub ether: f64,
    pub usd: f64,
    /// Exact ether amount with nine fractional digits.
    pub ether_text: String,
    /// Exact dollar amount with nine fractional digits.
    pub usd_text: String,
}

impl GasSchedule {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.storage_gas_per_kib == 0 {
            return Err(ChainError::BadSchedule {
                field: "storage_gas_per_kib",
            });
        }
        if self.gas_limit == 0 {
            return Err(ChainError::BadSchedule { field: "gas_limit" });
        }
        if self.gas_price_gwei == 0 {
            return Err(ChainError::BadSchedule {
                field: "gas_price_gwei",
            });
        }
        if self.eth_usd == 0 {
            return Err(ChainError::BadSchedule { field: "eth_usd" });
        }
        Ok(())
    }

    /// Gas to store a payload: `floor(bytes * storage_gas_per_kib / 1024)`.
    pub fn storage_gas(&self, payload_bytes: u64) -> Gas {
        (payload_bytes as u128).saturating_mul(self.storage_gas_per_kib) / 1024
    }

    /// Full cost breakdown for storing a payload.
    pub fn storage_cost_report(&self, payload_bytes: u64) -> StorageCostReport {
        let gas = self.storage_gas(payload_bytes);
        let wei = gas
            .saturating_mul(self.gas_price_gwei as u128)
            .saturating_mul(1_000_000_000);
        // wei is a multiple of 1e9, so nine fractional digits are exact.
        let ether_text = format_units(wei, 18);
        let nano_usd = (wei / 1_000_000_000).saturating_mul(self.eth_usd as u128);
        let usd_text = format_units(nano_usd, 9);
        StorageCostReport {
            payload_bytes,
            gas,
            wei,
            ether: wei as f64 / 1e18,
            usd: nano_usd as f64 / 1e9,
            ether_text,
            usd_text,
        }
    }
}

/// Renders `value / 10^decimals` with exactly nine fractional digits.
fn format_units(value: u128, decimals: u32) -> String {
    let unit = 10u128.pow(decimals);
    let int_part = value / unit;
    let frac = value % unit;
    // Keep nine digits of the fraction (exact for gwei-granular amounts).
    let frac_9 = frac / 10u128.pow(decimals - 9);
    format!("{int_part}.{frac_9:09}")
}
