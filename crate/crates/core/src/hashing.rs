//! Canonical serialization and keccak-256 commitments for data groups.
//!
//! A data group commits as `keccak256(serialize(group, nonce))`. The
//! serialization is bit-exact and documented so external tools can recompute
//! digests: every scalar becomes a 32-byte big-endian two's-complement word
//! (EVM word semantics), points are emitted in order as inputs-then-label,
//! and the nonce is the final word.
//!
//! The digest is Keccak-256 with the original Keccak padding — the function
//! Ethereum calls `keccak256` — not the NIST SHA-3 variant, which pads
//! differently and produces different digests.

use std::fmt;

use sha3::{Digest as _, Keccak256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashingError {
    #[error("malformed group: point {point} has {got} inputs, expected {expected}")]
    DimensionMismatch {
        point: usize,
        got: usize,
        expected: usize,
    },
    #[error("malformed group: no points")]
    EmptyGroup,
    #[error("cannot parse digest {text:?}: expected 64 hex characters")]
    BadDigestText { text: String },
    #[error("cannot parse nonce {text:?}: expected a decimal integer or 0x-prefixed hex of at most 64 digits")]
    BadNonceText { text: String },
}

/// A 32-byte keccak-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, HashingError> {
        let cleaned = text.strip_prefix("0x").unwrap_or(text);
        let bytes = hex::decode(cleaned).map_err(|_| HashingError::BadDigestText {
            text: text.to_string(),
        })?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| HashingError::BadDigestText {
            text: text.to_string(),
        })?;
        Ok(Digest(arr))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// A 256-bit single-use random value appended to a group before hashing.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nonce(pub [u8; 32]);

impl Nonce {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Accepts a decimal integer (up to u128) or 0x-prefixed big-endian hex.
    pub fn parse(text: &str) -> Result<Self, HashingError> {
        let bad = || HashingError::BadNonceText {
            text: text.to_string(),
        };
        if let Some(hexpart) = text.strip_prefix("0x") {
            if hexpart.is_empty() || hexpart.len() > 64 {
                return Err(bad());
            }
            let padded = format!("{hexpart:0>64}");
            let bytes = hex::decode(&padded).map_err(|_| bad())?;
            let arr: [u8; 32] = bytes.try_into().map_err(|_| bad())?;
            Ok(Nonce(arr))
        } else {
            let value: u128 = text.parse().map_err(|_| bad())?;
            let mut arr = [0u8; 32];
            arr[16..].copy_from_slice(&value.to_be_bytes());
            Ok(Nonce(arr))
        }
    }
}

impl From<u64> for Nonce {
    fn from(value: u64) -> Self {
        let mut arr = [0u8; 32];
        arr[24..].copy_from_slice(&value.to_be_bytes());
        Nonce(arr)
    }
}

impl fmt::Display for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Nonce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Nonce(0x{})", hex::encode(self.0))
    }
}

/// One labeled sample: integer feature values plus an integer class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPoint {
    pub inputs: Vec<i64>,
    pub label: i64,
}

/// An ordered batch of data points — the unit of commitment and reveal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataGroup {
    pub points: Vec<DataPoint>,
}

impl DataGroup {
    pub fn input_dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.inputs.len())
    }
}

/// keccak-256 (original padding) of an arbitrary byte sequence.
pub fn keccak256(bytes: &[u8]) -> Digest {
    let mut hasher = Keccak256::new();
    hasher.update(bytes);
    Digest(hasher.finalize().into())
}

/// A signed scalar as a 32-byte big-endian two's-complement word.
pub fn scalar_word(value: i64) -> [u8; 32] {
    let mut word = if value < 0 { [0xFFu8; 32] } else { [0u8; 32] };
    word[24..].copy_from_slice(&value.to_be_bytes());
    word
}

/// An unsigned scalar as a 32-byte big-endian word.
pub fn unsigned_word(value: u64) -> [u8; 32] {
    let mut word = [0u8; 32];
    word[24..].copy_from_slice(&value.to_be_bytes());
    word
}

/// Canonical encoding of a group plus its nonce.
///
/// For each point in order: each input, then the label, each as a 32-byte
/// big-endian two's-complement word. The nonce follows as the final word.
/// Total length: `32 * (P * (input_dim + 1) + 1)`.
pub fn serialize_data_group(group: &DataGroup, nonce: &Nonce) -> Result<Vec<u8>, HashingError> {
    let expected = group.input_dim().ok_or(HashingError::EmptyGroup)?;
    let mut out =
        Vec::with_capacity(32 * (group.points.len() * (expected + 1) + 1));
    for (i, point) in group.points.iter().enumerate() {
        if point.inputs.len() != expected {
            return Err(HashingError::DimensionMismatch {
                point: i,
                got: point.inputs.len(),
                expected,
            });
        }
        for &input in &point.inputs {
            out.extend_from_slice(&scalar_word(input));
        }
        out.extend_from_slice(&scalar_word(point.label));
    }
    out.extend_from_slice(nonce.as_bytes());
    Ok(out)
}

/// keccak-256 over the canonical serialization.
pub fn hash_data_group(group: &DataGroup, nonce: &Nonce) -> Result<Digest, HashingError> {
    Ok(keccak256(&serialize_data_group(group, nonce)?))
}

/// True iff the (group, nonce) pair reproduces the commitment. A malformed
/// group verifies as false rather than erroring.
pub fn verify_reveal(commitment: &Digest, group: &DataGroup, nonce: &Nonce) -> bool {
    match hash_data_group(group, nonce) {
        Ok(digest) => digest == *commitment,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(inputs: &[i64], label: i64) -> DataPoint {
        DataPoint {
            inputs: inputs.to_vec(),
            label,
        }
    }

    fn group(points: Vec<DataPoint>) -> DataGroup {
        DataGroup { points }
    }

    #[test]
    fn keccak_empty_string_vector() {
        assert_eq!(
            keccak256(b"").to_hex(),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
    }

    #[test]
    fn keccak_abc_vector() {
        assert_eq!(
            keccak256(b"abc").to_hex(),
            "4e03657aea45a94fc7d47ba826c8d667c0d1e6e33a64a036ec44f58fa12d6c45"
        );
    }

    #[test]
    fn serialize_all_zero() {
        let g = group(vec![point(&[0], 0)]);
        let bytes = serialize_data_group(&g, &Nonce::from(0)).unwrap();
        assert_eq!(bytes, vec![0u8; 96]);
        assert_eq!(
            hash_data_group(&g, &Nonce::from(0)).unwrap().to_hex(),
            "46700b4d40ac5c35af2c22dda2787a91eb567b06c924a8fb8ae9a05b20c08c21"
        );
    }

    #[test]
    fn serialize_small_words() {
        let g = group(vec![point(&[1], 2)]);
        let bytes = serialize_data_group(&g, &Nonce::from(3)).unwrap();
        assert_eq!(bytes.len(), 96);
        let mut expected = vec![0u8; 96];
        expected[31] = 1;
        expected[63] = 2;
        expected[95] = 3;
        assert_eq!(bytes, expected);
        assert_eq!(
            hash_data_group(&g, &Nonce::from(3)).unwrap().to_hex(),
            "6e0c627900b24bd432fe7b1f713f1b0744091a646a9fe4a65a18dfed21f2949c"
        );
    }

    #[test]
    fn serialize_negative_is_twos_complement() {
        let g = group(vec![point(&[-1], 0)]);
        let bytes = serialize_data_group(&g, &Nonce::from(0)).unwrap();
        assert_eq!(&bytes[..32], &[0xFFu8; 32]);
        assert_eq!(
            hash_data_group(&g, &Nonce::from(0)).unwrap().to_hex(),
            "35a15beffb7b010095b47ce3da5ec5ddfe6555bf05753f32c95dc1fa8fe67ac3"
        );
    }

    #[test]
    fn two_point_group_digests() {
        let g = group(vec![point(&[3, -4], 1), point(&[-5, 6], 0)]);
        let bytes = serialize_data_group(&g, &Nonce::from(7)).unwrap();
        assert_eq!(bytes.len(), 224); // 32 * (2 * 3 + 1)
        assert_eq!(
            hash_data_group(&g, &Nonce::from(7)).unwrap().to_hex(),
            "20c213b286ffb70a813eae326fb4b001a669acb71621ca24cac69ae4d60fbbd6"
        );
        // A different nonce gives an unrelated digest.
        assert_eq!(
            hash_data_group(&g, &Nonce::from(8)).unwrap().to_hex(),
            "23487a1ed7be70d7319c9d16a184b295612b8493b50c602a2650e4c415f481b5"
        );
    }

    #[test]
    fn hashing_is_deterministic() {
        let g = group(vec![point(&[17, -9], 1)]);
        let n = Nonce::from(99);
        assert_eq!(hash_data_group(&g, &n).unwrap(), hash_data_group(&g, &n).unwrap());
    }

    #[test]
    fn verify_round_trip_and_tamper() {
        let g = group(vec![point(&[5, 6], 1), point(&[7, 8], 0)]);
        let n = Nonce::from(42);
        let commitment = hash_data_group(&g, &n).unwrap();
        assert!(verify_reveal(&commitment, &g, &n));

        let mut tampered = g.clone();
        tampered.points[0].inputs[0] += 1;
        assert!(!verify_reveal(&commitment, &tampered, &n));

        assert!(!verify_reveal(&commitment, &g, &Nonce::from(43)));
    }

    #[test]
    fn malformed_group_errors() {
        let g = group(vec![point(&[1, 2], 0), point(&[3], 1)]);
        assert_eq!(
            serialize_data_group(&g, &Nonce::from(0)),
            Err(HashingError::DimensionMismatch {
                point: 1,
                got: 1,
                expected: 2
            })
        );
        // verify_reveal treats the malformed group as a failed reveal.
        assert!(!verify_reveal(&Digest::ZERO, &g, &Nonce::from(0)));
        assert_eq!(
            serialize_data_group(&group(vec![]), &Nonce::from(0)),
            Err(HashingError::EmptyGroup)
        );
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = keccak256(b"round trip");
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        assert_eq!(Digest::from_hex(&format!("0x{}", d.to_hex())).unwrap(), d);
        assert!(Digest::from_hex("abcd").is_err());
    }

    #[test]
    fn nonce_parsing() {
        assert_eq!(Nonce::parse("7").unwrap(), Nonce::from(7));
        assert_eq!(Nonce::parse("0x07").unwrap(), Nonce::from(7));
        let full = "0x".to_string() + &"ab".repeat(32);
        assert_eq!(Nonce::parse(&full).unwrap(), Nonce([0xab; 32]));
        assert!(Nonce::parse("xyz").is_err());
        assert!(Nonce::parse("-1").is_err());
    }

    prop_compose! {
        fn arb_group()(dim in 1usize..4, n_points in 1usize..6)(
            rows in proptest::collection::vec(
                (proptest::collection::vec(-1_000_000i64..1_000_000, dim), 0i64..10),
                n_points,
            )
        ) -> DataGroup {
            DataGroup {
                points: rows
                    .into_iter()
                    .map(|(inputs, label)| DataPoint { inputs, label })
                    .collect(),
            }
        }
    }

    proptest! {
        // Commitment soundness: any single-bit flip of the serialized payload
        // changes the digest.
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn single_bit_tamper_always_detected(g in arb_group(), nonce_seed in any::<u64>(), bit in any::<u32>()) {
            let nonce = Nonce::from(nonce_seed);
            let bytes = serialize_data_group(&g, &nonce).unwrap();
            let digest = keccak256(&bytes);
            let mut tampered = bytes.clone();
            let bit = bit as usize % (tampered.len() * 8);
            tampered[bit / 8] ^= 1 << (bit % 8);
            prop_assert_ne!(keccak256(&tampered), digest);
        }

        #[test]
        fn round_trip_always_verifies(g in arb_group(), nonce_seed in any::<u64>()) {
            let nonce = Nonce::from(nonce_seed);
            let commitment = hash_data_group(&g, &nonce).unwrap();
            prop_assert!(verify_reveal(&commitment, &g, &nonce));
        }

        // Serialization is injective over scalar content for a fixed shape:
        // two groups of the same shape serialize equally only if equal.
        #[test]
        fn serialization_injective_same_shape(
            a in proptest::collection::vec(-1000i64..1000, 6),
            b in proptest::collection::vec(-1000i64..1000, 6),
        ) {
            let to_group = |vals: &[i64]| DataGroup {
                points: vec![
                    DataPoint { inputs: vals[0..2].to_vec(), label: vals[2] },
                    DataPoint { inputs: vals[3..5].to_vec(), label: vals[5] },
                ],
            };
            let ga = to_group(&a);
            let gb = to_group(&b);
            let n = Nonce::from(1);
            let sa = serialize_data_group(&ga, &n).unwrap();
            let sb = serialize_data_group(&gb, &n).unwrap();
            prop_assert_eq!(sa == sb, ga == gb);
        }
    }
}
