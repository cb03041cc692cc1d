//! 256-bit digests, the proof-of-work target and seed derivation.

use alloc::string::String;
use core::fmt;

use sha2::{Digest as _, Sha256};

/// A SHA-256 digest. Ordering is lexicographic over the big-endian bytes,
/// which is also the numeric order used by the proof-of-work gate.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HashDigest(pub [u8; 32]);

impl HashDigest {
    pub const ZERO: HashDigest = HashDigest([0; 32]);

    /// The canonical hash of a byte string.
    pub fn of(bytes: &[u8]) -> Self {
        HashDigest(Sha256::digest(bytes).into())
    }

    /// Hash of several byte strings fed back to back (no separators).
    pub fn of_parts(parts: &[&[u8]]) -> Self {
        let mut hasher = Sha256::new();
        for part in parts {
            hasher.update(part);
        }
        HashDigest(hasher.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(HashDigest(out))
    }

    /// First eight bytes as a big-endian integer.
    pub fn prefix_u64(&self) -> u64 {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&self.0[..8]);
        u64::from_be_bytes(buf)
    }
}

impl fmt::Debug for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashDigest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA-256 state after absorbing a fixed prefix. Finishing it with a tail
/// gives the same digest as hashing `prefix ‖ tail` in one go.
#[derive(Clone)]
pub struct HashPrefix(Sha256);

impl HashPrefix {
    pub fn new(prefix: &[u8]) -> Self {
        HashPrefix(Sha256::new_with_prefix(prefix))
    }

    pub fn finish(&self, tail: &[u8]) -> HashDigest {
        let mut hasher = self.0.clone();
        hasher.update(tail);
        HashDigest(hasher.finalize().into())
    }
}

impl fmt::Debug for HashPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("HashPrefix(..)")
    }
}

/// Difficulty threshold: a Key Block is valid when its digest, read as a
/// 256-bit big-endian integer, is strictly below the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Target(pub [u8; 32]);

impl Target {
    /// `2^bits - 1`. `bits` must be in `1..=256`.
    pub fn pow2_minus_one(bits: u32) -> Self {
        assert!((1..=256).contains(&bits), "target exponent out of range");
        let mut out = [0u8; 32];
        let ones = bits as usize;
        for bit in 0..ones {
            // bit 0 is the least significant bit of byte 31
            out[31 - bit / 8] |= 1 << (bit % 8);
        }
        Target(out)
    }

    /// Parses `2^k-1` or a 64-digit hex value.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("2^") {
            let exp = rest.strip_suffix("-1")?.trim().parse::<u32>().ok()?;
            if !(1..=256).contains(&exp) {
                return None;
            }
            return Some(Self::pow2_minus_one(exp));
        }
        let hex_str = s.strip_prefix("0x").unwrap_or(s);
        if hex_str.len() != 64 {
            return None;
        }
        HashDigest::from_hex(hex_str).map(|d| Target(d.0))
    }

    pub fn is_met_by(&self, digest: &HashDigest) -> bool {
        digest.0 < self.0
    }

    /// `Target / 2^256`, the chance one hash trial succeeds.
    pub fn trial_probability(&self) -> f64 {
        let mut acc = 0.0f64;
        for (i, byte) in self.0.iter().enumerate() {
            acc += f64::from(*byte) * libm::exp2(-8.0 * (i as f64 + 1.0));
        }
        acc
    }

    /// `1 - (1 - Target/2^256)^q`, the chance a miner succeeds within one
    /// round of `q` trials.
    pub fn round_probability(&self, q: u32) -> f64 {
        let p = self.trial_probability();
        -libm::expm1(f64::from(q) * libm::log1p(-p))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Derives an independent 64-bit seed from a label and a list of integers.
/// Every random stream in the simulator is keyed this way so streams never
/// depend on the order in which other components consumed randomness.
pub fn derive_seed(label: &str, parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update((label.len() as u32).to_be_bytes());
    hasher.update(label.as_bytes());
    for part in parts {
        hasher.update(part.to_be_bytes());
    }
    let out: [u8; 32] = hasher.finalize().into();
    HashDigest(out).prefix_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_2_244_has_twelve_leading_zero_bits() {
        let t = Target::pow2_minus_one(244);
        assert_eq!(t.0[0], 0x00);
        assert_eq!(t.0[1], 0x0f);
        assert!(t.0[2..].iter().all(|b| *b == 0xff));
        assert_eq!(Target::parse("2^244-1"), Some(t));
        assert_eq!(Target::parse(&t.to_hex()), Some(t));
    }

    #[test]
    fn round_probability_matches_closed_form() {
        let t = Target::pow2_minus_one(244);
        let p = t.round_probability(1);
        // (2^244 - 1) / 2^256
        let expected = libm::exp2(-12.0) - libm::exp2(-256.0);
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 2.44e-4).abs() < 1e-6);
    }

    #[test]
    fn gate_is_strict() {
        let t = Target::pow2_minus_one(8);
        let mut below = [0u8; 32];
        below[31] = 0xfe;
        let mut equal = [0u8; 32];
        equal[31] = 0xff;
        assert!(t.is_met_by(&HashDigest(below)));
        assert!(!t.is_met_by(&HashDigest(equal)));
    }

    #[test]
    fn derived_seeds_are_label_sensitive() {
        assert_ne!(derive_seed("a", &[1]), derive_seed("b", &[1]));
        assert_ne!(derive_seed("a", &[1, 2]), derive_seed("a", &[2, 1]));
        assert_eq!(derive_seed("a", &[7]), derive_seed("a", &[7]));
    }
}
