//! 166-bit MACCS-style structural keys and Tanimoto similarity.

mod keys;
mod matcher;
mod pattern;
mod smarts;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::chem::Molecule;

pub use keys::{compute_keys, KeyDef, KeyTable, GlobalPredicate};
pub use matcher::{match_fragment, MatchTarget};
pub use pattern::{AtomPrimitive, AtomQuery, BondPrimitive, BondQuery, FragmentPattern, PatternBond};
pub use smarts::compile_smarts;

/// Number of structural keys.
pub const FINGERPRINT_BITS: usize = 166;

/// Version tag stored alongside serialized fingerprints.
pub const FINGERPRINT_TAG: &str = "maccs166-v1";

const WORDS: usize = 3;
const HEX_LEN: usize = 42;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("pattern has {atoms} atoms; the matcher supports at most {max}")]
    PatternTooLarge { atoms: usize, max: usize },
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("bit index {0} out of range")]
    BitOutOfRange(usize),
    #[error("malformed fingerprint hex: {0}")]
    BadHex(String),
}

/// A fixed 166-bit vector stored in three 64-bit words.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fingerprint {
    words: [u64; WORDS],
    popcount: u32,
}

impl Fingerprint {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_bits<I: IntoIterator<Item = usize>>(bits: I) -> Result<Self, FingerprintError> {
        let mut fp = Self::empty();
        for b in bits {
            fp.set(b)?;
        }
        Ok(fp)
    }

    pub fn set(&mut self, bit: usize) -> Result<(), FingerprintError> {
        if bit >= FINGERPRINT_BITS {
            return Err(FingerprintError::BitOutOfRange(bit));
        }
        let mask = 1u64 << (bit % 64);
        if self.words[bit / 64] & mask == 0 {
            self.words[bit / 64] |= mask;
            self.popcount += 1;
        }
        Ok(())
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < FINGERPRINT_BITS && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn is_empty(&self) -> bool {
        self.popcount == 0
    }

    pub fn len(&self) -> usize {
        FINGERPRINT_BITS
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FINGERPRINT_BITS).filter(move |&b| self.get(b))
    }

    pub fn intersection_count(&self, other: &Fingerprint) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    pub fn union_count(&self, other: &Fingerprint) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones())
            .sum()
    }

    /// Lowercase hex of the 168-bit big-endian integer whose bit `i` is key `i`.
    pub fn to_hex(&self) -> String {
        let mut bytes = [0u8; 21];
        for (k, byte) in bytes.iter_mut().enumerate() {
            // byte 0 holds bits 167..160
            let low_bit = (20 - k) * 8;
            let mut v = 0u8;
            for j in 0..8 {
                if self.get(low_bit + j) {
                    v |= 1 << j;
                }
            }
            *byte = v;
        }
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Result<Self, FingerprintError> {
        if hex.len() != HEX_LEN || !hex.bytes().all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(&c)) {
            return Err(FingerprintError::BadHex(hex.to_string()));
        }
        let mut fp = Self::empty();
        for k in 0..21 {
            let byte = u8::from_str_radix(&hex[2 * k..2 * k + 2], 16)
                .map_err(|_| FingerprintError::BadHex(hex.to_string()))?;
            let low_bit = (20 - k) * 8;
            for j in 0..8 {
                if byte >> j & 1 == 1 {
                    let bit = low_bit + j;
                    if bit >= FINGERPRINT_BITS {
                        return Err(FingerprintError::BadHex(hex.to_string()));
                    }
                    fp.set(bit)?;
                }
            }
        }
        Ok(fp)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.to_hex())
    }
}

/// Tanimoto coefficient `|a ∧ b| / |a ∨ b|`; two empty fingerprints score 1.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let union = a.union_count(b);
    if union == 0 {
        return 1.0;
    }
    a.intersection_count(b) as f64 / union as f64
}

/// Fingerprint many molecules in parallel; output order follows input order.
pub fn compute_keys_batch(mols: &[Molecule]) -> Vec<Fingerprint> {
    mols.par_iter().map(compute_keys).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        Fingerprint::from_bits(bits.iter().copied()).unwrap()
    }

    #[test]
    fn tanimoto_examples() {
        let a = fp(&[1, 2, 3]);
        assert_eq!(tanimoto(&a, &a), 1.0);
        assert_eq!(tanimoto(&a, &fp(&[4, 5])), 0.0);
        assert_eq!(tanimoto(&a, &fp(&[2, 3, 4])), 0.5);
        assert_eq!(tanimoto(&Fingerprint::empty(), &Fingerprint::empty()), 1.0);
        assert_eq!(tanimoto(&Fingerprint::empty(), &a), 0.0);
    }

    #[test]
    fn popcount_tracks_set_bits() {
        let mut f = fp(&[0, 64, 165]);
        assert_eq!(f.popcount(), 3);
        f.set(64).unwrap();
        assert_eq!(f.popcount(), 3);
        assert!(f.set(166).is_err());
        assert_eq!(f.ones().collect::<Vec<_>>(), vec![0, 64, 165]);
    }

    #[test]
    fn hex_layout() {
        assert_eq!(Fingerprint::empty().to_hex(), "0".repeat(42));
        let h = fp(&[0]).to_hex();
        assert_eq!(&h[40..], "01");
        let h = fp(&[165]).to_hex();
        assert_eq!(&h[..2], "20");
        assert!(Fingerprint::from_hex(&format!("80{}", "0".repeat(40))).is_err());
        assert!(Fingerprint::from_hex("abc").is_err());
        assert!(Fingerprint::from_hex(&"G".repeat(42)).is_err());
    }

    fn arb_fp() -> impl Strategy<Value = Fingerprint> {
        proptest::collection::vec(0usize..FINGERPRINT_BITS, 0..80).prop_map(|b| fp(&b))
    }

    proptest! {
        #[test]
        fn hex_round_trip(a in arb_fp()) {
            prop_assert_eq!(Fingerprint::from_hex(&a.to_hex()).unwrap(), a);
        }

        #[test]
        fn tanimoto_symmetric_and_bounded(a in arb_fp(), b in arb_fp()) {
            let s = tanimoto(&a, &b);
            prop_assert_eq!(s, tanimoto(&b, &a));
            prop_assert!((0.0..=1.0).contains(&s));
            if !a.is_empty() {
                prop_assert_eq!(tanimoto(&a, &a), 1.0);
            }
        }
    }
}
