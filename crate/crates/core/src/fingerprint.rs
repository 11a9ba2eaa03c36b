//! Differential reaction fingerprints over token shingles.
//!
//! A reaction's fingerprint sets one bit per shingle in the symmetric
//! difference between the reactant-side and product-side shingle sets
//! (presence, not counts). Bit positions come from 64-bit FNV-1a of the
//! shingle string folded modulo the fingerprint width, so any implementation
//! of the same recipe produces identical bits.

use crate::error::{DataError, Error, Result};
use crate::hash::fnv1a64;
use crate::model::ReactionRecord;
use crate::smiles;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Fingerprint parameters: width (power of two) and shingle window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub nbits: usize,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        Self {
            nbits: 2048,
            n_min: 1,
            n_max: 3,
        }
    }
}

impl FingerprintConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.nbits.is_power_of_two() || self.nbits == 0 {
            return Err(Error::config(format!(
                "fingerprint width {} must be a power of two",
                self.nbits
            )));
        }
        if self.n_min < 1 || self.n_max < self.n_min {
            return Err(Error::config(format!(
                "bad shingle window [{}, {}]",
                self.n_min, self.n_max
            )));
        }
        Ok(())
    }
}

/// Fixed-width bit vector fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReactionFingerprint {
    nbits: usize,
    words: Vec<u64>,
}

impl ReactionFingerprint {
    pub fn empty(nbits: usize) -> Self {
        Self {
            nbits,
            words: vec![0; nbits.div_ceil(64)],
        }
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn set(&mut self, bit: usize) {
        debug_assert!(bit < self.nbits);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Active bit positions, ascending.
    pub fn active_bits(&self) -> Vec<u32> {
        let mut bits = Vec::with_capacity(self.popcount() as usize);
        for (wi, &word) in self.words.iter().enumerate() {
            let mut w = word;
            while w != 0 {
                let bit = w.trailing_zeros();
                bits.push(wi as u32 * 64 + bit);
                w &= w - 1;
            }
        }
        bits
    }

    /// Expand to a 0/1 float vector, for use as an inner-product search key.
    pub fn to_dense(&self) -> Vec<f32> {
        (0..self.nbits)
            .map(|b| if self.get(b) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Shingle set of one side of a reaction: union over its molecules, maps
/// stripped first.
fn side_shingles(molecules: &[String], cfg: &FingerprintConfig) -> Result<BTreeSet<String>, smiles::SmilesError> {
    let mut set = BTreeSet::new();
    for molecule in molecules {
        let stripped = smiles::strip_atom_maps(molecule)?;
        let tokens = smiles::tokenize(&stripped)?;
        set.extend(smiles::shingles(&tokens, cfg.n_min, cfg.n_max));
    }
    Ok(set)
}

/// Differential fingerprint of a reaction: bits at
/// `fnv1a64(shingle) % nbits` for every shingle in the symmetric difference
/// of the reactant and product shingle sets.
///
/// Invariant under molecule order and atom-map annotations; identical
/// reactant and product sides give the all-zero fingerprint.
pub fn drfp_style(record: &ReactionRecord, cfg: &FingerprintConfig) -> Result<ReactionFingerprint> {
    cfg.validate()?;
    let reactant_side = side_shingles(&record.reactants, cfg).map_err(|e| {
        Error::Data(DataError::Malformed {
            path: format!("reaction {}", record.id),
            line: 0,
            message: e.to_string(),
        })
    })?;
    let product_side = side_shingles(&record.products, cfg).map_err(|e| {
        Error::Data(DataError::Malformed {
            path: format!("reaction {}", record.id),
            line: 0,
            message: e.to_string(),
        })
    })?;

    let mut fp = ReactionFingerprint::empty(cfg.nbits);
    for shingle in reactant_side.symmetric_difference(&product_side) {
        fp.set((fnv1a64(shingle.as_bytes()) % cfg.nbits as u64) as usize);
    }
    Ok(fp)
}

/// Tanimoto similarity |a AND b| / |a OR b|. Two empty fingerprints count as
/// identical (similarity 1).
pub fn tanimoto(a: &ReactionFingerprint, b: &ReactionFingerprint) -> Result<f64> {
    if a.nbits != b.nbits {
        return Err(Error::dimension(format!(
            "fingerprint widths differ: {} vs {}",
            a.nbits, b.nbits
        )));
    }
    let mut inter = 0u32;
    let mut union = 0u32;
    for (wa, wb) in a.words.iter().zip(&b.words) {
        inter += (wa & wb).count_ones();
        union += (wa | wb).count_ones();
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Conditions, Split};

    fn reaction(reactants: &[&str], products: &[&str]) -> ReactionRecord {
        ReactionRecord {
            id: "r".into(),
            reactants: reactants.iter().map(|s| s.to_string()).collect(),
            products: products.iter().map(|s| s.to_string()).collect(),
            conditions: Conditions::default(),
            split: Split::Train,
            publication_proxy: None,
        }
    }

    fn cfg64() -> FingerprintConfig {
        FingerprintConfig {
            nbits: 64,
            n_min: 1,
            n_max: 3,
        }
    }

    #[test]
    fn identity_reaction_is_all_zero() {
        let fp = drfp_style(&reaction(&["CCO"], &["CCO"]), &cfg64()).unwrap();
        assert_eq!(fp.popcount(), 0);
    }

    #[test]
    fn reactant_order_does_not_matter() {
        let a = drfp_style(&reaction(&["CCO", "CCl"], &["CC=O"]), &cfg64()).unwrap();
        let b = drfp_style(&reaction(&["CCl", "CCO"], &["CC=O"]), &cfg64()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn atom_maps_do_not_matter() {
        let a = drfp_style(&reaction(&["[CH3:1]O"], &["[CH3:1]Cl"]), &cfg64()).unwrap();
        let b = drfp_style(&reaction(&["[CH3]O"], &["[CH3]Cl"]), &cfg64()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn known_bits_for_oxidation_toy() {
        // Hand-enumerated shingles for CCO>>CC=O, window 1..3:
        //   reactants: {C, O, CC, CO, CCO}
        //   products:  {C, =, O, CC, C=, =O, CC=, C=O}
        //   symmetric difference: {CO, CCO, =, C=, =O, CC=, C=O}
        // The oracle applies FNV-1a mod 64 independently of the
        // implementation's hashing code path.
        fn oracle_fnv(s: &str) -> u64 {
            let mut h: u64 = 0xcbf29ce484222325;
            for b in s.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h
        }
        let expected_shingles = ["CO", "CCO", "=", "C=", "=O", "CC=", "C=O"];
        let mut expected_bits: Vec<u32> = expected_shingles
            .iter()
            .map(|s| (oracle_fnv(s) % 64) as u32)
            .collect();
        expected_bits.sort_unstable();
        expected_bits.dedup();

        let fp = drfp_style(&reaction(&["CCO"], &["CC=O"]), &cfg64()).unwrap();
        assert_eq!(fp.active_bits(), expected_bits);
    }

    #[test]
    fn tanimoto_identity_and_disjoint() {
        let x = drfp_style(&reaction(&["CCO"], &["CC=O"]), &cfg64()).unwrap();
        assert_eq!(tanimoto(&x, &x).unwrap(), 1.0);

        let mut a = ReactionFingerprint::empty(64);
        let mut b = ReactionFingerprint::empty(64);
        a.set(1);
        b.set(2);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn tanimoto_counts_common_over_union() {
        // a = 1100, b = 1010: one common bit, three in the union.
        let mut a = ReactionFingerprint::empty(4);
        let mut b = ReactionFingerprint::empty(4);
        a.set(0);
        a.set(1);
        b.set(0);
        b.set(2);
        assert!((tanimoto(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tanimoto_both_empty_is_one() {
        let a = ReactionFingerprint::empty(64);
        let b = ReactionFingerprint::empty(64);
        assert_eq!(tanimoto(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn tanimoto_rejects_width_mismatch() {
        let a = ReactionFingerprint::empty(64);
        let b = ReactionFingerprint::empty(128);
        assert!(tanimoto(&a, &b).is_err());
    }

    #[test]
    fn nbits_must_be_power_of_two() {
        let cfg = FingerprintConfig {
            nbits: 100,
            n_min: 1,
            n_max: 3,
        };
        assert!(drfp_style(&reaction(&["CCO"], &["CC=O"]), &cfg).is_err());
    }

    #[test]
    fn tokenizer_errors_carry_reaction_id() {
        let err = drfp_style(&reaction(&["C(Cl"], &["CC=O"]), &cfg64()).unwrap_err();
        assert!(err.to_string().contains("reaction r"), "{err}");
    }

    #[test]
    fn active_bits_round_trip_dense() {
        let fp = drfp_style(&reaction(&["CCO", "ClCCl"], &["CC=O"]), &cfg64()).unwrap();
        let dense = fp.to_dense();
        for bit in fp.active_bits() {
            assert_eq!(dense[bit as usize], 1.0);
        }
        assert_eq!(dense.iter().filter(|&&v| v == 1.0).count() as u32, fp.popcount());
    }
}
