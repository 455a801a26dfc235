//! Residue number system arithmetic.
//!
//! A [`ModulusSet`] holds pairwise-coprime moduli together with the
//! precomputed CRT constants. Signed integers are carried as unsigned
//! residues in `[0, m_i)`; the signed interpretation is only applied on the
//! way back out, where values above `psi = floor((M - 1) / 2)` wrap to
//! negative.
//!
//! The special set `{2^k - 1, 2^k, 2^k + 1}` additionally supports a
//! shift-and-add forward and reverse conversion path that never performs a
//! general division. That path is checked against general CRT exhaustively
//! in the test suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported special-set parameter. Keeps `M = 2^{3k} - 2^k` below
/// `2^60` so signed values fit comfortably in `i64`.
pub const MAX_K: u32 = 20;

/// CRT reconstruction constants for one modulus: `M_i = M / m_i` and
/// `T_i = M_i^{-1} mod m_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrtWeight {
    pub partial_product: u64,
    pub inverse: u64,
}

/// An ordered set of pairwise-coprime moduli with precomputed CRT constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModulusSet {
    k: Option<u32>,
    moduli: Vec<u64>,
    range: u64,
    psi: u64,
    weights: Vec<CrtWeight>,
}

impl ModulusSet {
    /// Builds the special set `{2^k - 1, 2^k, 2^k + 1}`.
    pub fn special(k: u32) -> Result<Self> {
        if !(2..=MAX_K).contains(&k) {
            return Err(Error::InvalidK(k));
        }
        let p = 1u64 << k;
        let mut set = Self::new(&[p - 1, p, p + 1])?;
        set.k = Some(k);
        debug_assert_eq!(set.range, (1u64 << (3 * k)) - p);
        Ok(set)
    }

    /// Builds a general moduli set. Used mainly to cross-check the special
    /// set against textbook CRT.
    pub fn new(moduli: &[u64]) -> Result<Self> {
        if moduli.is_empty() {
            return Err(Error::Config("moduli set must not be empty".into()));
        }
        for (i, &a) in moduli.iter().enumerate() {
            if a < 2 {
                return Err(Error::Config(format!("modulus {a} must be at least 2")));
            }
            for &b in &moduli[i + 1..] {
                if gcd(a, b) != 1 {
                    return Err(Error::Config(format!("moduli {a} and {b} are not coprime")));
                }
            }
        }
        let range = moduli
            .iter()
            .try_fold(1u64, |acc, &m| acc.checked_mul(m))
            .filter(|&r| r < 1 << 62)
            .ok_or_else(|| Error::Config("moduli product exceeds 2^62".into()))?;
        let weights = moduli
            .iter()
            .map(|&m| {
                let partial_product = range / m;
                let inverse = mod_inverse(partial_product % m, m)
                    .expect("coprime moduli always yield an inverse");
                CrtWeight {
                    partial_product,
                    inverse,
                }
            })
            .collect();
        let set = Self {
            k: None,
            moduli: moduli.to_vec(),
            range,
            psi: (range - 1) / 2,
            weights,
        };
        set.validate()?;
        Ok(set)
    }

    /// Assembles a set from raw parts without recomputing anything. Pair with
    /// [`ModulusSet::validate`] when the parts come from outside (for
    /// instance a hardware constant table).
    pub fn from_parts_unchecked(k: Option<u32>, moduli: Vec<u64>, weights: Vec<CrtWeight>) -> Self {
        let range = moduli.iter().product::<u64>();
        Self {
            k,
            moduli,
            range,
            psi: range.saturating_sub(1) / 2,
            weights,
        }
    }

    /// Checks every structural invariant: coprimality, `M = prod m_i`, and
    /// `(M_i * T_i) mod m_i = 1`.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.moduli.len() {
            return Err(Error::Config(
                "one CRT weight is required per modulus".into(),
            ));
        }
        for (i, &a) in self.moduli.iter().enumerate() {
            for &b in &self.moduli[i + 1..] {
                if gcd(a, b) != 1 {
                    return Err(Error::Config(format!("moduli {a} and {b} are not coprime")));
                }
            }
        }
        if self.moduli.iter().product::<u64>() != self.range {
            return Err(Error::Config(
                "dynamic range is not the moduli product".into(),
            ));
        }
        for (&m, w) in self.moduli.iter().zip(&self.weights) {
            if w.partial_product != self.range / m {
                return Err(Error::Config(format!("M_i for modulus {m} is wrong")));
            }
            if mul_mod(w.partial_product % m, w.inverse, m) != 1 {
                return Err(Error::Config(format!(
                    "T_i = {} is not the inverse of M_i modulo {m}",
                    w.inverse
                )));
            }
        }
        if let Some(k) = self.k {
            let p = 1u64 << k;
            if self.moduli != [p - 1, p, p + 1] {
                return Err(Error::Config(format!(
                    "moduli do not form the special set for k = {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> Option<u32> {
        self.k
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    /// Dynamic range `M`.
    pub fn range(&self) -> u64 {
        self.range
    }

    /// Signed-range bound: representable values are `[-psi, psi]`.
    pub fn psi(&self) -> i64 {
        self.psi as i64
    }

    pub fn crt_weights(&self) -> &[CrtWeight] {
        &self.weights
    }

    /// `log2(M)`, the number of bits of dynamic range.
    pub fn range_bits(&self) -> f64 {
        (self.range as f64).log2()
    }

    fn check_range(&self, x: i64) -> Result<()> {
        if x.unsigned_abs() > self.psi {
            return Err(Error::OutOfRange {
                value: x,
                psi: self.psi as i64,
            });
        }
        Ok(())
    }

    fn check_residues(&self, residues: &[u64]) -> Result<()> {
        if residues.len() != self.moduli.len() {
            return Err(Error::ResidueCount {
                expected: self.moduli.len(),
                got: residues.len(),
            });
        }
        for (&r, &m) in residues.iter().zip(&self.moduli) {
            if r >= m {
                return Err(Error::InvalidResidue {
                    residue: r,
                    modulus: m,
                });
            }
        }
        Ok(())
    }

    /// Forward conversion: `r_i = X mod m_i` with the result in `[0, m_i)`.
    pub fn forward_convert(&self, x: i64) -> Result<Vec<u64>> {
        self.check_range(x)?;
        Ok(self
            .moduli
            .iter()
            .map(|&m| x.rem_euclid(m as i64) as u64)
            .collect())
    }

    /// Forward conversion through the special-set shift/add path. Only
    /// available on special sets.
    pub fn forward_convert_special(&self, x: i64) -> Result<Vec<u64>> {
        let k = self.require_special()?;
        self.check_range(x)?;
        let u = if x < 0 {
            (x + self.range as i64) as u64
        } else {
            x as u64
        };
        Ok(vec![
            fold_mersenne(u, k),
            u & ((1 << k) - 1),
            fold_fermat(u, k),
        ])
    }

    fn require_special(&self) -> Result<u32> {
        self.k.ok_or_else(|| {
            Error::Config("operation requires the {2^k-1, 2^k, 2^k+1} moduli set".into())
        })
    }

    /// Reverse conversion by the Chinese Remainder Theorem:
    /// `X = (sum x_i M_i T_i) mod M`, then mapped into `[-psi, psi]`.
    pub fn reverse_convert_crt(&self, residues: &[u64]) -> Result<i64> {
        self.check_residues(residues)?;
        Ok(self.reverse_crt_unchecked(residues))
    }

    #[inline]
    pub(crate) fn reverse_crt_unchecked(&self, residues: &[u64]) -> i64 {
        let range = self.range as u128;
        let sum = residues
            .iter()
            .zip(&self.weights)
            .fold(0u128, |acc, (&x, w)| {
                (acc + x as u128 * w.partial_product as u128 * w.inverse as u128) % range
            }) as u64;
        self.to_signed(sum)
    }

    #[inline]
    fn to_signed(&self, x: u64) -> i64 {
        if x > self.psi {
            x as i64 - self.range as i64
        } else {
            x as i64
        }
    }

    /// Reverse conversion specialised for `{2^k - 1, 2^k, 2^k + 1}`.
    ///
    /// Writes `X = x_2 + 2^k Z` where `x_2` is the residue modulo `2^k` and
    /// `Z < (2^k - 1)(2^k + 1)`. Reducing `X` modulo the two outer moduli
    /// gives `Z = x_1 - x_2 (mod 2^k - 1)` and `Z = x_2 - x_3 (mod 2^k + 1)`,
    /// and the two-modulus CRT between them only needs the constant
    /// `(2^k - 1)^{-1} = 2^{k-1} (mod 2^k + 1)`. Every reduction is an
    /// end-around fold of `k`-bit chunks.
    pub fn reverse_convert_special(&self, residues: &[u64]) -> Result<i64> {
        let k = self.require_special()?;
        self.check_residues(residues)?;
        Ok(self.reverse_special_unchecked(residues, k))
    }

    #[inline]
    pub(crate) fn reverse_special_unchecked(&self, residues: &[u64], k: u32) -> i64 {
        let p = 1u64 << k;
        let (low, high) = (p - 1, p + 1);
        let (x1, x2, x3) = (residues[0], residues[1], residues[2]);
        // a = (x1 - x2) mod (2^k - 1); x2 - fold(x2) is a multiple of low.
        let a = fold_mersenne(x1 + low - fold_mersenne(x2, k), k);
        // b = (x2 - x3) mod (2^k + 1)
        let b = fold_fermat(x2 + high - x3, k);
        // t = (b - a) * 2^{k-1} mod (2^k + 1)
        let d = fold_fermat(b + high - fold_fermat(a, k), k);
        let t = fold_fermat(d << (k - 1), k);
        let z = a + (t << k) - t;
        let x = x2 + (z << k);
        self.to_signed(x)
    }

    /// Multiply-accumulate of two residue vectors: per modulus,
    /// `(sum_j a_j b_j) mod m_i`. `a[j]` and `b[j]` are the residue tuples of
    /// the j-th operands.
    pub fn residue_mac(&self, a: &[Vec<u64>], b: &[Vec<u64>]) -> Result<Vec<u64>> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!(
                "residue vectors have different lengths ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        for r in a.iter().chain(b) {
            self.check_residues(r)?;
        }
        Ok(self
            .moduli
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                a.iter()
                    .zip(b)
                    .fold(0u64, |acc, (x, y)| (acc + x[i] * y[i]) % m)
            })
            .collect())
    }
}

/// `(sum_j a_j b_j) mod m` over a single modulus.
#[inline]
pub fn modular_dot(a: &[u64], b: &[u64], m: u64) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    // products are below 2^42 for k <= MAX_K, so a few thousand terms fit
    let mut acc = 0u64;
    for chunk in a.chunks(1024).zip(b.chunks(1024)) {
        let s: u64 = chunk.0.iter().zip(chunk.1).map(|(x, y)| x * y).sum();
        acc = (acc + s % m) % m;
    }
    acc
}

/// Smallest special-set parameter `k` whose range satisfies
/// `log2(2^{3k} - 2^k) >= 2(b_m + 1) + log2(g) - 1`.
///
/// The comparison is carried out exactly as `M >= g * 2^{2 b_m + 1}`.
pub fn min_k(b_m: u32, g: usize) -> u32 {
    assert!(b_m >= 1 && g >= 1, "b_m and g must be positive");
    let need = (g as u128) << (2 * b_m + 1);
    (2u32..)
        .find(|&k| (1u128 << (3 * k)) - (1u128 << k) >= need)
        .expect("some k always satisfies the bound")
}

/// Whether the special set for `k` can hold every dot product of two
/// BFP(b_m, g) groups.
pub fn range_sufficient(k: u32, b_m: u32, g: usize) -> bool {
    k >= min_k(b_m, g)
}

/// Per-modulus integer residue matrices flowing through the modular
/// datapath. Entries are stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidueTensor {
    rows: usize,
    cols: usize,
    per_modulus: Vec<Vec<u64>>,
}

impl ResidueTensor {
    /// Forward-converts a row-major integer matrix.
    pub fn from_integers(
        set: &ModulusSet,
        rows: usize,
        cols: usize,
        values: &[i64],
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        for &v in values {
            set.check_range(v)?;
        }
        let per_modulus = set
            .moduli()
            .iter()
            .map(|&m| {
                values
                    .iter()
                    .map(|&v| v.rem_euclid(m as i64) as u64)
                    .collect()
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            per_modulus,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Residue matrix for the modulus at `index` in the set.
    pub fn residues(&self, index: usize) -> &[u64] {
        &self.per_modulus[index]
    }

    pub fn row(&self, index: usize, row: usize) -> &[u64] {
        &self.per_modulus[index][row * self.cols..(row + 1) * self.cols]
    }

    /// Checks that every entry lies in `[0, m_i)`.
    pub fn validate(&self, set: &ModulusSet) -> Result<()> {
        if self.per_modulus.len() != set.len() {
            return Err(Error::ResidueCount {
                expected: set.len(),
                got: self.per_modulus.len(),
            });
        }
        for (res, &m) in self.per_modulus.iter().zip(set.moduli()) {
            if let Some(&r) = res.iter().find(|&&r| r >= m) {
                return Err(Error::InvalidResidue {
                    residue: r,
                    modulus: m,
                });
            }
        }
        Ok(())
    }

    /// Modular matrix-vector product against a residue vector stored as a
    /// `1 x cols` tensor: one output residue row per modulus.
    pub fn matvec(&self, set: &ModulusSet, x: &ResidueTensor) -> Result<ResidueTensor> {
        if x.rows != 1 || x.cols != self.cols {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by a vector of shape {}x{}",
                self.rows, self.cols, x.rows, x.cols
            )));
        }
        let per_modulus = set
            .moduli()
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                (0..self.rows)
                    .map(|r| modular_dot(self.row(i, r), x.row(i, 0), m))
                    .collect()
            })
            .collect();
        Ok(ResidueTensor {
            rows: 1,
            cols: self.rows,
            per_modulus,
        })
    }

    /// Reverse-converts every entry back to signed integers.
    pub fn to_integers(&self, set: &ModulusSet) -> Vec<i64> {
        let mut buf = vec![0u64; set.len()];
        (0..self.rows * self.cols)
            .map(|idx| {
                for (b, res) in buf.iter_mut().zip(&self.per_modulus) {
                    *b = res[idx];
                }
                set.reverse_crt_unchecked(&buf)
            })
            .collect()
    }
}

/// `v mod (2^k - 1)` by end-around folding of `k`-bit chunks.
#[inline]
pub fn fold_mersenne(mut v: u64, k: u32) -> u64 {
    let mask = (1u64 << k) - 1;
    while v > mask {
        v = (v & mask) + (v >> k);
    }
    if v == mask {
        0
    } else {
        v
    }
}

/// `v mod (2^k + 1)` by alternating-sign folding of `k`-bit chunks
/// (`2^k = -1`).
#[inline]
pub fn fold_fermat(mut v: u64, k: u32) -> u64 {
    let mask = (1u64 << k) - 1;
    let modulus = (1i64 << k) + 1;
    let mut acc = 0i64;
    let mut positive = true;
    while v != 0 {
        let chunk = (v & mask) as i64;
        acc += if positive { chunk } else { -chunk };
        positive = !positive;
        v >>= k;
    }
    acc.rem_euclid(modulus) as u64
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Multiplicative inverse by the extended Euclidean algorithm.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force reverse conversion: scan `[0, M)` for the value matching
    /// every residue.
    fn brute_force_reverse(set: &ModulusSet, residues: &[u64]) -> i64 {
        let x = (0..set.range())
            .find(|&x| set.moduli().iter().zip(residues).all(|(&m, &r)| x % m == r))
            .unwrap();
        if x > set.psi() as u64 {
            x as i64 - set.range() as i64
        } else {
            x as i64
        }
    }

    #[test]
    fn special_set_k5() {
        let set = ModulusSet::special(5).unwrap();
        assert_eq!(set.moduli(), &[31, 32, 33]);
        assert_eq!(set.range(), 32736);
        assert_eq!(set.psi(), 16367);
        for (&m, w) in set.moduli().iter().zip(set.crt_weights()) {
            assert_eq!((w.partial_product * w.inverse) % m, 1);
        }
    }

    #[test]
    fn special_set_k2() {
        let set = ModulusSet::special(2).unwrap();
        assert_eq!(set.moduli(), &[3, 4, 5]);
        assert_eq!(set.range(), 60);
    }

    #[test]
    fn rejects_degenerate_k() {
        assert!(matches!(ModulusSet::special(1), Err(Error::InvalidK(1))));
        assert!(matches!(ModulusSet::special(0), Err(Error::InvalidK(0))));
        assert!(ModulusSet::special(MAX_K + 1).is_err());
    }

    #[test]
    fn forward_examples() {
        let set = ModulusSet::special(5).unwrap();
        assert_eq!(set.forward_convert(100).unwrap(), vec![7, 4, 1]);
        assert_eq!(set.forward_convert(0).unwrap(), vec![0, 0, 0]);
        assert_eq!(set.forward_convert(-5).unwrap(), vec![26, 27, 28]);
        assert_eq!(set.forward_convert_special(-5).unwrap(), vec![26, 27, 28]);
    }

    #[test]
    fn forward_rejects_out_of_range() {
        let set = ModulusSet::special(5).unwrap();
        assert!(set.forward_convert(16367).is_ok());
        assert!(set.forward_convert(-16367).is_ok());
        assert!(matches!(
            set.forward_convert(16368),
            Err(Error::OutOfRange { .. })
        ));
        assert!(set.forward_convert(-16368).is_err());
    }

    #[test]
    fn reverse_examples_match_brute_force() {
        let set = ModulusSet::special(5).unwrap();
        for (res, want) in [
            (vec![7, 4, 1], 100),
            (vec![0, 0, 0], 0),
            (vec![26, 27, 28], -5),
        ] {
            assert_eq!(brute_force_reverse(&set, &res), want);
            assert_eq!(set.reverse_convert_crt(&res).unwrap(), want);
            assert_eq!(set.reverse_convert_special(&res).unwrap(), want);
        }
        assert_eq!(set.reverse_convert_special(&[30, 31, 32]).unwrap(), -1);
    }

    #[test]
    fn reverse_rejects_bad_residues() {
        let set = ModulusSet::special(5).unwrap();
        assert!(matches!(
            set.reverse_convert_crt(&[31, 0, 0]),
            Err(Error::InvalidResidue {
                residue: 31,
                modulus: 31
            })
        ));
        assert!(matches!(
            set.reverse_convert_crt(&[1, 2]),
            Err(Error::ResidueCount { .. })
        ));
    }

    #[test]
    fn special_equals_crt_exhaustive_k4() {
        let set = ModulusSet::special(4).unwrap();
        let mut count = 0;
        for x in -set.psi()..=set.psi() {
            let r = set.forward_convert(x).unwrap();
            assert_eq!(set.forward_convert_special(x).unwrap(), r);
            assert_eq!(
                set.reverse_convert_special(&r).unwrap(),
                set.reverse_convert_crt(&r).unwrap()
            );
            count += 1;
        }
        // M = 4080 is even, so [-psi, psi] misses exactly one residue class.
        assert_eq!(count, 4079);
        for x1 in 0..15 {
            for x2 in 0..16 {
                for x3 in 0..17 {
                    let r = [x1, x2, x3];
                    assert_eq!(
                        set.reverse_convert_special(&r).unwrap(),
                        set.reverse_convert_crt(&r).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn residue_mac_examples() {
        let set = ModulusSet::new(&[7]).unwrap();
        assert_eq!(set.residue_mac(&[vec![3]], &[vec![4]]).unwrap(), vec![5]);
        let set = ModulusSet::special(5).unwrap();
        let a: Vec<_> = [5, -3, 9]
            .iter()
            .map(|&x| set.forward_convert(x).unwrap())
            .collect();
        let zeros = vec![vec![0, 0, 0]; 3];
        assert_eq!(set.residue_mac(&a, &zeros).unwrap(), vec![0, 0, 0]);
        assert!(set.residue_mac(&a, &zeros[..2]).is_err());
    }

    #[test]
    fn min_k_thresholds() {
        assert_eq!(min_k(4, 16), 5);
        assert_eq!(min_k(3, 16), 4);
        assert_eq!(min_k(5, 16), 6);
        assert!(range_sufficient(5, 4, 16));
        assert!(!range_sufficient(4, 4, 16));
    }

    #[test]
    fn general_set_rejects_non_coprime() {
        assert!(ModulusSet::new(&[6, 9]).is_err());
        assert!(ModulusSet::new(&[1, 5]).is_err());
        assert!(ModulusSet::new(&[]).is_err());
    }

    #[test]
    fn validate_catches_corrupted_inverse() {
        let set = ModulusSet::special(5).unwrap();
        let mut weights = set.crt_weights().to_vec();
        weights[1].inverse = (weights[1].inverse + 1) % 32;
        let bad = ModulusSet::from_parts_unchecked(Some(5), set.moduli().to_vec(), weights);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn residue_tensor_matvec() {
        let set = ModulusSet::special(5).unwrap();
        let w = ResidueTensor::from_integers(&set, 2, 3, &[1, -2, 3, 4, 5, -6]).unwrap();
        let x = ResidueTensor::from_integers(&set, 1, 3, &[7, 8, -9]).unwrap();
        w.validate(&set).unwrap();
        let y = w.matvec(&set, &x).unwrap();
        assert_eq!(y.shape(), (1, 2));
        assert_eq!(y.to_integers(&set), vec![7 - 16 - 27, 28 + 40 + 54]);
        assert!(ResidueTensor::from_integers(&set, 2, 2, &[1, 2, 3]).is_err());
    }

    #[test]
    fn folds_match_remainder() {
        for k in 2..=8 {
            for v in (0..5000u64).chain([u64::MAX >> 4, 123_456_789_012]) {
                assert_eq!(fold_mersenne(v, k), v % ((1 << k) - 1));
                assert_eq!(fold_fermat(v, k), v % ((1 << k) + 1));
            }
        }
    }
}
