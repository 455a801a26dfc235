//! Block floating point.
//!
//! A group of `g` reals shares one exponent `e`, the floor of `log2` of its
//! largest magnitude. Each element keeps a signed integer mantissa with
//! `|mantissa| <= 2^{b_m} - 1`, so value `= mantissa * 2^{e - (b_m - 1)}`
//! and the largest element lands in `[2^{b_m - 1}, 2^{b_m})` before
//! truncation. Mantissas therefore fit a `(b_m + 1)`-bit signed integer.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest mantissa width supported. Keeps products of two mantissas and
/// their group sums well inside `i64`.
pub const MAX_MANTISSA_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Drop the low bits (truncate toward zero).
    #[default]
    TowardZero,
    /// Round half to even, clipping at the mantissa limit.
    NearestEven,
}

/// BFP configuration: mantissa bits, group size and rounding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfpFormat {
    pub mantissa_bits: u32,
    pub group_size: usize,
    #[serde(default)]
    pub rounding: Rounding,
}

impl BfpFormat {
    pub fn new(mantissa_bits: u32, group_size: usize) -> Result<Self> {
        let f = Self {
            mantissa_bits,
            group_size,
            rounding: Rounding::TowardZero,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_MANTISSA_BITS).contains(&self.mantissa_bits) {
            return Err(Error::Config(format!(
                "mantissa bits must lie in [1, {MAX_MANTISSA_BITS}], got {}",
                self.mantissa_bits
            )));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group size must be positive".into()));
        }
        Ok(())
    }

    /// Largest mantissa magnitude, `2^{b_m} - 1`.
    pub fn max_mantissa(&self) -> i64 {
        (1i64 << self.mantissa_bits) - 1
    }
}

/// One shared-exponent group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BfpGroup {
    shared_exponent: i32,
    mantissas: Vec<i64>,
    mantissa_bits: u32,
}

impl BfpGroup {
    /// Quantizes `values` into a single group.
    pub fn quantize(values: &[f64], mantissa_bits: u32, rounding: Rounding) -> Result<Self> {
        if !(1..=MAX_MANTISSA_BITS).contains(&mantissa_bits) {
            return Err(Error::Config(format!(
                "unsupported mantissa width {mantissa_bits}"
            )));
        }
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(v));
        }
        let mut mantissas = vec![0; values.len()];
        let shared_exponent = quantize_into(values, mantissa_bits, rounding, &mut mantissas);
        Ok(Self {
            shared_exponent,
            mantissas,
            mantissa_bits,
        })
    }

    pub fn from_parts(shared_exponent: i32, mantissas: Vec<i64>, mantissa_bits: u32) -> Self {
        Self {
            shared_exponent,
            mantissas,
            mantissa_bits,
        }
    }

    pub fn shared_exponent(&self) -> i32 {
        self.shared_exponent
    }

    pub fn mantissas(&self) -> &[i64] {
        &self.mantissas
    }

    pub fn mantissa_bits(&self) -> u32 {
        self.mantissa_bits
    }

    pub fn len(&self) -> usize {
        self.mantissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mantissas.is_empty()
    }

    /// Exponent of one mantissa LSB: `e - (b_m - 1)`.
    pub fn scale_exponent(&self) -> i32 {
        self.shared_exponent - (self.mantissa_bits as i32 - 1)
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let e = self.scale_exponent();
        self.mantissas.iter().map(|&m| ldexp(m as f64, e)).collect()
    }

    /// Upper bound on the per-element absolute quantization error: one LSB,
    /// `2^{e - (b_m - 1)}`.
    pub fn error_bound(&self) -> f64 {
        pow2(self.scale_exponent())
    }
}

/// Quantizes a group with truncation toward zero.
pub fn quantize_group(values: &[f64], mantissa_bits: u32) -> Result<BfpGroup> {
    BfpGroup::quantize(values, mantissa_bits, Rounding::TowardZero)
}

pub fn dequantize_group(group: &BfpGroup) -> Vec<f64> {
    group.dequantize()
}

pub fn quantization_error_bound(group: &BfpGroup) -> f64 {
    group.error_bound()
}

/// Exponent of the integer dot product of two groups:
/// `e_a + e_b - 2(b_m - 1)`.
pub fn output_exponent(a: &BfpGroup, b: &BfpGroup) -> Result<i32> {
    if a.mantissa_bits != b.mantissa_bits {
        return Err(Error::Config(format!(
            "groups use different mantissa widths ({} vs {})",
            a.mantissa_bits, b.mantissa_bits
        )));
    }
    Ok(a.scale_exponent() + b.scale_exponent())
}

/// Integer mantissa dot product of two groups.
pub fn mantissa_dot(a: &BfpGroup, b: &BfpGroup) -> i64 {
    a.mantissas
        .iter()
        .zip(&b.mantissas)
        .map(|(x, y)| x * y)
        .sum()
}

/// Quantizes `values` into `out`, returning the shared exponent. Assumes
/// finite inputs.
pub(crate) fn quantize_into(
    values: &[f64],
    mantissa_bits: u32,
    rounding: Rounding,
    out: &mut [i64],
) -> i32 {
    let shared = values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|&v| floor_log2(v))
        .max();
    let Some(shared) = shared else {
        out.iter_mut().for_each(|m| *m = 0);
        return 0;
    };
    let limit = (1i64 << mantissa_bits) - 1;
    let shift = (mantissa_bits as i32 - 1) - shared;
    for (m, &v) in out.iter_mut().zip(values) {
        let scaled = ldexp(v, shift);
        let q = match rounding {
            Rounding::TowardZero => scaled.trunc(),
            Rounding::NearestEven => scaled.round_ties_even(),
        } as i64;
        *m = q.clamp(-limit, limit);
    }
    shared
}

/// `floor(log2 |v|)` read from the binary representation. `v` must be
/// finite and nonzero.
pub fn floor_log2(v: f64) -> i32 {
    debug_assert!(v.is_finite() && v != 0.0);
    let bits = v.abs().to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let frac = bits & ((1u64 << 52) - 1);
        -1074 + (63 - frac.leading_zeros() as i32)
    } else {
        biased - 1023
    }
}

/// Exact `2^e` where representable; saturates to 0 or infinity otherwise.
pub fn pow2(e: i32) -> f64 {
    if e > 1023 {
        f64::INFINITY
    } else if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else if e >= -1074 {
        f64::from_bits(1u64 << (e + 1074))
    } else {
        0.0
    }
}

/// `v * 2^e`, applied in exact power-of-two steps so intermediate results
/// never leave the normal range unnecessarily.
pub fn ldexp(mut v: f64, mut e: i32) -> f64 {
    while e > 1000 {
        v *= pow2(1000);
        e -= 1000;
    }
    while e < -1000 {
        v *= pow2(-1000);
        e += 1000;
    }
    v * pow2(e)
}

/// A matrix quantized row-wise into groups of `g` consecutive elements. The
/// last group of each row is zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct BfpMatrix {
    rows: usize,
    cols: usize,
    format: BfpFormat,
    groups_per_row: usize,
    exponents: Vec<i32>,
    mantissas: Vec<i64>,
}

impl BfpMatrix {
    /// Quantizes each row of `data` into groups of `format.group_size`.
    pub fn quantize_rows(data: ArrayView2<'_, f64>, format: BfpFormat) -> Result<Self> {
        format.validate()?;
        if let Some(&v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(v));
        }
        let (rows, cols) = data.dim();
        let g = format.group_size;
        let groups_per_row = cols.div_ceil(g);
        let mut exponents = vec![0; rows * groups_per_row];
        let mut mantissas = vec![0; rows * groups_per_row * g];
        let mut buf = vec![0.0; g];
        for (r, row) in data.outer_iter().enumerate() {
            for t in 0..groups_per_row {
                let start = t * g;
                let end = (start + g).min(cols);
                buf.iter_mut().for_each(|b| *b = 0.0);
                for (b, c) in buf.iter_mut().zip(start..end) {
                    *b = row[c];
                }
                let idx = r * groups_per_row + t;
                exponents[idx] = quantize_into(
                    &buf,
                    format.mantissa_bits,
                    format.rounding,
                    &mut mantissas[idx * g..(idx + 1) * g],
                );
            }
        }
        Ok(Self {
            rows,
            cols,
            format,
            groups_per_row,
            exponents,
            mantissas,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn format(&self) -> BfpFormat {
        self.format
    }

    pub fn groups_per_row(&self) -> usize {
        self.groups_per_row
    }

    /// Shared exponent of group `t` in row `r`.
    pub fn exponent(&self, r: usize, t: usize) -> i32 {
        self.exponents[r * self.groups_per_row + t]
    }

    /// Padded mantissas of group `t` in row `r` (always `g` long).
    pub fn mantissas(&self, r: usize, t: usize) -> &[i64] {
        let g = self.format.group_size;
        let idx = r * self.groups_per_row + t;
        &self.mantissas[idx * g..(idx + 1) * g]
    }

    pub fn group(&self, r: usize, t: usize) -> BfpGroup {
        BfpGroup::from_parts(
            self.exponent(r, t),
            self.mantissas(r, t).to_vec(),
            self.format.mantissa_bits,
        )
    }

    /// LSB exponent of group `t` in row `r`.
    pub fn scale_exponent(&self, r: usize, t: usize) -> i32 {
        self.exponent(r, t) - (self.format.mantissa_bits as i32 - 1)
    }

    /// Dequantized values in the original (unpadded) shape.
    pub fn dequantize(&self) -> Array2<f64> {
        let g = self.format.group_size;
        Array2::from_shape_fn((self.rows, self.cols), |(r, c)| {
            let t = c / g;
            ldexp(
                self.mantissas(r, t)[c % g] as f64,
                self.scale_exponent(r, t),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn worked_example() {
        let g = quantize_group(&[1.5, 0.25, -3.0], 4).unwrap();
        assert_eq!(g.shared_exponent(), 1);
        assert_eq!(g.mantissas(), &[6, 1, -12]);
        assert_eq!(g.error_bound(), 0.25);
        assert_eq!(g.dequantize(), vec![1.5, 0.25, -3.0]);
    }

    #[test]
    fn zero_group() {
        let g = quantize_group(&[0.0; 4], 3).unwrap();
        assert_eq!(g.shared_exponent(), 0);
        assert_eq!(g.mantissas(), &[0; 4]);
        assert_eq!(g.dequantize(), vec![0.0; 4]);
        assert_eq!(
            quantization_error_bound(&quantize_group(&[0.0], 1).unwrap()),
            1.0
        );
    }

    #[test]
    fn power_of_two_round_trip() {
        for b_m in 1..=12 {
            let g = quantize_group(&[1.0], b_m).unwrap();
            assert_eq!(g.mantissas(), &[1i64 << (b_m - 1)]);
            assert_eq!(g.dequantize(), vec![1.0]);
        }
    }

    #[test]
    fn dequantize_from_parts() {
        let g = BfpGroup::from_parts(1, vec![6, 1, -12], 4);
        assert_eq!(dequantize_group(&g), vec![1.5, 0.25, -3.0]);
    }

    #[test]
    fn quantize_is_idempotent() {
        let g = quantize_group(&[0.3, -1.7, 2.2, 0.01], 4).unwrap();
        let again = quantize_group(&g.dequantize(), 4).unwrap();
        assert_eq!(again, g);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            quantize_group(&[1.0, f64::NAN], 4),
            Err(Error::NonFinite(_))
        ));
        assert!(quantize_group(&[f64::INFINITY], 4).is_err());
    }

    #[test]
    fn output_exponent_examples() {
        let a = BfpGroup::from_parts(1, vec![1], 4);
        let b = BfpGroup::from_parts(1, vec![1], 4);
        assert_eq!(output_exponent(&a, &b).unwrap(), -4);
        let a = BfpGroup::from_parts(3, vec![1], 4);
        assert_eq!(output_exponent(&a, &a).unwrap(), 0);
        let c = BfpGroup::from_parts(1, vec![1], 5);
        assert!(output_exponent(&a, &c).is_err());
    }

    #[test]
    fn reconstruction_matches_real_dot() {
        let a = quantize_group(&[1.5, 0.25, -3.0, 0.7], 4).unwrap();
        let b = quantize_group(&[-0.11, 2.5, 0.5, 1.0], 4).unwrap();
        let real: f64 = a
            .dequantize()
            .iter()
            .zip(b.dequantize())
            .map(|(x, y)| x * y)
            .sum();
        let rebuilt = ldexp(
            mantissa_dot(&a, &b) as f64,
            output_exponent(&a, &b).unwrap(),
        );
        assert_eq!(rebuilt, real);
    }

    #[test]
    fn nearest_even_clips_at_limit() {
        // 1.99 scales to 15.92 at b_m = 4 and would round to 16
        let g = BfpGroup::quantize(&[1.99, 0.3], 4, Rounding::NearestEven).unwrap();
        assert_eq!(g.mantissas(), &[15, 2]);
        assert!((1.99 - g.dequantize()[0]).abs() < g.error_bound());
    }

    #[test]
    fn floor_log2_handles_subnormals() {
        assert_eq!(floor_log2(1.0), 0);
        assert_eq!(floor_log2(-3.0), 1);
        assert_eq!(floor_log2(0.75), -1);
        assert_eq!(floor_log2(f64::MIN_POSITIVE), -1022);
        assert_eq!(floor_log2(f64::from_bits(1)), -1074);
        assert_eq!(floor_log2(f64::MAX), 1023);
    }

    #[test]
    fn tiny_values_quantize_exactly() {
        let v = [f64::from_bits(3), f64::from_bits(1)];
        let g = quantize_group(&v, 4).unwrap();
        assert_eq!(g.dequantize(), v.to_vec());
    }

    #[test]
    fn matrix_pads_last_group() {
        let m = array![[1.0, 2.0, 3.0], [0.5, -0.5, 0.0]];
        let q = BfpMatrix::quantize_rows(m.view(), BfpFormat::new(4, 2).unwrap()).unwrap();
        assert_eq!(q.groups_per_row(), 2);
        assert_eq!(q.mantissas(0, 1), &[12, 0]);
        assert_eq!(q.dequantize(), m);
    }
}
