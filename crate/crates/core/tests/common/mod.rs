//! Reference implementations used only by tests. Written from the
//! definitions, sharing no code with the library.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `floor(log2 |x|)` by search over powers of two.
pub fn floor_log2_ref(x: f64) -> i32 {
    let a = x.abs();
    let mut e = a.log2().floor() as i32;
    while 2f64.powi(e) > a {
        e -= 1;
    }
    while 2f64.powi(e + 1) <= a {
        e += 1;
    }
    e
}

/// Shared exponent and mantissas of one group, truncating toward zero.
pub fn quantize_ref(values: &[f64], b_m: u32) -> (i32, Vec<i64>) {
    let nonzero: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
    if nonzero.is_empty() {
        return (0, vec![0; values.len()]);
    }
    let e = nonzero.iter().map(|v| floor_log2_ref(*v)).max().unwrap();
    let scale = 2f64.powi(e - (b_m as i32 - 1));
    let limit = (1i64 << b_m) - 1;
    let m = values
        .iter()
        .map(|v| ((v / scale).trunc() as i64).clamp(-limit, limit))
        .collect();
    (e, m)
}

/// Exact `sum_i a_i b_i` of BFP-dequantized operands where `a` is grouped
/// along rows and `b` along columns, returned rounded once to `f64`.
pub fn dequantized_product_ref(
    a: &Array2<f64>,
    b: &Array2<f64>,
    b_m: u32,
    g: usize,
) -> Array2<f64> {
    let (m, k) = a.dim();
    let n = b.ncols();
    let groups = k.div_ceil(g);
    // (scale exponent, mantissas) per row group of a and per column group of b
    let qa: Vec<Vec<(i32, Vec<i64>)>> = (0..m)
        .map(|i| {
            (0..groups)
                .map(|t| {
                    let vals: Vec<f64> = (t * g..((t + 1) * g).min(k)).map(|c| a[[i, c]]).collect();
                    let (e, mant) = quantize_ref(&vals, b_m);
                    (e - (b_m as i32 - 1), mant)
                })
                .collect()
        })
        .collect();
    let qb: Vec<Vec<(i32, Vec<i64>)>> = (0..n)
        .map(|j| {
            (0..groups)
                .map(|t| {
                    let vals: Vec<f64> = (t * g..((t + 1) * g).min(k)).map(|c| b[[c, j]]).collect();
                    let (e, mant) = quantize_ref(&vals, b_m);
                    (e - (b_m as i32 - 1), mant)
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn((m, n), |(i, j)| {
        let terms: Vec<(i128, i32)> = (0..groups)
            .map(|t| {
                let (ea, ma) = &qa[i][t];
                let (eb, mb) = &qb[j][t];
                let dot: i128 = ma
                    .iter()
                    .zip(mb)
                    .map(|(x, y)| (*x as i128) * (*y as i128))
                    .sum();
                (dot, ea + eb)
            })
            .filter(|(d, _)| *d != 0)
            .collect();
        exact_sum(&terms)
    })
}

/// `sum v_i 2^{e_i}` with a single rounding. Panics if the exponent spread
/// does not fit the fixed-point window.
pub fn exact_sum(terms: &[(i128, i32)]) -> f64 {
    let Some(lo) = terms.iter().map(|t| t.1).min() else {
        return 0.0;
    };
    let hi = terms.iter().map(|t| t.1).max().unwrap();
    assert!(
        hi - lo <= 60,
        "oracle window too small for exponent spread {}",
        hi - lo
    );
    let total: i128 = terms.iter().map(|(v, e)| v << (e - lo)).sum();
    // i128 -> f64 rounds to nearest; the power-of-two scale is exact here
    (total as f64) * 2f64.powi(lo)
}

/// CRT by brute force: the unique x in [0, M) with x = r_i mod m_i, mapped to
/// the signed range.
pub fn crt_bruteforce(residues: &[u64], moduli: &[u64]) -> i64 {
    let big: u64 = moduli.iter().product();
    // step through candidates congruent modulo the largest modulus
    let (idx, &step) = moduli.iter().enumerate().max_by_key(|(_, m)| **m).unwrap();
    let mut x = residues[idx];
    while x < big {
        if moduli.iter().zip(residues).all(|(m, r)| x % m == *r) {
            let psi = (big - 1) / 2;
            return if x > psi {
                x as i64 - big as i64
            } else {
                x as i64
            };
        }
        x += step;
    }
    panic!("no CRT solution");
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
