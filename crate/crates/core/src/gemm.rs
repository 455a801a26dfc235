//! Tiled RNS GEMM over block-floating-point operands.
//!
//! `C = A B` is evaluated tile by tile. Rows of `A` and columns of `B` are
//! quantized into BFP groups of `g` elements along the shared dimension,
//! so every `K`-tile is one pair of groups. Mantissas are converted to
//! residues, multiplied and accumulated per modulus (exactly, or through the
//! photonic phase model with detection noise), reverse converted, rescaled
//! by the two shared exponents and accumulated across `K`-tiles.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bfp::{ldexp, BfpFormat, BfpMatrix, Rounding};
use crate::error::{Error, Result};
use crate::photonic::{self, DeviceSpecs, NoiseParams, PhaseDetector};
use crate::rns::{self, ModulusSet};

/// How modular dot products are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Exact integer residue arithmetic.
    #[default]
    Ideal,
    /// Optical phase accumulation followed by noisy quadrature detection.
    Noisy,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "noisy" => Ok(Mode::Noisy),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected ideal or noisy)"
            ))),
        }
    }
}

/// Engine parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub mantissa_bits: u32,
    pub group_size: usize,
    /// Special moduli-set parameter.
    pub k: u32,
    /// MDPUs per MMVMU (tile height).
    pub rows: usize,
    pub rounding: Rounding,
    pub mode: Mode,
    /// Laser power as a multiple of the minimum required power.
    pub power_margin: f64,
    pub seed: u64,
    pub device: DeviceSpecs,
    pub noise: NoiseParams,
}

impl EngineConfig {
    /// Config with the smallest `k` whose range covers `(b_m, g)`.
    pub fn new(mantissa_bits: u32, group_size: usize) -> Self {
        Self {
            mantissa_bits,
            group_size,
            k: rns::min_k(mantissa_bits, group_size),
            rows: 32,
            rounding: Rounding::default(),
            mode: Mode::Ideal,
            power_margin: 1.0,
            seed: 0,
            device: DeviceSpecs::default(),
            noise: NoiseParams::default(),
        }
    }

    pub fn with_k(mut self, k: u32) -> Self {
        self.k = k;
        self
    }

    pub fn with_rows(mut self, rows: usize) -> Self {
        self.rows = rows;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_noise(mut self, power_margin: f64, seed: u64) -> Self {
        self.mode = Mode::Noisy;
        self.power_margin = power_margin;
        self.seed = seed;
        self
    }

    pub fn format(&self) -> BfpFormat {
        BfpFormat {
            mantissa_bits: self.mantissa_bits,
            group_size: self.group_size,
            rounding: self.rounding,
        }
    }

    /// Checks the BFP format, the moduli set and the range inequality.
    pub fn validate(&self) -> Result<()> {
        self.format().validate()?;
        if self.rows == 0 {
            return Err(Error::Config("tile rows must be positive".into()));
        }
        let set = ModulusSet::special(self.k)?;
        if !rns::range_sufficient(self.k, self.mantissa_bits, self.group_size) {
            let g = self.group_size;
            return Err(Error::RangeBudget {
                b_m: self.mantissa_bits,
                g,
                k: self.k,
                required: 2.0 * (self.mantissa_bits as f64 + 1.0) + (g as f64).log2() - 1.0,
                available: set.range_bits(),
                min_k: rns::min_k(self.mantissa_bits, g),
            });
        }
        if self.mode == Mode::Noisy {
            if !(self.power_margin.is_finite() && self.power_margin > 0.0) {
                return Err(Error::Config("power margin must be positive".into()));
            }
            self.device.validate()?;
            self.noise.validate()?;
        }
        Ok(())
    }
}

/// Stationary-operand tiling of an `M x K` operand onto `R x g` arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub rows: usize,
    pub cols: usize,
    /// Vectors streamed through each tile.
    pub streamed: usize,
    pub tile_rows: usize,
    pub tile_cols: usize,
    pub row_tiles: usize,
    pub col_tiles: usize,
    pub pad_rows: usize,
    pub pad_cols: usize,
}

impl TilePlan {
    pub fn tiles(&self) -> usize {
        self.row_tiles * self.col_tiles
    }

    /// Fraction of the provisioned tile area holding operand elements.
    pub fn useful_fraction(&self) -> f64 {
        let slots = self.tiles() * self.tile_rows * self.tile_cols;
        if slots == 0 {
            return 0.0;
        }
        (self.rows * self.cols) as f64 / slots as f64
    }
}

/// Tiles the `M x K` stationary operand into `R x g` tiles.
pub fn plan_tiles(m: usize, k: usize, n: usize, r: usize, g: usize) -> Result<TilePlan> {
    if r == 0 || g == 0 {
        return Err(Error::Config("tile dimensions must be positive".into()));
    }
    let row_tiles = m.div_ceil(r);
    let col_tiles = k.div_ceil(g);
    Ok(TilePlan {
        rows: m,
        cols: k,
        streamed: n,
        tile_rows: r,
        tile_cols: g,
        row_tiles,
        col_tiles,
        pad_rows: row_tiles * r - m,
        pad_cols: col_tiles * g - k,
    })
}

/// Convolution layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub h_out: usize,
    pub w_out: usize,
}

/// Fully connected layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearShape {
    pub inputs: usize,
    pub outputs: usize,
}

/// GEMM dims `(M, K, N)` of a convolution lowered by im2col:
/// `M = C_out`, `K = C_in k_h k_w`, `N = H_out W_out batch`.
pub fn conv_as_gemm(layer: &ConvShape, batch: usize) -> (usize, usize, usize) {
    (
        layer.c_out,
        layer.c_in * layer.k_h * layer.k_w,
        layer.h_out * layer.w_out * batch,
    )
}

/// GEMM dims `(out, in, batch)` of a linear layer.
pub fn linear_as_gemm(layer: &LinearShape, batch: usize) -> (usize, usize, usize) {
    (layer.outputs, layer.inputs, batch)
}

/// Quantization error of one operand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantStats {
    pub max_abs_error: f64,
    pub rms_error: f64,
}

impl QuantStats {
    fn between(original: ArrayView2<'_, f64>, quantized: &Array2<f64>) -> Self {
        let n = original.len();
        if n == 0 {
            return Self::default();
        }
        let (mut max, mut sq) = (0.0f64, 0.0);
        for (a, b) in original.iter().zip(quantized) {
            let d = (a - b).abs();
            max = max.max(d);
            sq += d * d;
        }
        Self {
            max_abs_error: max,
            rms_error: (sq / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmDiagnostics {
    pub plan: TilePlan,
    pub moduli: Vec<u64>,
    /// Residue read-outs performed (noisy mode only).
    pub residue_detections: u64,
    /// Read-outs that differ from the exact residue.
    pub residue_mismatches: u64,
    /// Mismatches per stationary tile, row-tile major.
    pub tile_mismatches: Vec<u64>,
    /// Output elements whose partials spanned too many binades for exact
    /// fixed-point accumulation and were summed in `f64` instead.
    pub inexact_accumulations: u64,
    pub quant_a: QuantStats,
    pub quant_b: QuantStats,
}

impl GemmDiagnostics {
    pub fn mismatch_rate(&self) -> f64 {
        if self.residue_detections == 0 {
            0.0
        } else {
            self.residue_mismatches as f64 / self.residue_detections as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GemmResult {
    pub output: Array2<f64>,
    pub diagnostics: GemmDiagnostics,
}

/// Reusable engine: the moduli set and detectors are built once.
#[derive(Debug, Clone)]
pub struct GemmEngine {
    cfg: EngineConfig,
    set: ModulusSet,
    detectors: Vec<PhaseDetector>,
}

impl GemmEngine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let set = ModulusSet::special(cfg.k)?;
        let detectors = match cfg.mode {
            Mode::Ideal => Vec::new(),
            Mode::Noisy => set
                .moduli()
                .iter()
                .map(|&m| {
                    let laser = cfg.power_margin
                        * photonic::required_laser_power(
                            m,
                            cfg.group_size,
                            &cfg.device,
                            &cfg.noise,
                        );
                    let power =
                        photonic::detector_power_from_laser(laser, m, cfg.group_size, &cfg.device);
                    PhaseDetector::new(power, m, &cfg.noise, &cfg.device)
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            cfg,
            set,
            detectors,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn moduli_set(&self) -> &ModulusSet {
        &self.set
    }

    /// Computes `A B`.
    pub fn gemm(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<GemmResult> {
        self.gemm_seeded(a, b, self.cfg.seed)
    }

    /// Computes `A B` drawing detection noise from `seed` instead of the
    /// configured seed. Ideal mode ignores it.
    pub fn gemm_seeded(
        &self,
        a: ArrayView2<'_, f64>,
        b: ArrayView2<'_, f64>,
        seed: u64,
    ) -> Result<GemmResult> {
        let (m, k) = a.dim();
        let (k2, n) = b.dim();
        if k != k2 {
            return Err(Error::Shape(format!(
                "inner dimensions differ: {m}x{k} times {k2}x{n}"
            )));
        }
        let format = self.cfg.format();
        let g = format.group_size;
        let plan = plan_tiles(m, k, n, self.cfg.rows, g)?;
        let qa = BfpMatrix::quantize_rows(a, format)?;
        let qb = BfpMatrix::quantize_rows(b.t(), format)?;
        let groups = qa.groups_per_row();
        let width = groups * g;

        let moduli = self.set.moduli().to_vec();
        let res_a = residues(&qa, &moduli, m, width);
        let res_b = residues(&qb, &moduli, n, width);
        debug_assert!(self.worst_case_dot() <= self.set.psi() as u128);

        let mut output = vec![0.0f64; m * n];
        let row_stats: Vec<RowStats> = output
            .par_chunks_mut(n.max(1))
            .enumerate()
            .map(|(i, out_row)| {
                let mut stats = RowStats::new(groups);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let mut partials: Vec<(i64, i32)> = Vec::with_capacity(groups);
                let mut detected = vec![0u64; moduli.len()];
                for j in 0..n {
                    partials.clear();
                    for t in 0..groups {
                        let span = t * g..(t + 1) * g;
                        for (mi, &md) in moduli.iter().enumerate() {
                            let wa = &res_a[mi][i * width..][span.clone()];
                            let xb = &res_b[mi][j * width..][span.clone()];
                            let exact = rns::modular_dot(wa, xb, md);
                            detected[mi] = match self.cfg.mode {
                                Mode::Ideal => exact,
                                Mode::Noisy => {
                                    let phase = photonic::mdpu_phase_unchecked(xb, wa, md);
                                    let r = self.detectors[mi].detect_noisy(phase, &mut rng);
                                    stats.detections += 1;
                                    if r != exact {
                                        stats.mismatches[t] += 1;
                                    }
                                    r
                                }
                            };
                        }
                        let value = self.reverse(&detected);
                        if value != 0 {
                            partials
                                .push((value, qa.scale_exponent(i, t) + qb.scale_exponent(j, t)));
                        }
                    }
                    let (sum, exact) = accumulate(&partials);
                    if !exact {
                        stats.inexact += 1;
                    }
                    out_row[j] = sum;
                }
                stats
            })
            .collect();

        let output =
            Array2::from_shape_vec((m, n), output).expect("output buffer has m*n elements");
        let mut tile_mismatches = vec![0u64; plan.tiles()];
        let (mut detections, mut inexact) = (0, 0);
        for (i, s) in row_stats.iter().enumerate() {
            detections += s.detections;
            inexact += s.inexact;
            for (t, &c) in s.mismatches.iter().enumerate() {
                tile_mismatches[(i / self.cfg.rows) * plan.col_tiles + t] += c;
            }
        }
        let diagnostics = GemmDiagnostics {
            plan,
            moduli,
            residue_detections: detections,
            residue_mismatches: tile_mismatches.iter().sum(),
            tile_mismatches,
            inexact_accumulations: inexact,
            quant_a: QuantStats::between(a, &qa.dequantize()),
            quant_b: QuantStats::between(b.t(), &qb.dequantize()),
        };
        Ok(GemmResult {
            output,
            diagnostics,
        })
    }

    #[inline]
    fn reverse(&self, residues: &[u64]) -> i64 {
        match self.set.k() {
            Some(k) => self.set.reverse_special_unchecked(residues, k),
            None => self.set.reverse_crt_unchecked(residues),
        }
    }

    /// Largest magnitude a tile dot product can reach: `g (2^b_m - 1)^2`.
    pub fn worst_case_dot(&self) -> u128 {
        let max = self.cfg.format().max_mantissa() as u128;
        self.cfg.group_size as u128 * max * max
    }
}

struct RowStats {
    detections: u64,
    mismatches: Vec<u64>,
    inexact: u64,
}

impl RowStats {
    fn new(groups: usize) -> Self {
        Self {
            detections: 0,
            mismatches: vec![0; groups],
            inexact: 0,
        }
    }
}

/// Per-modulus residues of every padded mantissa row, row-major.
fn residues(q: &BfpMatrix, moduli: &[u64], rows: usize, width: usize) -> Vec<Vec<u64>> {
    let g = q.format().group_size;
    moduli
        .iter()
        .map(|&md| {
            let mut out = vec![0u64; rows * width];
            for r in 0..rows {
                for t in 0..q.groups_per_row() {
                    let dst = &mut out[r * width + t * g..r * width + (t + 1) * g];
                    for (d, &v) in dst.iter_mut().zip(q.mantissas(r, t)) {
                        *d = v.rem_euclid(md as i64) as u64;
                    }
                }
            }
            out
        })
        .collect()
}

/// Sums `value * 2^exp` terms. Exact (one final rounding) when the terms fit
/// a 127-bit fixed-point window, otherwise an `f64` running sum in order.
/// Returns the sum and whether it was exact.
pub fn accumulate(terms: &[(i64, i32)]) -> (f64, bool) {
    let Some(lo) = terms.iter().map(|t| t.1).min() else {
        return (0.0, true);
    };
    let hi = terms.iter().map(|t| t.1).max().unwrap_or(lo);
    let headroom = 64 - (terms.len() as u64).leading_zeros() as i64;
    if (hi - lo) as i64 + 64 + headroom <= 126 {
        let total: i128 = terms.iter().map(|&(v, e)| (v as i128) << (e - lo)).sum();
        (scale_i128(total, lo), true)
    } else {
        (terms.iter().map(|&(v, e)| ldexp(v as f64, e)).sum(), false)
    }
}

/// `v * 2^e` with a single rounding of `v` to `f64`.
fn scale_i128(v: i128, e: i32) -> f64 {
    // `as f64` rounds to nearest; scaling by a power of two is exact unless
    // the result leaves the normal range.
    ldexp(v as f64, e)
}

/// Convenience wrapper: builds an engine and runs one GEMM.
pub fn rns_gemm(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    cfg: &EngineConfig,
) -> Result<GemmResult> {
    GemmEngine::new(*cfg)?.gemm(a, b)
}

/// Exact product of the BFP-dequantized operands, rounded once per element.
/// Used as the reference for ideal-mode results.
pub fn dequantized_product(
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    format: BfpFormat,
) -> Result<Array2<f64>> {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    if k != k2 {
        return Err(Error::Shape(format!(
            "inner dimensions differ: {m}x{k} times {k2}x{n}"
        )));
    }
    let qa = BfpMatrix::quantize_rows(a, format)?;
    let qb = BfpMatrix::quantize_rows(b.t(), format)?;
    let g = format.group_size;
    let mut out = Array2::zeros((m, n));
    let mut terms = Vec::with_capacity(k);
    for i in 0..m {
        for j in 0..n {
            terms.clear();
            for c in 0..k {
                let (t, o) = (c / g, c % g);
                let p = qa.mantissas(i, t)[o] * qb.mantissas(j, t)[o];
                if p != 0 {
                    terms.push((p, qa.scale_exponent(i, t) + qb.scale_exponent(j, t)));
                }
            }
            out[[i, j]] = accumulate(&terms).0;
        }
    }
    Ok(out)
}

/// Plain `f64` matrix product.
pub fn full_precision(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    a.dot(&b)
}
