//! Self-check suites run by `rnsphot verify`.
//!
//! Each suite checks one module against an independent reference:
//! residue round trips over the whole signed range, BFP error bounds,
//! photonic phase accumulation against integer residue arithmetic, and
//! RNS GEMM against the dequantized product.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bfp::{self, BfpFormat, BfpGroup, Rounding};
use crate::error::{Error, Result};
use crate::gemm::{dequantized_product, rns_gemm, EngineConfig};
use crate::photonic::{self, DeviceSpecs, NoiseParams};
use crate::rns::{self, ModulusSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Rns,
    Bfp,
    Photonic,
    Gemm,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rns" => Ok(Suite::Rns),
            "bfp" => Ok(Suite::Bfp),
            "photonic" => Ok(Suite::Photonic),
            "gemm" => Ok(Suite::Gemm),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite '{other}' (expected rns, bfp, photonic, gemm or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// A known tension worth reporting; does not fail the run.
    Note,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Note => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub check: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random trials per randomized check.
    pub trials: usize,
    /// Test fixture: corrupts the CRT inverse of the first modulus so the
    /// RNS suite must fail.
    pub corrupt_crt: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10_000,
            corrupt_crt: false,
        }
    }
}

struct Checks {
    suite: &'static str,
    out: Vec<CheckResult>,
}

impl Checks {
    fn new(suite: &'static str) -> Self {
        Self {
            suite,
            out: Vec::new(),
        }
    }

    fn push(&mut self, check: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.out.push(CheckResult {
            suite: self.suite.into(),
            check: check.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            detail: detail.into(),
        });
    }

    fn note(&mut self, check: impl Into<String>, detail: impl Into<String>) {
        self.out.push(CheckResult {
            suite: self.suite.into(),
            check: check.into(),
            status: Status::Note,
            detail: detail.into(),
        });
    }
}

pub fn run(suite: Suite, opts: &VerifyOptions) -> Vec<CheckResult> {
    match suite {
        Suite::Rns => rns_suite(opts),
        Suite::Bfp => bfp_suite(opts),
        Suite::Photonic => photonic_suite(opts),
        Suite::Gemm => gemm_suite(opts),
        Suite::All => [Suite::Rns, Suite::Bfp, Suite::Photonic, Suite::Gemm]
            .into_iter()
            .flat_map(|s| run(s, opts))
            .collect(),
    }
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.status != Status::Fail)
}

/// Moduli set for `k`, with the CRT inverse of the first modulus broken
/// when `corrupt` is set.
fn moduli_for(k: u32, corrupt: bool) -> Result<ModulusSet> {
    let set = ModulusSet::special(k)?;
    if !corrupt {
        return Ok(set);
    }
    let mut weights = set.crt_weights().to_vec();
    weights[0].inverse = (weights[0].inverse + 1) % set.moduli()[0];
    Ok(ModulusSet::from_parts_unchecked(
        set.k(),
        set.moduli().to_vec(),
        weights,
    ))
}

/// Round trip of every value in `[-psi, psi]` through both reverse paths.
pub fn exhaustive_round_trip(set: &ModulusSet) -> std::result::Result<u64, String> {
    let psi = set.psi();
    let mut n = 0u64;
    for x in -psi..=psi {
        let r = set.forward_convert(x).map_err(|e| e.to_string())?;
        let crt = set.reverse_convert_crt(&r).map_err(|e| e.to_string())?;
        if crt != x {
            return Err(format!("CRT reverse of {x} gave {crt}"));
        }
        if set.k().is_some() {
            let fast = set.forward_convert_special(x).map_err(|e| e.to_string())?;
            if fast != r {
                return Err(format!(
                    "shift/add forward of {x} gave {fast:?}, expected {r:?}"
                ));
            }
            let sp = set.reverse_convert_special(&r).map_err(|e| e.to_string())?;
            if sp != crt {
                return Err(format!("special reverse of {x} gave {sp}"));
            }
        }
        n += 1;
    }
    Ok(n)
}

fn rns_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut c = Checks::new("rns");
    for k in 2..=6 {
        let set = match moduli_for(k, opts.corrupt_crt) {
            Ok(s) => s,
            Err(e) => {
                c.push(format!("moduli k={k}"), false, e.to_string());
                continue;
            }
        };
        match set.validate() {
            Ok(()) => c.push(
                format!("crt constants k={k}"),
                true,
                format!("moduli {:?}", set.moduli()),
            ),
            Err(e) => c.push(format!("crt constants k={k}"), false, e.to_string()),
        }
        match exhaustive_round_trip(&set) {
            Ok(n) => c.push(format!("round trip k={k}"), true, format!("{n} values")),
            Err(e) => c.push(format!("round trip k={k}"), false, e),
        }
    }
    let table: Vec<(u32, u32)> = [3, 4, 5].iter().map(|&b| (b, rns::min_k(b, 16))).collect();
    c.push(
        "min_k at g=16",
        table == [(3, 4), (4, 5), (5, 6)],
        format!("(b_m, k): {table:?}"),
    );
    c.out
}

fn bfp_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut c = Checks::new("bfp");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for b_m in [1u32, 4, 8, 12] {
        let mut worst = 0.0f64;
        let mut ok = true;
        let mut detail = String::new();
        for _ in 0..opts.trials / 10 {
            let scale = 2f64.powi(rng.gen_range(-20..20));
            let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
            let g = match BfpGroup::quantize(&v, b_m, Rounding::TowardZero) {
                Ok(g) => g,
                Err(e) => {
                    ok = false;
                    detail = e.to_string();
                    break;
                }
            };
            let bound = bfp::quantization_error_bound(&g);
            let limit = (1i64 << b_m) - 1;
            if g.mantissas().iter().any(|m| m.abs() > limit) {
                ok = false;
                detail = "mantissa outside its bit width".into();
                break;
            }
            for (a, q) in v.iter().zip(g.dequantize()) {
                let err = (a - q).abs();
                worst = worst.max(err / bound.max(f64::MIN_POSITIVE));
                if err > bound {
                    ok = false;
                    detail = format!("|{a} - {q}| exceeds the bound {bound}");
                }
            }
        }
        if ok {
            detail = format!("worst error / bound = {worst:.3}");
        }
        c.push(format!("error bound b_m={b_m}"), ok, detail);
    }
    // mantissa dot product scaled by both exponents equals the dot of the
    // dequantized groups
    let mut ok = true;
    for _ in 0..opts.trials / 10 {
        let a: Vec<f64> = (0..16).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (ga, gb) = match (
            BfpGroup::quantize(&a, 4, Rounding::TowardZero),
            BfpGroup::quantize(&b, 4, Rounding::TowardZero),
        ) {
            (Ok(x), Ok(y)) => (x, y),
            _ => {
                ok = false;
                break;
            }
        };
        let exact: f64 = ga
            .dequantize()
            .iter()
            .zip(gb.dequantize())
            .map(|(x, y)| x * y)
            .sum();
        let via = bfp::ldexp(
            bfp::mantissa_dot(&ga, &gb) as f64,
            ga.scale_exponent() + gb.scale_exponent(),
        );
        ok &= exact == via;
    }
    c.push(
        "mantissa dot",
        ok,
        "integer dot times 2^(e_a + e_b) equals the dequantized dot",
    );
    let fmt = BfpFormat::new(4, 16);
    c.push(
        "format validation",
        fmt.is_ok() && BfpFormat::new(0, 16).is_err(),
        "b_m = 0 rejected",
    );
    c.out
}

fn photonic_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut c = Checks::new("photonic");
    let specs = DeviceSpecs::default();
    let noise = NoiseParams::default();
    let len = photonic::shifter_length(33, &specs);
    c.push(
        "shifter length m=33",
        (len - 0.57).abs() <= 0.01,
        format!("{len:.4} mm"),
    );
    let mmu = photonic::mmu_length(33, &specs);
    c.push(
        "mmu length m=33",
        (mmu - 0.8).abs() <= 0.05,
        format!("{mmu:.4} mm"),
    );
    let units: f64 = photonic::digit_phase_shifts(0b101, 0b011, 33)
        .iter()
        .sum::<f64>()
        / (TAU / 33.0);
    c.push(
        "mmu worked example",
        (units - 15.0).abs() < 1e-9,
        format!("x=101b, w=011b accumulates {units:.6} unit phases"),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    for m in [31u64, 32, 33] {
        let power = photonic::detector_power_for_snr(m, &noise, &specs) * 4.0;
        let det = match photonic::PhaseDetector::new(power, m, &noise, &specs) {
            Ok(d) => d,
            Err(e) => {
                c.push(format!("detector m={m}"), false, e.to_string());
                continue;
            }
        };
        let mut bad = None;
        // every pair of length <= 2
        'outer: for x0 in 0..m {
            for w0 in 0..m {
                for x1 in 0..m {
                    for w1 in 0..m {
                        let xs = [x0, x1];
                        let ws = [w0, w1];
                        let got = det.detect(photonic::mdpu_phase(&xs, &ws, m).unwrap_or(f64::NAN));
                        if got != rns::modular_dot(&xs, &ws, m) {
                            bad = Some(format!("{xs:?} . {ws:?}"));
                            break 'outer;
                        }
                    }
                }
            }
        }
        for _ in 0..opts.trials {
            if bad.is_some() {
                break;
            }
            let xs: Vec<u64> = (0..16).map(|_| rng.gen_range(0..m)).collect();
            let ws: Vec<u64> = (0..16).map(|_| rng.gen_range(0..m)).collect();
            let got = det.detect(photonic::mdpu_phase(&xs, &ws, m).unwrap_or(f64::NAN));
            if got != rns::modular_dot(&xs, &ws, m) {
                bad = Some(format!("{xs:?} . {ws:?}"));
            }
        }
        c.push(
            format!("phase detection m={m}"),
            bad.is_none(),
            bad.unwrap_or_else(|| {
                format!(
                    "all length-2 pairs and {} random length-16 vectors",
                    opts.trials
                )
            }),
        );
    }
    let b = photonic::encoding_budget(16, 33, 8, 0.003);
    c.note(
        "encoding error",
        format!(
            "error {:.4} vs 1/m threshold {:.4}: {}",
            b.error,
            b.threshold,
            if b.satisfied {
                "within budget"
            } else {
                "exceeds the threshold"
            }
        ),
    );
    c.out
}

fn gemm_suite(opts: &VerifyOptions) -> Vec<CheckResult> {
    let mut c = Checks::new("gemm");
    let cfg = EngineConfig::new(4, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e33);
    let runs = (opts.trials / 100).max(1);
    let mut failure = None;
    for i in 0..runs {
        let (m, k, n) = (
            rng.gen_range(1..=48),
            rng.gen_range(1..=80),
            rng.gen_range(1..=48),
        );
        let a = Array2::from_shape_fn((m, k), |_| rng.gen_range(-2.0..2.0));
        let b = Array2::from_shape_fn((k, n), |_| rng.gen_range(-2.0..2.0));
        let got = rns_gemm(a.view(), b.view(), &cfg);
        let want = dequantized_product(a.view(), b.view(), cfg.format());
        match (got, want) {
            (Ok(g), Ok(w)) if g.output == w => {}
            (Ok(_), Ok(_)) => {
                failure = Some(format!(
                    "run {i} ({m}x{k}x{n}) differs from the dequantized product"
                ));
                break;
            }
            (Err(e), _) | (_, Err(e)) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    c.push(
        "ideal exactness",
        failure.is_none(),
        failure.unwrap_or_else(|| format!("{runs} random GEMMs bit-identical")),
    );
    let bad = EngineConfig::new(4, 16).with_k(4).validate();
    c.push(
        "range budget",
        matches!(bad, Err(Error::RangeBudget { .. })),
        bad.err()
            .map(|e| e.to_string())
            .unwrap_or_else(|| "k=4 accepted".into()),
    );
    c.out
}
