//! Physics-level model of the modular photonic datapath.
//!
//! A modular multiplication unit (MMU) encodes the stationary operand `w` as
//! a voltage on `ceil(log2 m)` binary-weighted phase shifters and routes
//! light through (digit = 1) or around (digit = 0) each shifter with a pair
//! of MRR switches driven by the streamed operand `x`. With unit phase
//! `2 pi / m` the accumulated optical phase is `(x w mod m) 2 pi / m`. A
//! modular dot product unit (MDPU) chains `g` MMUs so the phases add, and a
//! quadrature detector reads the phase back from two amplitude
//! measurements 90 degrees apart.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which optical path is charged when summing link loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossPath {
    /// Light traverses every phase shifter; the MRR switches are detuned so
    /// they only add their through-port loss.
    #[default]
    WorstCase,
    /// Digits equally likely 0 or 1: half of each shifter plus the mean of
    /// the through and coupled MRR losses.
    Average,
    /// Every shifter and every MRR at its coupled loss. A loose upper bound
    /// that no single input actually produces.
    AllCoupled,
}

/// Photonic device parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSpecs {
    /// Modulation efficiency V_pi * L in V*cm.
    pub v_pi_l: f64,
    /// Phase-shifter propagation loss, dB/mm.
    pub ps_loss_db_per_mm: f64,
    /// Maximum bias voltage, V.
    pub v_bias: f64,
    /// Loss of an MRR when light couples into it, dB.
    pub mrr_loss_db: f64,
    /// Loss of a detuned MRR on the through port, dB.
    pub mrr_through_loss_db: f64,
    /// MRR radius, um.
    pub mrr_radius_um: f64,
    /// 180 degree bend insertion loss, dB.
    pub bend_loss_db: f64,
    /// Bends on the optical channel per MMU.
    pub bends_per_mmu: f64,
    /// Laser-to-chip coupler loss, dB.
    pub coupler_loss_db: f64,
    /// Laser wall-plug efficiency in (0, 1].
    pub laser_efficiency: f64,
    /// Photodetector responsivity, A/W.
    pub responsivity: f64,
    pub loss_path: LossPath,
}

impl Default for DeviceSpecs {
    fn default() -> Self {
        Self {
            v_pi_l: 0.002,
            ps_loss_db_per_mm: 1.6,
            v_bias: 1.08,
            mrr_loss_db: 0.2,
            mrr_through_loss_db: 0.02,
            mrr_radius_um: 10.0,
            bend_loss_db: 0.01,
            bends_per_mmu: 2.0,
            coupler_loss_db: 0.2,
            laser_efficiency: 0.2,
            responsivity: 1.1,
            loss_path: LossPath::WorstCase,
        }
    }
}

impl DeviceSpecs {
    pub fn validate(&self) -> Result<()> {
        let losses = [
            self.ps_loss_db_per_mm,
            self.mrr_loss_db,
            self.mrr_through_loss_db,
            self.bend_loss_db,
            self.bends_per_mmu,
            self.coupler_loss_db,
        ];
        if losses.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(
                "device losses must be finite and non-negative".into(),
            ));
        }
        if !(self.laser_efficiency > 0.0 && self.laser_efficiency <= 1.0) {
            return Err(Error::Config("laser efficiency must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("v_pi_l", self.v_pi_l),
            ("v_bias", self.v_bias),
            ("responsivity", self.responsivity),
            ("mrr_radius_um", self.mrr_radius_um),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Detection noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseParams {
    /// Elementary charge, C.
    pub q_e: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// TIA feedback resistance, ohm.
    pub tia_resistance: f64,
    /// Detection bandwidth, Hz.
    pub bandwidth: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            q_e: 1.602_176_634e-19,
            k_b: 1.380_649e-23,
            temperature: 300.0,
            tia_resistance: 10_000.0,
            bandwidth: 10e9,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.q_e,
            self.k_b,
            self.temperature,
            self.tia_resistance,
            self.bandwidth,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("noise parameters must be positive".into()));
        }
        Ok(())
    }

    /// Shot-noise variance `2 q_e I_D df`, A^2.
    pub fn shot_variance(&self, photocurrent: f64) -> f64 {
        2.0 * self.q_e * photocurrent * self.bandwidth
    }

    /// Thermal-noise variance `4 k_B T df / R`, A^2.
    pub fn thermal_variance(&self) -> f64 {
        4.0 * self.k_b * self.temperature * self.bandwidth / self.tia_resistance
    }

    /// Total per-quadrature noise RMS, A.
    pub fn noise_rms(&self, photocurrent: f64) -> f64 {
        (self.shot_variance(photocurrent) + self.thermal_variance()).sqrt()
    }
}

/// Bits needed to hold a residue: `ceil(log2 m)`.
pub fn residue_bits(m: u64) -> u32 {
    assert!(m >= 1);
    if m <= 1 {
        0
    } else {
        64 - (m - 1).leading_zeros()
    }
}

/// Largest phase an MMU must reach, `ceil((m - 1)^2 / 2) * 2 pi / m`.
pub fn max_phase_shift(m: u64) -> f64 {
    let sq = (m - 1) * (m - 1);
    sq.div_ceil(2) as f64 * TAU / m as f64
}

/// Total phase-shifter length of one MMU in mm:
/// `(V_pi L / V_bias) * (max phase / pi)`.
pub fn shifter_length(m: u64, specs: &DeviceSpecs) -> f64 {
    assert!(m >= 2, "modulus must be at least 2");
    let cm = specs.v_pi_l / specs.v_bias * max_phase_shift(m) / PI;
    cm * 10.0
}

/// Horizontal length of one MMU in mm: shifters plus two MRR switches (one
/// diameter each) per digit.
pub fn mmu_length(m: u64, specs: &DeviceSpecs) -> f64 {
    let mrr_mm = 2.0 * specs.mrr_radius_um * 1e-3;
    shifter_length(m, specs) + 2.0 * residue_bits(m) as f64 * mrr_mm
}

/// Per-digit phase shifts of one MMU, LSB first, in radians. Digit `d` of
/// `x` routes light through a shifter of length `2^d L` biased at `w V_0`.
pub fn digit_phase_shifts(x: u64, w: u64, m: u64) -> Vec<f64> {
    let unit = TAU / m as f64;
    (0..residue_bits(m))
        .map(|d| {
            if (x >> d) & 1 == 1 {
                ((1u64 << d) * w) as f64 * unit
            } else {
                0.0
            }
        })
        .collect()
}

/// Optical phase leaving one MMU, wrapped into `[0, 2 pi)`.
pub fn mmu_phase(x: u64, w: u64, m: u64) -> f64 {
    wrap_phase(digit_phase_shifts(x, w, m).iter().sum())
}

/// Accumulated phase of an MDPU: each MMU adds its digit-serial shifts to
/// the same beam; the result is wrapped into `[0, 2 pi)`.
pub fn mdpu_phase(xs: &[u64], ws: &[u64], m: u64) -> Result<f64> {
    if xs.len() != ws.len() {
        return Err(Error::Shape(format!(
            "MDPU operands differ in length ({} vs {})",
            xs.len(),
            ws.len()
        )));
    }
    if let Some(&r) = xs.iter().chain(ws).find(|&&r| r >= m) {
        return Err(Error::InvalidResidue {
            residue: r,
            modulus: m,
        });
    }
    Ok(mdpu_phase_unchecked(xs, ws, m))
}

#[inline]
pub(crate) fn mdpu_phase_unchecked(xs: &[u64], ws: &[u64], m: u64) -> f64 {
    xs.iter()
        .zip(ws)
        .fold(0.0, |phase, (&x, &w)| mmu_accumulate(phase, x, w, m))
}

/// One MMU stage of an MDPU: adds the digit-serial shifts for `x * w` to
/// the incoming `phase` and wraps. Residues are not range-checked.
#[inline]
pub fn mmu_accumulate(phase: f64, x: u64, w: u64, m: u64) -> f64 {
    let per_digit = w as f64 * (TAU / m as f64);
    let mut shift = 0.0;
    for d in 0..residue_bits(m) {
        if (x >> d) & 1 == 1 {
            shift += (1u64 << d) as f64 * per_digit;
        }
    }
    wrap_phase(phase + shift)
}

#[inline]
pub fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Quadrature phase detector for one modulus at a fixed optical power.
#[derive(Debug, Clone, Copy)]
pub struct PhaseDetector {
    modulus: u64,
    photocurrent: f64,
    noise_rms: f64,
}

impl PhaseDetector {
    /// `power` is the optical power reaching each quadrature photodetector.
    pub fn new(power: f64, m: u64, noise: &NoiseParams, specs: &DeviceSpecs) -> Result<Self> {
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::Config(format!(
                "detector power must be positive, got {power}"
            )));
        }
        if m == 0 {
            return Err(Error::Config("modulus must be positive".into()));
        }
        let photocurrent = specs.responsivity * power;
        Ok(Self {
            modulus: m,
            photocurrent,
            noise_rms: noise.noise_rms(photocurrent),
        })
    }

    pub fn photocurrent(&self) -> f64 {
        self.photocurrent
    }

    pub fn noise_rms(&self) -> f64 {
        self.noise_rms
    }

    /// Signal amplitude over per-quadrature noise RMS.
    pub fn snr(&self) -> f64 {
        self.photocurrent / self.noise_rms
    }

    /// Noiseless read-out of the residue encoded in `phase`.
    pub fn detect(&self, phase: f64) -> u64 {
        let (i_x, i_y) = (
            self.photocurrent * phase.cos(),
            self.photocurrent * phase.sin(),
        );
        self.quantize(i_x, i_y)
    }

    /// Read-out with independent Gaussian shot + thermal noise added to each
    /// quadrature current.
    pub fn detect_noisy<R: Rng + ?Sized>(&self, phase: f64, rng: &mut R) -> u64 {
        let n_x: f64 = rng.sample(StandardNormal);
        let n_y: f64 = rng.sample(StandardNormal);
        let i_x = self.photocurrent * phase.cos() + self.noise_rms * n_x;
        let i_y = self.photocurrent * phase.sin() + self.noise_rms * n_y;
        self.quantize(i_x, i_y)
    }

    #[inline]
    fn quantize(&self, i_x: f64, i_y: f64) -> u64 {
        let theta = wrap_phase(i_y.atan2(i_x));
        let level = (theta * self.modulus as f64 / TAU).round() as u64;
        level % self.modulus
    }
}

/// Noiseless phase detection. See [`PhaseDetector`].
pub fn detect_phase(
    phase: f64,
    power: f64,
    m: u64,
    noise: &NoiseParams,
    specs: &DeviceSpecs,
) -> Result<u64> {
    Ok(PhaseDetector::new(power, m, noise, specs)?.detect(phase))
}

/// Noisy phase detection drawing from the caller's random stream.
pub fn detect_phase_noisy<R: Rng + ?Sized>(
    phase: f64,
    power: f64,
    m: u64,
    noise: &NoiseParams,
    specs: &DeviceSpecs,
    rng: &mut R,
) -> Result<u64> {
    Ok(PhaseDetector::new(power, m, noise, specs)?.detect_noisy(phase, rng))
}

/// Optical loss in dB along one MDPU channel of `g` MMUs for modulus `m`,
/// on the path selected by `specs.loss_path`.
pub fn link_loss(g: usize, m: u64, specs: &DeviceSpecs) -> f64 {
    link_loss_on(g, m, specs, specs.loss_path)
}

pub fn link_loss_on(g: usize, m: u64, specs: &DeviceSpecs, path: LossPath) -> f64 {
    let shifter = specs.ps_loss_db_per_mm * shifter_length(m, specs);
    let mrrs = 2.0 * residue_bits(m) as f64;
    let per_mmu = match path {
        LossPath::WorstCase => shifter + mrrs * specs.mrr_through_loss_db,
        LossPath::Average => {
            0.5 * shifter + mrrs * 0.5 * (specs.mrr_through_loss_db + specs.mrr_loss_db)
        }
        LossPath::AllCoupled => shifter + mrrs * specs.mrr_loss_db,
    };
    let bends = specs.bends_per_mmu * specs.bend_loss_db;
    specs.coupler_loss_db + g as f64 * (per_mmu + bends)
}

/// Smallest optical power at one quadrature detector with
/// `I_D / sqrt(2 q_e I_D df + 4 k_B T df / R) >= m`.
///
/// Squaring gives `I^2 - m^2 a I - m^2 s_T^2 >= 0` with `a = 2 q_e df`,
/// whose positive root is the threshold.
pub fn detector_power_for_snr(m: u64, noise: &NoiseParams, specs: &DeviceSpecs) -> f64 {
    let target = m as f64;
    let a = target * target * 2.0 * noise.q_e * noise.bandwidth;
    let c = target * target * noise.thermal_variance();
    let current = 0.5 * (a + (a * a + 4.0 * c).sqrt());
    current / specs.responsivity
}

/// Wall-plug laser power for one MDPU channel: detector threshold power,
/// inflated by the link loss, doubled for the two quadrature read-outs and
/// divided by the laser efficiency.
pub fn required_laser_power(m: u64, g: usize, specs: &DeviceSpecs, noise: &NoiseParams) -> f64 {
    let detector = detector_power_for_snr(m, noise, specs);
    let optical = detector * db_to_linear(link_loss(g, m, specs));
    2.0 * optical / specs.laser_efficiency
}

/// Inverse of [`required_laser_power`]'s inflation: power reaching each
/// quadrature detector for a given wall-plug laser power.
pub fn detector_power_from_laser(laser_power: f64, m: u64, g: usize, specs: &DeviceSpecs) -> f64 {
    laser_power * specs.laser_efficiency / 2.0 / db_to_linear(link_loss(g, m, specs))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Static encoding-error budget of an `h`-long MDPU, errors added in
/// quadrature: `sqrt(h e_ps^2 + 2 h ceil(log2 m) e_mrr^2)` with
/// `e_ps = 2^{-b_dac}`.
pub fn encoding_error(h: usize, m: u64, dac_bits: u32, eps_mrr: f64) -> f64 {
    let eps_ps = 0.5f64.powi(dac_bits as i32);
    let h = h as f64;
    (h * eps_ps * eps_ps + 2.0 * h * residue_bits(m) as f64 * eps_mrr * eps_mrr).sqrt()
}

/// Encoding error next to the output-precision threshold it must stay under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingBudget {
    pub error: f64,
    /// `2^{-log2 m} = 1 / m`.
    pub threshold: f64,
    pub satisfied: bool,
}

pub fn encoding_budget(h: usize, m: u64, dac_bits: u32, eps_mrr: f64) -> EncodingBudget {
    let error = encoding_error(h, m, dac_bits, eps_mrr);
    let threshold = 1.0 / m as f64;
    EncodingBudget {
        error,
        threshold,
        satisfied: error <= threshold,
    }
}
