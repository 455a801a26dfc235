//! Accelerator description consumed by the cost model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonic::{DeviceSpecs, NoiseParams};
use crate::rns::{self, ModulusSet};

/// Array geometry and timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    /// RNS-MMVMUs (one MMVMU per modulus each).
    pub units: usize,
    /// MDPUs per MMVMU.
    pub rows: usize,
    /// MMUs per MDPU, equal to the BFP group size.
    pub group_size: usize,
    pub mantissa_bits: u32,
    /// Special moduli-set parameter; `None` picks the smallest valid one.
    pub k: Option<u32>,
    /// Photonic clock period.
    pub t_clk_ns: f64,
    /// Phase-shifter reprogramming time per tile.
    pub t_prog_ns: f64,
    pub digital_clock_ghz: f64,
    /// Time-interleaved copies of each digital block.
    pub interleave: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            units: 8,
            rows: 32,
            group_size: 16,
            mantissa_bits: 4,
            k: None,
            t_clk_ns: 0.1,
            t_prog_ns: 5.0,
            digital_clock_ghz: 1.0,
            interleave: 10,
        }
    }
}

/// Data converters. Energies for widths other than the reference width
/// scale by the per-bit factor per bit of difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConverterConfig {
    pub dac_bits: u32,
    pub dac_power_mw: f64,
    pub dac_sample_rate_gsps: f64,
    pub dac_per_bit_factor: f64,
    pub dac_area_mm2: f64,
    /// DACs per MMVMU; `None` derives the count that programs a tile
    /// within the reprogramming window.
    pub dacs_per_mmvmu: Option<usize>,
    pub adc_bits: u32,
    pub adc_power_mw: f64,
    pub adc_sample_rate_gsps: f64,
    pub adc_per_bit_factor: f64,
    pub adc_area_mm2: f64,
    /// One ADC per detected quadrature.
    pub adcs_per_mdpu: usize,
    /// Replaces the power / sample-rate energy of a reference-width
    /// conversion, in pJ.
    pub adc_energy_override_pj: Option<f64>,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        Self {
            dac_bits: 6,
            dac_power_mw: 136.0,
            dac_sample_rate_gsps: 20.0,
            dac_per_bit_factor: 2.0,
            dac_area_mm2: 0.072,
            dacs_per_mmvmu: None,
            adc_bits: 6,
            adc_power_mw: 23.0,
            adc_sample_rate_gsps: 24.0,
            adc_per_bit_factor: 4.0,
            adc_area_mm2: 0.03,
            adcs_per_mdpu: 2,
            adc_energy_override_pj: None,
        }
    }
}

impl ConverterConfig {
    /// Energy of one DAC conversion at `bits`, pJ.
    pub fn dac_energy_pj(&self, bits: u32) -> f64 {
        let base = self.dac_power_mw / self.dac_sample_rate_gsps;
        scale_bits(base, self.dac_per_bit_factor, bits, self.dac_bits)
    }

    /// Energy of one ADC conversion at `bits`, pJ.
    pub fn adc_energy_pj(&self, bits: u32) -> f64 {
        let base = self
            .adc_energy_override_pj
            .unwrap_or(self.adc_power_mw / self.adc_sample_rate_gsps);
        scale_bits(base, self.adc_per_bit_factor, bits, self.adc_bits)
    }
}

fn scale_bits(base: f64, factor: f64, bits: u32, reference: u32) -> f64 {
    base * factor.powi(bits as i32 - reference as i32)
}

/// Digital blocks, memory and per-unit areas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DigitalConfig {
    pub bfp_fp_pj: f64,
    pub bns_rns_pj: f64,
    pub rns_bns_pj: f64,
    pub tia_fj_per_bit: f64,
    /// One full-precision read-accumulate.
    pub accumulator_pj: f64,
    /// One 32-bit SRAM access.
    pub sram_pj_per_access: f64,
    /// Static switching power of one electro-optic MRR.
    pub mrr_switch_power_pw: f64,
    /// Phase-shifter programming energy per encoded bit.
    pub ps_tuning_fj_per_bit: f64,
    pub bfp_fp_area_um2: f64,
    pub bns_rns_area_um2: f64,
    pub rns_bns_area_um2: f64,
    pub accumulator_area_um2: f64,
    pub tia_area_um2: f64,
    /// Conversion units of each type per RNS-MMVMU.
    pub conversion_units_per_unit: usize,
    pub sram_area_mm2: f64,
}

impl Default for DigitalConfig {
    fn default() -> Self {
        Self {
            bfp_fp_pj: 1.32,
            bns_rns_pj: 0.17,
            rns_bns_pj: 0.48,
            tia_fj_per_bit: 57.0,
            accumulator_pj: 0.5,
            sram_pj_per_access: 5.27,
            mrr_switch_power_pw: 0.3,
            ps_tuning_fj_per_bit: 2.0,
            bfp_fp_area_um2: 1318.4,
            bns_rns_area_um2: 231.7,
            rns_bns_area_um2: 1545.8,
            accumulator_area_um2: 800.0,
            tia_area_um2: 100.0,
            conversion_units_per_unit: 10,
            sram_area_mm2: 183.8,
        }
    }
}

/// Photonic floorplan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    /// Vertical pitch of one MMU row; area of an MMU is its length times
    /// this pitch.
    pub mmu_pitch_um: f64,
    /// Area of one photodetector with its routing.
    pub detector_area_um2: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            mmu_pitch_um: 24.73,
            detector_area_um2: 100.0,
        }
    }
}

/// Complete accelerator description.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceleratorConfig {
    pub array: ArrayConfig,
    pub device: DeviceSpecs,
    pub noise: NoiseParams,
    pub converters: ConverterConfig,
    pub digital: DigitalConfig,
    pub layout: LayoutConfig,
}

impl AcceleratorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Effective `k`: the configured one, or the smallest valid one.
    pub fn k(&self) -> u32 {
        self.array
            .k
            .unwrap_or_else(|| rns::min_k(self.array.mantissa_bits, self.array.group_size))
    }

    pub fn moduli(&self) -> Result<ModulusSet> {
        ModulusSet::special(self.k())
    }

    pub fn t_clk_ps(&self) -> u64 {
        (self.array.t_clk_ns * 1000.0).round() as u64
    }

    pub fn t_prog_ps(&self) -> u64 {
        (self.array.t_prog_ns * 1000.0).round() as u64
    }

    /// DACs per MMVMU: explicit, or `ceil(R g / (sample rate * t_prog))`.
    pub fn dacs_per_mmvmu(&self) -> usize {
        self.converters.dacs_per_mmvmu.unwrap_or_else(|| {
            let per_window = self.converters.dac_sample_rate_gsps * self.array.t_prog_ns;
            let cells = (self.array.rows * self.array.group_size) as f64;
            ((cells / per_window).ceil() as usize).max(1)
        })
    }

    /// MACs each RNS-MMVMU completes per photonic cycle.
    pub fn macs_per_cycle(&self) -> usize {
        self.array.rows * self.array.group_size
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.array;
        if a.units == 0 || a.rows == 0 || a.group_size == 0 || a.interleave == 0 {
            return Err(Error::Config(
                "array dims, unit count and interleave must be positive".into(),
            ));
        }
        for (name, v) in [
            ("t_clk_ns", a.t_clk_ns),
            ("t_prog_ns", a.t_prog_ns),
            ("digital_clock_ghz", a.digital_clock_ghz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, ns) in [("t_clk_ns", a.t_clk_ns), ("t_prog_ns", a.t_prog_ns)] {
            let ps = ns * 1000.0;
            if (ps - ps.round()).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "{name} must be a whole number of picoseconds"
                )));
            }
        }
        // Interleaved digital blocks must keep up with the photonic clock.
        let photonic_ghz = 1.0 / a.t_clk_ns;
        if a.interleave as f64 * a.digital_clock_ghz < photonic_ghz * (1.0 - 1e-9) {
            return Err(Error::Config(format!(
                "interleave {} x {} GHz cannot sustain the {photonic_ghz} GHz photonic clock",
                a.interleave, a.digital_clock_ghz
            )));
        }
        let k = self.k();
        ModulusSet::special(k)?;
        if !rns::range_sufficient(k, a.mantissa_bits, a.group_size) {
            return Err(Error::RangeBudget {
                b_m: a.mantissa_bits,
                g: a.group_size,
                k,
                required: 2.0 * (a.mantissa_bits as f64 + 1.0) + (a.group_size as f64).log2() - 1.0,
                available: ModulusSet::special(k)?.range_bits(),
                min_k: rns::min_k(a.mantissa_bits, a.group_size),
            });
        }
        self.device.validate()?;
        self.noise.validate()?;
        let c = &self.converters;
        let d = &self.digital;
        let non_negative = [
            c.dac_power_mw,
            c.dac_area_mm2,
            c.adc_power_mw,
            c.adc_area_mm2,
            d.bfp_fp_pj,
            d.bns_rns_pj,
            d.rns_bns_pj,
            d.tia_fj_per_bit,
            d.accumulator_pj,
            d.sram_pj_per_access,
            d.mrr_switch_power_pw,
            d.ps_tuning_fj_per_bit,
            d.bfp_fp_area_um2,
            d.bns_rns_area_um2,
            d.rns_bns_area_um2,
            d.accumulator_area_um2,
            d.tia_area_um2,
            d.sram_area_mm2,
            self.layout.mmu_pitch_um,
            self.layout.detector_area_um2,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(
                "energies, powers and areas must be finite and non-negative".into(),
            ));
        }
        let positive = [
            c.dac_sample_rate_gsps,
            c.adc_sample_rate_gsps,
            c.dac_per_bit_factor,
            c.adc_per_bit_factor,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "sample rates and per-bit factors must be positive".into(),
            ));
        }
        if let Some(e) = c.adc_energy_override_pj {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::Config(
                    "ADC energy override must be non-negative".into(),
                ));
            }
        }
        Ok(())
    }
}
