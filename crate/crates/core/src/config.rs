//! Run configuration: one TOML document feeding every command.
//!
//! ```toml
//! [engine]
//! mantissa_bits = 4
//! group_size = 16
//! # k omitted: smallest k whose range covers the BFP products
//!
//! [workload]
//! source = "alexnet"
//! ```
//!
//! Every section is optional and falls back to the reference values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bfp::Rounding;
use crate::error::{Error, Result};
use crate::gemm::{EngineConfig, Mode};
use crate::perf::config::{ArrayConfig, ConverterConfig, DigitalConfig, LayoutConfig};
use crate::perf::{AcceleratorConfig, SystolicConfig, WorkloadSpec};
use crate::photonic::{DeviceSpecs, NoiseParams};
use crate::rns;
use crate::training::data::DatasetConfig;
use crate::training::NetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub mantissa_bits: u32,
    pub group_size: usize,
    /// `None` selects the smallest valid `k`.
    pub k: Option<u32>,
    /// MDPUs per MMVMU.
    pub rows: usize,
    /// RNS-MMVMUs.
    pub units: usize,
    pub mode: Mode,
    pub rounding: Rounding,
    /// Laser power over the minimum required, noisy mode.
    pub power_margin: f64,
    pub seed: u64,
}

impl Default for EngineSection {
    fn default() -> Self {
        Self {
            mantissa_bits: 4,
            group_size: 16,
            k: None,
            rows: 32,
            units: 8,
            mode: Mode::Ideal,
            rounding: Rounding::TowardZero,
            power_margin: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    pub t_clk_ns: f64,
    pub t_prog_ns: f64,
    pub digital_clock_ghz: f64,
    pub interleave: usize,
}

impl Default for TimingSection {
    fn default() -> Self {
        let a = ArrayConfig::default();
        Self {
            t_clk_ns: a.t_clk_ns,
            t_prog_ns: a.t_prog_ns,
            digital_clock_ghz: a.digital_clock_ghz,
            interleave: a.interleave,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    /// Preset name or path to a workload JSON file.
    pub source: String,
    /// Overrides the workload's batch size.
    pub batch: Option<usize>,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        Self {
            source: "alexnet".into(),
            batch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub dataset: DatasetConfig,
    pub net: NetConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            dataset: DatasetConfig::default(),
            net: NetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub engine: EngineSection,
    pub timing: TimingSection,
    pub device: DeviceSpecs,
    pub noise: NoiseParams,
    pub converters: ConverterConfig,
    pub digital: DigitalConfig,
    pub layout: LayoutConfig,
    pub systolic: SystolicConfig,
    pub workload: WorkloadSection,
    pub training: TrainingSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config always serializes")
    }

    /// Effective `k`.
    pub fn k(&self) -> u32 {
        self.engine
            .k
            .unwrap_or_else(|| rns::min_k(self.engine.mantissa_bits, self.engine.group_size))
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            mantissa_bits: e.mantissa_bits,
            group_size: e.group_size,
            k: self.k(),
            rows: e.rows,
            rounding: e.rounding,
            mode: e.mode,
            power_margin: e.power_margin,
            seed: e.seed,
            device: self.device,
            noise: self.noise,
        }
    }

    pub fn accelerator(&self) -> AcceleratorConfig {
        let (e, t) = (&self.engine, &self.timing);
        AcceleratorConfig {
            array: ArrayConfig {
                units: e.units,
                rows: e.rows,
                group_size: e.group_size,
                mantissa_bits: e.mantissa_bits,
                k: Some(self.k()),
                t_clk_ns: t.t_clk_ns,
                t_prog_ns: t.t_prog_ns,
                digital_clock_ghz: t.digital_clock_ghz,
                interleave: t.interleave,
            },
            device: self.device,
            noise: self.noise,
            converters: self.converters,
            digital: self.digital,
            layout: self.layout,
        }
    }

    pub fn workload(&self) -> Result<WorkloadSpec> {
        let w = WorkloadSpec::resolve(&self.workload.source)?;
        let w = match self.workload.batch {
            Some(b) => w.with_batch(b),
            None => w,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let mut engine = self.engine_config();
        // noise parameters are only checked when they will be used, but a
        // non-positive margin is wrong in any mode
        engine.mode = Mode::Noisy;
        engine.validate()?;
        if self.engine.units == 0 {
            return Err(Error::Config("units must be positive".into()));
        }
        self.accelerator().validate()?;
        self.systolic.validate()?;
        self.training.net.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.k(), 5);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn explicit_k_is_checked() {
        let err = RunConfig::from_toml_str("[engine]\nmantissa_bits = 4\ngroup_size = 16\nk = 4\n")
            .unwrap_err();
        assert!(matches!(err, Error::RangeBudget { min_k: 5, .. }), "{err}");
        let ok = RunConfig::from_toml_str("[engine]\nmantissa_bits = 5\n").unwrap();
        assert_eq!(ok.k(), 6);
        assert!(RunConfig::from_toml_str("[engine]\nbogus = 1\n").is_err());
    }

    #[test]
    fn sections_feed_through() {
        let cfg = RunConfig::from_toml_str(
            "[engine]\nunits = 2\nrows = 16\n[timing]\nt_prog_ns = 4\n[workload]\nsource = \"vgg16\"\nbatch = 8\n",
        )
        .unwrap();
        let acc = cfg.accelerator();
        assert_eq!(
            (acc.array.units, acc.array.rows, acc.t_prog_ps()),
            (2, 16, 4000)
        );
        assert_eq!(cfg.workload().unwrap().batch, 8);
        assert_eq!(cfg.engine_config().rows, 16);
    }
}
