//! Digital systolic-array baseline.
//!
//! Each array is `rows x cols` MAC units. A tile costs `rows` cycles of
//! fill before its operand streams through. Energy is MAC count times the
//! format's energy per MAC; nothing else is charged.

use serde::{Deserialize, Serialize};

use super::config::AcceleratorConfig;
use super::energy::{
    area_report, steady_state_energy_per_mac, AreaReport, Breakdown, CostReport, GemmCost,
};
use super::latency::{schedule_training, ScheduleResult};
use super::workload::{GemmDims, WorkloadSpec};
use super::{Dataflow, DataflowTarget, Schedule};
use crate::error::{Error, Result};

/// MAC-unit figures for one number format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystolicFormat {
    pub name: String,
    pub pj_per_mac: f64,
    /// Unknown for some formats.
    pub mm2_per_mac: Option<f64>,
    pub clock_mhz: f64,
}

impl SystolicFormat {
    pub fn new(name: &str, pj_per_mac: f64, mm2_per_mac: Option<f64>, clock_mhz: f64) -> Self {
        Self {
            name: name.to_string(),
            pj_per_mac,
            mm2_per_mac,
            clock_mhz,
        }
    }

    /// Clock period in picoseconds.
    pub fn period_ps(&self) -> u64 {
        (1e6 / self.clock_mhz).round() as u64
    }

    /// The reference formats.
    pub fn builtin() -> Vec<SystolicFormat> {
        vec![
            Self::new("FP32", 12.42, Some(9.6e-3), 500.0),
            Self::new("BF16", 3.20, Some(3.5e-3), 500.0),
            Self::new("HFP8", 1.47, Some(1.4e-3), 500.0),
            Self::new("INT12", 0.71, Some(7.7e-4), 1000.0),
            Self::new("INT8", 0.42, Some(4.1e-4), 1000.0),
            Self::new("FMAC", 0.11, None, 500.0),
        ]
    }
}

/// Array geometry and format table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystolicConfig {
    pub rows: usize,
    pub cols: usize,
    pub formats: Vec<SystolicFormat>,
}

impl Default for SystolicConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 16,
            formats: SystolicFormat::builtin(),
        }
    }
}

impl SystolicConfig {
    pub fn format(&self, name: &str) -> Result<&SystolicFormat> {
        self.formats
            .iter()
            .find(|f| f.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                let names: Vec<&str> = self.formats.iter().map(|f| f.name.as_str()).collect();
                Error::Config(format!(
                    "unknown format '{name}' (available: {})",
                    names.join(", ")
                ))
            })
    }

    pub fn macs_per_array(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("systolic array dims must be positive".into()));
        }
        for f in &self.formats {
            let area_ok = f.mm2_per_mac.is_none_or(|a| a.is_finite() && a > 0.0);
            if !(f.pj_per_mac.is_finite()
                && f.pj_per_mac >= 0.0
                && f.clock_mhz.is_finite()
                && f.clock_mhz > 0.0
                && area_ok)
            {
                return Err(Error::Config(format!(
                    "format '{}' has invalid figures",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

/// `arrays` systolic arrays of one format. The count may be fractional
/// after iso scaling; a fraction of an array runs tiles proportionally
/// slower.
#[derive(Debug, Clone, PartialEq)]
pub struct SystolicTarget {
    pub rows: usize,
    pub cols: usize,
    pub format: SystolicFormat,
    pub arrays: f64,
}

/// Tiles and per-tile cycles of one GEMM.
fn systolic_tiles(dims: GemmDims, df: Dataflow, rows: usize, cols: usize) -> (u64, u64) {
    let GemmDims { m, k, n } = dims;
    let (tiles, stream) = match df {
        Dataflow::Df1 => (m.div_ceil(rows) * k.div_ceil(cols), n),
        Dataflow::Df2 => (n.div_ceil(rows) * k.div_ceil(cols), m),
        // outputs stay put while K partial products flow through
        Dataflow::Df3 => (m.div_ceil(rows) * n.div_ceil(cols), k),
    };
    (tiles as u64, (rows + stream) as u64)
}

impl SystolicTarget {
    pub fn new(cfg: &SystolicConfig, format: &str, arrays: f64) -> Result<Self> {
        cfg.validate()?;
        if !(arrays.is_finite() && arrays > 0.0) {
            return Err(Error::Config("array count must be positive".into()));
        }
        Ok(Self {
            rows: cfg.rows,
            cols: cfg.cols,
            format: cfg.format(format)?.clone(),
            arrays,
        })
    }

    /// Tile rounds when `tiles` tiles share the arrays.
    fn rounds(&self, tiles: u64) -> u64 {
        let r = tiles as f64 / self.arrays;
        // guard against 3.0000000001 style noise
        let rr = r.round();
        if (r - rr).abs() < 1e-9 {
            rr as u64
        } else {
            r.ceil() as u64
        }
    }

    pub fn macs(&self) -> f64 {
        self.arrays * (self.rows * self.cols) as f64
    }

    /// Useful and provisioned MAC slots (spatial fill of the tiles).
    pub fn mac_slots(&self, dims: GemmDims, df: Dataflow) -> (u64, u64) {
        let (tiles, cycles) = systolic_tiles(dims, df, self.rows, self.cols);
        let streamed = cycles - self.rows as u64;
        (
            dims.macs(),
            tiles * (self.rows * self.cols) as u64 * streamed,
        )
    }
}

impl DataflowTarget for SystolicTarget {
    fn dataflows(&self) -> &[Dataflow] {
        &Dataflow::ALL
    }

    fn latency_ps(&self, dims: GemmDims, dataflow: Dataflow) -> Result<u64> {
        if dims.macs() == 0 {
            return Ok(0);
        }
        let (tiles, cycles) = systolic_tiles(dims, dataflow, self.rows, self.cols);
        Ok(self.rounds(tiles) * cycles * self.format.period_ps())
    }
}

/// Cost of one training step on `arrays` arrays of `format`.
pub fn systolic_baseline(
    workload: &WorkloadSpec,
    schedule: Schedule,
    format: &str,
    arrays: f64,
    cfg: &SystolicConfig,
) -> Result<CostReport> {
    let target = SystolicTarget::new(cfg, format, arrays)?;
    let sched = schedule_training(workload, schedule, &target)?;
    Ok(systolic_report(workload, &sched, &target))
}

fn systolic_report(
    workload: &WorkloadSpec,
    sched: &ScheduleResult,
    target: &SystolicTarget,
) -> CostReport {
    let f = &target.format;
    let mut gemms = Vec::with_capacity(sched.gemms.len());
    let (mut useful, mut provisioned) = (0u128, 0u128);
    for g in &sched.gemms {
        let (u, p) = target.mac_slots(g.dims, g.dataflow);
        useful += u as u128;
        provisioned += p as u128;
        gemms.push(GemmCost {
            layer: g.layer.clone(),
            role: g.role,
            dims: g.dims,
            dataflow: g.dataflow,
            latency_ns: g.latency_ps as f64 / 1000.0,
            energy_pj: g.dims.macs() as f64 * f.pj_per_mac,
            utilization: if p == 0 { 0.0 } else { u as f64 / p as f64 },
        });
    }
    let macs: u64 = sched.gemms.iter().map(|g| g.dims.macs()).sum();
    let latency_ns: f64 = gemms.iter().map(|g| g.latency_ns).sum();
    let energy = Breakdown::from_pairs(vec![(
        "mac".into(),
        gemms.iter().map(|g| g.energy_pj).sum(),
    )]);
    let per_mac = if macs == 0 { 0.0 } else { f.pj_per_mac };
    let mac_area = f.mm2_per_mac.map_or(0.0, |a| a * target.macs());
    let area = AreaReport {
        photonic: Breakdown::from_pairs(vec![]),
        electronic: Breakdown::from_pairs(vec![("mac".into(), mac_area)]),
        total_mm2: mac_area,
        stacked_mm2: mac_area,
        mm2_per_mac: f.mm2_per_mac.unwrap_or(0.0),
    };
    CostReport {
        workload: workload.name.clone(),
        schedule: sched.schedule.label(),
        gemms,
        latency_ns,
        average_power_w: if latency_ns > 0.0 {
            energy.total / latency_ns * 1e-3
        } else {
            0.0
        },
        energy,
        macs,
        energy_per_mac_pj: per_mac,
        compute_energy_per_mac_pj: per_mac,
        // every MAC busy each cycle: pJ * MHz = uW
        peak_power: Breakdown::from_pairs(vec![(
            "mac".into(),
            target.macs() * f.pj_per_mac * f.clock_mhz * 1e-6,
        )]),
        reprogram_power_w: 0.0,
        area,
        utilization: if provisioned == 0 {
            0.0
        } else {
            useful as f64 / provisioned as f64
        },
    }
}

/// How the baseline is sized against the photonic accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsoMode {
    /// Same energy budget per photonic MAC unit.
    IsoEnergy,
    /// Same total area.
    IsoArea,
}

impl std::str::FromStr for IsoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "iso-energy" | "energy" => Ok(IsoMode::IsoEnergy),
            "iso-area" | "area" => Ok(IsoMode::IsoArea),
            other => Err(Error::Config(format!(
                "unknown iso mode '{other}' (expected iso-energy or iso-area)"
            ))),
        }
    }
}

/// Number of baseline arrays matching the photonic accelerator under
/// `mode`. Iso-energy: photonic MAC units times (photonic pJ/MAC over
/// format pJ/MAC). Iso-area: photonic total area over format area per MAC.
pub fn iso_scale(
    mode: IsoMode,
    format: &SystolicFormat,
    sys: &SystolicConfig,
    cfg: &AcceleratorConfig,
) -> Result<f64> {
    let macs = match mode {
        IsoMode::IsoEnergy => {
            if format.pj_per_mac <= 0.0 {
                return Err(Error::Config(format!(
                    "format '{}' has zero energy per MAC",
                    format.name
                )));
            }
            let photonic_macs = (cfg.array.units * cfg.macs_per_cycle()) as f64;
            photonic_macs * steady_state_energy_per_mac(cfg)? / format.pj_per_mac
        }
        IsoMode::IsoArea => {
            let per_mac = format.mm2_per_mac.ok_or_else(|| {
                Error::Config(format!("format '{}' has no area figure", format.name))
            })?;
            area_report(cfg)?.total_mm2 / per_mac
        }
    };
    Ok(macs / sys.macs_per_array() as f64)
}

/// Photonic against one scaled baseline. Ratios are baseline over photonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub workload: String,
    pub format: String,
    pub mode: IsoMode,
    pub arrays: f64,
    pub photonic_latency_ns: f64,
    pub baseline_latency_ns: f64,
    pub photonic_energy_pj: f64,
    pub baseline_energy_pj: f64,
    pub speedup: f64,
    pub edp_ratio: f64,
    pub power_ratio: f64,
}

pub fn compare(
    workload: &WorkloadSpec,
    schedule: Schedule,
    photonic: &CostReport,
    format: &str,
    mode: IsoMode,
    sys: &SystolicConfig,
    cfg: &AcceleratorConfig,
) -> Result<Comparison> {
    let f = sys.format(format)?;
    let arrays = iso_scale(mode, f, sys, cfg)?;
    let base = systolic_baseline(workload, schedule, format, arrays, sys)?;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { f64::NAN };
    let edp = |r: &CostReport| r.energy.total * r.latency_ns;
    Ok(Comparison {
        workload: workload.name.clone(),
        format: f.name.clone(),
        mode,
        arrays,
        photonic_latency_ns: photonic.latency_ns,
        baseline_latency_ns: base.latency_ns,
        photonic_energy_pj: photonic.energy.total,
        baseline_energy_pj: base.energy.total,
        speedup: ratio(base.latency_ns, photonic.latency_ns),
        edp_ratio: ratio(edp(&base), edp(photonic)),
        power_ratio: ratio(base.average_power_w, photonic.average_power_w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::energy_report;

    #[test]
    fn builtin_formats() {
        let s = SystolicConfig::default();
        let fp32 = s.format("fp32").unwrap();
        assert_eq!(
            (fp32.pj_per_mac, fp32.clock_mhz, fp32.period_ps()),
            (12.42, 500.0, 2000)
        );
        let int12 = s.format("INT12").unwrap();
        assert_eq!((int12.pj_per_mac, int12.period_ps()), (0.71, 1000));
        assert!(s.format("FP64").is_err());
    }

    #[test]
    fn latency_closed_form() {
        let s = SystolicConfig::default();
        let t = SystolicTarget::new(&s, "INT8", 1.0).unwrap();
        let d = GemmDims::new(64, 32, 100);
        // 2 x 2 tiles, 32 fill + 100 stream cycles at 1 ns
        assert_eq!(t.latency_ps(d, Dataflow::Df1).unwrap(), 4 * 132 * 1000);
        // 2 x 7 output tiles, 32 + 32 cycles
        assert_eq!(t.latency_ps(d, Dataflow::Df3).unwrap(), 14 * 64 * 1000);
        let half = SystolicTarget::new(&s, "INT8", 0.5).unwrap();
        assert_eq!(half.latency_ps(d, Dataflow::Df1).unwrap(), 8 * 132 * 1000);
    }

    #[test]
    fn iso_scaling() {
        let cfg = AcceleratorConfig::default();
        let s = SystolicConfig::default();
        let e = steady_state_energy_per_mac(&cfg).unwrap();
        let same = SystolicFormat::new("SAME", e, Some(1e-3), 1000.0);
        let arrays = iso_scale(IsoMode::IsoEnergy, &same, &s, &cfg).unwrap();
        assert!((arrays * 512.0 / 4096.0 - 1.0).abs() < 1e-12);
        let fp32 = s.format("FP32").unwrap();
        let a = iso_scale(IsoMode::IsoEnergy, fp32, &s, &cfg).unwrap();
        assert!((a * 512.0 - 4096.0 * e / 12.42).abs() < 1e-9);
        assert!(iso_scale(IsoMode::IsoArea, s.format("FMAC").unwrap(), &s, &cfg).is_err());
        let area = area_report(&cfg).unwrap().total_mm2;
        let a = iso_scale(IsoMode::IsoArea, fp32, &s, &cfg).unwrap();
        assert!((a * 512.0 * 9.6e-3 - area).abs() < 1e-9);
    }

    #[test]
    fn baseline_report() {
        let w = WorkloadSpec::preset("alexnet").unwrap();
        let s = SystolicConfig::default();
        let r = systolic_baseline(&w, Schedule::Opt2, "FP32", 8.0, &s).unwrap();
        r.check_conservation().unwrap();
        assert!((r.energy.total - r.macs as f64 * 12.42).abs() < 1e-6 * r.energy.total);
        let df1 = systolic_baseline(&w, Schedule::Fixed(Dataflow::Df1), "FP32", 8.0, &s).unwrap();
        assert!(r.latency_ns <= df1.latency_ns);
        let cfg = AcceleratorConfig::default();
        let p = energy_report(&w, Schedule::Opt2, &cfg).unwrap();
        let c = compare(&w, Schedule::Opt2, &p, "INT12", IsoMode::IsoArea, &s, &cfg).unwrap();
        assert!(c.speedup.is_finite() && c.speedup > 0.0);
    }
}
