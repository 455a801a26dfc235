//! Energy, power and area accounting.
//!
//! Energy is charged per event. Each streamed vector through a tile costs
//! one photonic cycle of laser light, detection and digital conversion.
//! Each tile load costs DAC programming of the stationary operand.
//! Laser power is only charged while a tile is streaming.

use serde::{Deserialize, Serialize};

use super::config::AcceleratorConfig;
use super::latency::{
    schedule_training, spatial_utilization, tile_work, PhotonicTarget, ScheduleResult,
};
use super::workload::{GemmDims, GemmRole, WorkloadSpec};
use super::{Dataflow, Schedule};
use crate::error::{Error, Result};
use crate::photonic::{self, residue_bits};

/// Energy components, in report order.
pub const COMPONENTS: [&str; 10] = [
    "laser",
    "mrr_tuning",
    "dac",
    "adc",
    "tia",
    "bfp_fp",
    "bns_rns",
    "rns_bns",
    "sram",
    "accumulator",
];

/// Named non-negative quantities with a total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub components: Vec<(String, f64)>,
    pub total: f64,
}

impl Breakdown {
    pub fn zeros(names: &[&str]) -> Self {
        Self {
            components: names.iter().map(|n| (n.to_string(), 0.0)).collect(),
            total: 0.0,
        }
    }

    pub fn from_pairs(pairs: Vec<(String, f64)>) -> Self {
        let total = pairs.iter().map(|(_, v)| v).sum();
        Self {
            components: pairs,
            total,
        }
    }

    pub fn get(&self, name: &str) -> f64 {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0.0, |(_, v)| *v)
    }

    fn add(&mut self, name: &str, v: f64) {
        match self.components.iter_mut().find(|(n, _)| n == name) {
            Some((_, x)) => *x += v,
            None => self.components.push((name.to_string(), v)),
        }
        self.total = self.components.iter().map(|(_, v)| v).sum();
    }

    fn accumulate(&mut self, other: &Breakdown, scale: f64) {
        for (n, v) in &other.components {
            self.add(n, v * scale);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_pairs(
            self.components
                .iter()
                .map(|(n, v)| (n.clone(), v * s))
                .collect(),
        )
    }

    /// Total without the named components.
    pub fn total_excluding(&self, names: &[&str]) -> f64 {
        self.components
            .iter()
            .filter(|(n, _)| !names.contains(&n.as_str()))
            .map(|(_, v)| v)
            .sum()
    }

    /// Each component's share of the total.
    pub fn shares(&self) -> Vec<(String, f64)> {
        self.components
            .iter()
            .map(|(n, v)| {
                (
                    n.clone(),
                    if self.total > 0.0 {
                        v / self.total
                    } else {
                        0.0
                    },
                )
            })
            .collect()
    }

    /// Components are finite, non-negative and sum to the total.
    pub fn is_conserved(&self) -> bool {
        let sum: f64 = self.components.iter().map(|(_, v)| v).sum();
        self.components
            .iter()
            .all(|(_, v)| v.is_finite() && *v >= 0.0)
            && (sum - self.total).abs() <= 1e-9 * sum.abs().max(1e-30)
    }
}

/// Per-modulus photonic figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusInfo {
    pub modulus: u64,
    pub bits: u32,
    /// Wall-plug laser power per MDPU channel, W.
    pub laser_w: f64,
    pub link_loss_db: f64,
}

pub fn moduli_info(cfg: &AcceleratorConfig) -> Result<Vec<ModulusInfo>> {
    let set = cfg.moduli()?;
    let g = cfg.array.group_size;
    Ok(set
        .moduli()
        .iter()
        .map(|&m| ModulusInfo {
            modulus: m,
            bits: residue_bits(m),
            laser_w: photonic::required_laser_power(m, g, &cfg.device, &cfg.noise),
            link_loss_db: photonic::link_loss(g, m, &cfg.device),
        })
        .collect())
}

/// Energy (pJ) of one RNS-MMVMU streaming one vector through a loaded tile.
pub fn cycle_energy(cfg: &AcceleratorConfig) -> Result<Breakdown> {
    let info = moduli_info(cfg)?;
    let r = cfg.array.rows as f64;
    let g = cfg.array.group_size as f64;
    let t_clk_ns = cfg.array.t_clk_ns;
    let d = &cfg.digital;
    let c = &cfg.converters;
    let quadratures = c.adcs_per_mdpu as f64;
    let mut e = Breakdown::zeros(&COMPONENTS);
    for mi in &info {
        let bits = mi.bits as f64;
        // W * ns = nJ
        e.add("laser", r * mi.laser_w * t_clk_ns * 1e3);
        let mrrs = 2.0 * bits * r * g;
        e.add(
            "mrr_tuning",
            mrrs * d.mrr_switch_power_pw * 1e-12 * t_clk_ns * 1e3,
        );
        e.add("adc", r * quadratures * c.adc_energy_pj(mi.bits));
        e.add("tia", r * quadratures * bits * d.tia_fj_per_bit * 1e-3);
    }
    // one input group in, R outputs back to floating point
    e.add("bfp_fp", (r + 1.0) * d.bfp_fp_pj);
    e.add("bns_rns", g * d.bns_rns_pj);
    e.add("rns_bns", r * d.rns_bns_pj);
    e.add("accumulator", r * d.accumulator_pj);
    // g input reads, R partial-sum reads and R writes
    e.add("sram", (g + 2.0 * r) * d.sram_pj_per_access);
    Ok(e)
}

/// Energy (pJ) of loading one stationary tile into an RNS-MMVMU.
pub fn tile_energy(cfg: &AcceleratorConfig) -> Result<Breakdown> {
    let info = moduli_info(cfg)?;
    let cells = (cfg.array.rows * cfg.array.group_size) as f64;
    let d = &cfg.digital;
    let mut e = Breakdown::zeros(&COMPONENTS);
    for mi in &info {
        e.add("dac", cells * cfg.converters.dac_energy_pj(mi.bits));
        e.add(
            "mrr_tuning",
            cells * mi.bits as f64 * d.ps_tuning_fj_per_bit * 1e-3,
        );
    }
    e.add("bfp_fp", cfg.array.rows as f64 * d.bfp_fp_pj);
    e.add("bns_rns", cells * d.bns_rns_pj);
    e.add("sram", cells * d.sram_pj_per_access);
    Ok(e)
}

/// Energy (pJ) of one GEMM.
pub fn gemm_energy(
    dims: GemmDims,
    dataflow: Dataflow,
    cfg: &AcceleratorConfig,
) -> Result<Breakdown> {
    if dims.macs() == 0 {
        return Ok(Breakdown::zeros(&COMPONENTS));
    }
    let work = tile_work(dims, dataflow, cfg.array.rows, cfg.array.group_size)?;
    let mut e = Breakdown::zeros(&COMPONENTS);
    e.accumulate(&tile_energy(cfg)?, work.tiles as f64);
    e.accumulate(&cycle_energy(cfg)?, (work.tiles * work.streamed) as f64);
    Ok(e)
}

/// Energy per MAC (pJ) of an RNS-MMVMU in steady-state streaming, without
/// SRAM and with tile loads amortized away: `E_cycle / (2 R g)`.
pub fn steady_state_energy_per_mac(cfg: &AcceleratorConfig) -> Result<f64> {
    let e = cycle_energy(cfg)?;
    Ok(e.total_excluding(&["sram"]) / (2.0 * cfg.macs_per_cycle() as f64))
}

/// Power drawn while every unit streams (W), by component. DACs are idle in
/// this phase.
pub fn streaming_power(cfg: &AcceleratorConfig) -> Result<Breakdown> {
    // pJ per ns = mW
    Ok(cycle_energy(cfg)?.scaled(cfg.array.units as f64 / cfg.array.t_clk_ns * 1e-3))
}

/// Power drawn while every unit reprograms a tile (W).
pub fn reprogram_power(cfg: &AcceleratorConfig) -> Result<Breakdown> {
    Ok(tile_energy(cfg)?.scaled(cfg.array.units as f64 / cfg.array.t_prog_ns * 1e-3))
}

/// Area by component, mm^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaReport {
    pub photonic: Breakdown,
    pub electronic: Breakdown,
    pub total_mm2: f64,
    /// Footprint with the chiplets stacked: the larger of the two.
    pub stacked_mm2: f64,
    /// Total area per MAC unit.
    pub mm2_per_mac: f64,
}

/// Summed MMU length (mm) over the moduli of one MMU column.
fn mmu_length_sum(cfg: &AcceleratorConfig) -> Result<f64> {
    Ok(cfg
        .moduli()?
        .moduli()
        .iter()
        .map(|&m| photonic::mmu_length(m, &cfg.device))
        .sum())
}

fn photonic_counts(cfg: &AcceleratorConfig) -> (f64, f64) {
    let a = &cfg.array;
    let mmus_per_modulus = (a.units * a.rows * a.group_size) as f64;
    let detectors = (a.units * 3 * a.rows * cfg.converters.adcs_per_mdpu) as f64;
    (mmus_per_modulus, detectors)
}

pub fn area_report(cfg: &AcceleratorConfig) -> Result<AreaReport> {
    let a = &cfg.array;
    let d = &cfg.digital;
    let c = &cfg.converters;
    let (mmus, detectors) = photonic_counts(cfg);
    let pitch_mm = cfg.layout.mmu_pitch_um * 1e-3;
    let photonic = Breakdown::from_pairs(vec![
        ("mmu".into(), mmus * mmu_length_sum(cfg)? * pitch_mm),
        (
            "detector".into(),
            detectors * cfg.layout.detector_area_um2 * 1e-6,
        ),
    ]);
    let moduli = cfg.moduli()?.len();
    let units = a.units as f64;
    let um2 = 1e-6;
    let conv_units = (d.conversion_units_per_unit * a.units) as f64;
    let electronic = Breakdown::from_pairs(vec![
        (
            "dac".into(),
            (cfg.dacs_per_mmvmu() * moduli) as f64 * units * c.dac_area_mm2,
        ),
        (
            "adc".into(),
            (c.adcs_per_mdpu * a.rows * moduli) as f64 * units * c.adc_area_mm2,
        ),
        (
            "tia".into(),
            (c.adcs_per_mdpu * a.rows * moduli) as f64 * units * d.tia_area_um2 * um2,
        ),
        ("bfp_fp".into(), conv_units * d.bfp_fp_area_um2 * um2),
        ("bns_rns".into(), conv_units * d.bns_rns_area_um2 * um2),
        ("rns_bns".into(), conv_units * d.rns_bns_area_um2 * um2),
        (
            "accumulator".into(),
            (a.rows * a.interleave) as f64 * units * d.accumulator_area_um2 * um2,
        ),
        ("sram".into(), d.sram_area_mm2),
    ]);
    let total = photonic.total + electronic.total;
    Ok(AreaReport {
        stacked_mm2: photonic.total.max(electronic.total),
        total_mm2: total,
        mm2_per_mac: total / (units * cfg.macs_per_cycle() as f64),
        photonic,
        electronic,
    })
}

/// MMU pitch (um) that makes the photonic chiplet `target_mm2`.
pub fn calibrate_pitch(cfg: &AcceleratorConfig, target_mm2: f64) -> Result<f64> {
    let (mmus, detectors) = photonic_counts(cfg);
    let det = detectors * cfg.layout.detector_area_um2 * 1e-6;
    if target_mm2 <= det {
        return Err(Error::Config(format!(
            "target photonic area {target_mm2} mm^2 is below the detector area {det} mm^2"
        )));
    }
    Ok((target_mm2 - det) / (mmus * mmu_length_sum(cfg)?) * 1e3)
}

/// One GEMM of a training step with its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmCost {
    pub layer: String,
    pub role: GemmRole,
    pub dims: GemmDims,
    pub dataflow: Dataflow,
    pub latency_ns: f64,
    pub energy_pj: f64,
    pub utilization: f64,
}

/// Full cost of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub workload: String,
    pub schedule: String,
    pub gemms: Vec<GemmCost>,
    pub latency_ns: f64,
    /// pJ by component.
    pub energy: Breakdown,
    pub macs: u64,
    /// Total energy over `2 * MACs`.
    pub energy_per_mac_pj: f64,
    /// Same, without SRAM.
    pub compute_energy_per_mac_pj: f64,
    pub average_power_w: f64,
    /// Streaming-phase power by component.
    pub peak_power: Breakdown,
    /// Power while all units reprogram tiles.
    pub reprogram_power_w: f64,
    pub area: AreaReport,
    pub utilization: f64,
}

impl CostReport {
    /// Every breakdown sums to its total, the GEMM rows sum to the step
    /// totals, and nothing is negative.
    pub fn check_conservation(&self) -> Result<()> {
        let parts = [
            ("energy", &self.energy),
            ("peak power", &self.peak_power),
            ("photonic area", &self.area.photonic),
            ("electronic area", &self.area.electronic),
        ];
        for (name, b) in parts {
            if !b.is_conserved() {
                return Err(Error::Schema(format!(
                    "{name} components do not sum to the total"
                )));
            }
        }
        let lat: f64 = self.gemms.iter().map(|g| g.latency_ns).sum();
        let en: f64 = self.gemms.iter().map(|g| g.energy_pj).sum();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-30);
        if !close(lat, self.latency_ns) || !close(en, self.energy.total) {
            return Err(Error::Schema(
                "per-GEMM rows do not sum to the totals".into(),
            ));
        }
        let area = self.area.photonic.total + self.area.electronic.total;
        if !close(area, self.area.total_mm2) {
            return Err(Error::Schema(
                "area total is not photonic + electronic".into(),
            ));
        }
        Ok(())
    }
}

/// Latency, energy, power, area and utilization of one training step.
pub fn energy_report(
    workload: &WorkloadSpec,
    schedule: Schedule,
    cfg: &AcceleratorConfig,
) -> Result<CostReport> {
    cfg.validate()?;
    let sched = schedule_training(workload, schedule, &PhotonicTarget::new(cfg))?;
    cost_from_schedule(workload, &sched, cfg)
}

fn cost_from_schedule(
    workload: &WorkloadSpec,
    sched: &ScheduleResult,
    cfg: &AcceleratorConfig,
) -> Result<CostReport> {
    let mut energy = Breakdown::zeros(&COMPONENTS);
    let mut gemms = Vec::with_capacity(sched.gemms.len());
    let mut macs = 0u64;
    for g in &sched.gemms {
        let e = gemm_energy(g.dims, g.dataflow, cfg)?;
        energy.accumulate(&e, 1.0);
        macs += g.dims.macs();
        let (useful, provisioned) = super::latency::gemm_mac_slots(g.dims, g.dataflow, cfg)?;
        gemms.push(GemmCost {
            layer: g.layer.clone(),
            role: g.role,
            dims: g.dims,
            dataflow: g.dataflow,
            latency_ns: g.latency_ps as f64 / 1000.0,
            energy_pj: e.total,
            utilization: if provisioned == 0 {
                0.0
            } else {
                useful as f64 / provisioned as f64
            },
        });
    }
    let latency_ns = gemms.iter().map(|g| g.latency_ns).sum::<f64>();
    let per_mac = |e: f64| {
        if macs == 0 {
            0.0
        } else {
            e / (2.0 * macs as f64)
        }
    };
    Ok(CostReport {
        workload: workload.name.clone(),
        schedule: sched.schedule.label(),
        latency_ns,
        energy_per_mac_pj: per_mac(energy.total),
        compute_energy_per_mac_pj: per_mac(energy.total_excluding(&["sram"])),
        // pJ / ns = mW
        average_power_w: if latency_ns > 0.0 {
            energy.total / latency_ns * 1e-3
        } else {
            0.0
        },
        energy,
        macs,
        gemms,
        peak_power: streaming_power(cfg)?,
        reprogram_power_w: reprogram_power(cfg)?.total,
        area: area_report(cfg)?,
        utilization: spatial_utilization(sched, cfg)?,
    })
}

/// One point of the `(b_m, g)` energy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mantissa_bits: u32,
    pub group_size: usize,
    pub k: u32,
    pub energy_per_mac_pj: f64,
    pub laser_share: f64,
}

/// Steady-state energy per MAC for each `(b_m, g)`, each at its smallest
/// valid `k`.
pub fn bfp_sweep(
    cfg: &AcceleratorConfig,
    bits: &[u32],
    groups: &[usize],
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &b in bits {
        for &g in groups {
            let mut c = *cfg;
            c.array.mantissa_bits = b;
            c.array.group_size = g;
            c.array.k = None;
            c.validate()?;
            let e = cycle_energy(&c)?;
            let compute = e.total_excluding(&["sram"]);
            out.push(SweepPoint {
                mantissa_bits: b,
                group_size: g,
                k: c.k(),
                energy_per_mac_pj: compute / (2.0 * c.macs_per_cycle() as f64),
                laser_share: e.get("laser") / compute,
            });
        }
    }
    Ok(out)
}

/// Utilization of a workload as the MDPU count per MMVMU varies.
pub fn mdpu_sweep(
    workload: &WorkloadSpec,
    schedule: Schedule,
    cfg: &AcceleratorConfig,
    rows: &[usize],
) -> Result<Vec<(usize, f64)>> {
    rows.iter()
        .map(|&r| {
            let mut c = *cfg;
            c.array.rows = r;
            let sched = schedule_training(workload, schedule, &PhotonicTarget::new(&c))?;
            Ok((r, spatial_utilization(&sched, &c)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_land_near_reference_figures() {
        let cfg = AcceleratorConfig::default();
        let e = steady_state_energy_per_mac(&cfg).unwrap();
        assert!(e > 0.1 && e < 0.4, "{e}");
        let area = area_report(&cfg).unwrap();
        assert!(
            (area.photonic.total - 234.0).abs() < 0.05 * 234.0,
            "{area:?}"
        );
        assert!(
            (area.electronic.total - 242.7).abs() < 0.05 * 242.7,
            "{area:?}"
        );
        assert_eq!(
            area.stacked_mm2,
            area.photonic.total.max(area.electronic.total)
        );
    }

    #[test]
    fn pitch_calibration_hits_target() {
        let mut cfg = AcceleratorConfig::default();
        cfg.layout.mmu_pitch_um = calibrate_pitch(&cfg, 234.0).unwrap();
        let area = area_report(&cfg).unwrap();
        assert!((area.photonic.total - 234.0).abs() < 1e-9);
        assert!(calibrate_pitch(&cfg, 0.0).is_err());
    }

    #[test]
    fn zero_layer_workload() {
        let w = WorkloadSpec {
            name: "empty".into(),
            batch: 1,
            layers: vec![],
        };
        let r = energy_report(&w, Schedule::Opt2, &AcceleratorConfig::default()).unwrap();
        assert_eq!(r.energy.total, 0.0);
        assert_eq!(r.latency_ns, 0.0);
        assert_eq!(r.macs, 0);
        assert_eq!(r.energy_per_mac_pj, 0.0);
        r.check_conservation().unwrap();
    }

    #[test]
    fn preset_reports_conserve() {
        let cfg = AcceleratorConfig::default();
        let w = WorkloadSpec::preset("alexnet").unwrap();
        let r = energy_report(&w, Schedule::Opt2, &cfg).unwrap();
        r.check_conservation().unwrap();
        assert!(r.utilization > 0.0 && r.utilization <= 1.0);
        assert_eq!(r.gemms.len(), 24);
    }

    #[test]
    fn sweep_is_u_shaped() {
        let cfg = AcceleratorConfig::default();
        let pts = bfp_sweep(&cfg, &[4], &[4, 8, 16, 32, 64]).unwrap();
        let e: Vec<f64> = pts.iter().map(|p| p.energy_per_mac_pj).collect();
        assert!(e[2] < e[1] && e[2] < e[3], "{e:?}");
        assert!(e[4] > e[3]);
    }
}
