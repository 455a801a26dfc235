//! Tile-count latency model and dataflow scheduling.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::config::AcceleratorConfig;
use super::workload::{GemmDims, GemmRole, WorkloadSpec};
use super::{Dataflow, DataflowTarget, Schedule};
use crate::error::{Error, Result};

/// Stationary tiling of one GEMM under a dataflow: `tiles` tiles, each
/// streaming `streamed` vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileWork {
    pub tiles: u64,
    pub streamed: u64,
    /// `(rows, cols)` of the stationary operand.
    pub stationary: (usize, usize),
}

/// Stationary operand of `dims` under DF1 (first operand) or DF2 (second
/// operand, transposed), tiled onto `rows x cols` arrays.
pub fn tile_work(dims: GemmDims, dataflow: Dataflow, rows: usize, cols: usize) -> Result<TileWork> {
    let (stat_rows, stream) = match dataflow {
        Dataflow::Df1 => (dims.m, dims.n),
        Dataflow::Df2 => (dims.n, dims.m),
        Dataflow::Df3 => {
            return Err(Error::Dataflow(
                "output-stationary tiling has no stationary operand".into(),
            ))
        }
    };
    Ok(TileWork {
        tiles: (stat_rows.div_ceil(rows) * dims.k.div_ceil(cols)) as u64,
        streamed: stream as u64,
        stationary: (stat_rows, dims.k),
    })
}

/// The photonic accelerator as a dataflow target.
#[derive(Debug, Clone, Copy)]
pub struct PhotonicTarget<'a> {
    pub cfg: &'a AcceleratorConfig,
}

impl<'a> PhotonicTarget<'a> {
    pub fn new(cfg: &'a AcceleratorConfig) -> Self {
        Self { cfg }
    }
}

impl DataflowTarget for PhotonicTarget<'_> {
    fn dataflows(&self) -> &[Dataflow] {
        &[Dataflow::Df1, Dataflow::Df2]
    }

    fn latency_ps(&self, dims: GemmDims, dataflow: Dataflow) -> Result<u64> {
        gemm_latency_ps(dims, dataflow, self.cfg)
    }
}

/// Closed-form GEMM latency in picoseconds:
/// `ceil(T / U) (t_prog + streamed t_clk)`.
pub fn gemm_latency_ps(dims: GemmDims, dataflow: Dataflow, cfg: &AcceleratorConfig) -> Result<u64> {
    if dataflow == Dataflow::Df3 {
        return Err(Error::Dataflow(
            "output-stationary dataflow is not supported on the photonic array: both operands would have to be \
             reprogrammed every cycle"
                .into(),
        ));
    }
    if dims.macs() == 0 {
        return Ok(0);
    }
    let work = tile_work(dims, dataflow, cfg.array.rows, cfg.array.group_size)?;
    let rounds = work.tiles.div_ceil(cfg.array.units as u64);
    Ok(rounds * (cfg.t_prog_ps() + work.streamed * cfg.t_clk_ps()))
}

/// [`gemm_latency_ps`] in nanoseconds.
pub fn gemm_latency(dims: GemmDims, dataflow: Dataflow, cfg: &AcceleratorConfig) -> Result<f64> {
    Ok(gemm_latency_ps(dims, dataflow, cfg)? as f64 / 1000.0)
}

/// Event-driven list schedule: each tile goes to the unit that frees up
/// first. Returns the makespan.
pub fn simulate_schedule_ps(tile_durations: &[u64], units: usize) -> u64 {
    assert!(units > 0, "need at least one unit");
    let mut free_at: BinaryHeap<Reverse<u64>> = (0..units).map(|_| Reverse(0)).collect();
    let mut makespan = 0;
    for &d in tile_durations {
        let Reverse(start) = free_at.pop().expect("heap holds one entry per unit");
        let end = start + d;
        makespan = makespan.max(end);
        free_at.push(Reverse(end));
    }
    makespan
}

/// Builds the tile list of a GEMM and simulates it.
pub fn simulate_gemm_ps(
    dims: GemmDims,
    dataflow: Dataflow,
    cfg: &AcceleratorConfig,
) -> Result<u64> {
    if dataflow == Dataflow::Df3 {
        return Err(Error::Dataflow(
            "output-stationary dataflow is not supported on the photonic array".into(),
        ));
    }
    if dims.macs() == 0 {
        return Ok(0);
    }
    let (rows, stream) = match dataflow {
        Dataflow::Df1 => (dims.m, dims.n),
        _ => (dims.n, dims.m),
    };
    let mut durations = Vec::new();
    for _row_tile in (0..rows).step_by(cfg.array.rows) {
        for _col_tile in (0..dims.k).step_by(cfg.array.group_size) {
            let mut t = cfg.t_prog_ps();
            for _ in 0..stream {
                t += cfg.t_clk_ps();
            }
            durations.push(t);
        }
    }
    Ok(simulate_schedule_ps(&durations, cfg.array.units))
}

/// One scheduled GEMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmLatency {
    pub layer: String,
    pub role: GemmRole,
    pub dims: GemmDims,
    pub dataflow: Dataflow,
    pub latency_ps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub schedule: Schedule,
    pub gemms: Vec<GemmLatency>,
    pub total_ps: u64,
}

impl ScheduleResult {
    pub fn total_ns(&self) -> f64 {
        self.total_ps as f64 / 1000.0
    }

    /// Summed latency per layer, in layer order.
    pub fn per_layer_ps(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for g in &self.gemms {
            match out.last_mut() {
                Some((name, t)) if *name == g.layer => *t += g.latency_ps,
                _ => out.push((g.layer.clone(), g.latency_ps)),
            }
        }
        out
    }
}

/// Latency of every training GEMM of `workload` on `target` under
/// `schedule`.
pub fn schedule_training<T: DataflowTarget + ?Sized>(
    workload: &WorkloadSpec,
    schedule: Schedule,
    target: &T,
) -> Result<ScheduleResult> {
    let gemms: Vec<(String, GemmRole, GemmDims)> = workload
        .expanded()
        .into_iter()
        .flat_map(|(name, dims)| dims.training().map(|(role, d)| (name.clone(), role, d)))
        .collect();
    let supported = target.dataflows();
    let pick = |d: Dataflow| -> Result<Dataflow> {
        if supported.contains(&d) {
            Ok(d)
        } else {
            Err(Error::Dataflow(format!(
                "dataflow {} is not supported on this target",
                d.as_str()
            )))
        }
    };
    // Latency of every GEMM under every supported dataflow.
    let table: Vec<Vec<u64>> = gemms
        .iter()
        .map(|(_, _, d)| {
            supported
                .iter()
                .map(|&df| target.latency_ps(*d, df))
                .collect()
        })
        .collect::<Result<_>>()?;
    let choice: Vec<usize> = match schedule {
        Schedule::Fixed(df) => {
            let df = pick(df)?;
            let idx = supported
                .iter()
                .position(|&s| s == df)
                .expect("checked above");
            vec![idx; gemms.len()]
        }
        Schedule::Opt2 => table.iter().map(|row| argmin(row)).collect(),
        Schedule::Opt1 => {
            let mut best_for_role = Vec::new();
            for role in GemmRole::ALL {
                let totals: Vec<u64> = (0..supported.len())
                    .map(|j| {
                        gemms
                            .iter()
                            .zip(&table)
                            .filter(|((_, r, _), _)| *r == role)
                            .map(|(_, row)| row[j])
                            .sum()
                    })
                    .collect();
                best_for_role.push((role, argmin(&totals)));
            }
            gemms
                .iter()
                .map(|(_, r, _)| {
                    best_for_role
                        .iter()
                        .find(|(role, _)| role == r)
                        .expect("all roles")
                        .1
                })
                .collect()
        }
    };
    let out: Vec<GemmLatency> = gemms
        .into_iter()
        .zip(&table)
        .zip(choice)
        .map(|(((layer, role, dims), row), j)| GemmLatency {
            layer,
            role,
            dims,
            dataflow: supported[j],
            latency_ps: row[j],
        })
        .collect();
    let total_ps = out.iter().map(|g| g.latency_ps).sum();
    Ok(ScheduleResult {
        schedule,
        gemms: out,
        total_ps,
    })
}

fn argmin(values: &[u64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Photonic training-step latency.
pub fn training_step_latency(
    workload: &WorkloadSpec,
    schedule: Schedule,
    cfg: &AcceleratorConfig,
) -> Result<ScheduleResult> {
    schedule_training(workload, schedule, &PhotonicTarget::new(cfg))
}

/// Useful and provisioned MAC slots of one GEMM: padding in edge tiles and
/// idle units in the last round count as provisioned but not useful.
pub fn gemm_mac_slots(
    dims: GemmDims,
    dataflow: Dataflow,
    cfg: &AcceleratorConfig,
) -> Result<(u64, u64)> {
    let work = tile_work(dims, dataflow, cfg.array.rows, cfg.array.group_size)?;
    let units = cfg.array.units as u64;
    let rounds = work.tiles.div_ceil(units);
    let provisioned = rounds * units * cfg.macs_per_cycle() as u64 * work.streamed;
    Ok((dims.macs(), provisioned))
}

/// Spatial utilization of a scheduled training step.
pub fn spatial_utilization(result: &ScheduleResult, cfg: &AcceleratorConfig) -> Result<f64> {
    let (mut useful, mut provisioned) = (0u128, 0u128);
    for g in &result.gemms {
        let (u, p) = gemm_mac_slots(g.dims, g.dataflow, cfg)?;
        useful += u as u128;
        provisioned += p as u128;
    }
    if provisioned == 0 {
        return Ok(0.0);
    }
    Ok(useful as f64 / provisioned as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::LayerSpec;

    fn cfg(units: usize) -> AcceleratorConfig {
        let mut c = AcceleratorConfig::default();
        c.array.units = units;
        c
    }

    #[test]
    fn worked_example() {
        let d = GemmDims::new(64, 32, 100);
        assert_eq!(gemm_latency(d, Dataflow::Df1, &cfg(1)).unwrap(), 60.0);
        assert_eq!(gemm_latency(d, Dataflow::Df1, &cfg(8)).unwrap(), 15.0);
        assert_eq!(simulate_gemm_ps(d, Dataflow::Df1, &cfg(1)).unwrap(), 60_000);
        assert!(matches!(
            gemm_latency(d, Dataflow::Df3, &cfg(1)),
            Err(Error::Dataflow(_))
        ));
    }

    #[test]
    fn symmetric_shapes_match() {
        let d = GemmDims::new(96, 40, 96);
        let c = cfg(3);
        assert_eq!(
            gemm_latency_ps(d, Dataflow::Df1, &c).unwrap(),
            gemm_latency_ps(d, Dataflow::Df2, &c).unwrap()
        );
    }

    #[test]
    fn list_schedule() {
        assert_eq!(simulate_schedule_ps(&[5, 5, 5], 2), 10);
        assert_eq!(simulate_schedule_ps(&[], 4), 0);
        assert_eq!(simulate_schedule_ps(&[7, 1, 1, 1], 2), 7);
    }

    #[test]
    fn utilization_examples() {
        let c = cfg(1);
        let (u, p) = gemm_mac_slots(GemmDims::new(40, 20, 1), Dataflow::Df1, &c).unwrap();
        assert!((u as f64 / p as f64 - 800.0 / 2048.0).abs() < 1e-15);
        let (u, p) = gemm_mac_slots(GemmDims::new(64, 32, 10), Dataflow::Df1, &cfg(4)).unwrap();
        assert_eq!(u, p);
    }

    #[test]
    fn schedule_dominance_single_layer() {
        let w = WorkloadSpec {
            name: "one".into(),
            batch: 8,
            layers: vec![LayerSpec::Linear {
                name: "fc".into(),
                inputs: 300,
                outputs: 20,
                repeat: 1,
            }],
        };
        let c = AcceleratorConfig::default();
        let o1 = training_step_latency(&w, Schedule::Opt1, &c).unwrap();
        let o2 = training_step_latency(&w, Schedule::Opt2, &c).unwrap();
        let d1 = training_step_latency(&w, Schedule::Fixed(Dataflow::Df1), &c).unwrap();
        let d2 = training_step_latency(&w, Schedule::Fixed(Dataflow::Df2), &c).unwrap();
        assert_eq!(o1.total_ps, o2.total_ps);
        assert!(o1.total_ps <= d1.total_ps.min(d2.total_ps));
        assert!(training_step_latency(&w, Schedule::Fixed(Dataflow::Df3), &c).is_err());
        assert_eq!(o2.per_layer_ps(), vec![("fc".to_string(), o2.total_ps)]);
    }
}
