//! Analytical latency, energy, power and area model.
//!
//! Latencies are kept in integer picoseconds so the closed forms and the
//! step-by-step schedule simulation can be compared exactly.

pub mod config;
pub mod energy;
pub mod latency;
pub mod systolic;
pub mod workload;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::AcceleratorConfig;
pub use energy::{area_report, energy_report, AreaReport, Breakdown, CostReport};
pub use latency::{
    gemm_latency, gemm_latency_ps, schedule_training, simulate_gemm_ps, spatial_utilization,
    training_step_latency, PhotonicTarget, ScheduleResult,
};
pub use systolic::{
    compare, iso_scale, systolic_baseline, Comparison, IsoMode, SystolicConfig, SystolicFormat,
    SystolicTarget,
};
pub use workload::{GemmDims, GemmRole, LayerSpec, WorkloadSpec};

/// Which operand stays in the array while the other streams through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataflow {
    /// First operand stationary.
    Df1,
    /// Second operand stationary.
    Df2,
    /// Output stationary.
    Df3,
}

impl Dataflow {
    pub const ALL: [Dataflow; 3] = [Dataflow::Df1, Dataflow::Df2, Dataflow::Df3];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dataflow::Df1 => "df1",
            Dataflow::Df2 => "df2",
            Dataflow::Df3 => "df3",
        }
    }
}

/// How dataflows are assigned to the GEMMs of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Fixed(Dataflow),
    /// One dataflow per GEMM role, chosen to minimize that role's total.
    Opt1,
    /// Best dataflow for every GEMM separately.
    Opt2,
}

impl Schedule {
    pub fn label(&self) -> String {
        match self {
            Schedule::Fixed(d) => d.as_str().to_string(),
            Schedule::Opt1 => "opt1".into(),
            Schedule::Opt2 => "opt2".into(),
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "df1" => Ok(Schedule::Fixed(Dataflow::Df1)),
            "df2" => Ok(Schedule::Fixed(Dataflow::Df2)),
            "df3" => Ok(Schedule::Fixed(Dataflow::Df3)),
            "opt1" => Ok(Schedule::Opt1),
            "opt2" => Ok(Schedule::Opt2),
            other => Err(Error::Config(format!(
                "unknown dataflow '{other}' (expected df1, df2, df3, opt1 or opt2)"
            ))),
        }
    }
}

/// Something that can run a GEMM under a dataflow.
pub trait DataflowTarget {
    /// Dataflows this target can execute.
    fn dataflows(&self) -> &[Dataflow];

    /// Latency of one GEMM in picoseconds.
    fn latency_ps(&self, dims: GemmDims, dataflow: Dataflow) -> Result<u64>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_parse() {
        assert_eq!("OPT2".parse::<Schedule>().unwrap(), Schedule::Opt2);
        assert_eq!(
            "df3".parse::<Schedule>().unwrap(),
            Schedule::Fixed(Dataflow::Df3)
        );
        assert!("df4".parse::<Schedule>().is_err());
        assert_eq!(Schedule::Fixed(Dataflow::Df2).label(), "df2");
    }
}
