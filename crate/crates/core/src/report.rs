//! CSV and JSON output with fixed schemas.
//!
//! Every CSV file has a header row whose columns are listed in one of the
//! [`Schema`] constants below; [`validate_csv`] checks a file against its
//! schema. Output is deterministic: the same inputs write the same bytes.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf::energy::{CostReport, GemmCost};
use crate::perf::Breakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Col {
    Text,
    /// Finite float.
    Number,
    /// Non-negative integer.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub columns: &'static [(&'static str, Col)],
}

use Col::{Count, Number, Text};

pub const GEMMS: Schema = Schema {
    name: "gemms",
    columns: &[
        ("layer", Text),
        ("role", Text),
        ("m", Count),
        ("k", Count),
        ("n", Count),
        ("dataflow", Text),
        ("latency_ns", Number),
        ("energy_pj", Number),
        ("utilization", Number),
    ],
};

pub const LAYERS: Schema = Schema {
    name: "layers",
    columns: &[
        ("layer", Text),
        ("latency_ns", Number),
        ("energy_pj", Number),
    ],
};

pub const BREAKDOWN: Schema = Schema {
    name: "breakdown",
    columns: &[
        ("group", Text),
        ("component", Text),
        ("value", Number),
        ("unit", Text),
        ("share", Number),
    ],
};

pub const COMPARISON: Schema = Schema {
    name: "comparison",
    columns: &[
        ("workload", Text),
        ("format", Text),
        ("mode", Text),
        ("arrays", Number),
        ("photonic_latency_ns", Number),
        ("baseline_latency_ns", Number),
        ("photonic_energy_pj", Number),
        ("baseline_energy_pj", Number),
        ("speedup", Number),
        ("edp_ratio", Number),
        ("power_ratio", Number),
    ],
};

pub const TRAINING: Schema = Schema {
    name: "training",
    columns: &[
        ("epoch", Count),
        ("engine_train_loss", Number),
        ("engine_train_acc", Number),
        ("engine_val_loss", Number),
        ("engine_val_acc", Number),
        ("fp_train_loss", Number),
        ("fp_train_acc", Number),
        ("fp_val_loss", Number),
        ("fp_val_acc", Number),
    ],
};

pub const BFP_SWEEP: Schema = Schema {
    name: "bfp_sweep",
    columns: &[
        ("mantissa_bits", Count),
        ("group_size", Count),
        ("k", Count),
        ("energy_per_mac_pj", Number),
        ("laser_share", Number),
    ],
};

pub const MDPU_SWEEP: Schema = Schema {
    name: "mdpu_sweep",
    columns: &[("workload", Text), ("rows", Count), ("utilization", Number)],
};

pub const MARGIN_SWEEP: Schema = Schema {
    name: "margin_sweep",
    columns: &[
        ("margin", Number),
        ("detections", Count),
        ("mismatches", Count),
        ("mismatch_rate", Number),
        ("max_abs_diff", Number),
    ],
};

pub const VERIFY: Schema = Schema {
    name: "verify",
    columns: &[
        ("suite", Text),
        ("check", Text),
        ("status", Text),
        ("detail", Text),
    ],
};

pub const SCHEMAS: [Schema; 9] = [
    GEMMS,
    LAYERS,
    BREAKDOWN,
    COMPARISON,
    TRAINING,
    BFP_SWEEP,
    MDPU_SWEEP,
    MARGIN_SWEEP,
    VERIFY,
];

/// One row of [`GEMMS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemmRow {
    pub layer: String,
    pub role: String,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub dataflow: String,
    pub latency_ns: f64,
    pub energy_pj: f64,
    pub utilization: f64,
}

impl From<&GemmCost> for GemmRow {
    fn from(g: &GemmCost) -> Self {
        Self {
            layer: g.layer.clone(),
            role: g.role.as_str().into(),
            m: g.dims.m,
            k: g.dims.k,
            n: g.dims.n,
            dataflow: g.dataflow.as_str().into(),
            latency_ns: g.latency_ns,
            energy_pj: g.energy_pj,
            utilization: g.utilization,
        }
    }
}

/// One row of [`LAYERS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: String,
    pub latency_ns: f64,
    pub energy_pj: f64,
}

/// Per-layer totals in layer order.
pub fn layer_rows(report: &CostReport) -> Vec<LayerRow> {
    let mut out: Vec<LayerRow> = Vec::new();
    for g in &report.gemms {
        match out.last_mut() {
            Some(r) if r.layer == g.layer => {
                r.latency_ns += g.latency_ns;
                r.energy_pj += g.energy_pj;
            }
            _ => out.push(LayerRow {
                layer: g.layer.clone(),
                latency_ns: g.latency_ns,
                energy_pj: g.energy_pj,
            }),
        }
    }
    out
}

/// One row of [`BREAKDOWN`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub group: String,
    pub component: String,
    pub value: f64,
    pub unit: String,
    pub share: f64,
}

fn component_rows(group: &str, unit: &str, b: &Breakdown) -> Vec<ComponentRow> {
    b.shares()
        .into_iter()
        .zip(&b.components)
        .map(|((name, share), (_, value))| ComponentRow {
            group: group.into(),
            component: name,
            value: *value,
            unit: unit.into(),
            share,
        })
        .collect()
}

/// Energy, peak power and area breakdowns of a report.
pub fn breakdown_rows(report: &CostReport) -> Vec<ComponentRow> {
    let mut rows = component_rows("energy", "pJ", &report.energy);
    rows.extend(component_rows("peak_power", "W", &report.peak_power));
    rows.extend(component_rows(
        "area_photonic",
        "mm2",
        &report.area.photonic,
    ));
    rows.extend(component_rows(
        "area_electronic",
        "mm2",
        &report.area.electronic,
    ));
    rows
}

/// One row of [`MDPU_SWEEP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpuRow {
    pub workload: String,
    pub rows: usize,
    pub utilization: f64,
}

/// One row of [`MARGIN_SWEEP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub margin: f64,
    pub detections: u64,
    pub mismatches: u64,
    pub mismatch_rate: f64,
    /// Largest elementwise difference from the ideal-mode output.
    pub max_abs_diff: f64,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Writes `rows` as CSV with a header and checks the result against
/// `schema`.
pub fn write_csv<T: Serialize>(path: &Path, schema: &Schema, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(schema.columns.iter().map(|(c, _)| *c))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    validate_csv(path, schema)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV matrix.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Schema(format!(
                "{}: ragged matrix row {}",
                path.display(),
                rows + 1
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Schema(format!("{}: '{field}' is not a number", path.display()))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), data).map_err(|e| Error::Shape(e.to_string()))
}

/// Checks the header and every cell of a CSV file.
pub fn validate_csv(path: &Path, schema: &Schema) -> Result<()> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = schema.columns.iter().map(|(c, _)| *c).collect();
    if header != expected {
        return Err(Error::Schema(format!(
            "{}: header {:?} does not match the '{}' schema {:?}",
            path.display(),
            header,
            schema.name,
            expected
        )));
    }
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for ((name, col), field) in schema.columns.iter().zip(rec.iter()) {
            let ok = match col {
                Text => true,
                Number => field.parse::<f64>().map(f64::is_finite).unwrap_or(false),
                Count => field.parse::<u64>().is_ok(),
            };
            if !ok {
                return Err(Error::Schema(format!(
                    "{}: row {} column '{name}' has invalid value '{field}'",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Parses a cost-report JSON file and checks its conservation laws.
pub fn validate_cost_report(path: &Path) -> Result<CostReport> {
    let text = fs::read_to_string(path)?;
    let report: CostReport = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    report.check_conservation()?;
    Ok(report)
}

/// Checks that a JSON file parses and has every key in `keys` at top level.
pub fn validate_json_keys(path: &Path, keys: &[&str]) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Schema(format!("{}: top level is not an object", path.display())))?;
    if let Some(missing) = keys.iter().find(|k| !obj.contains_key(**k)) {
        return Err(Error::Schema(format!(
            "{}: missing key '{missing}'",
            path.display()
        )));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perf::{energy_report, AcceleratorConfig, Schedule, WorkloadSpec};

    #[test]
    fn report_rows_validate() {
        let dir = tempfile::tempdir().unwrap();
        let w = WorkloadSpec::preset("alexnet").unwrap();
        let r = energy_report(&w, Schedule::Opt2, &AcceleratorConfig::default()).unwrap();
        let rows: Vec<GemmRow> = r.gemms.iter().map(GemmRow::from).collect();
        write_csv(&dir.path().join("g.csv"), &GEMMS, &rows).unwrap();
        write_csv(&dir.path().join("l.csv"), &LAYERS, &layer_rows(&r)).unwrap();
        write_csv(&dir.path().join("b.csv"), &BREAKDOWN, &breakdown_rows(&r)).unwrap();
        write_json(&dir.path().join("r.json"), &r).unwrap();
        let back = validate_cost_report(&dir.path().join("r.json")).unwrap();
        assert_eq!(back.gemms.len(), r.gemms.len());
        let total: f64 = layer_rows(&r).iter().map(|l| l.latency_ns).sum();
        assert!((total - r.latency_ns).abs() < 1e-6 * r.latency_ns);
        // header mismatch is caught
        assert!(validate_csv(&dir.path().join("g.csv"), &LAYERS).is_err());
    }

    #[test]
    fn bad_cells_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "workload,rows,utilization\nalexnet,-1,0.5\n").unwrap();
        assert!(validate_csv(&p, &MDPU_SWEEP).is_err());
        fs::write(&p, "workload,rows,utilization\nalexnet,32,NaN\n").unwrap();
        assert!(validate_csv(&p, &MDPU_SWEEP).is_err());
        fs::write(&p, "workload,rows,utilization\nalexnet,32,0.5\n").unwrap();
        validate_csv(&p, &MDPU_SWEEP).unwrap();
        write_csv::<MdpuRow>(&p, &MDPU_SWEEP, &[]).unwrap();
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = Array2::from_shape_fn((3, 4), |(i, j)| i as f64 * 0.1 - j as f64 / 3.0);
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }
}
