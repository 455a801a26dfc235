//! `rnsphot` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration or
//! input error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gemm::{dequantized_product, EngineConfig, GemmDiagnostics, GemmEngine, Mode};
use crate::perf::energy::{bfp_sweep, mdpu_sweep, steady_state_energy_per_mac};
use crate::perf::workload::PRESETS;
use crate::perf::{compare, energy_report, IsoMode, Schedule, WorkloadSpec};
use crate::report::{self, GemmRow, MarginRow, MdpuRow};
use crate::training::{train_toy, TrainingReport};
use crate::verify::{self, Status, Suite, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rnsphot",
    version,
    about = "RNS photonic accelerator simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run self-check suites.
    Verify(VerifyArgs),
    /// Run one RNS GEMM and compare it with the dequantized oracle.
    Gemm(GemmArgs),
    /// Train the toy network next to its full-precision twin.
    Train(TrainArgs),
    /// Latency, energy, power and area of a training step.
    Perf(PerfArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Mantissa bits (overrides the config).
    #[arg(long)]
    pub bm: Option<u32>,
    /// BFP group size (overrides the config).
    #[arg(long)]
    pub group: Option<usize>,
    /// Moduli-set parameter (overrides the config; default is the smallest valid).
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.out {
            cfg.output.dir = d.clone();
        }
        if let Some(b) = self.bm {
            cfg.engine.mantissa_bits = b;
            if self.k.is_none() {
                cfg.engine.k = None;
            }
        }
        if let Some(g) = self.group {
            cfg.engine.group_size = g;
            if self.k.is_none() {
                cfg.engine.k = None;
            }
        }
        if let Some(k) = self.k {
            cfg.engine.k = Some(k);
        }
        if let Some(s) = self.seed {
            cfg.engine.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Rns,
    Bfp,
    Photonic,
    Gemm,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Rns => Suite::Rns,
            SuiteArg::Bfp => Suite::Bfp,
            SuiteArg::Photonic => Suite::Photonic,
            SuiteArg::Gemm => Suite::Gemm,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random trials per randomized check.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Also write the results table here as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Corrupt a CRT constant to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct GemmArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long = "kdim", default_value_t = 64)]
    pub kdim: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// First operand as headerless CSV (replaces the random one).
    #[arg(long, requires = "b")]
    pub a: Option<PathBuf>,
    /// Second operand as headerless CSV.
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Laser power margin for noisy mode.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Comma-separated margins to sweep in noisy mode.
    #[arg(long, value_delimiter = ',')]
    pub margins: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Bfp,
    Mdpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IsoArg {
    IsoEnergy,
    IsoArea,
    Both,
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    #[command(flatten)]
    pub common: Common,
    /// Preset name or workload JSON path (overrides the config).
    #[arg(long, short)]
    pub workload: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// df1, df2, df3, opt1 or opt2.
    #[arg(long, default_value = "opt2", value_parser = parse_schedule)]
    pub dataflow: Schedule,
    /// Baseline formats to compare against (comma-separated, or `all`).
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    #[arg(long, value_enum, default_value = "both")]
    pub iso: IsoArg,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepArg>,
    /// Print component shares of energy, peak power and area.
    #[arg(long)]
    pub breakdown: bool,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_schedule(s: &str) -> std::result::Result<Schedule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Verify(a) => cmd_verify(&a),
        Command::Gemm(a) => cmd_gemm(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Perf(a) => cmd_perf(&a),
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let opts = VerifyOptions {
        seed: a.seed,
        trials: a.trials,
        corrupt_crt: a.inject_fault,
    };
    let results = verify::run(a.suite.into(), &opts);
    println!("{:<9} {:<26} {:<6} detail", "suite", "check", "status");
    for r in &results {
        println!(
            "{:<9} {:<26} {:<6} {}",
            r.suite,
            r.check,
            r.status.as_str(),
            r.detail
        );
    }
    let failed = results.iter().filter(|r| r.status == Status::Fail).count();
    println!("{} checks, {} failed", results.len(), failed);
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Row<'a> {
            suite: &'a str,
            check: &'a str,
            status: &'a str,
            detail: &'a str,
        }
        let rows: Vec<Row> = results
            .iter()
            .map(|r| Row {
                suite: &r.suite,
                check: &r.check,
                status: r.status.as_str(),
                detail: &r.detail,
            })
            .collect();
        report::write_csv(path, &report::VERIFY, &rows)?;
    }
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

#[derive(Debug, Serialize)]
struct GemmSummary<'a> {
    engine: &'a EngineConfig,
    m: usize,
    k: usize,
    n: usize,
    /// Largest `|output - oracle|`.
    max_abs_diff: f64,
    diagnostics: &'a GemmDiagnostics,
}

fn random_operands(m: usize, k: usize, n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((m, k), |_| rng.gen_range(-1.0..1.0));
    let b = Array2::from_shape_fn((k, n), |_| rng.gen_range(-1.0..1.0));
    (a, b)
}

fn max_abs_diff(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter()
        .zip(y)
        .fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()))
}

fn cmd_gemm(a: &GemmArgs) -> Result<i32> {
    let run_cfg = a.common.load()?;
    let mut cfg = run_cfg.engine_config();
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(p) = a.margin {
        cfg.power_margin = p;
    }
    cfg.validate()?;
    let (lhs, rhs) = match (&a.a, &a.b) {
        (Some(pa), Some(pb)) => (report::read_matrix(pa)?, report::read_matrix(pb)?),
        _ => {
            if a.m == 0 || a.kdim == 0 || a.n == 0 {
                return Err(Error::Config("GEMM dims must be positive".into()));
            }
            random_operands(a.m, a.kdim, a.n, cfg.seed)
        }
    };
    if lhs.ncols() != rhs.nrows() {
        return Err(Error::Shape(format!(
            "operands are {}x{} and {}x{}",
            lhs.nrows(),
            lhs.ncols(),
            rhs.nrows(),
            rhs.ncols()
        )));
    }
    let dir = run_cfg.output.dir.join("gemm");
    let oracle = dequantized_product(lhs.view(), rhs.view(), cfg.format())?;
    let engine = GemmEngine::new(cfg)?;
    let result = engine.gemm(lhs.view(), rhs.view())?;
    let diff = &result.output - &oracle;
    let worst = max_abs_diff(&result.output, &oracle);
    report::write_matrix(&dir.join("output.csv"), &result.output)?;
    report::write_matrix(&dir.join("oracle_diff.csv"), &diff)?;
    report::write_json(
        &dir.join("diagnostics.json"),
        &GemmSummary {
            engine: &cfg,
            m: lhs.nrows(),
            k: lhs.ncols(),
            n: rhs.ncols(),
            max_abs_diff: worst,
            diagnostics: &result.diagnostics,
        },
    )?;
    println!(
        "{}x{}x{} GEMM, b_m={} g={} k={} moduli {:?}, mode {:?}",
        lhs.nrows(),
        lhs.ncols(),
        rhs.ncols(),
        cfg.mantissa_bits,
        cfg.group_size,
        cfg.k,
        engine.moduli_set().moduli(),
        cfg.mode
    );
    println!("max |output - oracle| = {worst:e}");
    if cfg.mode == Mode::Noisy {
        println!(
            "residue mis-detections: {} of {} ({:.3e})",
            result.diagnostics.residue_mismatches,
            result.diagnostics.residue_detections,
            result.diagnostics.mismatch_rate()
        );
    }
    if !a.margins.is_empty() {
        let ideal = GemmEngine::new(EngineConfig {
            mode: Mode::Ideal,
            ..cfg
        })?
        .gemm(lhs.view(), rhs.view())?;
        let mut rows = Vec::new();
        println!(
            "{:>8} {:>12} {:>10} {:>12} {:>12}",
            "margin", "detections", "errors", "rate", "max diff"
        );
        for &p in &a.margins {
            let noisy =
                GemmEngine::new(cfg.with_noise(p, cfg.seed))?.gemm(lhs.view(), rhs.view())?;
            let row = MarginRow {
                margin: p,
                detections: noisy.diagnostics.residue_detections,
                mismatches: noisy.diagnostics.residue_mismatches,
                mismatch_rate: noisy.diagnostics.mismatch_rate(),
                max_abs_diff: max_abs_diff(&noisy.output, &ideal.output),
            };
            println!(
                "{:>8} {:>12} {:>10} {:>12.3e} {:>12.3e}",
                row.margin, row.detections, row.mismatches, row.mismatch_rate, row.max_abs_diff
            );
            rows.push(row);
        }
        report::write_csv(&dir.join("margin_sweep.csv"), &report::MARGIN_SWEEP, &rows)?;
    }
    println!("wrote {}", dir.display());
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    engine: &'a EngineConfig,
    epochs: usize,
    report: &'a TrainingReport,
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let run_cfg = a.common.load()?;
    let engine = run_cfg.engine_config();
    let epochs = a.epochs.unwrap_or(run_cfg.training.epochs);
    let t = &run_cfg.training;
    let rep = train_toy(&t.dataset, &t.net, &engine, epochs, engine.seed)?;
    let dir = run_cfg.output.dir.join("train");
    report::write_csv(&dir.join("metrics.csv"), &report::TRAINING, &rep.epochs)?;
    report::write_json(
        &dir.join("summary.json"),
        &TrainSummary {
            engine: &engine,
            epochs,
            report: &rep,
        },
    )?;
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>10}",
        "epoch", "rns_loss", "rns_acc", "fp_loss", "fp_acc"
    );
    for e in &rep.epochs {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            e.epoch, e.engine_val_loss, e.engine_val_acc, e.fp_val_loss, e.fp_val_acc
        );
    }
    println!("wrote {}", dir.display());
    Ok(EXIT_OK)
}

fn cmd_perf(a: &PerfArgs) -> Result<i32> {
    let mut run_cfg = a.common.load()?;
    if let Some(w) = &a.workload {
        run_cfg.workload.source = w.clone();
    }
    if let Some(b) = a.batch {
        run_cfg.workload.batch = Some(b);
    }
    let cfg = run_cfg.accelerator();
    cfg.validate()?;
    let dir = run_cfg.output.dir.join("perf");

    if let Some(sweep) = a.sweep {
        match sweep {
            SweepArg::Bfp => {
                let pts = bfp_sweep(&cfg, &[3, 4, 5], &[4, 8, 16, 32, 64])?;
                println!(
                    "{:>4} {:>4} {:>3} {:>10} {:>8}",
                    "b_m", "g", "k", "pJ/MAC", "laser"
                );
                for p in &pts {
                    println!(
                        "{:>4} {:>4} {:>3} {:>10.4} {:>7.1}%",
                        p.mantissa_bits,
                        p.group_size,
                        p.k,
                        p.energy_per_mac_pj,
                        100.0 * p.laser_share
                    );
                }
                report::write_csv(&dir.join("bfp_sweep.csv"), &report::BFP_SWEEP, &pts)?;
            }
            SweepArg::Mdpus => {
                let rows = [4, 8, 16, 32, 64, 128];
                let mut out = Vec::new();
                for name in PRESETS {
                    let mut w = WorkloadSpec::preset(name)?;
                    if let Some(b) = run_cfg.workload.batch {
                        w = w.with_batch(b);
                    }
                    for (r, u) in mdpu_sweep(&w, a.dataflow, &cfg, &rows)? {
                        out.push(MdpuRow {
                            workload: name.to_string(),
                            rows: r,
                            utilization: u,
                        });
                    }
                }
                print!("{:<10}", "workload");
                for r in rows {
                    print!(" {r:>7}");
                }
                println!();
                for chunk in out.chunks(rows.len()) {
                    print!("{:<10}", chunk[0].workload);
                    for row in chunk {
                        print!(" {:>6.1}%", 100.0 * row.utilization);
                    }
                    println!();
                }
                report::write_csv(&dir.join("mdpu_sweep.csv"), &report::MDPU_SWEEP, &out)?;
            }
        }
        println!("wrote {}", dir.display());
        return Ok(EXIT_OK);
    }

    let workload = run_cfg.workload()?;
    let rep = energy_report(&workload, a.dataflow, &cfg)?;
    rep.check_conservation()?;
    let rows: Vec<GemmRow> = rep.gemms.iter().map(GemmRow::from).collect();
    report::write_csv(&dir.join("gemms.csv"), &report::GEMMS, &rows)?;
    report::write_csv(
        &dir.join("layers.csv"),
        &report::LAYERS,
        &report::layer_rows(&rep),
    )?;
    report::write_csv(
        &dir.join("breakdown.csv"),
        &report::BREAKDOWN,
        &report::breakdown_rows(&rep),
    )?;
    report::write_json(&dir.join("report.json"), &rep)?;
    report::validate_cost_report(&dir.join("report.json"))?;

    println!(
        "{} batch {} schedule {}: {} GEMMs, {:.3e} MACs",
        rep.workload,
        workload.batch,
        rep.schedule,
        rep.gemms.len(),
        rep.macs as f64
    );
    println!("latency            {:.4} ms", rep.latency_ns * 1e-6);
    println!("energy             {:.4} mJ", rep.energy.total * 1e-9);
    println!(
        "energy/MAC         {:.4} pJ ({:.4} pJ without SRAM, {:.4} pJ steady state)",
        rep.energy_per_mac_pj,
        rep.compute_energy_per_mac_pj,
        steady_state_energy_per_mac(&cfg)?
    );
    println!("average power      {:.3} W", rep.average_power_w);
    println!(
        "peak power         {:.3} W (reprogramming {:.3} W)",
        rep.peak_power.total, rep.reprogram_power_w
    );
    println!(
        "area               {:.1} mm^2 photonic, {:.1} mm^2 electronic, {:.1} mm^2 stacked",
        rep.area.photonic.total, rep.area.electronic.total, rep.area.stacked_mm2
    );
    println!("utilization        {:.2}%", 100.0 * rep.utilization);

    if a.breakdown {
        for (title, b) in [
            ("energy", &rep.energy),
            ("peak power", &rep.peak_power),
            ("photonic area", &rep.area.photonic),
            ("electronic area", &rep.area.electronic),
        ] {
            println!("{title}:");
            for (name, share) in b.shares() {
                println!("  {name:<12} {:>6.2}%", 100.0 * share);
            }
        }
    }

    if !a.format.is_empty() {
        let sys = &run_cfg.systolic;
        let formats: Vec<String> = if a.format.iter().any(|f| f.eq_ignore_ascii_case("all")) {
            sys.formats.iter().map(|f| f.name.clone()).collect()
        } else {
            a.format.clone()
        };
        let modes: &[IsoMode] = match a.iso {
            IsoArg::IsoEnergy => &[IsoMode::IsoEnergy],
            IsoArg::IsoArea => &[IsoMode::IsoArea],
            IsoArg::Both => &[IsoMode::IsoEnergy, IsoMode::IsoArea],
        };
        let mut rows = Vec::new();
        println!(
            "{:<7} {:<10} {:>9} {:>10} {:>10} {:>10}",
            "format", "mode", "arrays", "speedup", "EDP ratio", "power"
        );
        for f in &formats {
            let has_area = sys.format(f)?.mm2_per_mac.is_some();
            for &mode in modes {
                if mode == IsoMode::IsoArea && !has_area {
                    println!("{f:<7} iso-area   skipped: no area figure");
                    continue;
                }
                let c = compare(&workload, a.dataflow, &rep, f, mode, sys, &cfg)?;
                println!(
                    "{:<7} {:<10} {:>9.2} {:>9.2}x {:>9.2}x {:>9.2}x",
                    c.format,
                    if mode == IsoMode::IsoEnergy {
                        "iso-energy"
                    } else {
                        "iso-area"
                    },
                    c.arrays,
                    c.speedup,
                    c.edp_ratio,
                    c.power_ratio
                );
                rows.push(c);
            }
        }
        report::write_csv(&dir.join("comparison.csv"), &report::COMPARISON, &rows)?;
    }
    println!("wrote {}", dir.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_subcommands() {
        for args in [
            vec!["rnsphot", "verify", "--suite", "rns"],
            vec![
                "rnsphot", "gemm", "--m", "8", "--kdim", "8", "--n", "8", "--mode", "noisy",
            ],
            vec!["rnsphot", "train", "--epochs", "2"],
            vec![
                "rnsphot",
                "perf",
                "--dataflow",
                "df1",
                "--format",
                "FP32,INT8",
                "--iso",
                "iso-area",
            ],
            vec!["rnsphot", "perf", "--sweep", "bfp"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        assert!(Cli::try_parse_from(["rnsphot", "perf", "--dataflow", "df9"]).is_err());
    }

    #[test]
    fn bad_config_exits_2() {
        assert_eq!(
            run(["rnsphot", "gemm", "--bm", "4", "--k", "3"]),
            EXIT_CONFIG
        );
        assert_eq!(run(["rnsphot", "perf", "--dataflow", "df3"]), EXIT_CONFIG);
        assert_eq!(run(["rnsphot", "nope"]), EXIT_CONFIG);
    }
}
