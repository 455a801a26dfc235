use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rns_photonic::cli::{run, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY_FAILED};
use rns_photonic::report;

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            for (k, v) in files(&p) {
                out.insert(
                    format!("{}/{k}", p.file_name().unwrap().to_string_lossy()),
                    v,
                );
            }
        } else {
            out.insert(
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            );
        }
    }
    out
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("verify.csv");
    assert_eq!(
        run(["rnsphot", "verify", "--suite", "rns", "--out", &s(&csv)]),
        EXIT_OK
    );
    report::validate_csv(&csv, &report::VERIFY).unwrap();
    assert_eq!(
        run(["rnsphot", "verify", "--suite", "rns", "--inject-fault"]),
        EXIT_VERIFY_FAILED
    );
    assert_eq!(run(["rnsphot", "verify", "--suite", "bogus"]), EXIT_CONFIG);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[engine]\nmantissa_bits = 4\nk = 3\n").unwrap();
    assert_eq!(run(["rnsphot", "gemm", "--config", &s(&bad)]), EXIT_CONFIG);
    fs::write(&bad, "[engine\n").unwrap();
    assert_eq!(run(["rnsphot", "perf", "--config", &s(&bad)]), EXIT_CONFIG);
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        run(["rnsphot", "train", "--config", &s(&missing)]),
        EXIT_CONFIG
    );
    assert_eq!(
        run(["rnsphot", "perf", "--workload", "no_such_net"]),
        EXIT_CONFIG
    );
    assert_eq!(
        run([
            "rnsphot",
            "perf",
            "--format",
            "FP64",
            "--out",
            &s(dir.path())
        ]),
        EXIT_CONFIG
    );
    assert_eq!(
        run(["rnsphot", "gemm", "--m", "0", "--out", &s(dir.path())]),
        EXIT_CONFIG
    );
}

#[test]
fn gemm_outputs_validate_and_reproduce() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let args = [
                "rnsphot",
                "gemm",
                "--m",
                "20",
                "--kdim",
                "50",
                "--n",
                "7",
                "--seed",
                "3",
                "--margins",
                "1,4",
            ];
            let mut v: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            v.extend(["--out".into(), s(dir.path())]);
            assert_eq!(run(&v), EXIT_OK);
            let g = dir.path().join("gemm");
            report::validate_csv(&g.join("margin_sweep.csv"), &report::MARGIN_SWEEP).unwrap();
            report::validate_json_keys(
                &g.join("diagnostics.json"),
                &["engine", "max_abs_diff", "diagnostics"],
            )
            .unwrap();
            assert_eq!(
                report::read_matrix(&g.join("output.csv")).unwrap().dim(),
                (20, 7)
            );
            let diff = report::read_matrix(&g.join("oracle_diff.csv")).unwrap();
            assert!(diff.iter().all(|d| *d == 0.0));
            {
                let f = files(dir.path());
                (dir, f)
            }
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
}

#[test]
fn gemm_reads_operand_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "1.5,0.25,-3\n2,0,1\n").unwrap();
    fs::write(&b, "1\n1\n1\n").unwrap();
    assert_eq!(
        run([
            "rnsphot",
            "gemm",
            "--a",
            &s(&a),
            "--b",
            &s(&b),
            "--out",
            &s(dir.path())
        ]),
        EXIT_OK
    );
    let out = report::read_matrix(&dir.path().join("gemm/output.csv")).unwrap();
    assert_eq!(out.iter().copied().collect::<Vec<_>>(), vec![-1.25, 3.0]);
    fs::write(&b, "1\n1\n").unwrap();
    assert_eq!(
        run([
            "rnsphot",
            "gemm",
            "--a",
            &s(&a),
            "--b",
            &s(&b),
            "--out",
            &s(dir.path())
        ]),
        EXIT_CONFIG
    );
}

#[test]
fn perf_outputs_validate_and_reproduce() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let code = run([
                "rnsphot",
                "perf",
                "-w",
                "resnet18",
                "--format",
                "all",
                "--breakdown",
                "--out",
                &s(dir.path()),
            ]);
            assert_eq!(code, EXIT_OK);
            let p = dir.path().join("perf");
            report::validate_csv(&p.join("gemms.csv"), &report::GEMMS).unwrap();
            report::validate_csv(&p.join("layers.csv"), &report::LAYERS).unwrap();
            report::validate_csv(&p.join("breakdown.csv"), &report::BREAKDOWN).unwrap();
            report::validate_csv(&p.join("comparison.csv"), &report::COMPARISON).unwrap();
            report::validate_cost_report(&p.join("report.json"))
                .unwrap()
                .check_conservation()
                .unwrap();
            {
                let f = files(dir.path());
                (dir, f)
            }
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
}

#[test]
fn perf_sweeps_validate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(["rnsphot", "perf", "--sweep", "bfp", "--out", &s(dir.path())]),
        EXIT_OK
    );
    report::validate_csv(&dir.path().join("perf/bfp_sweep.csv"), &report::BFP_SWEEP).unwrap();
    assert_eq!(
        run([
            "rnsphot",
            "perf",
            "--sweep",
            "mdpus",
            "--out",
            &s(dir.path())
        ]),
        EXIT_OK
    );
    report::validate_csv(&dir.path().join("perf/mdpu_sweep.csv"), &report::MDPU_SWEEP).unwrap();
}

#[test]
fn train_outputs_reproduce() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            assert_eq!(
                run([
                    "rnsphot",
                    "train",
                    "--epochs",
                    "2",
                    "--seed",
                    "5",
                    "--out",
                    &s(dir.path())
                ]),
                EXIT_OK
            );
            report::validate_csv(&dir.path().join("train/metrics.csv"), &report::TRAINING).unwrap();
            report::validate_json_keys(
                &dir.path().join("train/summary.json"),
                &["engine", "epochs", "report"],
            )
            .unwrap();
            {
                let f = files(dir.path());
                (dir, f)
            }
        })
        .collect();
    assert_eq!(runs[0].1, runs[1].1);
}

#[test]
fn shipped_config_loads() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(["rnsphot", "perf", "-c", &s(&cfg), "--out", &s(dir.path())]),
        EXIT_OK
    );
}
