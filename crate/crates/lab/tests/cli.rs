//! End-to-end checks of the command-line surface: subcommands, file
//! outputs, the row-isolation flag, exit codes and byte determinism.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hardy-lab"))
}

#[test]
fn verify_atom_writes_candidate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-atom", "--radius", "0.25", "--seed", "7"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("candidate.gfn").exists());
    assert!(dir.path().join("candidate.json").exists());
    assert!(dir.path().join("rows.csv").exists());

    // the serialized candidate feeds back through --input
    let base = dir.path().join("candidate");
    let out2 = bin()
        .args(["verify-atom", "--input", base.to_str().unwrap()])
        .args(["--out", dir.path().join("again").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out2.status.success(), "{}", String::from_utf8_lossy(&out2.stderr));
}

#[test]
fn verify_molecule_and_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-molecule", "--radius", "0.25", "--tail-fill", "0.5"])
        .args(["--grid-h", "0.0078125"]) // 1/128
        .args(["--config", write_small_config(dir.path(), 6).to_str().unwrap()])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ddir = dir.path().join("dec");
    let out = bin()
        .args(["decompose", "--radius", "0.25", "--tail-fill", "0.5"])
        .args(["--grid-h", "0.0078125"])
        .args(["--config", write_small_config(dir.path(), 6).to_str().unwrap()])
        .args(["--out", ddir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ddir.join("coefficients.csv").exists());
    assert!(ddir.join("manifest.json").exists());
    assert!(ddir.join("atom-00.gfn").exists());
    assert!(ddir.join("residual.gfn").exists());
}

#[test]
fn apply_cz_emits_operator_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // operator defaults carry an admissible lambda for the kernel exponents
    let mut cfg = hardy_lab::config::ExperimentConfig::default_for("operator-pipeline");
    cfg.family.k_annuli = 4;
    cfg.grid_h = 1.0 / 128.0;
    let cfg_path = dir.path().join("op.toml");
    cfg.save(&cfg_path).unwrap();
    let out = bin()
        .args(["apply-cz", "--radius", "0.25"])
        .args(["--config", cfg_path.to_str().unwrap()])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("image.gfn").exists());
    assert!(dir.path().join("operator.json").exists());
}

#[test]
fn run_report_only_and_determinism() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for dir in [&d1, &d2] {
        let out = bin()
            .args(["run", "weight-ground-truth"])
            .args(["--grid-h", "0.0001220703125"]) // 2^-13, matches the measure tolerance
            .args(["--out", dir.path().to_str().unwrap()])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(d1.path().join("rows.csv")).unwrap();
    let b = std::fs::read(d2.path().join("rows.csv")).unwrap();
    assert_eq!(a, b, "identical runs must produce byte-identical CSV");

    // report re-reads a run directory and keeps its verdict
    let out = bin()
        .args(["report", "--out", d1.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    // row isolation
    let d3 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "weight-ground-truth"])
        .args(["--grid-h", "0.0001220703125"])
        .args(["--only", "weight-ground-truth/001-measure-r1"])
        .args(["--out", d3.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d3.path().join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "header plus exactly one row:\n{csv}");
}

#[test]
fn failing_candidate_yields_nonzero_exit() {
    // an oversized function violates the size condition; the validator
    // reports it and the process exits nonzero
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify-atom", "--radius", "0.25", "--seed", "7"])
        .args(["--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    // inflate the stored values tenfold
    let base = dir.path().join("candidate");
    let gfn = std::fs::read_to_string(base.with_extension("gfn")).unwrap();
    let mut lines: Vec<String> = gfn.lines().map(|s| s.to_string()).collect();
    let start = lines.iter().position(|l| l.starts_with("values")).unwrap() + 1;
    for line in &mut lines[start..] {
        let v: f64 = line.parse().unwrap();
        *line = format!("{}", v * 10.0);
    }
    std::fs::write(base.with_extension("gfn"), lines.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["verify-atom", "--input", base.to_str().unwrap()])
        .args(["--out", dir.path().join("fail").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "failed validation must exit 1");
}

fn write_small_config(dir: &Path, k_max: u32) -> std::path::PathBuf {
    let mut cfg = hardy_lab::config::ExperimentConfig::default_for("molecule-decomposition");
    cfg.family.k_max = k_max;
    cfg.family.k_annuli = 4;
    cfg.grid_h = 1.0 / 128.0;
    let path = dir.join("config.toml");
    cfg.save(&path).unwrap();
    path
}
