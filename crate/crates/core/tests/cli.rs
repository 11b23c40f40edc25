use std::fs;
use std::path::Path;
use std::process::Command;

use stereogap::experiment::Manifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stereogap"))
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn list_experiments_names_every_kind() {
    let out = bin().arg("list-experiments").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "gap-analysis",
        "zone-map",
        "flow-timing",
        "toy-tables",
        "linear-bounds",
        "train-overcost",
        "debias-protocol",
    ] {
        assert!(text.contains(kind), "{kind} missing from {text}");
    }
}

#[test]
fn every_sample_config_validates() {
    for entry in fs::read_dir(format!("{}/configs", env!("CARGO_MANIFEST_DIR"))).unwrap() {
        let path = entry.unwrap().path();
        let status = bin().args(["validate", "--config"]).arg(&path).output().unwrap().status;
        assert_eq!(status.code(), Some(0), "{}", path.display());
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_seed = write(dir.path(), "a.toml", "kind = \"toy-tables\"\n");
    let unknown = write(dir.path(), "b.toml", "kind = \"toy-tables\"\nseed = 1\ncolour = 3\n");
    let bad_eps = write(
        dir.path(),
        "c.toml",
        "kind = \"toy-tables\"\nseed = 1\n[timing]\neta = 0.01\nx_init_multiplier = -2.0\ndeltas = [0.01]\n\
         epsilons = [0.0]\npass_tol = 0.0\nminority_epsilons = [0.1]\n",
    );
    for (path, needle) in [
        (missing_seed, "seed"),
        (unknown, "colour"),
        (bad_eps, "timing.epsilons"),
    ] {
        let out = bin().args(["validate", "--config", &path]).output().unwrap();
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(needle), "{err}");
        let run = bin()
            .args(["run", "--config", &path, "--out"])
            .arg(dir.path().join("out"))
            .output()
            .unwrap()
            .status;
        assert_eq!(run.code(), Some(2));
    }
    let nothing = bin()
        .args(["run", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap()
        .status;
    assert_eq!(nothing.code(), Some(2));
    let no_args = bin().arg("run").output().unwrap().status;
    assert_eq!(no_args.code(), Some(2));
}

#[test]
fn unknown_line_number_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "a.toml",
        "kind = \"toy-tables\"\nseed = 1\n\n[timing]\nspeed = 2\n",
    );
    let out = bin().args(["validate", "--config", &p]).output().unwrap();
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn runtime_failure_exits_with_one_and_records_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "div.toml",
        "kind = \"flow-timing\"\nseed = 0\n[model]\ntype = \"toy\"\ndelta = 0.01\n[integrator]\n\
         step = 3.0\nhorizon = 300.0\ngrad_tol = 1e-10\ntheta_init = [-2.0]\n",
    );
    let out_dir = dir.path().join("out");
    let status = bin()
        .args(["run", "--config", &p, "--out"])
        .arg(&out_dir)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(1));
    let m = manifest(&out_dir);
    assert_eq!(m.status, stereogap::experiment::RunStatus::Failed);
    assert!(m.error.unwrap().contains("diverged"));
    assert!(m.files.iter().any(|f| f.path == "resolved_config.json"));
}

#[test]
fn runs_are_reproducible_and_hashes_match() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = bin()
            .args([
                "run",
                "--threads",
                "1",
                "--config",
                &config("ridge_linear_bounds.toml"),
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.files, mb.files);
    for f in &ma.files {
        let bytes = fs::read(a.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        use sha2::Digest;
        assert_eq!(hex::encode(sha2::Sha256::digest(&bytes)), f.sha256);
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "11"), (&b, "12")] {
        let status = bin()
            .args([
                "run",
                "--config",
                &config("ridge_linear_bounds.toml"),
                "--seed",
                seed,
                "--out",
            ])
            .arg(out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
    }
    assert_eq!(manifest(&a).seed, 11);
    assert_eq!(manifest(&b).seed, 12);
    assert_ne!(
        fs::read(a.join("linear_bounds.json")).unwrap(),
        fs::read(b.join("linear_bounds.json")).unwrap()
    );
}
