//! Loads an experiment config and runs it, the same way the command line
//! tool does. Usage: `cargo run --example run_config -- <config.toml> <out-dir>`.

use std::path::PathBuf;

use stereogap::experiment::{load_config, run, ExperimentError};

fn main() {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/toy_tables.toml")));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("stereogap-run"));

    let result = load_config(&config).and_then(|cfg| run(&cfg, &out));
    match result {
        Ok(manifest) => {
            println!("{} -> {}", manifest.experiment, out.display());
            for f in &manifest.files {
                println!("  {:<28} {:>8} bytes  {}", f.path, f.bytes, &f.sha256[..16]);
            }
        }
        Err(ExperimentError::Config(diags)) => {
            for d in diags {
                eprintln!("{d}");
            }
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
