//! Drives the experiment harness from a config text, the same path the
//! `loopsim run --config` command takes, and then reruns it from the
//! manifest to show the outputs are reproducible.
//!
//! cargo run --release --example run_from_config

use loopsim::harness::{execute, ExperimentConfig, RunManifest};

const CONFIG: &str = "\
experiment = density_trace
setting = sampling
data.kind = linear
data.rows = 500
data.cols = 10
data.seed = 7
usage = 1
adherence = 0
steps = 1000
probe_every = 100
repeats = 3
seed = 1
";

fn run(cfg: &ExperimentConfig, dir: &std::path::Path) -> loopsim::Result<RunManifest> {
    let mut manifest = RunManifest::start(Some(cfg), CONFIG);
    let outcome = execute(cfg, dir).and_then(|files| manifest.record_outputs(dir, &files));
    manifest.finish(&outcome);
    manifest.write(dir)?;
    outcome.map(|_| manifest)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    cfg.validate()?;
    let root = std::env::temp_dir().join("loopsim-run-from-config");
    let first = run(&cfg, &root.join("first"))?;
    println!(
        "config {} wrote {:?}",
        &first.config_hash.clone().unwrap_or_default()[..12],
        first.output_paths
    );

    let replay = first.config()?;
    let second = run(&replay, &root.join("second"))?;
    println!("rerun identical: {}", first.content_hashes == second.content_hashes);

    let summary = std::fs::read_to_string(root.join("first/summary.json"))?;
    println!("{summary}");
    Ok(())
}
