use anyhow::Context;
use clap::Parser;
use qem_lab::config::{
    parse_modes, parse_usize_grid, ConfigOverrides, Experiment, ExperimentConfig,
};
use qem_lab::experiments::{run_experiment, write_output};
use std::path::PathBuf;
use std::str::FromStr;

/// Quantum error mitigation experiment runner.
///
/// Runs one named experiment and writes its CSV tables plus a manifest
/// describing the exact configuration. Values from `--config` override the
/// experiment defaults, and explicit flags override both.
#[derive(Debug, Parser)]
#[command(name = "qem-lab", version, about)]
struct Cli {
    /// Experiment to run: bloch_x, bloch_rx, amp_damp_x, amp_damp_rx,
    /// qaoa_mud, or bounds_table.
    experiment: String,

    /// JSON config file with the same fields as the manifest's config block.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Per-gate noise strength (depolarizing probability).
    #[arg(long)]
    eps: Option<f64>,

    /// Amplitude damping strength for the amp_damp experiments.
    #[arg(long)]
    gamma: Option<f64>,

    /// Rotation angle for the rx-style experiments (radians).
    #[arg(long)]
    theta: Option<f64>,

    /// Shot budget per circuit evaluation.
    #[arg(long)]
    ns: Option<u64>,

    /// Number of independent Monte Carlo trials per table row.
    #[arg(long)]
    trials: Option<u64>,

    /// Master seed; all randomness derives from it deterministically.
    #[arg(long)]
    seed: Option<u64>,

    /// Gate-count grid: either a comma list (10,50,100) or an inclusive
    /// range (1..1000).
    #[arg(long)]
    ng: Option<String>,

    /// QAOA stage counts, comma separated (e.g. 9,25,49,81).
    #[arg(long)]
    stages: Option<String>,

    /// Estimator modes to run, comma separated from: noqem, exact,
    /// mc-emp, mc-concat.
    #[arg(long)]
    modes: Option<String>,

    /// Output directory for the CSV tables and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let experiment = Experiment::from_str(&cli.experiment).map_err(anyhow::Error::msg)?;
    let mut cfg = ExperimentConfig::base(experiment);
    if let Some(path) = &cli.config {
        let overrides = ConfigOverrides::from_json_file(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        overrides.apply(&mut cfg);
        // The positional experiment name wins over the file's.
        cfg.experiment = experiment;
    }
    if let Some(v) = cli.eps {
        cfg.eps = v;
    }
    if let Some(v) = cli.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = cli.theta {
        cfg.theta = v;
    }
    if let Some(v) = cli.ns {
        cfg.ns = v;
    }
    if let Some(v) = cli.trials {
        cfg.trials = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(grid) = &cli.ng {
        cfg.ng_list = parse_usize_grid(grid)
            .map_err(anyhow::Error::msg)
            .context("parsing --ng")?;
    }
    if let Some(grid) = &cli.stages {
        cfg.p_list = parse_usize_grid(grid)
            .map_err(anyhow::Error::msg)
            .context("parsing --stages")?;
    }
    if let Some(list) = &cli.modes {
        cfg.modes = parse_modes(list)
            .map_err(anyhow::Error::msg)
            .context("parsing --modes")?;
    }
    if let Some(out) = &cli.out {
        cfg.out_path = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    let out_dir = PathBuf::from(&cfg.out_path);

    eprintln!(
        "running {} (eps={}, ns={}, trials={}, seed={})",
        cfg.experiment, cfg.eps, cfg.ns, cfg.trials, cfg.seed
    );
    let result = run_experiment(&cfg)?;
    let paths = write_output(&result, &out_dir)?;
    for p in &paths {
        println!("{}", p.display());
    }
    eprintln!(
        "done in {:.2}s ({} tables, {} threads)",
        result.manifest.wall_seconds,
        result.tables.len(),
        result.manifest.threads
    );
    Ok(())
}
