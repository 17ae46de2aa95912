use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use swipt_core::benchmarks::Scheme;
use swipt_core::experiment::{emit_results, preset, replay, run_experiment, ExperimentSpec, SweepVar};

/// Monte-Carlo sweeps for active-IRS SWIPT beamforming.
#[derive(Debug, Parser)]
#[command(name = "swipt-exp", version)]
struct Args {
    /// Experiment spec (JSON, or TOML by extension).
    #[arg(long, conflicts_with_all = ["preset", "replay"])]
    spec: Option<PathBuf>,
    /// Built-in sweep: placement, sinr or harvest.
    #[arg(long, conflicts_with = "replay")]
    preset: Option<String>,
    /// Re-run the spec stored in a manifest.json.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Output directory; defaults to the spec's `output` or `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated scheme list, e.g. `proposed,passive`.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    /// Sweep override, e.g. `gamma_db=0,10,20`.
    #[arg(long)]
    sweep: Option<String>,
    /// Presets at N = 50 with 100 trials.
    #[arg(long)]
    full_scale: bool,
}

fn parse_sweep(s: &str) -> Result<(SweepVar, Vec<f64>)> {
    let (var, vals) = s.split_once('=').context("sweep must look like var=v1,v2,...")?;
    let var = SweepVar::parse(var.trim())?;
    let vals = vals
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value '{v}'")))
        .collect::<Result<Vec<_>>>()?;
    Ok((var, vals))
}

fn build_spec(args: &Args) -> Result<ExperimentSpec> {
    let mut spec = match (&args.spec, &args.preset) {
        (Some(path), _) => ExperimentSpec::load(path)?,
        (None, Some(name)) => preset(name, args.full_scale)?,
        (None, None) => bail!("one of --spec, --preset or --replay is required"),
    };
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if !args.scheme.is_empty() {
        spec.schemes = args.scheme.iter().map(|s| Scheme::parse(s.trim())).collect::<Result<_, _>>()?;
    }
    if let Some(s) = &args.sweep {
        let (var, values) = parse_sweep(s)?;
        spec.sweep.var = var;
        spec.sweep.values = values;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> Result<()> {
    let args = Args::parse();
    let (spec, result) = match &args.replay {
        Some(m) => replay(m)?,
        None => {
            let spec = build_spec(&args)?;
            let result = run_experiment(&spec)?;
            (spec, result)
        }
    };
    let out = args.out.clone().or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    emit_results(&spec, &result, &out)?;
    for r in &result.rows {
        println!("{}={} {:<20} mean {:.6e} std {:.3e} n {} failed {}", r.sweep_var, r.value, r.scheme, r.mean, r.std, r.n, r.n_failed);
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}
