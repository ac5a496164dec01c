//! Experiment CLI: assemble an imaging problem, run solver variants, and
//! write convergence CSVs, gnuplot curve files, a threshold summary table,
//! and the recovered images.
//!
//! Configuration comes from an optional flat `key = value` file plus
//! command-line overrides; flags win over file entries.

use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;

use blockprox::experiment::{
    run_experiment, ExperimentConfig, ProblemKind, Resolution, RunVariant,
};
use blockprox::step::PExponent;

#[derive(Parser, Debug)]
#[command(name = "blockprox")]
#[command(about = "Block-proximal primal-dual imaging experiments")]
struct Cli {
    /// Flat key=value config file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,

    /// Problem: tgv2 | deblur | undim | tv-single
    #[arg(long)]
    problem: Option<String>,

    /// Algorithm variants, e.g. PDHGM, Relax, A-DDBO (repeat or comma-separate)
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,

    /// Image resolution: lo (192x128) or hi (768x512)
    #[arg(long)]
    resolution: Option<String>,

    /// Iteration budget per run
    #[arg(long)]
    iters: Option<usize>,

    /// Number of random seeds for stochastic variants
    #[arg(long)]
    seeds: Option<u32>,

    /// Metric reporting stride (iterations)
    #[arg(long)]
    stride: Option<usize>,

    /// Base random seed
    #[arg(long)]
    seed: Option<u64>,

    /// Artifact directory (CSV curves, summary table, images)
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Input photograph (PNG/PGM); the built-in scene is used when absent
    #[arg(long)]
    image: Option<PathBuf>,

    /// Override the ψ/η exponent p of accelerated variants: 0.5 or 1
    #[arg(long)]
    p: Option<f64>,

    /// Step-product margin δ in τσ||K||² = 1-δ
    #[arg(long)]
    delta: Option<f64>,

    /// TV / TGV² first-order weight α
    #[arg(long)]
    alpha: Option<f64>,

    /// TGV² second-order weight β
    #[arg(long)]
    beta: Option<f64>,

    /// ρ_j of the accelerated φ rules
    #[arg(long)]
    rho: Option<f64>,

    /// γ̃_j as a fraction of each block's strong-convexity factor
    #[arg(long)]
    gamma_tilde: Option<f64>,

    /// Inertial parameter of the Relax baseline
    #[arg(long)]
    relax_rho: Option<f64>,

    /// PDHGM iterations for the target solution
    #[arg(long)]
    target_iters: Option<usize>,

    /// Stop a run once its gap falls below this dB value
    #[arg(long)]
    stop_gap_db: Option<f64>,

    /// Write measured per-iteration times into the curve CSVs
    /// (makes reruns differ byte-wise in that column)
    #[arg(long)]
    timing: bool,

    /// Corruption noise std (problem-specific default otherwise)
    #[arg(long)]
    noise_std: Option<f64>,

    /// Blur kernel std for the deblurring problem
    #[arg(long)]
    blur_std: Option<f64>,

    /// Seed of the data corruption
    #[arg(long)]
    corruption_seed: Option<u64>,

    /// Enable per-iteration coupling and frozen-block assertions
    #[arg(long)]
    debug_checks: bool,
}

fn parse_config_file(path: &PathBuf) -> anyhow::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {} is not 'key = value': {line}", lineno + 1);
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow::anyhow!("config key '{key}': {e}")),
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => parse_config_file(p)?,
        None => HashMap::new(),
    };

    let mut cfg = ExperimentConfig::default();

    let problem = cli
        .problem
        .or_else(|| file.get("problem").cloned())
        .unwrap_or_else(|| "tgv2".into());
    cfg.problem = ProblemKind::parse(&problem)?;

    let resolution = cli
        .resolution
        .or_else(|| file.get("resolution").cloned())
        .unwrap_or_else(|| "lo".into());
    cfg.resolution = match resolution.as_str() {
        "lo" => Resolution::Lo,
        "hi" => Resolution::Hi,
        other => bail!("resolution must be 'lo' or 'hi', got '{other}'"),
    };

    cfg.iters = cli.iters.or(get(&file, "iters")?).unwrap_or(cfg.iters);
    cfg.stride = cli.stride.or(get(&file, "stride")?).unwrap_or(cfg.stride);
    cfg.seeds = cli.seeds.or(get(&file, "seeds")?).unwrap_or(cfg.seeds);
    cfg.seed = cli.seed.or(get(&file, "seed")?).unwrap_or(cfg.seed);
    cfg.delta = cli.delta.or(get(&file, "delta")?).unwrap_or(cfg.delta);
    cfg.rho = cli.rho.or(get(&file, "rho")?).unwrap_or(cfg.rho);
    cfg.gamma_tilde = cli
        .gamma_tilde
        .or(get(&file, "gamma_tilde")?)
        .unwrap_or(cfg.gamma_tilde);
    cfg.relax_rho = cli
        .relax_rho
        .or(get(&file, "relax_rho")?)
        .unwrap_or(cfg.relax_rho);
    cfg.alpha = cli.alpha.or(get(&file, "alpha")?);
    cfg.beta = cli.beta.or(get(&file, "beta")?);
    cfg.target_iters = cli
        .target_iters
        .or(get(&file, "target_iters")?)
        .unwrap_or(cfg.target_iters);
    cfg.stop_gap_db = cli.stop_gap_db.or(get(&file, "stop_gap_db")?);
    cfg.noise_std = cli.noise_std.or(get(&file, "noise_std")?);
    cfg.blur_std = cli.blur_std.or(get(&file, "blur_std")?);
    cfg.corruption_seed = cli
        .corruption_seed
        .or(get(&file, "corruption_seed")?)
        .unwrap_or(cfg.corruption_seed);
    cfg.out_dir = cli
        .out_dir
        .or_else(|| file.get("out_dir").map(PathBuf::from))
        .unwrap_or(cfg.out_dir);
    cfg.image = cli.image.or_else(|| file.get("image").map(PathBuf::from));
    cfg.timing = cli.timing || get::<bool>(&file, "timing")?.unwrap_or(false);
    cfg.debug_checks = cli.debug_checks || get::<bool>(&file, "debug_checks")?.unwrap_or(false);
    cfg.p_override = match cli.p.or(get(&file, "p")?) {
        None => None,
        Some(v) if v == 0.5 => Some(PExponent::Half),
        Some(v) if v == 1.0 => Some(PExponent::One),
        Some(v) => bail!("p must be 0.5 or 1, got {v}"),
    };

    let mut variant_names: Vec<String> = cli.variant;
    if variant_names.is_empty() {
        if let Some(v) = file.get("variants").or_else(|| file.get("variant")) {
            variant_names = v.split(',').map(|s| s.trim().to_string()).collect();
        }
    }
    if variant_names.is_empty() {
        variant_names = vec![
            "PDHGM".into(),
            "Relax".into(),
            "A-DDBO".into(),
            "A-DDIO".into(),
        ];
    }
    let variants: Vec<RunVariant> = variant_names
        .iter()
        .map(|s| RunVariant::parse(s, cfg.relax_rho).map_err(anyhow::Error::from))
        .collect::<anyhow::Result<_>>()?;

    eprintln!(
        "problem {:?} ({:?}), {} iterations, stride {}, variants: {}",
        cfg.problem,
        cfg.resolution,
        cfg.iters,
        cfg.stride,
        variant_names.join(", ")
    );
    let artifacts = run_experiment(&cfg, &variants)?;
    eprintln!(
        "C_x = {:.6e}, initial gap = {:.6e}, target stabilisation {:.1} dB",
        artifacts.cx, artifacts.gap0, artifacts.target_mid_distance_db
    );
    println!("{}", artifacts.summary_text);
    eprintln!("artifacts in {}", artifacts.out_dir.display());
    Ok(())
}
