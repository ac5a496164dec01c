//! Experiment orchestration: build a problem instance from a configuration,
//! instantiate solver variants by name, run them under the two-pass metric
//! protocol (iterate first to fix the dynamic `C_x` bound, then re-run and
//! report), and emit CSV / curve / summary artifacts.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use crate::metrics::{
    self, pseudo_gap, CxTracker, EtaPsiLetter, KappaLetter, MetricRow, PhiLetter, RandLetter,
    Target, Trace, VariantName,
};
use crate::ops::{make_dimming_mask, make_gaussian_kernel, FourierDiagonal, Grid2D};
use crate::problems::{
    self, build_tgv2_denoise, build_tv_deblur, build_tv_denoise_single, build_tv_undim, corrupt,
    Corruption, SaddleProblem,
};
use crate::sampling::{AlternatingSampler, DeterministicFull, FixedMSampler, InnerRule, Sampler};
use crate::solvers::{run, Alg1Solver, Alg2Solver, PdhgmSolver, PrimalDualSolver, RunOutcome};
use crate::step::{
    init_test_weights, max_feasible_gamma_bar, EtaPerpRule, EtaRule, InitData, KappaFamily,
    PExponent, PhiRule, StepConfig, StepState,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Tgv2Denoise,
    TvDeblur,
    TvUndim,
    /// single-block TV denoising (mainly for oracles and rate studies)
    TvDenoiseSingle,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tgv2" | "tgv2-denoise" | "denoise" => Ok(Self::Tgv2Denoise),
            "deblur" | "tv-deblur" => Ok(Self::TvDeblur),
            "undim" | "tv-undim" => Ok(Self::TvUndim),
            "tv-denoise-single" | "tv-single" => Ok(Self::TvDenoiseSingle),
            _ => Err(Error::Config(format!("unknown problem '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resolution {
    Lo,
    Hi,
}

/// A runnable algorithm: the accelerated block variants by name, or one of
/// the two baselines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunVariant {
    Pdhgm,
    Relax(f64),
    Accelerated(VariantName),
}

impl RunVariant {
    pub fn parse(s: &str, relax_rho: f64) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PDHGM" => Ok(Self::Pdhgm),
            "RELAX" => Ok(Self::Relax(relax_rho)),
            _ => Ok(Self::Accelerated(s.parse()?)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Pdhgm => "PDHGM".into(),
            Self::Relax(_) => "Relax".into(),
            Self::Accelerated(v) => v.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub resolution: Resolution,
    pub iters: usize,
    pub stride: usize,
    pub seeds: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub image: Option<PathBuf>,
    /// TV weight (α); `None` uses the resolution default
    pub alpha: Option<f64>,
    /// TGV² second-order weight (β)
    pub beta: Option<f64>,
    pub delta: f64,
    /// ρ_j of the accelerated φ rules
    pub rho: f64,
    /// γ̃_j as a fraction of the blockwise strong-convexity factor
    pub gamma_tilde: f64,
    pub relax_rho: f64,
    /// force p for accelerated variants (overrides the third letter)
    pub p_override: Option<PExponent>,
    pub target_iters: usize,
    pub stop_gap_db: Option<f64>,
    /// measured per-iteration times in the curve CSVs (breaks byte
    /// reproducibility across reruns)
    pub timing: bool,
    pub corruption_seed: u64,
    pub noise_std: Option<f64>,
    pub blur_std: Option<f64>,
    pub mask_base: f64,
    pub mask_amp: f64,
    pub debug_checks: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Tgv2Denoise,
            resolution: Resolution::Lo,
            iters: 5000,
            stride: 10,
            seeds: 1,
            seed: 1,
            out_dir: PathBuf::from("out"),
            image: None,
            alpha: None,
            beta: None,
            delta: 0.01,
            rho: 5.0,
            gamma_tilde: 0.5,
            relax_rho: 1.5,
            p_override: None,
            target_iters: 200_000,
            stop_gap_db: None,
            timing: false,
            corruption_seed: 2016,
            noise_std: None,
            blur_std: None,
            mask_base: 0.3,
            mask_amp: 0.7,
            debug_checks: false,
        }
    }
}

impl ExperimentConfig {
    pub fn alpha_default(&self) -> f64 {
        match (self.problem, self.resolution) {
            (ProblemKind::Tgv2Denoise, Resolution::Lo) => 4.0,
            (ProblemKind::Tgv2Denoise, Resolution::Hi) => 4.0 / 0.25,
            (_, Resolution::Hi) => 2.55,
            (_, Resolution::Lo) => 2.55 * 0.15,
        }
    }

    pub fn beta_default(&self) -> f64 {
        match self.resolution {
            Resolution::Lo => 4.4,
            Resolution::Hi => 4.4 / (0.25 * 0.25),
        }
    }

    fn noise_default(&self) -> f64 {
        match (self.problem, self.resolution) {
            (ProblemKind::Tgv2Denoise, Resolution::Hi) => 29.6,
            (ProblemKind::Tgv2Denoise, Resolution::Lo) => 6.15,
            (ProblemKind::TvDenoiseSingle, Resolution::Hi) => 29.6,
            (ProblemKind::TvDenoiseSingle, Resolution::Lo) => 6.15,
            _ => 2.5,
        }
    }

    fn blur_default(&self) -> f64 {
        match self.resolution {
            Resolution::Hi => 4.0,
            Resolution::Lo => 1.0,
        }
    }
}

pub struct ProblemSetup {
    pub problem: Arc<SaddleProblem<f64>>,
    pub grid: Grid2D,
    pub clean: Vec<f64>,
    pub data: Vec<f64>,
    pub corruption: String,
    pub snr_db: f64,
}

/// Load or synthesise the clean image at the requested resolution.
pub fn prepare_image(cfg: &ExperimentConfig) -> Result<(Grid2D, Vec<f64>)> {
    let (grid, img) = match &cfg.image {
        Some(path) => problems::load_image::<f64>(path)?,
        None => {
            let g = Grid2D::new(768, 512);
            (g, problems::synthetic_scene::<f64>(g))
        }
    };
    match cfg.resolution {
        Resolution::Hi => Ok((grid, img)),
        Resolution::Lo => problems::downscale(grid, &img, 4),
    }
}

/// Corrupt the clean image and assemble the saddle-point instance.
pub fn build_setup(cfg: &ExperimentConfig) -> Result<ProblemSetup> {
    let (grid, clean) = prepare_image(cfg)?;
    let alpha = cfg.alpha.unwrap_or_else(|| cfg.alpha_default());
    let beta = cfg.beta.unwrap_or_else(|| cfg.beta_default());
    let noise = cfg.noise_std.unwrap_or_else(|| cfg.noise_default());
    let spec = match cfg.problem {
        ProblemKind::Tgv2Denoise | ProblemKind::TvDenoiseSingle => {
            Corruption::GaussianNoise { std: noise }
        }
        ProblemKind::TvDeblur => Corruption::Blur {
            std: cfg.blur_std.unwrap_or_else(|| cfg.blur_default()),
            noise_std: noise,
        },
        ProblemKind::TvUndim => Corruption::Dim {
            base: cfg.mask_base,
            amp: cfg.mask_amp,
            noise_std: noise,
        },
    };
    let out = corrupt(grid, &clean, &spec, cfg.corruption_seed)?;
    let problem: Arc<SaddleProblem<f64>> = match cfg.problem {
        ProblemKind::Tgv2Denoise => Arc::new(build_tgv2_denoise(grid, &out.image, alpha, beta)?),
        ProblemKind::TvDeblur => {
            let std = cfg.blur_std.unwrap_or_else(|| cfg.blur_default());
            let kernel = make_gaussian_kernel::<f64>(grid, std);
            let blur = FourierDiagonal::from_kernel(grid, &kernel)?;
            Arc::new(build_tv_deblur(grid, &out.image, alpha, &blur)?)
        }
        ProblemKind::TvUndim => {
            let mask = make_dimming_mask::<f64>(grid, cfg.mask_base, cfg.mask_amp);
            Arc::new(build_tv_undim(grid, &out.image, alpha, &mask)?)
        }
        ProblemKind::TvDenoiseSingle => Arc::new(build_tv_denoise_single(grid, &out.image, alpha)?),
    };
    Ok(ProblemSetup {
        problem,
        grid,
        clean,
        data: out.image,
        corruption: out.description,
        snr_db: out.snr_db,
    })
}

/// Nominal initial step lengths τ_{j,0} for a problem and variant.
fn initial_taus(problem: &SaddleProblem<f64>, p: PExponent, delta: f64) -> Vec<f64> {
    let nb = problem.op.global_norm_bound();
    let tau0 = (1.0 - delta) / (1.9 * nb);
    let m = problem.primal_layout().block_count();
    match problem.name.as_str() {
        "tgv2" => {
            let factor = match p {
                PExponent::Half => 8.0,
                PExponent::One => 3.0,
            };
            vec![tau0, factor * tau0]
        }
        "deblur" | "undim" => {
            // per-block step boost from the pixelwise factors of strong
            // convexity: τ_{j,0} = τ_0 / (λ + (1-λ) γ_j)
            let lambda = match p {
                PExponent::Half => 0.01,
                PExponent::One => 0.1,
            };
            (0..m)
                .map(|j| tau0 / (lambda + (1.0 - lambda) * problem.gamma[j]))
                .collect()
        }
        _ => vec![tau0; m],
    }
}

/// Everything a variant instantiation needs beside the problem.
pub struct VariantSetup {
    pub state: StepState<f64>,
    pub kappa_lower: f64,
    pub gamma_bar: Vec<f64>,
}

/// Derive the step-state configuration of an accelerated variant.
pub fn accelerated_state(
    problem: &SaddleProblem<f64>,
    name: VariantName,
    cfg: &ExperimentConfig,
    sampler: &dyn Sampler<f64>,
) -> Result<StepState<f64>> {
    let m = problem.primal_layout().block_count();
    let p = cfg.p_override.unwrap_or(match name.eta_psi {
        EtaPsiLetter::Bounded => PExponent::Half,
        EtaPsiLetter::Increasing => PExponent::One,
    });
    let delta = cfg.delta;
    let tau0 = initial_taus(problem, p, delta);
    let eta0 = 1.0 / tau0.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi0: Vec<f64> = tau0.iter().map(|t| eta0 / t).collect();
    let w = sampler.w_bounds();

    let kappa = match name.kappa {
        KappaLetter::Max => KappaFamily::worst_case(problem.op.as_ref()),
        KappaLetter::Balanced => {
            if m != 2 || problem.dual_layout().block_count() != 2 {
                return Err(Error::Config(
                    "balanced κ variants need the TGV² block structure".into(),
                ));
            }
            let z_row = |l: usize| {
                [
                    w.w(l, 0) * w.w(l, 0) / phi0[0],
                    w.w(l, 1) * w.w(l, 1) / phi0[1],
                ]
            };
            KappaFamily::balanced_tgv2(problem.op.as_ref(), z_row(0), z_row(1))?
        }
    };

    let init: InitData<f64> = init_test_weights(&kappa, &w, &tau0, eta0, delta, p)?;

    let phi_rule = match name.phi {
        PhiLetter::Constant => PhiRule::Constant,
        PhiLetter::Deterministic => {
            // γ̄_j auto-derived as 0.99 x the maximal value passing the
            // initialisation bound, given γ̃_j
            let mut gamma_bar = vec![0.0; m];
            for j in 0..m {
                let gt = cfg.gamma_tilde * problem.gamma[j];
                if gt > 0.0 {
                    gamma_bar[j] =
                        0.99 * max_feasible_gamma_bar(&kappa, &w, &init, delta, p, j, gt)?;
                }
            }
            PhiRule::Deterministic {
                gamma_bar,
                rho: vec![cfg.rho; m],
            }
        }
        PhiLetter::Random => PhiRule::Random {
            gamma_tilde: problem.gamma.iter().map(|&g| cfg.gamma_tilde * g).collect(),
            rho: vec![cfg.rho; m],
        },
    };

    let eta_rule = if name.phi == PhiLetter::Constant {
        EtaRule::Constant
    } else {
        EtaRule::PowerP
    };
    let eta_perp = match name.rand {
        RandLetter::Deterministic | RandLetter::PrimalOnly => EtaPerpRule::FullDual,
        RandLetter::Both => {
            let probs = sampler.probs();
            let (mp, _) = probs.min_primal_margin();
            let (md, _) = probs.min_dual_margin();
            EtaPerpRule::Proportional {
                alpha: 0.9 * mp.min(md),
            }
        }
    };
    StepState::new(
        StepConfig {
            phi_rule,
            eta_rule,
            eta_perp,
            p,
            delta,
        },
        kappa,
        w,
        init,
        sampler.probs(),
    )
}

/// Instantiate a solver for one variant with the given random seed.
pub fn make_solver(
    problem: &Arc<SaddleProblem<f64>>,
    variant: RunVariant,
    cfg: &ExperimentConfig,
    seed: u64,
    track_ergodic: bool,
) -> Result<Box<dyn PrimalDualSolver<f64>>> {
    let m = problem.primal_layout().block_count();
    let n = problem.dual_layout().block_count();
    match variant {
        RunVariant::Pdhgm => {
            let (tau, sigma) = PdhgmSolver::default_steps(problem, cfg.delta);
            Ok(Box::new(PdhgmSolver::new(
                problem.clone(),
                tau,
                sigma,
                1.0,
            )?))
        }
        RunVariant::Relax(rho) => {
            let (tau, sigma) = PdhgmSolver::default_steps(problem, cfg.delta);
            Ok(Box::new(PdhgmSolver::new(
                problem.clone(),
                tau,
                sigma,
                rho,
            )?))
        }
        RunVariant::Accelerated(name) => match name.rand {
            RandLetter::Deterministic => {
                let sampler = DeterministicFull::<f64>::new(m, n);
                let state = accelerated_state(problem, name, cfg, &sampler)?;
                let mut s =
                    Alg2Solver::new(problem.clone(), state, Box::new(sampler), track_ergodic)?;
                s.debug_checks = cfg.debug_checks;
                Ok(Box::new(s))
            }
            RandLetter::PrimalOnly => {
                let sampler = FixedMSampler::<f64>::new(m, 1, n, seed)?;
                let state = accelerated_state(problem, name, cfg, &sampler)?;
                let mut s =
                    Alg2Solver::new(problem.clone(), state, Box::new(sampler), track_ergodic)?;
                s.debug_checks = cfg.debug_checks;
                Ok(Box::new(s))
            }
            RandLetter::Both => {
                let conn = problem.op.connectivity();
                if conn.is_dense() {
                    return Err(Error::Config(
                        "doubly-stochastic variants need materialised sub-blocks".into(),
                    ));
                }
                let sampler = AlternatingSampler::<f64>::new(
                    0.5,
                    InnerRule::FixedCount { total: m, count: 1 },
                    InnerRule::FixedCount { total: n, count: 1 },
                    conn,
                    seed,
                )?;
                let state = accelerated_state(problem, name, cfg, &sampler)?;
                let mut s =
                    Alg1Solver::new(problem.clone(), state, Box::new(sampler), track_ergodic)?;
                s.debug_checks = cfg.debug_checks;
                Ok(Box::new(s))
            }
        },
    }
}

// ---------------------------------------------------------------------------
// two-pass metric runs
// ---------------------------------------------------------------------------

pub struct VariantRunResult {
    pub variant: String,
    pub seed: u64,
    pub trace: Trace,
    pub final_image: Vec<f64>,
    pub outcome: RunOutcome,
    /// structured diagnostic lines (iteration, block, quantity, value)
    /// collected when debug checks are armed
    pub diagnostics: Vec<String>,
}

pub struct RunSet {
    pub results: Vec<VariantRunResult>,
    pub cx: f64,
    pub gap0: f64,
}

/// Run every (variant, seed) pair twice: a plain pass fixing the dynamic
/// `C_x` bound and the per-iteration time, then a metrics pass producing
/// the trace rows with the final bound.
pub fn execute_runs(
    problem: &Arc<SaddleProblem<f64>>,
    target: Option<&Target<f64>>,
    jobs: &[(RunVariant, u64)],
    cfg: &ExperimentConfig,
    track_ergodic: bool,
) -> Result<RunSet> {
    // pass 1: iterate only
    let pass1: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(variant, seed)| -> Result<RunOutcome> {
            let mut solver = make_solver(problem, variant, cfg, seed, false)?;
            run(solver.as_mut(), cfg.iters, cfg.stride, |_| false)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cx = CxTracker::default();
    for o in &pass1 {
        cx.absorb(o.max_x_norm);
    }
    if let Some(t) = target {
        cx.absorb(t.x.norm());
    }
    let cxv = cx.cx();
    let x0 = crate::block::BlockVector::zeros(problem.primal_layout());
    let y0 = crate::block::BlockVector::zeros(problem.dual_layout());
    let gap0 = pseudo_gap(problem, &x0, &y0, cxv);

    // pass 2: identical runs with metric rows
    let results: Vec<VariantRunResult> = jobs
        .par_iter()
        .zip(pass1.par_iter())
        .map(|(&(variant, seed), prev)| -> Result<VariantRunResult> {
            let sec_per_iter = prev.step_seconds / prev.iterations.max(1) as f64;
            let mut solver = make_solver(problem, variant, cfg, seed, track_ergodic)?;
            let mut rows: Vec<MetricRow> = Vec::new();
            let mut ergodic_rows: Vec<(usize, f64)> = Vec::new();
            let stop = cfg.stop_gap_db;
            let outcome = run(solver.as_mut(), cfg.iters, cfg.stride, |s| {
                let iter = s.iteration();
                let gap = pseudo_gap(problem, s.x(), s.y(), cxv);
                let gap_db = metrics::db_of_ratio(gap, gap0);
                let (target_db, value_db) = match target {
                    Some(t) => {
                        let (d, nrm) = problem.image_distance(s.x(), &t.image);
                        let _ = nrm;
                        let val = problem.value(s.x());
                        (
                            metrics::db_of_ratio(d, t.image_norm),
                            metrics::db_of_ratio(val - t.value, t.value),
                        )
                    }
                    None => (f64::NAN, f64::NAN),
                };
                rows.push(MetricRow {
                    iter,
                    expected_full_updates: iter as f64 * s.expected_update_fraction(),
                    cpu_seconds: sec_per_iter * iter as f64,
                    gap_db,
                    target_db,
                    value_db,
                });
                if track_ergodic {
                    if let Some((xe, ye)) = s.ergodic_points() {
                        let ge = pseudo_gap(problem, &xe, &ye, cxv);
                        ergodic_rows.push((iter, metrics::db_of_ratio(ge, gap0)));
                    }
                }
                stop.map_or(false, |thr| gap_db <= thr)
            })?;
            let final_image = problem.image_of(solver.x());
            let diagnostics = solver
                .diagnostics()
                .map(|d| {
                    let mut lines: Vec<String> = d.lines.iter().map(|l| l.to_string()).collect();
                    lines.extend(d.violations.iter().map(|v| format!("VIOLATION\t{v}")));
                    lines
                })
                .unwrap_or_default();
            Ok(VariantRunResult {
                variant: variant.label(),
                seed,
                trace: Trace {
                    variant: variant.label(),
                    seed,
                    rows,
                    ergodic_gap_db: ergodic_rows,
                },
                final_image,
                outcome,
                diagnostics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunSet {
        results,
        cx: cxv,
        gap0,
    })
}

// ---------------------------------------------------------------------------
// full experiment with artifacts
// ---------------------------------------------------------------------------

pub struct ExperimentArtifacts {
    pub out_dir: PathBuf,
    pub csv_files: Vec<PathBuf>,
    pub summary_text: String,
    pub cx: f64,
    pub gap0: f64,
    pub target_mid_distance_db: f64,
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    variants: &[RunVariant],
) -> Result<ExperimentArtifacts> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let setup = build_setup(cfg)?;
    let problem = &setup.problem;

    // corrupted input image + reproducibility sidecar
    problems::save_image(
        &cfg.out_dir.join("input-corrupted.png"),
        setup.grid,
        &setup.data,
    )?;
    std::fs::write(
        cfg.out_dir.join("input-corrupted.meta.txt"),
        format!(
            "problem: {}\ncorruption: {}\nachieved snr: {:.4} dB\ngrid: {}x{}\n",
            problem.name, setup.corruption, setup.snr_db, setup.grid.width, setup.grid.height
        ),
    )?;

    let cache_dir = cfg.out_dir.join("cache");
    let target = metrics::compute_target(problem, cfg.target_iters, Some(&cache_dir))?;

    let mut jobs: Vec<(RunVariant, u64)> = Vec::new();
    for &v in variants {
        let stochastic = matches!(
            v,
            RunVariant::Accelerated(VariantName {
                rand: RandLetter::PrimalOnly | RandLetter::Both,
                ..
            })
        );
        let nseeds = if stochastic { cfg.seeds.max(1) } else { 1 };
        for s in 0..nseeds {
            jobs.push((v, cfg.seed.wrapping_add(s as u64)));
        }
    }

    let set = execute_runs(problem, Some(&target), &jobs, cfg, false)?;

    let mut csv_files = Vec::new();
    let mut by_variant: Vec<(String, Vec<&VariantRunResult>)> = Vec::new();
    for r in &set.results {
        match by_variant.iter_mut().find(|(v, _)| *v == r.variant) {
            Some((_, list)) => list.push(r),
            None => by_variant.push((r.variant.clone(), vec![r])),
        }
    }

    for (variant, runs) in &by_variant {
        for r in runs {
            let path =
                cfg.out_dir
                    .join(format!("{}-seed{}.csv", variant.replace('/', "_"), r.seed));
            metrics::write_trace_csv(&path, &r.trace, cfg.timing)?;
            if cfg.debug_checks && !r.diagnostics.is_empty() {
                std::fs::write(
                    cfg.out_dir
                        .join(format!("{variant}-seed{}-diagnostics.txt", r.seed)),
                    r.diagnostics.join("\n") + "\n",
                )?;
            }
            metrics::write_curve_dat(
                &cfg.out_dir
                    .join(format!("{}-seed{}.dat", variant.replace('/', "_"), r.seed)),
                &r.trace,
            )?;
            csv_files.push(path);
        }
        if runs.len() >= 2 {
            let traces: Vec<Trace> = runs.iter().map(|r| r.trace.clone()).collect();
            let bands = metrics::stats_over_seeds(&traces, 0.90)?;
            let path = cfg.out_dir.join(format!("{variant}-bands.csv"));
            metrics::write_bands_csv(&path, variant, &bands)?;
            csv_files.push(path);
        }
        // recovered image of the first seed
        if let Some(first) = runs.first() {
            problems::save_image(
                &cfg.out_dir.join(format!("{variant}-out.png")),
                setup.grid,
                &first.final_image,
            )?;
        }
    }

    // threshold table over the first seed of each variant
    let firsts: Vec<&Trace> = by_variant.iter().map(|(_, runs)| &runs[0].trace).collect();
    let (gap_thr, tgt_thr, val_thr) = match cfg.resolution {
        Resolution::Lo => (-60.0, -60.0, -60.0),
        Resolution::Hi => (-50.0, -50.0, -50.0),
    };
    let table = metrics::threshold_summary(&firsts, gap_thr, tgt_thr, val_thr);
    let summary_text = metrics::summary_table_text(&table, gap_thr, tgt_thr, val_thr);
    std::fs::write(cfg.out_dir.join("summary.txt"), &summary_text)?;
    std::fs::write(
        cfg.out_dir.join("summary.csv"),
        metrics::summary_table_csv(&table),
    )?;

    Ok(ExperimentArtifacts {
        out_dir: cfg.out_dir.clone(),
        csv_files,
        summary_text,
        cx: set.cx,
        gap0: set.gap0,
        target_mid_distance_db: target.mid_distance_db,
    })
}
