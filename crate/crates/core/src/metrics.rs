//! Convergence metrics and reporting: pseudo-duality gap, dB distances,
//! target computation with a persistent cache, dynamic `C_x` bookkeeping,
//! multi-seed confidence bands, CSV emission, and the variant-name scheme.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::block::BlockVector;
use crate::problems::SaddleProblem;
use crate::solvers::{PdhgmSolver, PrimalDualSolver};
use crate::{Error, Result, Scalar};

/// All dB values are clamped here so exact zeros stay finite in the CSVs.
pub const DB_FLOOR: f64 = -300.0;

// ---------------------------------------------------------------------------
// pseudo-duality gap
// ---------------------------------------------------------------------------

/// Duality gap of the problem with `G` replaced by
/// `G̃(x) = G(x) + δ_{B(0,C_x)}(x)`: the dual value stays finite because
/// the conjugate of `G̃` is a ball-constrained sup with closed form for
/// the diagonal quadratic data terms used here.
///
/// Requires `C_x >= ||x||`; the result is then nonnegative by weak duality.
pub fn pseudo_gap<S: Scalar>(
    problem: &SaddleProblem<S>,
    x: &BlockVector<S>,
    y: &BlockVector<S>,
    cx: S,
) -> S {
    let kx = problem.op.apply(x);
    let primal = problem.objective.value(x.data()) + problem.dual.fenchel_value(&kx);
    debug_assert!(
        problem.dual.feasible(y, S::f(1e-7)),
        "dual iterate left the feasible set"
    );
    let kty = problem.op.adjoint(y);
    let neg: Vec<S> = kty.data().iter().map(|&v| -v).collect();
    let dual_neg = problem.objective.ball_conjugate(&neg, cx);
    primal + dual_neg
}

/// The gap functional against a known saddle point `(x̂, ŷ)`:
/// `𝒢(x,y) = (G(x) + <ŷ, Kx> - F*(ŷ)) - (G(x̂) + <y, Kx̂> - F*(y))`.
/// Nonnegative by the saddle-point property; the ergodic convergence
/// rates are stated for this quantity evaluated at the weighted averages.
pub fn gap_functional<S: Scalar>(
    problem: &SaddleProblem<S>,
    x: &BlockVector<S>,
    y: &BlockVector<S>,
    x_hat: &BlockVector<S>,
    y_hat: &BlockVector<S>,
) -> S {
    // F* is an indicator here, zero on the feasible set
    debug_assert!(problem.dual.feasible(y, S::f(1e-7)));
    debug_assert!(problem.dual.feasible(y_hat, S::f(1e-7)));
    let kx = problem.op.apply(x);
    let kxh = problem.op.apply(x_hat);
    let lhs = problem.objective.value(x.data()) + kx.dot(y_hat);
    let rhs = problem.objective.value(x_hat.data()) + kxh.dot(y);
    lhs - rhs
}

/// `10 log10(a²/b²)`, clamped at the floor.
pub fn db_of_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return DB_FLOOR;
    }
    (20.0 * (a.abs() / b.abs()).log10()).max(DB_FLOOR)
}

/// The three reporting formulas:
/// gap relative to the initial gap, distance to target relative to the
/// target norm, and objective value relative to the target value.
pub fn db_metrics(
    dist_to_target: f64,
    target_norm: f64,
    value: f64,
    value_target: f64,
    gap: f64,
    gap0: f64,
) -> Result<(f64, f64, f64)> {
    if gap0 == 0.0 || target_norm == 0.0 || value_target == 0.0 {
        return Err(Error::Config("dB references must be nonzero".into()));
    }
    Ok((
        db_of_ratio(gap, gap0),
        db_of_ratio(dist_to_target, target_norm),
        db_of_ratio(value - value_target, value_target),
    ))
}

// ---------------------------------------------------------------------------
// target computation with cache
// ---------------------------------------------------------------------------

pub struct Target<S: Scalar> {
    pub x: BlockVector<S>,
    pub y: BlockVector<S>,
    pub value: S,
    pub image: Vec<S>,
    pub image_norm: S,
    /// distance (dB) of the 3/4-point iterate to the final one; a
    /// stabilisation indicator for the chosen iteration count
    pub mid_distance_db: f64,
    pub from_cache: bool,
}

fn target_cache_key<S: Scalar>(problem: &SaddleProblem<S>, iters: usize) -> String {
    let mut h = Sha256::new();
    h.update(problem.descriptor.as_bytes());
    h.update(iters.to_le_bytes());
    for v in &problem.objective.a {
        h.update(v.as_f64().to_le_bytes());
    }
    for v in &problem.objective.g {
        h.update(v.as_f64().to_le_bytes());
    }
    let out = h.finalize();
    out.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

fn write_target_cache<S: Scalar>(path: &Path, t: &Target<S>) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(b"BPTGT01");
    for arr in [t.x.data(), t.y.data()] {
        buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
        for v in arr {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    buf.extend_from_slice(&t.value.as_f64().to_le_bytes());
    buf.extend_from_slice(&t.mid_distance_db.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

fn read_target_cache<S: Scalar>(path: &Path, problem: &SaddleProblem<S>) -> Result<Target<S>> {
    let buf = std::fs::read(path)?;
    if buf.len() < 7 || &buf[..7] != b"BPTGT01" {
        return Err(Error::Config("bad target cache header".into()));
    }
    let mut pos = 7usize;
    let read_u64 = |pos: &mut usize| {
        let v = u64::from_le_bytes(buf[*pos..*pos + 8].try_into().unwrap());
        *pos += 8;
        v
    };
    let nx = read_u64(&mut pos) as usize;
    if nx != problem.primal_layout().dim() {
        return Err(Error::Dimension(
            "cached target has wrong primal size".into(),
        ));
    }
    let mut xv = Vec::with_capacity(nx);
    for _ in 0..nx {
        xv.push(S::f(f64::from_le_bytes(
            buf[pos..pos + 8].try_into().unwrap(),
        )));
        pos += 8;
    }
    let ny = u64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    if ny != problem.dual_layout().dim() {
        return Err(Error::Dimension("cached target has wrong dual size".into()));
    }
    let mut yv = Vec::with_capacity(ny);
    for _ in 0..ny {
        yv.push(S::f(f64::from_le_bytes(
            buf[pos..pos + 8].try_into().unwrap(),
        )));
        pos += 8;
    }
    let value = S::f(f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()));
    pos += 8;
    let mid = f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap());
    let x = BlockVector::from_vec(problem.primal_layout(), xv)?;
    let y = BlockVector::from_vec(problem.dual_layout(), yv)?;
    let image = problem.image_of(&x);
    let image_norm = image.iter().map(|&v| v * v).sum::<S>().sqrt();
    Ok(Target {
        x,
        y,
        value,
        image,
        image_norm,
        mid_distance_db: mid,
        from_cache: true,
    })
}

/// Compute (or load from cache) the target solution: a long run of the
/// basic PDHGM from zero initial iterates.
pub fn compute_target<S: Scalar>(
    problem: &Arc<SaddleProblem<S>>,
    iters: usize,
    cache_dir: Option<&Path>,
) -> Result<Target<S>> {
    assert!(iters >= 10_000, "target runs need at least 1e4 iterations");
    let cache_path: Option<PathBuf> = cache_dir.map(|d| {
        d.join(format!(
            "target-{}-{}.bin",
            problem.name,
            target_cache_key(problem, iters)
        ))
    });
    if let Some(p) = &cache_path {
        if p.exists() {
            if let Ok(t) = read_target_cache(p, problem) {
                return Ok(t);
            }
        }
    }
    let delta = S::f(0.01);
    let (tau, sigma) = PdhgmSolver::default_steps(problem, delta);
    let mut solver = PdhgmSolver::new(problem.clone(), tau, sigma, S::one())?;
    let mid_at = iters * 3 / 4;
    let mut mid_image: Option<Vec<S>> = None;
    for k in 0..iters {
        solver.step()?;
        if k + 1 == mid_at {
            mid_image = Some(problem.image_of(&solver.x));
        }
    }
    let image = problem.image_of(&solver.x);
    let image_norm = image.iter().map(|&v| v * v).sum::<S>().sqrt();
    let mid_distance_db = match mid_image {
        Some(mi) => {
            let d = mi
                .iter()
                .zip(&image)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<S>()
                .sqrt();
            db_of_ratio(d.as_f64(), image_norm.as_f64())
        }
        None => f64::NAN,
    };
    let value = problem.value(&solver.x);
    let target = Target {
        x: solver.x.clone(),
        y: solver.y.clone(),
        value,
        image,
        image_norm,
        mid_distance_db,
        from_cache: false,
    };
    if let Some(p) = &cache_path {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        write_target_cache(p, &target)?;
    }
    Ok(target)
}

// ---------------------------------------------------------------------------
// dynamic C_x
// ---------------------------------------------------------------------------

/// Running max of `||x^i||` across all compared runs; the pseudo-gaps are
/// recomputed after every run has finished using the final bound.
#[derive(Clone, Copy, Debug, Default)]
pub struct CxTracker {
    pub max_norm: f64,
}

impl CxTracker {
    pub fn absorb(&mut self, norm: f64) {
        self.max_norm = self.max_norm.max(norm);
    }

    pub fn cx(&self) -> f64 {
        self.max_norm.max(1e-12)
    }
}

// ---------------------------------------------------------------------------
// traces and CSV
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iter: usize,
    pub expected_full_updates: f64,
    pub cpu_seconds: f64,
    pub gap_db: f64,
    pub target_db: f64,
    pub value_db: f64,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub variant: String,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    /// pseudo-gap at the ergodic points, when tracked: (iter, gap_dB)
    pub ergodic_gap_db: Vec<(usize, f64)>,
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Fixed-column CSV: `iter,expected_full_updates,cpu_seconds,gap_dB,target_dB,value_dB,variant`.
/// With `timing` off the cpu column is written as zero so identical seeds
/// reproduce the file byte-for-byte.
pub fn trace_csv_string(trace: &Trace, timing: bool) -> String {
    let mut s = String::new();
    s.push_str("iter,expected_full_updates,cpu_seconds,gap_dB,target_dB,value_dB,variant\n");
    for r in &trace.rows {
        let cpu = if timing { r.cpu_seconds } else { 0.0 };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.iter,
            fmt17(r.expected_full_updates),
            fmt17(cpu),
            fmt17(r.gap_db),
            fmt17(r.target_db),
            fmt17(r.value_db),
            trace.variant
        );
    }
    s
}

pub fn write_trace_csv(path: &Path, trace: &Trace, timing: bool) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, trace_csv_string(trace, timing))?;
    Ok(())
}

/// Gnuplot-friendly curve file: `efu gap_dB target_dB value_dB` per line.
pub fn write_curve_dat(path: &Path, trace: &Trace) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = String::from("# efu gap_dB target_dB value_dB\n");
    for r in &trace.rows {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            fmt17(r.expected_full_updates),
            fmt17(r.gap_db),
            fmt17(r.target_db),
            fmt17(r.value_db)
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// multi-seed statistics
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BandRow {
    pub iter: usize,
    pub expected_full_updates: f64,
    pub gap_mean: f64,
    pub gap_half_width: f64,
    pub target_mean: f64,
    pub target_half_width: f64,
    pub value_mean: f64,
    pub value_half_width: f64,
}

/// Per-point mean and Student-t confidence half-width over seeds.
/// Traces must be aligned on `expected_full_updates`.
pub fn stats_over_seeds(traces: &[Trace], level: f64) -> Result<Vec<BandRow>> {
    if traces.len() < 2 {
        return Err(Error::Config("need at least two traces for bands".into()));
    }
    let len = traces[0].rows.len();
    for t in traces {
        if t.rows.len() != len {
            return Err(Error::Config(
                "misaligned traces (row counts differ)".into(),
            ));
        }
    }
    let n = traces.len() as f64;
    let tdist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::Config(format!("t-distribution: {e}")))?;
    let tq = tdist.inverse_cdf(0.5 + level / 2.0);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let efu = traces[0].rows[i].expected_full_updates;
        for t in traces {
            if (t.rows[i].expected_full_updates - efu).abs() > 1e-9 * efu.abs().max(1.0) {
                return Err(Error::Config(
                    "misaligned traces (expected_full_updates differ)".into(),
                ));
            }
        }
        let stat = |f: &dyn Fn(&MetricRow) -> f64| -> (f64, f64) {
            let vals: Vec<f64> = traces.iter().map(|t| f(&t.rows[i])).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (mean, tq * var.sqrt() / n.sqrt())
        };
        let (gm, gh) = stat(&|r| r.gap_db);
        let (tm, th) = stat(&|r| r.target_db);
        let (vm, vh) = stat(&|r| r.value_db);
        out.push(BandRow {
            iter: traces[0].rows[i].iter,
            expected_full_updates: efu,
            gap_mean: gm,
            gap_half_width: gh,
            target_mean: tm,
            target_half_width: th,
            value_mean: vm,
            value_half_width: vh,
        });
    }
    Ok(out)
}

pub fn write_bands_csv(path: &Path, variant: &str, rows: &[BandRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = String::from(
        "iter,expected_full_updates,gap_mean,gap_hw,target_mean,target_hw,value_mean,value_hw,variant\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.iter,
            fmt17(r.expected_full_updates),
            fmt17(r.gap_mean),
            fmt17(r.gap_half_width),
            fmt17(r.target_mean),
            fmt17(r.target_half_width),
            fmt17(r.value_mean),
            fmt17(r.value_half_width),
            variant
        );
    }
    std::fs::write(path, s)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// threshold summary
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ThresholdRow {
    pub variant: String,
    pub gap_iter: Option<usize>,
    pub gap_time: Option<f64>,
    pub target_iter: Option<usize>,
    pub target_time: Option<f64>,
    pub value_iter: Option<usize>,
    pub value_time: Option<f64>,
}

/// First stride-multiple iteration (with its CPU time) at or below each
/// dB threshold, per variant.
pub fn threshold_summary(
    traces: &[&Trace],
    gap_db: f64,
    target_db: f64,
    value_db: f64,
) -> Vec<ThresholdRow> {
    let first = |t: &Trace, f: &dyn Fn(&MetricRow) -> f64, thr: f64| {
        t.rows
            .iter()
            .find(|r| f(r) <= thr)
            .map(|r| (r.iter, r.cpu_seconds))
    };
    traces
        .iter()
        .map(|t| {
            let g = first(t, &|r| r.gap_db, gap_db);
            let d = first(t, &|r| r.target_db, target_db);
            let v = first(t, &|r| r.value_db, value_db);
            ThresholdRow {
                variant: t.variant.clone(),
                gap_iter: g.map(|x| x.0),
                gap_time: g.map(|x| x.1),
                target_iter: d.map(|x| x.0),
                target_time: d.map(|x| x.1),
                value_iter: v.map(|x| x.0),
                value_time: v.map(|x| x.1),
            }
        })
        .collect()
}

pub fn summary_table_text(
    rows: &[ThresholdRow],
    gap_db: f64,
    target_db: f64,
    value_db: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} | gap <= {:>5} dB      | tgt <= {:>5} dB      | val <= {:>5} dB",
        "variant", gap_db, target_db, value_db
    );
    let _ = writeln!(
        s,
        "{:<10} | {:>6} {:>10} | {:>6} {:>10} | {:>6} {:>10}",
        "", "iter", "time", "iter", "time", "iter", "time"
    );
    let _ = writeln!(s, "{}", "-".repeat(76));
    let cell = |it: Option<usize>, tm: Option<f64>| match (it, tm) {
        (Some(i), Some(t)) => format!("{i:>6} {:>9.3}s", t),
        _ => format!("{:>6} {:>10}", "-", "-"),
    };
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} | {} | {} | {}",
            r.variant,
            cell(r.gap_iter, r.gap_time),
            cell(r.target_iter, r.target_time),
            cell(r.value_iter, r.value_time)
        );
    }
    s
}

pub fn summary_table_csv(rows: &[ThresholdRow]) -> String {
    let mut s =
        String::from("variant,gap_iter,gap_time,target_iter,target_time,value_iter,value_time\n");
    let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let opt_f = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.variant,
            opt_u(r.gap_iter),
            opt_f(r.gap_time),
            opt_u(r.target_iter),
            opt_f(r.target_time),
            opt_u(r.value_iter),
            opt_f(r.value_time)
        );
    }
    s
}

// ---------------------------------------------------------------------------
// variant names
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandLetter {
    Deterministic,
    PrimalOnly,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiLetter {
    Random,
    Deterministic,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaPsiLetter {
    Bounded,
    Increasing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KappaLetter {
    Balanced,
    Max,
}

/// Four-letter variant name, written `A-xyzw`:
/// randomisation {D,P,B}, φ rule {R,D,C}, η/ψ rule {B,I}, κ {O,M}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VariantName {
    pub rand: RandLetter,
    pub phi: PhiLetter,
    pub eta_psi: EtaPsiLetter,
    pub kappa: KappaLetter,
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_prefix("A-").unwrap_or(s);
        let chars: Vec<char> = body.chars().collect();
        if chars.len() != 4 {
            return Err(Error::Config(format!(
                "variant name '{s}' must be four letters (optionally prefixed 'A-')"
            )));
        }
        let rand = match chars[0] {
            'D' => RandLetter::Deterministic,
            'P' => RandLetter::PrimalOnly,
            'B' => RandLetter::Both,
            c => return Err(Error::Config(format!("unknown randomisation letter '{c}'"))),
        };
        let phi = match chars[1] {
            'R' => PhiLetter::Random,
            'D' => PhiLetter::Deterministic,
            'C' => PhiLetter::Constant,
            c => return Err(Error::Config(format!("unknown φ-rule letter '{c}'"))),
        };
        let eta_psi = match chars[2] {
            'B' => EtaPsiLetter::Bounded,
            'I' => EtaPsiLetter::Increasing,
            c => return Err(Error::Config(format!("unknown η/ψ-rule letter '{c}'"))),
        };
        let kappa = match chars[3] {
            'O' => KappaLetter::Balanced,
            'M' => KappaLetter::Max,
            c => return Err(Error::Config(format!("unknown κ letter '{c}'"))),
        };
        Ok(Self {
            rand,
            phi,
            eta_psi,
            kappa,
        })
    }
}

impl std::fmt::Display for VariantName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = match self.rand {
            RandLetter::Deterministic => 'D',
            RandLetter::PrimalOnly => 'P',
            RandLetter::Both => 'B',
        };
        let p = match self.phi {
            PhiLetter::Random => 'R',
            PhiLetter::Deterministic => 'D',
            PhiLetter::Constant => 'C',
        };
        let e = match self.eta_psi {
            EtaPsiLetter::Bounded => 'B',
            EtaPsiLetter::Increasing => 'I',
        };
        let k = match self.kappa {
            KappaLetter::Balanced => 'O',
            KappaLetter::Max => 'M',
        };
        write!(f, "A-{r}{p}{e}{k}")
    }
}
