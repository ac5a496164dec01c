//! Step-length and test-variable machinery.
//!
//! Per-block scalar test variables φ_{j,i} (primal) and ψ_{l,i+1} (dual)
//! encode the convergence rate; a coupling variable η_i ties primal and
//! dual step lengths together through a κ family bounding the blockwise
//! quadratic form of K K*. Step lengths are ratios
//!
//! ```text
//!   τ_{j,i}   = (η_i - carryover) / (φ_{j,i} π̂_j)        (sampled blocks)
//!   τ_{j,i}   = η⊥_τ / (φ_{j,i} (π_j - π̂_j))             (forced blocks)
//!   σ_{l,i+1} analogous with ν̂, ν and η⊥_σ,
//! ```
//!
//! and the extrapolation factors are θ = τφ/(σψ) with reciprocal b.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::{BlockOp, BlockVector};
use crate::sampling::{SamplePlan, SamplerProbs};
use crate::{Error, Result, Scalar};

// ---------------------------------------------------------------------------
// κ families
// ---------------------------------------------------------------------------

/// Concrete κ evaluation rules.
pub enum KappaKind<S: Scalar> {
    /// `κ_l(z) = ||K||² max_j z_j`; corresponds to the classical rule
    /// `τσ||K||² < 1`.
    WorstCase { norm_sq: S },
    /// Balanced two-by-two TGV² family: the cross term of the w-column is
    /// split with a Young parameter `r` chosen so that `κ_1(z⁰) = κ_2(z⁰)`
    /// at the initial test variables.
    BalancedTgv2 { c_grad: S, c_cross: S, c_sym: S },
    /// A scaled copy of another family (used to build failing checks).
    Scaled {
        inner: Box<KappaFamily<S>>,
        factor: S,
    },
}

/// A member of `K(K, P, Q)`: monotone κ_l with boundedness constant
/// `κ̄`, non-degeneracy constant `κ̲` and selector `l*(j)`.
pub struct KappaFamily<S: Scalar> {
    pub kind: KappaKind<S>,
    pub upper: S,
    pub lower: S,
    pub lstar: Vec<usize>,
    pub n_dual: usize,
    pub n_primal: usize,
}

impl<S: Scalar> KappaFamily<S> {
    pub fn worst_case(op: &dyn BlockOp<S>) -> Self {
        let b = op.global_norm_bound();
        let nsq = b * b;
        let m = op.primal_layout().block_count();
        let n = op.dual_layout().block_count();
        Self {
            kind: KappaKind::WorstCase { norm_sq: nsq },
            upper: nsq,
            lower: nsq,
            lstar: vec![0; m],
            n_dual: n,
            n_primal: m,
        }
    }

    /// Balanced κ for the two-block TGV² operator, splitting the cross
    /// term so both dual rows agree at the initial arguments:
    /// `κ_1(z_row1) = κ_2(z_row2)` with `z_{l,j} = w_{l,j}²/φ_{j,0}`.
    pub fn balanced_tgv2(op: &dyn BlockOp<S>, z_row1: [S; 2], z_row2: [S; 2]) -> Result<Self> {
        let m = op.primal_layout().block_count();
        let n = op.dual_layout().block_count();
        if m != 2 || n != 2 {
            return Err(Error::Config(
                "balanced κ needs the 2x2 TGV² block structure".into(),
            ));
        }
        let c_grad = op.norm_bound(0, 0) * op.norm_bound(0, 0);
        let c_i = op.norm_bound(0, 1);
        let c_e = op.norm_bound(1, 1) * op.norm_bound(1, 1);
        let (z11, z12, z22) = (z_row1[0], z_row1[1], z_row2[1]);
        if z11 <= S::zero() || z12 <= S::zero() || z22 <= S::zero() {
            return Err(Error::Config("balance point must be positive".into()));
        }
        // r² z12 + (c_grad z11 + c_i² z12 - c_e z22) r - c_i² c_e z22 = 0
        let b = c_grad * z11 + c_i * c_i * z12 - c_e * z22;
        let disc = b * b + S::f(4.0) * c_i * c_i * c_e * z12 * z22;
        let r = (disc.sqrt() - b) / (S::f(2.0) * z12);
        let c_cross = c_i * c_i + r;
        let c_sym = c_e + c_i * c_i * c_e / r;
        Ok(Self {
            kind: KappaKind::BalancedTgv2 {
                c_grad,
                c_cross,
                c_sym,
            },
            upper: c_grad.max(c_cross).max(c_sym),
            lower: c_grad.min(c_sym),
            lstar: vec![0, 1],
            n_dual: 2,
            n_primal: 2,
        })
    }

    /// Scale every κ_l by `factor` (invalid for `factor < 1` in general;
    /// used to exercise the failing branch of the checker).
    pub fn scaled(inner: KappaFamily<S>, factor: S) -> Self {
        Self {
            upper: inner.upper * factor,
            lower: inner.lower * factor,
            lstar: inner.lstar.clone(),
            n_dual: inner.n_dual,
            n_primal: inner.n_primal,
            kind: KappaKind::Scaled {
                inner: Box::new(inner),
                factor,
            },
        }
    }

    /// κ_l evaluated on a dense argument vector.
    pub fn eval(&self, l: usize, z: &[S]) -> S {
        match &self.kind {
            KappaKind::WorstCase { norm_sq } => {
                *norm_sq * z.iter().cloned().fold(S::zero(), S::max)
            }
            KappaKind::BalancedTgv2 {
                c_grad,
                c_cross,
                c_sym,
            } => match l {
                0 => *c_grad * z[0] + *c_cross * z[1],
                1 => *c_sym * z[1],
                _ => panic!("balanced TGV² κ has two dual blocks"),
            },
            KappaKind::Scaled { inner, factor } => *factor * inner.eval(l, z),
        }
    }

    /// κ_l on a sparse row `(j, z_j)`, absent entries zero.
    pub fn eval_sparse(&self, l: usize, row: &[(usize, S)]) -> S {
        match &self.kind {
            KappaKind::WorstCase { norm_sq } => {
                *norm_sq * row.iter().map(|&(_, z)| z).fold(S::zero(), S::max)
            }
            KappaKind::BalancedTgv2 { .. } => {
                let mut z = [S::zero(); 2];
                for &(j, v) in row {
                    z[j] = v;
                }
                self.eval(l, &z)
            }
            KappaKind::Scaled { inner, factor } => *factor * inner.eval_sparse(l, row),
        }
    }

    fn is_row_independent(&self) -> bool {
        matches!(self.kind, KappaKind::WorstCase { .. })
            || matches!(&self.kind, KappaKind::Scaled { inner, .. } if inner.is_row_independent())
    }
}

/// Worst-case multipliers `w_{l,j} >= sup_i μ̂_{l,j,i}` declared by the
/// sampling pattern.
#[derive(Clone, Debug)]
pub enum WBounds<S> {
    /// deterministic sampling: all multipliers one
    One,
    /// primal-only randomisation: `w_{l,j} = 1/π̂_j`
    PrimalOnly(Vec<S>),
    /// alternating primal/dual randomisation:
    /// `w_{l,j} = max(1/π̂_j, 1/ν̂_l)`
    MaxPrimalDual { primal: Vec<S>, dual: Vec<S> },
}

impl<S: Scalar> WBounds<S> {
    #[inline]
    pub fn w(&self, l: usize, j: usize) -> S {
        match self {
            WBounds::One => S::one(),
            WBounds::PrimalOnly(p) => p[j],
            WBounds::MaxPrimalDual { primal, dual } => primal[j].max(dual[l]),
        }
    }

    /// `w_j = max_l w_{l,j}`
    pub fn w_primal(&self, j: usize) -> S {
        match self {
            WBounds::One => S::one(),
            WBounds::PrimalOnly(p) => p[j],
            WBounds::MaxPrimalDual { primal, dual } => {
                primal[j].max(dual.iter().cloned().fold(S::zero(), S::max))
            }
        }
    }

    fn row_independent(&self) -> bool {
        !matches!(self, WBounds::MaxPrimalDual { .. })
    }
}

// ---------------------------------------------------------------------------
// κ estimate checker
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct KappaReport {
    pub pass: bool,
    /// minimum of `1 - ratio` over trials (negative when the estimate fails)
    pub min_slack: f64,
    pub worst_ratio: f64,
    pub trials: usize,
}

/// Randomised check of the κ estimate: for random nonnegative `{z_{l,j}}`,
/// verify `Σ_j ||Σ_l z^{1/2}_{l,j} K*_{l,j} y_l||² <= Σ_l κ_l(z_{l,·}) ||y_l||²`
/// by power-iterating the generalised eigenproblem in `y`. For dense
/// connectivity the sampled `z` are column-constant, which is the shape the
/// step-length rules actually generate there.
pub fn check_kappa_estimate<S: Scalar>(
    op: &dyn BlockOp<S>,
    kappa: &KappaFamily<S>,
    trials: usize,
    seed: u64,
) -> KappaReport {
    assert!(trials >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_slack = f64::INFINITY;
    let mut worst_ratio = 0.0f64;
    let power_iters = 48;
    for _ in 0..trials {
        let ratio = if op.connectivity().is_dense() {
            let m = op.primal_layout().block_count();
            let zeta: Vec<S> = (0..m).map(|_| S::f(rng.gen_range(0.01..1.0))).collect();
            kappa_ratio_dense(op, kappa, &zeta, power_iters, rng.gen())
        } else {
            let n = op.dual_layout().block_count();
            let mut rows: Vec<Vec<(usize, S)>> = Vec::with_capacity(n);
            for l in 0..n {
                rows.push(
                    op.connectivity()
                        .cinv_of(l)
                        .iter()
                        .map(|&j| (j, S::f(rng.gen_range(0.0..1.0))))
                        .collect(),
                );
            }
            kappa_ratio_sparse(op, kappa, &rows, power_iters, rng.gen())
        };
        worst_ratio = worst_ratio.max(ratio);
        min_slack = min_slack.min(1.0 - ratio);
    }
    KappaReport {
        pass: worst_ratio <= 1.0 + 1e-10,
        min_slack,
        worst_ratio,
        trials,
    }
}

fn kappa_ratio_sparse<S: Scalar>(
    op: &dyn BlockOp<S>,
    kappa: &KappaFamily<S>,
    rows: &[Vec<(usize, S)>],
    iters: usize,
    seed: u64,
) -> f64 {
    let n = op.dual_layout().block_count();
    let denom: Vec<S> = (0..n).map(|l| kappa.eval_sparse(l, &rows[l])).collect();
    let mut y = BlockVector::from_vec(
        op.dual_layout(),
        crate::block::random_vector(op.dual_layout().dim(), seed),
    )
    .unwrap();
    let mut t = BlockVector::zeros(op.primal_layout());
    let mut my = BlockVector::zeros(op.dual_layout());
    let mut scaled: Vec<S> = Vec::new();
    let mut lambda = 0.0f64;
    for _ in 0..iters {
        t.fill(S::zero());
        for l in 0..n {
            for &(j, z) in &rows[l] {
                let zs = z.sqrt();
                scaled.clear();
                scaled.extend(y.block(l).iter().map(|&v| v * zs));
                op.sub_adjoint_add(l, j, &scaled, t.block_mut(j));
            }
        }
        my.fill(S::zero());
        for l in 0..n {
            for &(j, z) in &rows[l] {
                let zs = z.sqrt();
                scaled.clear();
                scaled.extend(t.block(j).iter().map(|&v| v * zs));
                op.sub_apply_add(l, j, &scaled, my.block_mut(l));
            }
        }
        // generalised Rayleigh quotient  <y, My> / <y, D y>
        let num = y.dot(&my).as_f64();
        let mut den = 0.0f64;
        for l in 0..n {
            let bn = y.block_norm(l).as_f64();
            den += denom[l].as_f64() * bn * bn;
        }
        if den <= 0.0 {
            return if num > 0.0 { f64::INFINITY } else { 0.0 };
        }
        lambda = num / den;
        // next iterate: y <- D^{-1} M y
        for l in 0..n {
            let d = denom[l];
            let src = my.block(l);
            for (o, &s) in y.block_mut(l).iter_mut().zip(src) {
                *o = if d > S::zero() { s / d } else { S::zero() };
            }
        }
        let nrm = y.norm();
        if nrm == S::zero() {
            return 0.0;
        }
        y.scale(S::one() / nrm);
    }
    lambda
}

fn kappa_ratio_dense<S: Scalar>(
    op: &dyn BlockOp<S>,
    kappa: &KappaFamily<S>,
    zeta: &[S],
    iters: usize,
    seed: u64,
) -> f64 {
    let n = op.dual_layout().block_count();
    let m = op.primal_layout().block_count();
    // column-constant z: every dual row sees the same arguments
    let denom_val = {
        let row: Vec<(usize, S)> = (0..m).map(|j| (j, zeta[j])).collect();
        kappa.eval_sparse(0, &row)
    };
    let denom: Vec<S> = (0..n)
        .map(|l| {
            if kappa.is_row_independent() {
                denom_val
            } else {
                let row: Vec<(usize, S)> = (0..m).map(|j| (j, zeta[j])).collect();
                kappa.eval_sparse(l, &row)
            }
        })
        .collect();
    let mut y = BlockVector::from_vec(
        op.dual_layout(),
        crate::block::random_vector(op.dual_layout().dim(), seed),
    )
    .unwrap();
    let mut lambda = 0.0f64;
    for _ in 0..iters {
        let mut t = op.adjoint(&y);
        for j in 0..m {
            let z = zeta[j];
            for v in t.block_mut(j) {
                *v *= z;
            }
        }
        let my = op.apply(&t);
        let num = y.dot(&my).as_f64();
        let mut den = 0.0f64;
        for l in 0..n {
            let bn = y.block_norm(l).as_f64();
            den += denom[l].as_f64() * bn * bn;
        }
        if den <= 0.0 {
            return if num > 0.0 { f64::INFINITY } else { 0.0 };
        }
        lambda = num / den;
        for l in 0..n {
            let d = denom[l];
            let src = my.block(l).to_vec();
            for (o, s) in y.block_mut(l).iter_mut().zip(src) {
                *o = if d > S::zero() { s / d } else { S::zero() };
            }
        }
        let nrm = y.norm();
        if nrm == S::zero() {
            return 0.0;
        }
        y.scale(S::one() / nrm);
    }
    lambda
}

// ---------------------------------------------------------------------------
// step configuration and state
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PExponent {
    /// bounded ψ (ψ_{l,i} ≡ ψ_{l,0})
    Half,
    /// increasing ψ (ψ_{l,i+1} = ψ_{l,0} η_i)
    One,
}

impl PExponent {
    pub fn value(self) -> f64 {
        match self {
            PExponent::Half => 0.5,
            PExponent::One => 1.0,
        }
    }

    fn pow<S: Scalar>(self, v: S) -> S {
        match self {
            PExponent::Half => v.sqrt(),
            PExponent::One => v,
        }
    }

    /// exponent `2 - 1/p` of η in the ψ update
    fn psi_exp<S: Scalar>(self, eta: S) -> S {
        match self {
            PExponent::Half => S::one(),
            PExponent::One => eta,
        }
    }
}

#[derive(Clone, Debug)]
pub enum PhiRule<S> {
    /// φ ≡ φ_0 (unaccelerated)
    Constant,
    /// φ_{j,i+1} = φ_{j,i} + 2(γ̄_j η_i + ρ_j), deterministic
    Deterministic { gamma_bar: Vec<S>, rho: Vec<S> },
    /// φ_{j,i+1} = φ_{j,i}(1 + 2 γ̃_j τ̂_{j,i}) + 2 ρ_j π_j^{-1} χ_{S(i)}(j)
    Random { gamma_tilde: Vec<S>, rho: Vec<S> },
    /// φ_{j,i+1} = φ_{j,i}(1 + 2 γ̄_j τ_{j,i}) (full strong convexity)
    AccelFull { gamma_bar: Vec<S> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaRule {
    /// η_i from the power rule with exponent `p`
    PowerP,
    /// η_i ≡ η_0
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EtaPerpRule {
    /// Algorithm-2 mode: η⊥_τ = 0, η⊥_σ = η_{i+1}
    FullDual,
    /// constant η⊥ below the sampling margins
    Constant { tau: f64, sigma: f64 },
    /// η⊥_{τ,i} = η⊥_{σ,i} = α η_i with α below the margins
    Proportional { alpha: f64 },
}

#[derive(Clone, Debug)]
pub struct StepConfig<S> {
    pub phi_rule: PhiRule<S>,
    pub eta_rule: EtaRule,
    pub eta_perp: EtaPerpRule,
    pub p: PExponent,
    pub delta: S,
}

impl<S: Scalar> StepConfig<S> {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.delta <= S::zero() || self.delta >= S::one() {
            return Err(Error::Config("δ must lie in (0,1)".into()));
        }
        match &self.phi_rule {
            PhiRule::Deterministic { gamma_bar, rho } => {
                if gamma_bar.len() != m || rho.len() != m {
                    return Err(Error::Config("φ-rule parameter length mismatch".into()));
                }
                for j in 0..m {
                    if gamma_bar[j] < S::zero() || rho[j] < S::zero() {
                        return Err(Error::Config("negative φ-rule parameters".into()));
                    }
                    if gamma_bar[j] + rho[j] <= S::zero() {
                        return Err(Error::Config(format!(
                            "deterministic φ rule needs ρ_j + γ̄_j > 0 (block {j})"
                        )));
                    }
                }
            }
            PhiRule::Random { gamma_tilde, rho } => {
                if gamma_tilde.len() != m || rho.len() != m {
                    return Err(Error::Config("φ-rule parameter length mismatch".into()));
                }
                if gamma_tilde.iter().chain(rho).any(|&v| v < S::zero()) {
                    return Err(Error::Config("negative φ-rule parameters".into()));
                }
            }
            PhiRule::AccelFull { gamma_bar } => {
                if gamma_bar.len() != m {
                    return Err(Error::Config("φ-rule parameter length mismatch".into()));
                }
                if self.p != PExponent::Half {
                    return Err(Error::Config(
                        "the fully strongly convex rule uses constant ψ (p = 1/2)".into(),
                    ));
                }
            }
            PhiRule::Constant => {}
        }
        Ok(())
    }
}

/// φ_{j,0} and ψ_{l,0} induced by nominal initial step lengths τ_{j,0}
/// and the initial coupling value η_0: φ_{j,0} = η_0/τ_{j,0}, and ψ_{l,0}
/// solves the η rule with equality at i = 0.
#[derive(Clone, Debug)]
pub struct InitData<S> {
    pub phi0: Vec<S>,
    pub psi0: Vec<S>,
    pub eta0: S,
}

pub fn init_test_weights<S: Scalar>(
    kappa: &KappaFamily<S>,
    w: &WBounds<S>,
    tau0: &[S],
    eta0: S,
    delta: S,
    p: PExponent,
) -> Result<InitData<S>> {
    if eta0 <= S::zero() || tau0.iter().any(|&t| t <= S::zero()) {
        return Err(Error::Config(
            "initial steps and η_0 must be positive".into(),
        ));
    }
    let phi0: Vec<S> = tau0.iter().map(|&t| eta0 / t).collect();
    let m = phi0.len();
    let mut psi0 = Vec::with_capacity(kappa.n_dual);
    let inv_p_pow = |v: S| match p {
        PExponent::Half => v * v,
        PExponent::One => v,
    };
    for l in 0..kappa.n_dual {
        let row: Vec<(usize, S)> = (0..m)
            .map(|j| {
                let wij = w.w(l, j);
                (j, wij * wij / phi0[j])
            })
            .collect();
        let k = kappa.eval_sparse(l, &row);
        if k <= S::zero() {
            return Err(Error::Config(format!(
                "κ_{l} degenerate at the initial point"
            )));
        }
        psi0.push(inv_p_pow(eta0) * k / (S::one() - delta));
    }
    Ok(InitData { phi0, psi0, eta0 })
}

/// The initialisation bound on (γ̃_j, γ̄_j): either both zero, or
/// `2γ̃γ̄/(γ̃-γ̄) · ((1-δ)/(κ̲ w_j))^p <= δ ψ_{l*(j),0}^{-p} φ_{j,0}^{1-p}`.
pub fn init_bound_holds<S: Scalar>(
    kappa: &KappaFamily<S>,
    w: &WBounds<S>,
    init: &InitData<S>,
    delta: S,
    p: PExponent,
    j: usize,
    gamma_tilde: S,
    gamma_bar: S,
) -> Result<bool> {
    if gamma_tilde < gamma_bar {
        return Err(Error::Config("γ̃_j must dominate γ̄_j".into()));
    }
    if gamma_bar == S::zero() {
        return Ok(true);
    }
    let lhs = S::f(2.0) * gamma_tilde * gamma_bar / (gamma_tilde - gamma_bar)
        * p.pow((S::one() - delta) / (kappa.lower * w.w_primal(j)));
    let psi = init.psi0[kappa.lstar[j]];
    let rhs = delta
        * match p {
            PExponent::Half => (init.phi0[j] / psi).sqrt(),
            PExponent::One => S::one() / psi,
        };
    Ok(lhs <= rhs)
}

/// Maximal γ̄_j passing the initialisation bound for a given γ̃_j
/// (bisection; the bound is monotone in γ̄).
pub fn max_feasible_gamma_bar<S: Scalar>(
    kappa: &KappaFamily<S>,
    w: &WBounds<S>,
    init: &InitData<S>,
    delta: S,
    p: PExponent,
    j: usize,
    gamma_tilde: S,
) -> Result<S> {
    if gamma_tilde <= S::zero() {
        return Ok(S::zero());
    }
    let mut lo = S::zero();
    let mut hi = gamma_tilde;
    for _ in 0..200 {
        let mid = S::f(0.5) * (lo + hi);
        if init_bound_holds(kappa, w, init, delta, p, j, gamma_tilde, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The per-iteration scalar state: φ, ψ, η, η⊥ and the carried-over
/// step products of forced updates.
pub struct StepState<S: Scalar> {
    pub cfg: StepConfig<S>,
    pub kappa: KappaFamily<S>,
    pub w: WBounds<S>,
    pub i: usize,
    pub phi: Vec<S>,
    pub phi0: Vec<S>,
    pub psi0: Vec<S>,
    /// ψ_{·,i+1}
    pub psi_next: Vec<S>,
    /// η_i
    pub eta: S,
    /// η_{i+1}; valid between `update_phi_and_eta` and `shift`
    pub eta_next: S,
    /// η⊥_{τ,i}, η⊥_{σ,i}
    pub eta_perp_tau: S,
    pub eta_perp_sigma: S,
    /// φ_{j,i-1} τ_{j,i-1} for j previously forced (S\Ŝ), else 0
    pub carry_tau: Vec<S>,
    /// ψ_{l,i} σ_{l,i} for l previously forced (V\V̂), else 0
    pub carry_sigma: Vec<S>,
}

impl<S: Scalar> StepState<S> {
    pub fn new(
        cfg: StepConfig<S>,
        kappa: KappaFamily<S>,
        w: WBounds<S>,
        init: InitData<S>,
        probs: &SamplerProbs<S>,
    ) -> Result<Self> {
        cfg.validate(init.phi0.len())?;
        let (ept, eps) = initial_eta_perp(&cfg, init.eta0, probs)?;
        let psi_next: Vec<S> = init
            .psi0
            .iter()
            .map(|&p0| p0 * cfg.p.psi_exp(init.eta0))
            .collect();
        let m = init.phi0.len();
        let n = init.psi0.len();
        Ok(Self {
            cfg,
            kappa,
            w,
            i: 0,
            phi: init.phi0.clone(),
            phi0: init.phi0,
            psi0: init.psi0,
            psi_next,
            eta: init.eta0,
            eta_next: init.eta0,
            eta_perp_tau: ept,
            eta_perp_sigma: eps,
            carry_tau: vec![S::zero(); m],
            carry_sigma: vec![S::zero(); n],
        })
    }

    /// η from the power rule at the current φ.
    fn eta_rule_value(&self) -> S {
        let one_minus_delta = S::one() - self.cfg.delta;
        match (&self.kappa.kind, self.w.row_independent()) {
            (KappaKind::WorstCase { norm_sq }, true) => {
                let mut worst = S::zero();
                for j in 0..self.phi.len() {
                    let wj = self.w.w(0, j);
                    worst = worst.max(wj * wj / self.phi[j]);
                }
                let k = *norm_sq * worst;
                let psimin = self.psi0.iter().cloned().fold(S::infinity(), S::min);
                self.cfg.p.pow(one_minus_delta * psimin / k)
            }
            _ => {
                let m = self.phi.len();
                let mut best = S::infinity();
                for l in 0..self.kappa.n_dual {
                    let row: Vec<(usize, S)> = (0..m)
                        .map(|j| {
                            let wij = self.w.w(l, j);
                            (j, wij * wij / self.phi[j])
                        })
                        .collect();
                    let k = self.kappa.eval_sparse(l, &row);
                    best = best.min(self.cfg.p.pow(one_minus_delta * self.psi0[l] / k));
                }
                best
            }
        }
    }

    /// Primal step length τ_{j,i}: `sampled` selects the Ŝ branch.
    pub fn primal_step_length(
        &self,
        j: usize,
        probs: &SamplerProbs<S>,
        sampled: bool,
    ) -> Result<S> {
        let tau = if sampled {
            (self.eta - self.carry_tau[j]) / (self.phi[j] * probs.pi_hat[j])
        } else {
            self.eta_perp_tau / (self.phi[j] * (probs.pi[j] - probs.pi_hat[j]))
        };
        if !(tau > S::zero()) || !tau.is_finite() {
            return Err(Error::NonpositiveStep {
                kind: "primal",
                block: j,
                iter: self.i,
                value: tau.as_f64(),
            });
        }
        Ok(tau)
    }

    /// Dual step length σ_{l,i+1}: `sampled` selects the V̂ branch.
    pub fn dual_step_length(&self, l: usize, probs: &SamplerProbs<S>, sampled: bool) -> Result<S> {
        let sigma = if sampled {
            (self.eta - self.carry_sigma[l]) / (self.psi_next[l] * probs.nu_hat[l])
        } else {
            self.eta_perp_sigma / (self.psi_next[l] * (probs.nu[l] - probs.nu_hat[l]))
        };
        if !(sigma > S::zero()) || !sigma.is_finite() {
            return Err(Error::NonpositiveStep {
                kind: "dual",
                block: l,
                iter: self.i,
                value: sigma.as_f64(),
            });
        }
        Ok(sigma)
    }

    /// Algorithm-2 dual step `σ_{l,i+1} = η_{i+1}/ψ_{l,i+1}`.
    pub fn dual_step_length_fulldual(&self, l: usize) -> S {
        self.eta_next / self.psi_next[l]
    }

    /// Extrapolation pair (θ, b) = (τφ/(σψ), σψ/(τφ)): the cross products
    /// are returned so the exact reciprocal identity θ·b = 1 can be phrased
    /// as `num_θ·num_b == den_θ·den_b`.
    pub fn extrapolation(&self, j: usize, l: usize, tau_j: S, sigma_l: S) -> (S, S) {
        let tp = tau_j * self.phi[j];
        let sp = sigma_l * self.psi_next[l];
        (tp / sp, sp / tp)
    }

    /// φ update and the next coupling value η_{i+1}. `tau_hat` must hold
    /// the realised step lengths τ̂_{j,i} (zero off S(i)).
    pub fn update_phi_and_eta(
        &mut self,
        plan: &SamplePlan,
        probs: &SamplerProbs<S>,
        tau_hat: &[S],
    ) {
        match &self.cfg.phi_rule {
            PhiRule::Constant => {}
            PhiRule::Deterministic { gamma_bar, rho } => {
                for j in 0..self.phi.len() {
                    self.phi[j] += S::f(2.0) * (gamma_bar[j] * self.eta + rho[j]);
                }
            }
            PhiRule::Random { gamma_tilde, rho } => {
                for j in 0..self.phi.len() {
                    let mut next =
                        self.phi[j] * (S::one() + S::f(2.0) * gamma_tilde[j] * tau_hat[j]);
                    if plan.s.contains(j) {
                        next += S::f(2.0) * rho[j] / probs.pi[j];
                    }
                    self.phi[j] = next;
                }
            }
            PhiRule::AccelFull { gamma_bar } => {
                for j in 0..self.phi.len() {
                    self.phi[j] *= S::one() + S::f(2.0) * gamma_bar[j] * tau_hat[j];
                }
            }
        }
        self.eta_next = match self.cfg.eta_rule {
            EtaRule::Constant => self.eta,
            // clamp against float jitter; the rule is monotone in exact arithmetic
            EtaRule::PowerP => self.eta_rule_value().max(self.eta),
        };
    }

    /// Record carried-over products `φ_{j,i} τ_{j,i}` and `ψ_{l,i+1} σ_{l,i+1}`
    /// of the forced updates of iteration i. Takes the products directly so
    /// the recording is independent of when φ advances.
    pub fn record_carries(&mut self, plan: &SamplePlan, tau_phi: &[S], sigma_psi: &[S]) {
        for j in 0..self.carry_tau.len() {
            self.carry_tau[j] = if plan.s.contains(j) && !plan.s_hat.contains(j) {
                tau_phi[j]
            } else {
                S::zero()
            };
        }
        for l in 0..self.carry_sigma.len() {
            self.carry_sigma[l] = if plan.v.contains(l) && !plan.v_hat.contains(l) {
                sigma_psi[l]
            } else {
                S::zero()
            };
        }
    }

    /// Advance to iteration i+1: shifts η, recomputes ψ_{·,i+2} and η⊥.
    pub fn shift(&mut self) {
        self.i += 1;
        self.eta = self.eta_next;
        for (pn, &p0) in self.psi_next.iter_mut().zip(&self.psi0) {
            *pn = p0 * self.cfg.p.psi_exp(self.eta);
        }
        match self.cfg.eta_perp {
            EtaPerpRule::FullDual | EtaPerpRule::Constant { .. } => {}
            EtaPerpRule::Proportional { alpha } => {
                self.eta_perp_tau = S::f(alpha) * self.eta;
                self.eta_perp_sigma = self.eta_perp_tau;
            }
        }
    }

    /// The (η⊥_τ, η⊥_σ) pair; Algorithm-2 mode reports (0, η_{i+1}).
    pub fn eta_perp_pair(&self) -> (S, S) {
        match self.cfg.eta_perp {
            EtaPerpRule::FullDual => (S::zero(), self.eta_next),
            _ => (self.eta_perp_tau, self.eta_perp_sigma),
        }
    }
}

fn initial_eta_perp<S: Scalar>(
    cfg: &StepConfig<S>,
    eta0: S,
    probs: &SamplerProbs<S>,
) -> Result<(S, S)> {
    match cfg.eta_perp {
        EtaPerpRule::FullDual => Ok((S::zero(), eta0)),
        EtaPerpRule::Constant { tau, sigma } => {
            let (mt, jt) = probs.min_primal_margin();
            let (ms, ls) = probs.min_dual_margin();
            if !(eta0 * mt > S::f(tau)) {
                return Err(Error::Config(format!(
                    "constant η⊥_τ = {tau} violates the margin η_0 (π_{jt} - π̂_{jt}) = {}",
                    (eta0 * mt).as_f64()
                )));
            }
            if !(eta0 * ms > S::f(sigma)) {
                return Err(Error::Config(format!(
                    "constant η⊥_σ = {sigma} violates the margin η_0 (ν_{ls} - ν̂_{ls}) = {}",
                    (eta0 * ms).as_f64()
                )));
            }
            Ok((S::f(tau), S::f(sigma)))
        }
        EtaPerpRule::Proportional { alpha } => {
            if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
                return Err(Error::Config("proportional rule needs α in (0,1)".into()));
            }
            let (mt, jt) = probs.min_primal_margin();
            let (ms, ls) = probs.min_dual_margin();
            if !(mt > S::f(alpha)) {
                return Err(Error::Config(format!(
                    "proportional α = {alpha} violates min_j (π_j - π̂_j) = {} at block {jt}",
                    mt.as_f64()
                )));
            }
            if !(ms >= S::f(alpha)) {
                return Err(Error::Config(format!(
                    "proportional α = {alpha} violates min_l (ν_l - ν̂_l) = {} at block {ls}",
                    ms.as_f64()
                )));
            }
            Ok((S::f(alpha) * eta0, S::f(alpha) * eta0))
        }
    }
}

// ---------------------------------------------------------------------------
// runtime coupling diagnostics
// ---------------------------------------------------------------------------

/// One structured diagnostic line: iteration, block, quantity, value.
#[derive(Clone, Debug)]
pub struct DiagLine {
    pub iter: usize,
    pub block: String,
    pub quantity: String,
    pub value: f64,
}

impl std::fmt::Display for DiagLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{:.17e}",
            self.iter, self.block, self.quantity, self.value
        )
    }
}

#[derive(Default)]
pub struct CouplingReport {
    pub lines: Vec<DiagLine>,
    pub violations: Vec<String>,
    pub checks: usize,
}

impl CouplingReport {
    /// diagnostic lines are capped; the violation list never is
    const MAX_LINES: usize = 4096;

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push_line(&mut self, line: DiagLine) {
        if self.lines.len() < Self::MAX_LINES {
            self.lines.push(line);
        }
    }
}

/// Check the λ-coupling condition `(1-δ) ψ_{l,i+1} >= κ_l(λ²_{l,·}/φ)` with
/// `λ_{l,j} = φ_j τ̂_j χ_{Ŝ}(j) - ψ_{l,i+1} σ̂_l χ_{V̂}(l)`, and for
/// Algorithm 2 the exact identity `τ_{j,i} φ_{j,i} π̂_j = η_i`.
pub fn check_coupling<S: Scalar>(
    state: &StepState<S>,
    plan: &SamplePlan,
    probs: &SamplerProbs<S>,
    tau: &[S],
    sigma: &[S],
    full_dual_mode: bool,
    report: &mut CouplingReport,
) {
    let i = state.i;
    report.checks += 1;
    if full_dual_mode {
        for j in plan.s.iter(state.phi.len()) {
            let prod = tau[j] * state.phi[j] * probs.pi_hat[j];
            let rel = ((prod - state.eta) / state.eta).as_f64().abs();
            if rel > 1e-14 {
                report.violations.push(format!(
                    "iter {i}: τφπ̂ = {} deviates from η = {} (rel {rel:.3e}) at primal block {j}",
                    prod.as_f64(),
                    state.eta.as_f64()
                ));
            }
        }
        return;
    }
    // doubly-stochastic mode: λ condition per dual block
    let m = state.phi.len();
    if m > 64 {
        return; // per-pair λ rows are only materialised for small structures
    }
    for l in 0..state.psi_next.len() {
        let mut row: Vec<(usize, S)> = Vec::with_capacity(m);
        for j in 0..m {
            let mut lambda = S::zero();
            if plan.s_hat.contains(j) {
                lambda += state.phi[j] * tau[j];
            }
            if plan.v_hat.contains(l) {
                lambda -= state.psi_next[l] * sigma[l];
            }
            row.push((j, lambda * lambda / state.phi[j]));
        }
        let k = state.kappa.eval_sparse(l, &row);
        let bound = (S::one() - state.cfg.delta) * state.psi_next[l];
        report.push_line(DiagLine {
            iter: i,
            block: format!("dual:{l}"),
            quantity: "kappa(lambda^2/phi)".into(),
            value: k.as_f64(),
        });
        if k > bound * (S::one() + S::f(1e-12)) {
            report.violations.push(format!(
                "iter {i}: λ-coupling violated at dual block {l}: κ = {} > (1-δ)ψ = {}",
                k.as_f64(),
                bound.as_f64()
            ));
        }
    }
}
