//! Iteration engines: the doubly-stochastic method (primal and dual blocks
//! both sampled), the primal-randomised full-dual method, and the plain /
//! relaxed PDHGM baselines, plus the weighted ergodic accumulators.

use std::sync::Arc;
use std::time::Instant;

use crate::block::BlockVector;
use crate::problems::SaddleProblem;
use crate::sampling::{validate_nesting, Sampler, SamplerProbs};
use crate::step::{check_coupling, CouplingReport, StepState};
use crate::{Error, Result, Scalar};

// ---------------------------------------------------------------------------
// ergodic accumulator
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErgodicMode {
    /// weights Σ φτ̂ x^{i+1} / Σ ψσ̂ y^{i+1}, sums from i = 0
    Cg,
    /// starred variant: primal sum from i = 1, dual uses the previous
    /// iteration's ψσ products
    CgStar,
}

/// Per-block weights of one recording step.
pub enum Weights<'a, S> {
    Uniform(S),
    PerBlock(&'a [S]),
}

impl<S: Scalar> Weights<'_, S> {
    fn get(&self, b: usize) -> S {
        match self {
            Weights::Uniform(w) => *w,
            Weights::PerBlock(v) => v[b],
        }
    }
}

pub struct ErgodicAccum<S: Scalar> {
    pub mode: ErgodicMode,
    xsum: BlockVector<S>,
    ysum: BlockVector<S>,
    last_dual_incr: BlockVector<S>,
    /// ζ_N (mode CG) or ζ_{*,N} (mode CG*)
    pub zeta: S,
    steps: usize,
}

impl<S: Scalar> ErgodicAccum<S> {
    pub fn new(mode: ErgodicMode, problem: &SaddleProblem<S>) -> Self {
        Self {
            mode,
            xsum: BlockVector::zeros(problem.primal_layout()),
            ysum: BlockVector::zeros(problem.dual_layout()),
            last_dual_incr: BlockVector::zeros(problem.dual_layout()),
            zeta: S::zero(),
            steps: 0,
        }
    }

    /// Record the end of iteration `k` with coupling value η_k, realised
    /// primal weights φ_{j,k} τ̂_{j,k} and dual weights ψ_{l,k+1} σ̂_{l,k+1}.
    pub fn record(
        &mut self,
        k: usize,
        eta_k: S,
        primal_w: Weights<S>,
        x_next: &BlockVector<S>,
        dual_w: Weights<S>,
        y_next: &BlockVector<S>,
    ) {
        let include_primal = self.mode == ErgodicMode::Cg || k >= 1;
        if include_primal {
            self.zeta += eta_k;
            match primal_w {
                Weights::Uniform(w) => self.xsum.axpy(w, x_next),
                Weights::PerBlock(v) => {
                    for (j, &w) in v.iter().enumerate() {
                        if w != S::zero() {
                            for (o, &s) in self.xsum.block_mut(j).iter_mut().zip(x_next.block(j)) {
                                *o += w * s;
                            }
                        }
                    }
                }
            }
        }
        self.last_dual_incr.fill(S::zero());
        for l in 0..self.ysum.layout().block_count() {
            let w = dual_w.get(l);
            if w != S::zero() {
                for ((o, inc), &s) in self
                    .ysum
                    .block_mut(l)
                    .iter_mut()
                    .zip(self.last_dual_incr.block_mut(l))
                    .zip(y_next.block(l))
                {
                    *o += w * s;
                    *inc = w * s;
                }
            }
        }
        self.steps = k + 1;
    }

    /// The ergodic pair; `None` while ζ = 0.
    pub fn finalize(&self) -> Option<(BlockVector<S>, BlockVector<S>)> {
        if self.zeta <= S::zero() {
            return None;
        }
        let inv = S::one() / self.zeta;
        let mut x = self.xsum.clone();
        x.scale(inv);
        let mut y = self.ysum.clone();
        if self.mode == ErgodicMode::CgStar {
            y.axpy(-S::one(), &self.last_dual_incr);
        }
        y.scale(inv);
        Some((x, y))
    }
}

// ---------------------------------------------------------------------------
// solver trait and the run loop
// ---------------------------------------------------------------------------

pub trait PrimalDualSolver<S: Scalar>: Send {
    fn step(&mut self) -> Result<()>;
    fn x(&self) -> &BlockVector<S>;
    fn y(&self) -> &BlockVector<S>;
    fn iteration(&self) -> usize;
    fn problem(&self) -> &Arc<SaddleProblem<S>>;
    fn ergodic_points(&self) -> Option<(BlockVector<S>, BlockVector<S>)> {
        None
    }
    /// expected fraction of blocks updated per iteration
    fn expected_update_fraction(&self) -> f64 {
        1.0
    }
    /// coupling diagnostics collected under `debug_checks`
    fn diagnostics(&self) -> Option<&CouplingReport> {
        None
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub iterations: usize,
    /// running max of ||x^i|| over all iterations (dynamic C_x input)
    pub max_x_norm: f64,
    /// accumulated wall time inside `step()` only
    pub step_seconds: f64,
    pub stopped_early: bool,
}

/// Drive a solver for `iters` iterations, invoking `hook` after every
/// `stride`-th iteration (and the final one). The hook returns `true` to
/// stop early. Time spent in hooks is excluded from the reported step time.
pub fn run<S: Scalar>(
    solver: &mut dyn PrimalDualSolver<S>,
    iters: usize,
    stride: usize,
    mut hook: impl FnMut(&dyn PrimalDualSolver<S>) -> bool,
) -> Result<RunOutcome> {
    assert!(stride >= 1);
    let mut out = RunOutcome::default();
    for k in 0..iters {
        let t0 = Instant::now();
        solver.step()?;
        out.step_seconds += t0.elapsed().as_secs_f64();
        out.iterations = k + 1;
        out.max_x_norm = out.max_x_norm.max(solver.x().norm().as_f64());
        if (k + 1) % stride == 0 || k + 1 == iters {
            if hook(solver) {
                out.stopped_early = true;
                break;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Algorithm 2: primal randomisation, full dual updates
// ---------------------------------------------------------------------------

pub struct Alg2Solver<S: Scalar> {
    pub problem: Arc<SaddleProblem<S>>,
    pub state: StepState<S>,
    sampler: Box<dyn Sampler<S>>,
    probs: SamplerProbs<S>,
    pub x: BlockVector<S>,
    pub y: BlockVector<S>,
    x_prev: BlockVector<S>,
    xbar: BlockVector<S>,
    kty: BlockVector<S>,
    kxbar: BlockVector<S>,
    tau_hat: Vec<S>,
    pub ergodic: Option<ErgodicAccum<S>>,
    pub debug_checks: bool,
    pub diagnostics: CouplingReport,
    i: usize,
    efu: f64,
}

impl<S: Scalar> Alg2Solver<S> {
    pub fn new(
        problem: Arc<SaddleProblem<S>>,
        state: StepState<S>,
        sampler: Box<dyn Sampler<S>>,
        track_ergodic: bool,
    ) -> Result<Self> {
        if !sampler.is_full_dual() {
            return Err(Error::Config(
                "the primal-randomised method needs a full-dual sampler".into(),
            ));
        }
        let probs = sampler.probs().clone();
        let efu = probs.expected_update_fraction();
        let x = BlockVector::zeros(problem.primal_layout());
        let y = BlockVector::zeros(problem.dual_layout());
        let m = problem.primal_layout().block_count();
        let ergodic = track_ergodic.then(|| ErgodicAccum::new(ErgodicMode::CgStar, &problem));
        Ok(Self {
            x_prev: x.clone(),
            xbar: x.clone(),
            kty: x.clone(),
            kxbar: y.clone(),
            x,
            y,
            tau_hat: vec![S::zero(); m],
            probs,
            problem,
            state,
            sampler,
            ergodic,
            debug_checks: false,
            diagnostics: CouplingReport::default(),
            i: 0,
            efu,
        })
    }
}

impl<S: Scalar> PrimalDualSolver<S> for Alg2Solver<S> {
    fn step(&mut self) -> Result<()> {
        let m = self.problem.primal_layout().block_count();
        let n = self.problem.dual_layout().block_count();
        let plan = self.sampler.sample(self.i);
        if self.debug_checks && !self.problem.op.connectivity().is_dense() {
            assert!(
                validate_nesting(&plan, self.problem.op.connectivity()),
                "sampler emitted a non-nested plan at iteration {}",
                self.i
            );
        }
        self.x_prev.copy_from(&self.x);

        // primal prox on sampled blocks against the current dual
        self.problem.op.adjoint_into(&self.y, &mut self.kty);
        self.tau_hat.iter_mut().for_each(|t| *t = S::zero());
        for j in plan.s.iter(m) {
            let tau = self.state.primal_step_length(j, &self.probs, true)?;
            self.tau_hat[j] = tau;
            let span = self.problem.primal_layout().span(j);
            let kty = &self.kty.data()[span.offset..span.offset + span.len];
            let xj = self.x.block_mut(j);
            for (v, &k) in xj.iter_mut().zip(kty) {
                *v -= tau * k;
            }
            self.problem.prox_primal_block(j, tau, self.x.block_mut(j));
        }
        if self.debug_checks {
            check_coupling(
                &self.state,
                &plan,
                &self.probs,
                &self.tau_hat,
                &[],
                true,
                &mut self.diagnostics,
            );
        }

        let eta_i = self.state.eta;
        self.state
            .update_phi_and_eta(&plan, &self.probs, &self.tau_hat);
        let eta_next = self.state.eta_next;

        // over-relaxation x̄ = θ (x^{i+1} - x^i) + x^{i+1}, θ = η_i/(π̂ η_{i+1})
        self.xbar.copy_from(&self.x);
        for j in plan.s.iter(m) {
            let theta = eta_i / (self.probs.pi_hat[j] * eta_next);
            let span = self.problem.primal_layout().span(j);
            let prev = &self.x_prev.data()[span.offset..span.offset + span.len];
            let cur = &self.x.data()[span.offset..span.offset + span.len];
            let bar = self.xbar.block_mut(j);
            for ((b, &c), &p) in bar.iter_mut().zip(cur).zip(prev) {
                *b = theta * (c - p) + c;
            }
        }

        // full dual pass with σ_{l,i+1} = η_{i+1}/ψ_{l,i+1}
        self.problem.op.apply_into(&self.xbar, &mut self.kxbar);
        for l in 0..n {
            let sigma = self.state.dual_step_length_fulldual(l);
            let span = self.problem.dual_layout().span(l);
            let kx = &self.kxbar.data()[span.offset..span.offset + span.len];
            let yl = self.y.block_mut(l);
            for (v, &k) in yl.iter_mut().zip(kx) {
                *v += sigma * k;
            }
            self.problem.prox_dual_block(l, sigma, self.y.block_mut(l));
        }

        if self.debug_checks {
            for j in 0..m {
                if !plan.s.contains(j) {
                    assert_eq!(self.x.block(j), self.x_prev.block(j), "frozen block moved");
                }
            }
        }

        if let Some(erg) = &mut self.ergodic {
            // φ_{j,i} τ̂_{j,i} = η_i/π̂_j on sampled blocks, 0 elsewhere
            let pw: Vec<S> = (0..m)
                .map(|j| {
                    if plan.s.contains(j) {
                        eta_i / self.probs.pi_hat[j]
                    } else {
                        S::zero()
                    }
                })
                .collect();
            erg.record(
                self.i,
                eta_i,
                Weights::PerBlock(&pw),
                &self.x,
                Weights::Uniform(eta_next),
                &self.y,
            );
        }

        self.state.shift();
        self.i += 1;
        Ok(())
    }

    fn x(&self) -> &BlockVector<S> {
        &self.x
    }
    fn y(&self) -> &BlockVector<S> {
        &self.y
    }
    fn iteration(&self) -> usize {
        self.i
    }
    fn problem(&self) -> &Arc<SaddleProblem<S>> {
        &self.problem
    }
    fn ergodic_points(&self) -> Option<(BlockVector<S>, BlockVector<S>)> {
        self.ergodic.as_ref().and_then(|e| e.finalize())
    }
    fn expected_update_fraction(&self) -> f64 {
        self.efu
    }
    fn diagnostics(&self) -> Option<&CouplingReport> {
        Some(&self.diagnostics)
    }
}

// ---------------------------------------------------------------------------
// Algorithm 1: doubly-stochastic updates
// ---------------------------------------------------------------------------

pub struct Alg1Solver<S: Scalar> {
    pub problem: Arc<SaddleProblem<S>>,
    pub state: StepState<S>,
    sampler: Box<dyn Sampler<S>>,
    probs: SamplerProbs<S>,
    pub x: BlockVector<S>,
    pub y: BlockVector<S>,
    x_prev: BlockVector<S>,
    y_prev: BlockVector<S>,
    tau: Vec<S>,
    sigma: Vec<S>,
    tau_phi: Vec<S>,
    sigma_psi: Vec<S>,
    /// transient extrapolated points, stored only for sampled pairs
    wtilde: Vec<(usize, usize, Vec<S>)>,
    vtilde: Vec<(usize, usize, Vec<S>)>,
    pub ergodic: Option<ErgodicAccum<S>>,
    pub debug_checks: bool,
    pub diagnostics: CouplingReport,
    i: usize,
    efu: f64,
}

impl<S: Scalar> Alg1Solver<S> {
    pub fn new(
        problem: Arc<SaddleProblem<S>>,
        state: StepState<S>,
        sampler: Box<dyn Sampler<S>>,
        track_ergodic: bool,
    ) -> Result<Self> {
        if problem.op.connectivity().is_dense() {
            return Err(Error::Config(
                "the doubly-stochastic method needs materialised sub-blocks".into(),
            ));
        }
        let probs = sampler.probs().clone();
        let efu = probs.expected_update_fraction();
        let x = BlockVector::zeros(problem.primal_layout());
        let y = BlockVector::zeros(problem.dual_layout());
        let m = problem.primal_layout().block_count();
        let n = problem.dual_layout().block_count();
        let ergodic = track_ergodic.then(|| ErgodicAccum::new(ErgodicMode::Cg, &problem));
        Ok(Self {
            x_prev: x.clone(),
            y_prev: y.clone(),
            x,
            y,
            tau: vec![S::zero(); m],
            sigma: vec![S::zero(); n],
            tau_phi: vec![S::zero(); m],
            sigma_psi: vec![S::zero(); n],
            wtilde: Vec::new(),
            vtilde: Vec::new(),
            probs,
            problem,
            state,
            sampler,
            ergodic,
            debug_checks: false,
            diagnostics: CouplingReport::default(),
            i: 0,
            efu,
        })
    }

    fn wtilde_of(&self, l: usize, j: usize) -> Option<&[S]> {
        self.wtilde
            .iter()
            .find(|(ll, jj, _)| *ll == l && *jj == j)
            .map(|(_, _, v)| v.as_slice())
    }

    fn vtilde_of(&self, l: usize, j: usize) -> Option<&[S]> {
        self.vtilde
            .iter()
            .find(|(ll, jj, _)| *ll == l && *jj == j)
            .map(|(_, _, v)| v.as_slice())
    }

    /// Realised step products (φ_{j,i} τ̂_{j,i}, ψ_{l,i+1} σ̂_{l,i+1}) of the
    /// most recent iteration; zero for blocks outside S(i) / V(i+1).
    pub fn last_step_products(&self) -> (&[S], &[S]) {
        (&self.tau_phi, &self.sigma_psi)
    }
}

impl<S: Scalar> PrimalDualSolver<S> for Alg1Solver<S> {
    fn step(&mut self) -> Result<()> {
        let m = self.problem.primal_layout().block_count();
        let n = self.problem.dual_layout().block_count();
        let conn = self.problem.op.connectivity();
        let plan = self.sampler.sample(self.i);
        if self.debug_checks {
            assert!(
                validate_nesting(&plan, conn),
                "sampler emitted a non-nested plan at iteration {}",
                self.i
            );
        }
        self.x_prev.copy_from(&self.x);
        self.y_prev.copy_from(&self.y);
        self.tau.iter_mut().for_each(|t| *t = S::zero());
        self.sigma.iter_mut().for_each(|t| *t = S::zero());
        self.tau_phi.iter_mut().for_each(|t| *t = S::zero());
        self.sigma_psi.iter_mut().for_each(|t| *t = S::zero());
        self.wtilde.clear();
        self.vtilde.clear();

        // All step lengths of iteration i depend only on the current state,
        // so they — and the extrapolation products τφ, σψ on the *current*
        // test variables — are fixed before any block moves.
        let full_dual_mode = self.state.cfg.eta_perp == crate::step::EtaPerpRule::FullDual;
        for j in plan.s.iter(m) {
            let sampled = plan.s_hat.contains(j);
            let tau = self.state.primal_step_length(j, &self.probs, sampled)?;
            self.tau[j] = tau;
            self.tau_phi[j] = tau * self.state.phi[j];
        }
        for l in plan.v_hat.iter(n) {
            let sigma = self.state.dual_step_length(l, &self.probs, true)?;
            self.sigma[l] = sigma;
            self.sigma_psi[l] = sigma * self.state.psi_next[l];
        }
        if full_dual_mode {
            // σ on forced dual blocks needs η_{i+1}; all realised τ̂ are
            // already known, so the test update can run now
            self.state.update_phi_and_eta(&plan, &self.probs, &self.tau);
            self.state.eta_perp_sigma = self.state.eta_next;
        }
        for l in plan.v.iter(n) {
            if plan.v_hat.contains(l) {
                continue;
            }
            let sigma = self.state.dual_step_length(l, &self.probs, false)?;
            self.sigma[l] = sigma;
            self.sigma_psi[l] = sigma * self.state.psi_next[l];
        }

        // sampled primal blocks against the old dual
        for j in plan.s_hat.iter(m) {
            let tau = self.tau[j];
            let span = self.problem.primal_layout().span(j);
            let mut grad = vec![S::zero(); span.len];
            for &l in conn.c_of(j) {
                self.problem
                    .op
                    .sub_adjoint_add(l, j, self.y_prev.block(l), &mut grad);
            }
            let xj = self.x.block_mut(j);
            for (v, &k) in xj.iter_mut().zip(&grad) {
                *v -= tau * k;
            }
            self.problem.prox_primal_block(j, tau, self.x.block_mut(j));
        }

        // primal extrapolation toward the forced dual updates:
        // w̃ = θ (x^{i+1} - x^i) + x^{i+1}, θ = τφ/(σψ)
        for j in plan.s_hat.iter(m) {
            for &l in conn.c_of(j) {
                let theta = self.tau_phi[j] / self.sigma_psi[l];
                let cur = self.x.block(j);
                let prev = self.x_prev.block(j);
                let w: Vec<S> = cur
                    .iter()
                    .zip(prev)
                    .map(|(&c, &p)| theta * (c - p) + c)
                    .collect();
                self.wtilde.push((l, j, w));
            }
        }

        // sampled dual blocks against the old primal
        for l in plan.v_hat.iter(n) {
            let sigma = self.sigma[l];
            let span = self.problem.dual_layout().span(l);
            let mut kx = vec![S::zero(); span.len];
            for &j in conn.cinv_of(l) {
                self.problem
                    .op
                    .sub_apply_add(l, j, self.x_prev.block(j), &mut kx);
            }
            let yl = self.y.block_mut(l);
            for (v, &k) in yl.iter_mut().zip(&kx) {
                *v += sigma * k;
            }
            self.problem.prox_dual_block(l, sigma, self.y.block_mut(l));
        }

        // forced dual blocks against the extrapolated primal
        for l in plan.v.iter(n) {
            if plan.v_hat.contains(l) {
                continue;
            }
            let sigma = self.sigma[l];
            let span = self.problem.dual_layout().span(l);
            let mut kx = vec![S::zero(); span.len];
            for &j in conn.cinv_of(l) {
                let point = self
                    .wtilde_of(l, j)
                    .map(|w| w.to_vec())
                    .unwrap_or_else(|| self.x_prev.block(j).to_vec());
                self.problem.op.sub_apply_add(l, j, &point, &mut kx);
            }
            let yl = self.y.block_mut(l);
            for (v, &k) in yl.iter_mut().zip(&kx) {
                *v += sigma * k;
            }
            self.problem.prox_dual_block(l, sigma, self.y.block_mut(l));
        }

        // dual extrapolation toward the forced primal updates:
        // ṽ = b (y^{i+1} - y^i) + y^{i+1}, b = σψ/(τφ)
        for l in plan.v_hat.iter(n) {
            for &j in conn.cinv_of(l) {
                let b = self.sigma_psi[l] / self.tau_phi[j];
                let cur = self.y.block(l);
                let prev = self.y_prev.block(l);
                let v: Vec<S> = cur
                    .iter()
                    .zip(prev)
                    .map(|(&c, &p)| b * (c - p) + c)
                    .collect();
                self.vtilde.push((l, j, v));
            }
        }

        // forced primal blocks against the extrapolated dual
        for j in plan.s.iter(m) {
            if plan.s_hat.contains(j) {
                continue;
            }
            let tau = self.tau[j];
            let span = self.problem.primal_layout().span(j);
            let mut grad = vec![S::zero(); span.len];
            for &l in conn.c_of(j) {
                let point = self
                    .vtilde_of(l, j)
                    .map(|v| v.to_vec())
                    .unwrap_or_else(|| self.y.block(l).to_vec());
                self.problem.op.sub_adjoint_add(l, j, &point, &mut grad);
            }
            let xj = self.x.block_mut(j);
            for (v, &k) in xj.iter_mut().zip(&grad) {
                *v -= tau * k;
            }
            self.problem.prox_primal_block(j, tau, self.x.block_mut(j));
        }

        if self.debug_checks {
            if !full_dual_mode {
                // λ-coupling check on the pre-update test variables
                check_coupling(
                    &self.state,
                    &plan,
                    &self.probs,
                    &self.tau,
                    &self.sigma,
                    false,
                    &mut self.diagnostics,
                );
            }
            for j in 0..m {
                if !plan.s.contains(j) {
                    assert_eq!(
                        self.x.block(j),
                        self.x_prev.block(j),
                        "frozen primal block moved"
                    );
                }
            }
            for l in 0..n {
                if !plan.v.contains(l) {
                    assert_eq!(
                        self.y.block(l),
                        self.y_prev.block(l),
                        "frozen dual block moved"
                    );
                }
            }
        }

        if let Some(erg) = &mut self.ergodic {
            let pw: Vec<S> = (0..m)
                .map(|j| {
                    if plan.s.contains(j) {
                        self.tau_phi[j]
                    } else {
                        S::zero()
                    }
                })
                .collect();
            let dw: Vec<S> = (0..n)
                .map(|l| {
                    if plan.v.contains(l) {
                        self.sigma_psi[l]
                    } else {
                        S::zero()
                    }
                })
                .collect();
            erg.record(
                self.i,
                self.state.eta,
                Weights::PerBlock(&pw),
                &self.x,
                Weights::PerBlock(&dw),
                &self.y,
            );
        }

        self.state
            .record_carries(&plan, &self.tau_phi, &self.sigma_psi);
        if !full_dual_mode {
            self.state.update_phi_and_eta(&plan, &self.probs, &self.tau);
        }
        self.state.shift();
        self.i += 1;
        Ok(())
    }

    fn x(&self) -> &BlockVector<S> {
        &self.x
    }
    fn y(&self) -> &BlockVector<S> {
        &self.y
    }
    fn iteration(&self) -> usize {
        self.i
    }
    fn problem(&self) -> &Arc<SaddleProblem<S>> {
        &self.problem
    }
    fn ergodic_points(&self) -> Option<(BlockVector<S>, BlockVector<S>)> {
        self.ergodic.as_ref().and_then(|e| e.finalize())
    }
    fn expected_update_fraction(&self) -> f64 {
        self.efu
    }
    fn diagnostics(&self) -> Option<&CouplingReport> {
        Some(&self.diagnostics)
    }
}

// ---------------------------------------------------------------------------
// PDHGM baseline (plain and relaxed)
// ---------------------------------------------------------------------------

pub struct PdhgmSolver<S: Scalar> {
    pub problem: Arc<SaddleProblem<S>>,
    pub tau: S,
    pub sigma: S,
    /// inertial relaxation; 1 is the basic method
    pub rho: S,
    pub x: BlockVector<S>,
    pub y: BlockVector<S>,
    x_inner: BlockVector<S>,
    y_inner: BlockVector<S>,
    xbar: BlockVector<S>,
    kty: BlockVector<S>,
    kxbar: BlockVector<S>,
    i: usize,
}

impl<S: Scalar> PdhgmSolver<S> {
    pub fn new(problem: Arc<SaddleProblem<S>>, tau: S, sigma: S, rho: S) -> Result<Self> {
        let nb = problem.op.global_norm_bound();
        if !(tau * sigma * nb * nb < S::one()) {
            return Err(Error::Config(format!(
                "step bound violated: τσ||K||² = {} >= 1",
                (tau * sigma * nb * nb).as_f64()
            )));
        }
        if rho <= S::zero() || rho >= S::f(2.0) {
            return Err(Error::Config("relaxation ρ must lie in (0,2)".into()));
        }
        let x = BlockVector::zeros(problem.primal_layout());
        let y = BlockVector::zeros(problem.dual_layout());
        Ok(Self {
            x_inner: x.clone(),
            y_inner: y.clone(),
            xbar: x.clone(),
            kty: x.clone(),
            kxbar: y.clone(),
            x,
            y,
            problem,
            tau,
            sigma,
            rho,
            i: 0,
        })
    }

    /// Standard parametrisation from `σ_0 = 1.9/||K||` and
    /// `τ_0 σ_0 ||K||² = 1 - δ`.
    pub fn default_steps(problem: &SaddleProblem<S>, delta: S) -> (S, S) {
        let nb = problem.op.global_norm_bound();
        let sigma = S::f(1.9) / nb;
        let tau = (S::one() - delta) / (sigma * nb * nb);
        (tau, sigma)
    }
}

impl<S: Scalar> PrimalDualSolver<S> for PdhgmSolver<S> {
    fn step(&mut self) -> Result<()> {
        let m = self.problem.primal_layout().block_count();
        let n = self.problem.dual_layout().block_count();

        self.problem.op.adjoint_into(&self.y, &mut self.kty);
        for ((xi, &xv), &k) in self
            .x_inner
            .data_mut()
            .iter_mut()
            .zip(self.x.data())
            .zip(self.kty.data())
        {
            *xi = xv - self.tau * k;
        }
        for j in 0..m {
            self.problem
                .prox_primal_block(j, self.tau, self.x_inner.block_mut(j));
        }

        // over-relaxation ω = 1, written as θ(x⁺-x) + x⁺ to share the
        // arithmetic path with the block solvers; x still holds the old point
        for ((b, &c), &p) in self
            .xbar
            .data_mut()
            .iter_mut()
            .zip(self.x_inner.data())
            .zip(self.x.data())
        {
            *b = (c - p) + c;
        }

        self.problem.op.apply_into(&self.xbar, &mut self.kxbar);
        for ((yi, &yv), &k) in self
            .y_inner
            .data_mut()
            .iter_mut()
            .zip(self.y.data())
            .zip(self.kxbar.data())
        {
            *yi = yv + self.sigma * k;
        }
        for l in 0..n {
            self.problem
                .prox_dual_block(l, self.sigma, self.y_inner.block_mut(l));
        }

        if self.rho == S::one() {
            std::mem::swap(&mut self.x, &mut self.x_inner);
            std::mem::swap(&mut self.y, &mut self.y_inner);
        } else {
            // z <- z + ρ (T(z) - z)
            for (o, &t) in self.x.data_mut().iter_mut().zip(self.x_inner.data()) {
                *o += self.rho * (t - *o);
            }
            for (o, &t) in self.y.data_mut().iter_mut().zip(self.y_inner.data()) {
                *o += self.rho * (t - *o);
            }
        }
        self.i += 1;
        Ok(())
    }

    fn x(&self) -> &BlockVector<S> {
        &self.x
    }
    fn y(&self) -> &BlockVector<S> {
        &self.y
    }
    fn iteration(&self) -> usize {
        self.i
    }
    fn problem(&self) -> &Arc<SaddleProblem<S>> {
        &self.problem
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Grid2D;
    use crate::problems::{build_tv_denoise_single, synthetic_scene};
    use crate::sampling::DeterministicFull;
    use crate::step::{
        init_test_weights, EtaPerpRule, EtaRule, PExponent, PhiRule, StepConfig, WBounds,
    };

    fn small_problem() -> Arc<SaddleProblem<f64>> {
        let g = Grid2D::new(8, 8);
        let clean = synthetic_scene::<f64>(g);
        Arc::new(build_tv_denoise_single(g, &clean, 0.4).unwrap())
    }

    fn constant_state(
        problem: &SaddleProblem<f64>,
        sampler_probs: &SamplerProbs<f64>,
    ) -> StepState<f64> {
        let delta = 0.01;
        let nb = problem.op.global_norm_bound();
        let tau0 = (1.0 - delta) / (1.9 * nb);
        let kappa = crate::step::KappaFamily::worst_case(problem.op.as_ref());
        let init = init_test_weights(
            &kappa,
            &WBounds::One,
            &[tau0],
            1.0 / tau0,
            delta,
            PExponent::Half,
        )
        .unwrap();
        StepState::new(
            StepConfig {
                phi_rule: PhiRule::Constant,
                eta_rule: EtaRule::Constant,
                eta_perp: EtaPerpRule::FullDual,
                p: PExponent::Half,
                delta,
            },
            kappa,
            WBounds::One,
            init,
            sampler_probs,
        )
        .unwrap()
    }

    #[test]
    fn alg2_constant_rule_equals_pdhgm() {
        let problem = small_problem();
        let sampler = DeterministicFull::<f64>::new(1, 1);
        let probs = Sampler::<f64>::probs(&sampler).clone();
        let state = constant_state(&problem, &probs);
        let mut alg2 = Alg2Solver::new(problem.clone(), state, Box::new(sampler), false).unwrap();
        let (tau, sigma) = PdhgmSolver::default_steps(&problem, 0.01);
        let mut pdhgm = PdhgmSolver::new(problem.clone(), tau, sigma, 1.0).unwrap();
        for k in 0..100 {
            alg2.step().unwrap();
            pdhgm.step().unwrap();
            let dx = {
                let mut d = alg2.x.clone();
                d.axpy(-1.0, &pdhgm.x);
                d.norm()
            };
            let nx = pdhgm.x.norm().max(1.0);
            assert!(dx <= 1e-12 * nx, "iter {k}: relative drift {}", dx / nx);
        }
    }

    #[test]
    fn pdhgm_fixed_point_is_stationary() {
        let problem = small_problem();
        let (tau, sigma) = PdhgmSolver::default_steps(&problem, 0.01);
        // converge hard, then verify per-iteration movement is tiny
        let mut solver = PdhgmSolver::new(problem.clone(), tau, sigma, 1.0).unwrap();
        for _ in 0..60_000 {
            solver.step().unwrap();
        }
        let x_star = solver.x.clone();
        let y_star = solver.y.clone();
        solver.step().unwrap();
        let mut dx = solver.x.clone();
        dx.axpy(-1.0, &x_star);
        let mut dy = solver.y.clone();
        dy.axpy(-1.0, &y_star);
        let scale = x_star.norm().max(1.0);
        assert!(dx.norm() <= 1e-8 * scale, "moved {}", dx.norm() / scale);
        assert!(dy.norm() <= 1e-6 * scale);
    }

    #[test]
    fn relaxed_with_unit_rho_is_plain() {
        let problem = small_problem();
        let (tau, sigma) = PdhgmSolver::default_steps(&problem, 0.01);
        let mut a = PdhgmSolver::new(problem.clone(), tau, sigma, 1.0).unwrap();
        let mut b = PdhgmSolver::new(problem.clone(), tau, sigma, 1.0 + 0.0).unwrap();
        for _ in 0..50 {
            a.step().unwrap();
            b.step().unwrap();
        }
        assert_eq!(a.x.data(), b.x.data());
        // step bound enforcement
        assert!(PdhgmSolver::new(problem, 10.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn ergodic_constant_weights_are_running_mean() {
        let problem = small_problem();
        let mut acc = ErgodicAccum::new(ErgodicMode::Cg, &problem);
        let l = problem.primal_layout().clone();
        let ld = problem.dual_layout().clone();
        let mut xs = Vec::new();
        for k in 0..5 {
            let x = BlockVector::from_vec(&l, vec![k as f64 + 1.0; l.dim()]).unwrap();
            let y = BlockVector::zeros(&ld);
            acc.record(k, 1.0, Weights::Uniform(1.0), &x, Weights::Uniform(1.0), &y);
            xs.push(x);
        }
        let (xt, _) = acc.finalize().unwrap();
        assert!((xt.data()[0] - 3.0).abs() <= 1e-14);
    }

    #[test]
    fn ergodic_single_step_is_first_iterate() {
        let problem = small_problem();
        let mut acc = ErgodicAccum::new(ErgodicMode::Cg, &problem);
        let l = problem.primal_layout().clone();
        let ld = problem.dual_layout().clone();
        let x1 = BlockVector::from_vec(&l, vec![2.5; l.dim()]).unwrap();
        let y1 = BlockVector::zeros(&ld);
        acc.record(
            0,
            0.7,
            Weights::Uniform(0.7),
            &x1,
            Weights::Uniform(0.7),
            &y1,
        );
        let (xt, _) = acc.finalize().unwrap();
        for (a, b) in xt.data().iter().zip(x1.data()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn run_loop_stride_and_stop() {
        let problem = small_problem();
        let (tau, sigma) = PdhgmSolver::default_steps(&problem, 0.01);
        let mut solver = PdhgmSolver::new(problem, tau, sigma, 1.0).unwrap();
        let mut rows = 0usize;
        let out = run(&mut solver, 100, 10, |_| {
            rows += 1;
            false
        })
        .unwrap();
        assert_eq!(rows, 10);
        assert_eq!(out.iterations, 100);
        // early stop fires at the first hook
        let problem = small_problem();
        let mut solver = PdhgmSolver::new(problem, tau, sigma, 1.0).unwrap();
        let out = run(&mut solver, 100, 10, |_| true).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.iterations, 10);
    }
}
