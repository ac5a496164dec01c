//! The saddle-point problem instances: TGV² denoising, TV deblurring,
//! TV undimming, plus corrupt-data generation and image IO.
//!
//! Every data term here is a diagonal quadratic `G(x) = ½ Σ_e (a_e x_e - g_e)²`
//! in the problem's own primal coordinates (pixel values, or real Fourier
//! coefficients for deblurring), which gives closed-form proximal maps,
//! per-block strong convexity factors `γ_j = min_e a_e²`, and a closed-form
//! ball-constrained conjugate for the pseudo-duality gap. Every `F*` is an
//! indicator of pixelwise Euclidean balls, so the dual prox is a projection.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::block::{BlockLayout, BlockOp, BlockVector, Span};
use crate::ops::{
    make_dimming_mask, make_gaussian_kernel, FourierDiagonal, FourierGradOperator, GradBlocking,
    GradOperator, Grid2D, RealFourierBasis, Tgv2Operator,
};
use crate::step::KappaFamily;
use crate::{Error, Result, Scalar};

// ---------------------------------------------------------------------------
// data term
// ---------------------------------------------------------------------------

/// Diagonal quadratic data term `G(x) = ½ Σ (a_e x_e - g_e)²`.
#[derive(Clone, Debug)]
pub struct QuadDiagObjective<S> {
    pub a: Vec<S>,
    pub g: Vec<S>,
}

impl<S: Scalar> QuadDiagObjective<S> {
    pub fn value(&self, x: &[S]) -> S {
        debug_assert_eq!(x.len(), self.a.len());
        let mut acc = S::zero();
        for ((&a, &g), &xv) in self.a.iter().zip(&self.g).zip(x) {
            let r = a * xv - g;
            acc += r * r;
        }
        acc * S::f(0.5)
    }

    /// In-place prox of the block covering `span` with step `tau`:
    /// `p <- (p + τ a g) / (1 + τ a²)`.
    pub fn prox_span(&self, span: Span, tau: S, p: &mut [S]) {
        debug_assert_eq!(p.len(), span.len);
        let a = &self.a[span.offset..span.offset + span.len];
        let g = &self.g[span.offset..span.offset + span.len];
        for ((pv, &a), &g) in p.iter_mut().zip(a).zip(g) {
            *pv = (*pv + tau * a * g) / (S::one() + tau * a * a);
        }
    }

    /// [`Self::prox_span`] when the block's curvature `a` is one constant:
    /// a zero block is the identity, otherwise one division serves the
    /// whole block.
    pub fn prox_span_uniform(&self, span: Span, a: S, tau: S, p: &mut [S]) {
        if a == S::zero() {
            return;
        }
        let g = &self.g[span.offset..span.offset + span.len];
        let scale = S::one() / (S::one() + tau * a * a);
        let ta = tau * a * scale;
        for (pv, &g) in p.iter_mut().zip(g) {
            *pv = *pv * scale + ta * g;
        }
    }

    /// Strong-convexity factor of the block covering `span`.
    pub fn gamma_span(&self, span: Span) -> S {
        let mut m = S::infinity();
        for e in 0..span.len {
            let a = self.a[span.offset + e];
            m = m.min(a * a);
        }
        m
    }

    /// Ball-constrained conjugate `sup_{||z|| <= cx} <w,z> - G(z)`,
    /// solved from the KKT system `z(μ) = (w + a g) / (a² + μ)` with a
    /// bisection on the multiplier μ.
    pub fn ball_conjugate(&self, w: &[S], cx: S) -> S {
        debug_assert_eq!(w.len(), self.a.len());
        let c: Vec<S> = w
            .iter()
            .zip(self.a.iter().zip(&self.g))
            .map(|(&wv, (&a, &g))| wv + a * g)
            .collect();
        let norm_sq_at = |mu: S| -> S {
            let mut acc = S::zero();
            for (&cv, &a) in c.iter().zip(&self.a) {
                let d = a * a + mu;
                if d > S::zero() {
                    let z = cv / d;
                    acc += z * z;
                } else if cv != S::zero() {
                    return S::infinity();
                }
            }
            acc
        };
        let mut mu = S::zero();
        if norm_sq_at(S::zero()) > cx * cx {
            let cnorm = c.iter().map(|&v| v * v).sum::<S>().sqrt();
            let mut lo = S::zero();
            let mut hi = (cnorm / cx).max(S::f(1e-30));
            for _ in 0..90 {
                let mid = S::f(0.5) * (lo + hi);
                if norm_sq_at(mid) > cx * cx {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            mu = hi;
        }
        let mut val = S::zero();
        for ((&cv, &wv), (&a, &g)) in c.iter().zip(w).zip(self.a.iter().zip(&self.g)) {
            let d = a * a + mu;
            let z = if d > S::zero() { cv / d } else { S::zero() };
            let r = a * z - g;
            val += wv * z - S::f(0.5) * r * r;
        }
        val
    }
}

// ---------------------------------------------------------------------------
// dual structure
// ---------------------------------------------------------------------------

/// Pixelwise Euclidean ball structure of `F*`: per dual block, a ball radius
/// and the per-pixel vector length the ball applies to.
#[derive(Clone, Debug)]
pub struct DualStructure<S> {
    pub radius: Vec<S>,
    pub chunk: Vec<usize>,
}

impl<S: Scalar> DualStructure<S> {
    /// Projection of a dual block onto its product of Euclidean balls.
    pub fn project_block(&self, l: usize, y: &mut [S]) {
        let r = self.radius[l];
        let c = self.chunk[l];
        for pix in y.chunks_exact_mut(c) {
            let n = pix.iter().map(|&v| v * v).sum::<S>().sqrt();
            if n > r {
                let s = r / n;
                for v in pix.iter_mut() {
                    *v *= s;
                }
            }
        }
    }

    /// `F(z) = Σ_l r_l Σ_pix ||z_pix||` (support function of the balls).
    pub fn fenchel_value(&self, z: &BlockVector<S>) -> S {
        let mut acc = S::zero();
        for l in 0..self.radius.len() {
            let r = self.radius[l];
            let c = self.chunk[l];
            for pix in z.block(l).chunks_exact(c) {
                acc += r * pix.iter().map(|&v| v * v).sum::<S>().sqrt();
            }
        }
        acc
    }

    /// Whether `y` lies (up to slack) in the dual feasible set.
    pub fn feasible(&self, y: &BlockVector<S>, rel_slack: S) -> bool {
        for l in 0..self.radius.len() {
            let r = self.radius[l];
            let c = self.chunk[l];
            for pix in y.block(l).chunks_exact(c) {
                let n = pix.iter().map(|&v| v * v).sum::<S>().sqrt();
                if n > r * (S::one() + rel_slack) {
                    return false;
                }
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// problem
// ---------------------------------------------------------------------------

/// How to recover the displayable image from the primal iterate.
#[derive(Clone)]
pub enum ImageView<S: Scalar> {
    /// The whole primal vector is the image.
    WholePrimal,
    /// Block 0 of the primal vector is the image (TGV²'s `v`).
    Block0,
    /// The primal vector holds real Fourier coefficients.
    Fourier(Arc<RealFourierBasis<S>>),
}

/// A block-separable saddle-point instance
/// `min_x max_y G(x) + <Kx,y> - F*(y)`.
pub struct SaddleProblem<S: Scalar> {
    pub name: String,
    /// canonical parameter string; used to key the target cache
    pub descriptor: String,
    pub grid: Grid2D,
    pub op: Arc<dyn BlockOp<S>>,
    pub objective: QuadDiagObjective<S>,
    pub dual: DualStructure<S>,
    /// per-primal-block strong convexity factors `γ_j`
    pub gamma: Vec<S>,
    /// worst-case κ by default; experiments may swap in a balanced family
    pub kappa: KappaFamily<S>,
    pub image_view: ImageView<S>,
    /// per-block constant curvature of the data term, when it is constant
    uniform_a: Vec<Option<S>>,
}

fn uniform_curvature<S: Scalar>(layout: &BlockLayout, a: &[S]) -> Vec<Option<S>> {
    (0..layout.block_count())
        .map(|j| {
            let span = layout.span(j);
            let blk = &a[span.offset..span.offset + span.len];
            let first = blk[0];
            blk.iter().all(|&v| v == first).then_some(first)
        })
        .collect()
}

impl<S: Scalar> SaddleProblem<S> {
    pub fn primal_layout(&self) -> &Arc<BlockLayout> {
        self.op.primal_layout()
    }

    pub fn dual_layout(&self) -> &Arc<BlockLayout> {
        self.op.dual_layout()
    }

    pub fn prox_primal_block(&self, j: usize, tau: S, p: &mut [S]) {
        let span = self.primal_layout().span(j);
        match self.uniform_a[j] {
            Some(a) => self.objective.prox_span_uniform(span, a, tau, p),
            None => self.objective.prox_span(span, tau, p),
        }
    }

    pub fn prox_dual_block(&self, l: usize, _sigma: S, y: &mut [S]) {
        self.dual.project_block(l, y);
    }

    /// Primal objective `val(x) = G(x) + F(Kx)`.
    pub fn value(&self, x: &BlockVector<S>) -> S {
        let kx = self.op.apply(x);
        self.objective.value(x.data()) + self.dual.fenchel_value(&kx)
    }

    pub fn image_of(&self, x: &BlockVector<S>) -> Vec<S> {
        match &self.image_view {
            ImageView::WholePrimal => x.data().to_vec(),
            ImageView::Block0 => x.block(0).to_vec(),
            ImageView::Fourier(basis) => basis.inverse(x),
        }
    }

    /// Distance between the image parts of two primal points.
    pub fn image_distance(&self, x: &BlockVector<S>, target_image: &[S]) -> (S, S) {
        let img = self.image_of(x);
        let mut d2 = S::zero();
        let mut t2 = S::zero();
        for (&a, &b) in img.iter().zip(target_image) {
            let r = a - b;
            d2 += r * r;
            t2 += b * b;
        }
        (d2.sqrt(), t2.sqrt())
    }
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

/// TGV² denoising: `G(x) = ½||f-v||²`,
/// `F*(y) = δ_{ΠB(0,α)}(φ) + δ_{ΠB(0,β)}(ψ)`, K the TGV² operator.
pub fn build_tgv2_denoise<S: Scalar>(
    grid: Grid2D,
    f: &[S],
    alpha: f64,
    beta: f64,
) -> Result<SaddleProblem<S>> {
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::Config("TGV2 parameters must be positive".into()));
    }
    if f.len() != grid.pixels() {
        return Err(Error::Dimension("data image dimension mismatch".into()));
    }
    let n = grid.pixels();
    let op = Tgv2Operator::<S>::new(grid);
    let mut a = vec![S::one(); n];
    a.extend(std::iter::repeat(S::zero()).take(2 * n));
    let mut g = f.to_vec();
    g.extend(std::iter::repeat(S::zero()).take(2 * n));
    let objective = QuadDiagObjective { a, g };
    let gamma = vec![S::one(), S::zero()];
    let dual = DualStructure {
        radius: vec![S::f(alpha), S::f(beta)],
        chunk: vec![2, 3],
    };
    let kappa = KappaFamily::worst_case(op.as_ref());
    let uniform_a = uniform_curvature(op.primal_layout(), &objective.a);
    Ok(SaddleProblem {
        name: "tgv2".into(),
        descriptor: format!(
            "tgv2:{}x{}:alpha={alpha}:beta={beta}",
            grid.width, grid.height
        ),
        grid,
        op,
        objective,
        dual,
        gamma,
        kappa,
        image_view: ImageView::Block0,
        uniform_a,
    })
}

/// TV deblurring: `G(x) = ½||f - F*(aFx)||²` expressed per real Fourier
/// component, `K = ∇` with one dual block per pixel.
pub fn build_tv_deblur<S: Scalar>(
    grid: Grid2D,
    f: &[S],
    alpha: f64,
    blur: &FourierDiagonal<S>,
) -> Result<SaddleProblem<S>> {
    if alpha <= 0.0 {
        return Err(Error::Config("TV parameter must be positive".into()));
    }
    if f.len() != grid.pixels() {
        return Err(Error::Dimension("data image dimension mismatch".into()));
    }
    let basis = RealFourierBasis::<S>::new(grid);
    let factors = basis.block_factors(&blur.factors)?;
    let op = FourierGradOperator::new(basis.clone());
    let layout = basis.layout().clone();
    let mut a = vec![S::zero(); layout.dim()];
    let mut gamma = Vec::with_capacity(layout.block_count());
    for (b, &fac) in factors.iter().enumerate() {
        let span = layout.span(b);
        for e in 0..span.len {
            a[span.offset + e] = fac;
        }
        gamma.push(fac * fac);
    }
    let g = basis.forward(f);
    let objective = QuadDiagObjective {
        a,
        g: g.data().to_vec(),
    };
    let n = grid.pixels();
    let dual = DualStructure {
        radius: vec![S::f(alpha); n],
        chunk: vec![2; n],
    };
    let kappa = KappaFamily::worst_case(op.as_ref());
    let uniform_a = uniform_curvature(op.primal_layout(), &objective.a);
    Ok(SaddleProblem {
        name: "deblur".into(),
        descriptor: format!("deblur:{}x{}:alpha={alpha}", grid.width, grid.height),
        grid,
        op,
        objective,
        dual,
        gamma,
        kappa,
        image_view: ImageView::Fourier(basis),
        uniform_a,
    })
}

/// TV undimming: `G(u) = ½||f - γ·u||²` with pixel blocks, `K = ∇`.
pub fn build_tv_undim<S: Scalar>(
    grid: Grid2D,
    f: &[S],
    alpha: f64,
    mask: &[S],
) -> Result<SaddleProblem<S>> {
    if alpha <= 0.0 {
        return Err(Error::Config("TV parameter must be positive".into()));
    }
    if f.len() != grid.pixels() || mask.len() != grid.pixels() {
        return Err(Error::Dimension("data/mask dimension mismatch".into()));
    }
    if mask.iter().any(|&m| m <= S::zero()) {
        return Err(Error::Config("dimming mask must be positive".into()));
    }
    let n = grid.pixels();
    let op = GradOperator::<S>::new(grid, GradBlocking::Pixelwise);
    let objective = QuadDiagObjective {
        a: mask.to_vec(),
        g: f.to_vec(),
    };
    let gamma: Vec<S> = mask.iter().map(|&m| m * m).collect();
    let dual = DualStructure {
        radius: vec![S::f(alpha); n],
        chunk: vec![2; n],
    };
    let kappa = KappaFamily::worst_case(op.as_ref());
    let uniform_a = uniform_curvature(op.primal_layout(), &objective.a);
    Ok(SaddleProblem {
        name: "undim".into(),
        descriptor: format!("undim:{}x{}:alpha={alpha}", grid.width, grid.height),
        grid,
        op,
        objective,
        dual,
        gamma,
        kappa,
        image_view: ImageView::WholePrimal,
        uniform_a,
    })
}

/// TV denoising with a single primal and a single dual block
/// (`m = n = 1`); the reduction oracle against plain PDHGM runs on this.
pub fn build_tv_denoise_single<S: Scalar>(
    grid: Grid2D,
    f: &[S],
    alpha: f64,
) -> Result<SaddleProblem<S>> {
    if alpha <= 0.0 {
        return Err(Error::Config("TV parameter must be positive".into()));
    }
    let op = GradOperator::<S>::new(grid, GradBlocking::Single);
    let objective = QuadDiagObjective {
        a: vec![S::one(); grid.pixels()],
        g: f.to_vec(),
    };
    let dual = DualStructure {
        radius: vec![S::f(alpha)],
        chunk: vec![2],
    };
    let kappa = KappaFamily::worst_case(op.as_ref());
    let uniform_a = uniform_curvature(op.primal_layout(), &objective.a);
    Ok(SaddleProblem {
        name: "tv-denoise-single".into(),
        descriptor: format!("tvds:{}x{}:alpha={alpha}", grid.width, grid.height),
        grid,
        op,
        objective,
        dual,
        gamma: vec![S::one()],
        kappa,
        image_view: ImageView::WholePrimal,
        uniform_a,
    })
}

// ---------------------------------------------------------------------------
// corruption
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum Corruption {
    GaussianNoise { std: f64 },
    Blur { std: f64, noise_std: f64 },
    Dim { base: f64, amp: f64, noise_std: f64 },
}

#[derive(Clone, Debug)]
pub struct CorruptionOutcome<S> {
    pub image: Vec<S>,
    /// SNR (dB) of the pre-noise signal against the added noise;
    /// infinite when no noise was added.
    pub snr_db: f64,
    pub seed: u64,
    pub description: String,
}

fn add_noise<S: Scalar>(img: &mut [S], std: f64, seed: u64) -> f64 {
    if std <= 0.0 {
        return f64::INFINITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let mut signal = 0.0f64;
    let mut noise = 0.0f64;
    for v in img.iter_mut() {
        let e = normal.sample(&mut rng);
        signal += v.as_f64() * v.as_f64();
        noise += e * e;
        *v += S::f(e);
    }
    10.0 * (signal / noise).log10()
}

/// Deterministic corruption of a clean image; reports the achieved SNR.
pub fn corrupt<S: Scalar>(
    grid: Grid2D,
    clean: &[S],
    spec: &Corruption,
    seed: u64,
) -> Result<CorruptionOutcome<S>> {
    if clean.len() != grid.pixels() {
        return Err(Error::Dimension("image dimension mismatch".into()));
    }
    let (mut image, desc) = match spec {
        Corruption::GaussianNoise { std } => (clean.to_vec(), format!("noise std={std}")),
        Corruption::Blur { std, .. } => {
            let kernel = make_gaussian_kernel::<S>(grid, *std);
            let blur = FourierDiagonal::from_kernel(grid, &kernel)?;
            (blur.apply(clean), format!("blur std={std}"))
        }
        Corruption::Dim { base, amp, .. } => {
            let mask = make_dimming_mask::<S>(grid, *base, *amp);
            (
                clean.iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
                format!("dim base={base} amp={amp}"),
            )
        }
    };
    let noise_std = match spec {
        Corruption::GaussianNoise { std } => *std,
        Corruption::Blur { noise_std, .. } | Corruption::Dim { noise_std, .. } => *noise_std,
    };
    let snr_db = add_noise(&mut image, noise_std, seed);
    Ok(CorruptionOutcome {
        image,
        snr_db,
        seed,
        description: format!("{desc} noise_std={noise_std} seed={seed}"),
    })
}

// ---------------------------------------------------------------------------
// image IO and the built-in test scene
// ---------------------------------------------------------------------------

/// Load an 8-bit grayscale or RGB image as reals in [0, 255]
/// (RGB is converted with Rec. 601 luma weights).
pub fn load_image<S: Scalar>(path: &Path) -> Result<(Grid2D, Vec<S>)> {
    let img = image::open(path).map_err(|e| Error::Image(e.to_string()))?;
    if let image::DynamicImage::ImageLuma8(gray) = &img {
        let grid = Grid2D::new(gray.width() as usize, gray.height() as usize);
        let out = gray.pixels().map(|p| S::f(p.0[0] as f64)).collect();
        return Ok((grid, out));
    }
    let rgb = img.to_rgb8();
    let grid = Grid2D::new(rgb.width() as usize, rgb.height() as usize);
    let mut out = Vec::with_capacity(grid.pixels());
    for p in rgb.pixels() {
        let [r, g, b] = p.0;
        out.push(S::f(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64));
    }
    Ok((grid, out))
}

pub fn save_image<S: Scalar>(path: &Path, grid: Grid2D, data: &[S]) -> Result<()> {
    if data.len() != grid.pixels() {
        return Err(Error::Dimension("image dimension mismatch".into()));
    }
    let mut img = image::GrayImage::new(grid.width as u32, grid.height as u32);
    for (p, &v) in img.pixels_mut().zip(data) {
        let v = v.as_f64().round().clamp(0.0, 255.0);
        p.0 = [v as u8];
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}

/// Box-average downscale by an integer factor.
pub fn downscale<S: Scalar>(grid: Grid2D, data: &[S], factor: usize) -> Result<(Grid2D, Vec<S>)> {
    if grid.width % factor != 0 || grid.height % factor != 0 {
        return Err(Error::Config(format!(
            "grid {}x{} not divisible by {factor}",
            grid.width, grid.height
        )));
    }
    let out_grid = Grid2D::new(grid.width / factor, grid.height / factor);
    let inv = S::f(1.0 / (factor * factor) as f64);
    let mut out = vec![S::zero(); out_grid.pixels()];
    for oy in 0..out_grid.height {
        for ox in 0..out_grid.width {
            let mut acc = S::zero();
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += data[(oy * factor + dy) * grid.width + ox * factor + dx];
                }
            }
            out[oy * out_grid.width + ox] = acc * inv;
        }
    }
    Ok((out_grid, out))
}

/// Deterministic piecewise-smooth grayscale test scene in [0, 255];
/// used when no input photograph is supplied.
pub fn synthetic_scene<S: Scalar>(grid: Grid2D) -> Vec<S> {
    let (w, h) = (grid.width as f64, grid.height as f64);
    let mut out = Vec::with_capacity(grid.pixels());
    for yi in 0..grid.height {
        for xi in 0..grid.width {
            let x = xi as f64 / w;
            let y = yi as f64 / h;
            let mut v = 90.0 + 60.0 * x + 30.0 * y;
            let d1 = ((x - 0.3).powi(2) + (y - 0.35).powi(2)).sqrt();
            if d1 < 0.18 {
                v = 210.0 - 120.0 * d1;
            }
            let d2 = ((x - 0.7).powi(2) + (y - 0.62).powi(2)).sqrt();
            if d2 < 0.13 {
                v = 45.0;
            }
            if (0.55..0.82).contains(&x) && (0.12..0.3).contains(&y) {
                v = 165.0;
            }
            if x < 0.45 && y > 0.6 {
                v += 9.0
                    * (2.0 * std::f64::consts::PI * xi as f64 / 17.0).sin()
                    * (2.0 * std::f64::consts::PI * yi as f64 / 23.0).sin();
            }
            out.push(S::f(v.clamp(0.0, 255.0)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::random_vector;
    use rand::Rng;

    fn toy_grid() -> Grid2D {
        Grid2D::new(8, 6)
    }

    #[test]
    fn dual_projection_cases() {
        let dual = DualStructure {
            radius: vec![4.0f64],
            chunk: vec![2],
        };
        // inside the ball: unchanged
        let mut y = vec![1.0, 2.0];
        dual.project_block(0, &mut y);
        assert_eq!(y, vec![1.0, 2.0]);
        // (3α, 0) projects to (α, 0)
        let mut y = vec![12.0, 0.0];
        dual.project_block(0, &mut y);
        assert!((y[0] - 4.0).abs() < 1e-14 && y[1] == 0.0);
    }

    #[test]
    fn tgv2_primal_prox_optimality() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 1);
        let prob = build_tgv2_denoise(g, &f, 4.0, 4.4).unwrap();
        let tau = 0.37;
        let point: Vec<f64> = random_vector(g.pixels(), 2);
        let mut z = point.clone();
        prob.prox_primal_block(0, tau, &mut z);
        // point - prox = τ (prox - f)
        for i in 0..z.len() {
            let lhs = point[i] - z[i];
            let rhs = tau * (z[i] - f[i]);
            assert!((lhs - rhs).abs() <= 1e-12);
        }
        // w-block prox is the identity
        let pw: Vec<f64> = random_vector(2 * g.pixels(), 3);
        let mut zw = pw.clone();
        prob.prox_primal_block(1, tau, &mut zw);
        assert_eq!(pw, zw);
    }

    #[test]
    fn deblur_prox_limits() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 4);
        let ident = FourierDiagonal::new(g, vec![1.0; g.pixels()]).unwrap();
        let prob = build_tv_deblur(g, &f, 1.0, &ident).unwrap();
        // a ≡ 1, τ → ∞: prox tends to the data-fit minimiser (f in coefficients)
        let point: Vec<f64> = random_vector(prob.primal_layout().dim(), 5);
        let mut z = point.clone();
        let tau = 1e12;
        for j in 0..prob.primal_layout().block_count() {
            let span = prob.primal_layout().span(j);
            prob.objective
                .prox_span(span, tau, &mut z[span.offset..span.offset + span.len]);
        }
        for (zv, gv) in z.iter().zip(&prob.objective.g) {
            assert!((zv - gv).abs() <= 1e-9);
        }
    }

    #[test]
    fn deblur_zero_frequency_prox_is_identity() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 6);
        // zero out one frequency of a Gaussian blur
        let kernel = make_gaussian_kernel::<f64>(g, 1.0);
        let blur = FourierDiagonal::from_kernel(g, &kernel).unwrap();
        let mut factors = blur.factors.clone();
        // zero a conjugate pair
        factors[1] = 0.0;
        factors[g.width - 1] = 0.0;
        let blur0 = FourierDiagonal::new(g, factors).unwrap();
        let prob = build_tv_deblur(g, &f, 1.0, &blur0).unwrap();
        let j = prob
            .gamma
            .iter()
            .position(|&gm| gm == 0.0)
            .expect("zeroed block");
        let span = prob.primal_layout().span(j);
        let point: Vec<f64> = random_vector(span.len, 7);
        let mut z = point.clone();
        prob.objective.prox_span(span, 0.8, &mut z);
        assert_eq!(point, z);
    }

    #[test]
    fn deblur_objective_matches_direct_evaluation() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 8);
        let kernel = make_gaussian_kernel::<f64>(g, 1.5);
        let blur = FourierDiagonal::from_kernel(g, &kernel).unwrap();
        let prob = build_tv_deblur(g, &f, 1.0, &blur).unwrap();
        let img: Vec<f64> = random_vector(g.pixels(), 9);
        let basis = match &prob.image_view {
            ImageView::Fourier(b) => b.clone(),
            _ => unreachable!(),
        };
        let x = basis.forward(&img);
        let assembled = prob.objective.value(x.data());
        let blurred = blur.apply(&img);
        let direct: f64 = 0.5
            * f.iter()
                .zip(&blurred)
                .map(|(&fv, &bv)| (fv - bv) * (fv - bv))
                .sum::<f64>();
        assert!((assembled - direct).abs() <= 1e-8 * direct.max(1.0));
    }

    #[test]
    fn deblur_prox_matches_dense_normal_equations() {
        // 20-pixel brute-force oracle: solve (I + τ BᵀB) z = p + τ Bᵀ f densely
        let g = Grid2D::new(5, 4);
        let n = g.pixels();
        let f: Vec<f64> = random_vector(n, 10);
        let kernel = make_gaussian_kernel::<f64>(g, 0.9);
        let blur = FourierDiagonal::from_kernel(g, &kernel).unwrap();
        let prob = build_tv_deblur(g, &f, 1.0, &blur).unwrap();
        let basis = match &prob.image_view {
            ImageView::Fourier(b) => b.clone(),
            _ => unreachable!(),
        };
        let tau = 0.63;
        let p_img: Vec<f64> = random_vector(n, 11);

        // library path: prox in coefficients, mapped back to an image
        let pc = basis.forward(&p_img);
        let mut z = pc.clone();
        for j in 0..prob.primal_layout().block_count() {
            let span = prob.primal_layout().span(j);
            let zd = z.data_mut();
            prob.objective
                .prox_span(span, tau, &mut zd[span.offset..span.offset + span.len]);
        }
        let z_img = basis.inverse(&z);

        // dense oracle in pixel space
        let mut bt = vec![vec![0.0f64; n]; n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = blur.apply(&e);
            for r in 0..n {
                bt[r][c] = col[r];
            }
        }
        // A = I + τ BᵀB ; rhs = p + τ Bᵀ f  (B symmetric here)
        let mut a = vec![vec![0.0f64; n]; n];
        let mut rhs = vec![0.0f64; n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += bt[k][r] * bt[k][c];
                }
                a[r][c] = tau * acc + if r == c { 1.0 } else { 0.0 };
            }
            let mut acc = 0.0;
            for k in 0..n {
                acc += bt[k][r] * f[k];
            }
            rhs[r] = p_img[r] + tau * acc;
        }
        // Gaussian elimination
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            rhs.swap(col, piv);
            for r in col + 1..n {
                let fct = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= fct * a[col][c];
                }
                rhs[r] -= fct * rhs[col];
            }
        }
        let mut sol = vec![0.0f64; n];
        for r in (0..n).rev() {
            let mut acc = rhs[r];
            for c in r + 1..n {
                acc -= a[r][c] * sol[c];
            }
            sol[r] = acc / a[r][r];
        }
        for (zl, zo) in z_img.iter().zip(&sol) {
            assert!((zl - zo).abs() <= 1e-8, "{zl} vs {zo}");
        }
    }

    #[test]
    fn undim_prox_and_reduction() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 12);
        let mask = vec![1.0f64; g.pixels()];
        let prob = build_tv_undim(g, &f, 0.4, &mask).unwrap();
        let tau = 0.51;
        // optimality per pixel block: p - z = τ γ (γ z - f)
        for j in [0usize, 5, g.pixels() - 1] {
            let p0 = 1.7f64;
            let mut z = [p0];
            prob.prox_primal_block(j, tau, &mut z);
            let lhs = p0 - z[0];
            let rhs = tau * 1.0 * (z[0] - f[j]);
            assert!((lhs - rhs).abs() <= 1e-12);
        }
        // pixel oracle with a non-unit mask
        let mask2 = make_dimming_mask::<f64>(g, 0.3, 0.7);
        let prob2 = build_tv_undim(g, &f, 0.4, &mask2).unwrap();
        for j in [0usize, 9, 17] {
            let p0 = -0.3f64;
            let mut z = [p0];
            prob2.prox_primal_block(j, tau, &mut z);
            let m = mask2[j];
            let oracle = (p0 + tau * m * f[j]) / (1.0 + tau * m * m);
            assert!((z[0] - oracle).abs() <= 1e-14);
        }
        // nonpositive mask rejected
        let mut bad = mask.clone();
        bad[3] = 0.0;
        assert!(build_tv_undim(g, &f, 0.4, &bad).is_err());
    }

    #[test]
    fn proxes_are_nonexpansive() {
        let g = toy_grid();
        let f: Vec<f64> = random_vector(g.pixels(), 13);
        let prob = build_tgv2_denoise(g, &f, 4.0, 4.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let tau = rng.gen_range(0.01..10.0);
            let a: Vec<f64> = (0..g.pixels())
                .map(|_| rng.gen_range(-300.0..300.0))
                .collect();
            let b: Vec<f64> = (0..g.pixels())
                .map(|_| rng.gen_range(-300.0..300.0))
                .collect();
            let mut pa = a.clone();
            let mut pb = b.clone();
            prob.prox_primal_block(0, tau, &mut pa);
            prob.prox_primal_block(0, tau, &mut pb);
            let dp: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y) * (x - y)).sum();
            let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(dp <= d * (1.0 + 1e-12));

            let ya: Vec<f64> = (0..2 * g.pixels())
                .map(|_| rng.gen_range(-20.0..20.0))
                .collect();
            let yb: Vec<f64> = (0..2 * g.pixels())
                .map(|_| rng.gen_range(-20.0..20.0))
                .collect();
            let mut qa = ya.clone();
            let mut qb = yb.clone();
            prob.prox_dual_block(0, 1.0, &mut qa);
            prob.prox_dual_block(0, 1.0, &mut qb);
            let dp: f64 = qa.iter().zip(&qb).map(|(x, y)| (x - y) * (x - y)).sum();
            let d: f64 = ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum();
            assert!(dp <= d * (1.0 + 1e-12));
        }
    }

    #[test]
    fn corruption_determinism_and_snr() {
        let g = Grid2D::new(32, 24);
        let clean = synthetic_scene::<f64>(g);
        let spec = Corruption::GaussianNoise { std: 0.0 };
        let out = corrupt(g, &clean, &spec, 7).unwrap();
        assert_eq!(out.image, clean);
        assert!(out.snr_db.is_infinite());

        let spec = Corruption::GaussianNoise { std: 29.6 };
        let o1 = corrupt(g, &clean, &spec, 7).unwrap();
        let o2 = corrupt(g, &clean, &spec, 7).unwrap();
        assert_eq!(o1.image, o2.image);
        // SNR formula check: scale the scene so its RMS makes std 29.6 sit at 12 dB
        let rms = (clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
        let target_rms = 29.6 * 10.0f64.powf(12.0 / 20.0);
        let scaled: Vec<f64> = clean.iter().map(|v| v * target_rms / rms).collect();
        let o = corrupt(g, &scaled, &spec, 3).unwrap();
        assert!((o.snr_db - 12.0).abs() < 0.6, "snr {}", o.snr_db);
        // and std 6.15 against the same signal sits near 25.66 dB
        let o = corrupt(g, &scaled, &Corruption::GaussianNoise { std: 6.15 }, 3).unwrap();
        assert!((o.snr_db - 25.66).abs() < 0.6, "snr {}", o.snr_db);
    }

    #[test]
    fn image_roundtrip_and_downscale() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(768, 512);
        let scene = synthetic_scene::<f64>(g);
        // integer-valued image round-trips exactly
        let rounded: Vec<f64> = scene.iter().map(|v| v.round()).collect();
        let path = dir.path().join("scene.png");
        save_image(&path, g, &rounded).unwrap();
        let (g2, loaded) = load_image::<f64>(&path).unwrap();
        assert_eq!((g2.width, g2.height), (768, 512));
        assert_eq!(loaded, rounded);
        let (g3, _small) = downscale(g, &scene, 4).unwrap();
        assert_eq!((g3.width, g3.height), (192, 128));
    }

    #[test]
    fn ball_conjugate_matches_projected_ascent() {
        // independent oracle: projected gradient ascent on the ball
        let g = Grid2D::new(4, 3);
        let n = g.pixels();
        let f: Vec<f64> = random_vector(n, 20);
        let mut a = vec![1.0f64; n];
        a[0] = 0.0;
        a[5] = 0.0; // include degenerate curvature directions
        let obj = QuadDiagObjective { a, g: f.clone() };
        let w: Vec<f64> = random_vector(n, 21);
        let cx = 1.5;
        let lib = obj.ball_conjugate(&w, cx);

        let mut z = vec![0.0f64; n];
        let step = 0.4;
        for _ in 0..200_000 {
            for i in 0..n {
                let grad = w[i] - obj.a[i] * (obj.a[i] * z[i] - f[i]);
                z[i] += step * grad;
            }
            let nz: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nz > cx {
                let s = cx / nz;
                z.iter_mut().for_each(|v| *v *= s);
            }
        }
        let val: f64 = (0..n)
            .map(|i| w[i] * z[i] - 0.5 * (obj.a[i] * z[i] - f[i]).powi(2))
            .sum();
        assert!(
            lib >= val - 1e-6,
            "conjugate {lib} below feasible value {val}"
        );
        assert!(
            (lib - val).abs() <= 1e-4 * lib.abs().max(1.0),
            "{lib} vs {val}"
        );
    }
}
