//! Block-structured vectors and linear operators.
//!
//! A variable is partitioned into disjoint blocks by a [`BlockLayout`];
//! every block is a contiguous span of one flat array, so a block view is
//! just an offset/length pair. A [`BlockOp`] is a linear map between two
//! block-structured spaces whose sub-blocks `K_{l,j} = Q_l K P_j` carry
//! norm bounds and a connectivity structure `C(j) = { l : K_{l,j} != 0 }`.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Scalar};

/// One block's position inside the flat array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
}

/// Partition of a vector into disjoint, exhaustive blocks.
#[derive(Debug)]
pub struct BlockLayout {
    spans: Vec<Span>,
    total: usize,
    labels: Option<Vec<String>>,
}

impl BlockLayout {
    pub fn from_dims(dims: &[usize]) -> Arc<Self> {
        assert!(!dims.is_empty(), "layout needs at least one block");
        let mut spans = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &len in dims {
            assert!(len > 0, "zero-dimensional block");
            spans.push(Span { offset, len });
            offset += len;
        }
        Arc::new(Self {
            spans,
            total: offset,
            labels: None,
        })
    }

    pub fn single(dim: usize) -> Arc<Self> {
        Self::from_dims(&[dim])
    }

    /// Uniform partition into `count` blocks of `len` scalars each.
    pub fn uniform(count: usize, len: usize) -> Arc<Self> {
        let mut spans = Vec::with_capacity(count);
        for b in 0..count {
            spans.push(Span {
                offset: b * len,
                len,
            });
        }
        Arc::new(Self {
            spans,
            total: count * len,
            labels: None,
        })
    }

    pub fn with_labels(dims: &[usize], labels: Vec<String>) -> Arc<Self> {
        assert_eq!(dims.len(), labels.len());
        let base = Self::from_dims(dims);
        Arc::new(Self {
            spans: base.spans.clone(),
            total: base.total,
            labels: Some(labels),
        })
    }

    #[inline]
    pub fn block_count(&self) -> usize {
        self.spans.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.total
    }

    #[inline]
    pub fn span(&self, j: usize) -> Span {
        self.spans[j]
    }

    pub fn label(&self, j: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[j].as_str())
    }
}

/// Vector partitioned by a [`BlockLayout`]; blocks are contiguous spans.
#[derive(Clone, Debug)]
pub struct BlockVector<S> {
    layout: Arc<BlockLayout>,
    data: Vec<S>,
}

impl<S: Scalar> BlockVector<S> {
    pub fn zeros(layout: &Arc<BlockLayout>) -> Self {
        Self {
            layout: layout.clone(),
            data: vec![S::zero(); layout.dim()],
        }
    }

    pub fn from_vec(layout: &Arc<BlockLayout>, data: Vec<S>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::Dimension(format!(
                "data length {} != layout dimension {}",
                data.len(),
                layout.dim()
            )));
        }
        Ok(Self {
            layout: layout.clone(),
            data,
        })
    }

    #[inline]
    pub fn layout(&self) -> &Arc<BlockLayout> {
        &self.layout
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    #[inline]
    pub fn block(&self, j: usize) -> &[S] {
        let Span { offset, len } = self.layout.span(j);
        &self.data[offset..offset + len]
    }

    #[inline]
    pub fn block_mut(&mut self, j: usize) -> &mut [S] {
        let Span { offset, len } = self.layout.span(j);
        &mut self.data[offset..offset + len]
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn dot(&self, other: &Self) -> S {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> S {
        self.dot(self)
    }

    pub fn norm(&self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn block_norm(&self, j: usize) -> S {
        self.block(j).iter().map(|&a| a * a).sum::<S>().sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: S, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: S) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn copy_from(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data.copy_from_slice(&other.data);
    }
}

/// Connectivity of a block operator: which sub-blocks are nonzero.
#[derive(Debug, Clone)]
pub enum Connectivity {
    /// Every (l, j) pair may be nonzero; sub-blocks are not materialised.
    Dense { n_dual: usize, n_primal: usize },
    /// Explicit `C(j)` and `C^{-1}(l)` index lists, each sorted ascending.
    Sparse {
        c: Vec<Vec<usize>>,
        cinv: Vec<Vec<usize>>,
    },
}

impl Connectivity {
    /// Build from the nonzero pairs `(l, j)`.
    pub fn from_pairs(n_dual: usize, n_primal: usize, pairs: &[(usize, usize)]) -> Self {
        let mut c = vec![Vec::new(); n_primal];
        let mut cinv = vec![Vec::new(); n_dual];
        for &(l, j) in pairs {
            c[j].push(l);
            cinv[l].push(j);
        }
        for v in c.iter_mut().chain(cinv.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Connectivity::Sparse { c, cinv }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Connectivity::Dense { .. })
    }

    /// `C(j)`: dual blocks coupled to primal block `j`.
    pub fn c_of(&self, j: usize) -> &[usize] {
        match self {
            Connectivity::Sparse { c, .. } => &c[j],
            Connectivity::Dense { .. } => panic!("dense connectivity has no materialised C(j)"),
        }
    }

    /// `C^{-1}(l)`: primal blocks coupled to dual block `l`.
    pub fn cinv_of(&self, l: usize) -> &[usize] {
        match self {
            Connectivity::Sparse { cinv, .. } => &cinv[l],
            Connectivity::Dense { .. } => panic!("dense connectivity has no materialised C^-1(l)"),
        }
    }

    /// Union of `C(j)` over `j` in `set` (sorted).
    pub fn c_of_set(&self, set: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = set
            .iter()
            .flat_map(|&j| self.c_of(j).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn cinv_of_set(&self, set: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = set
            .iter()
            .flat_map(|&l| self.cinv_of(l).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Block-structured linear operator `K` with adjoint.
///
/// Whole-operator application must equal summing the sub-block
/// applications in ascending `(l, j)` order; for sparse connectivity the
/// provided [`sparse_apply_into`] helper realises exactly that order and
/// implementors should route through it so the equality is bitwise.
pub trait BlockOp<S: Scalar>: Send + Sync {
    fn primal_layout(&self) -> &Arc<BlockLayout>;
    fn dual_layout(&self) -> &Arc<BlockLayout>;
    fn connectivity(&self) -> &Connectivity;

    /// `y = K x`
    fn apply_into(&self, x: &BlockVector<S>, y: &mut BlockVector<S>);
    /// `x = K* y`
    fn adjoint_into(&self, y: &BlockVector<S>, x: &mut BlockVector<S>);

    /// `y_l += K_{l,j} x_j` (sparse connectivity only).
    fn sub_apply_add(&self, _l: usize, _j: usize, _x_j: &[S], _y_l: &mut [S]) {
        panic!("sub-block application not available for this operator");
    }

    /// `x_j += K*_{l,j} y_l` (sparse connectivity only).
    fn sub_adjoint_add(&self, _l: usize, _j: usize, _y_l: &[S], _x_j: &mut [S]) {
        panic!("sub-block application not available for this operator");
    }

    /// Upper bound on `||K_{l,j}||`.
    fn norm_bound(&self, l: usize, j: usize) -> S;

    /// Upper bound on `||K||`.
    fn global_norm_bound(&self) -> S;

    fn apply(&self, x: &BlockVector<S>) -> BlockVector<S> {
        assert!(
            Arc::ptr_eq(x.layout(), self.primal_layout())
                || x.data().len() == self.primal_layout().dim(),
            "primal layout mismatch"
        );
        let mut y = BlockVector::zeros(self.dual_layout());
        self.apply_into(x, &mut y);
        y
    }

    fn adjoint(&self, y: &BlockVector<S>) -> BlockVector<S> {
        assert!(
            Arc::ptr_eq(y.layout(), self.dual_layout())
                || y.data().len() == self.dual_layout().dim(),
            "dual layout mismatch"
        );
        let mut x = BlockVector::zeros(self.primal_layout());
        self.adjoint_into(y, &mut x);
        x
    }
}

/// Whole application as the ascending-(l, j) sum of sub-block applications.
pub fn sparse_apply_into<S: Scalar>(
    op: &dyn BlockOp<S>,
    x: &BlockVector<S>,
    y: &mut BlockVector<S>,
) {
    assert_eq!(
        x.data().len(),
        op.primal_layout().dim(),
        "primal dimension mismatch"
    );
    y.fill(S::zero());
    let n = op.dual_layout().block_count();
    for l in 0..n {
        for &j in op.connectivity().cinv_of(l) {
            let xj: &[S] = x.block(j);
            // split borrow: y's block is disjoint from x
            let span = op.dual_layout().span(l);
            let yl = &mut y.data_mut()[span.offset..span.offset + span.len];
            op.sub_apply_add(l, j, xj, yl);
        }
    }
}

pub fn sparse_adjoint_into<S: Scalar>(
    op: &dyn BlockOp<S>,
    y: &BlockVector<S>,
    x: &mut BlockVector<S>,
) {
    assert_eq!(
        y.data().len(),
        op.dual_layout().dim(),
        "dual dimension mismatch"
    );
    x.fill(S::zero());
    let m = op.primal_layout().block_count();
    for j in 0..m {
        for &l in op.connectivity().c_of(j) {
            let yl: &[S] = y.block(l);
            let span = op.primal_layout().span(j);
            let xj = &mut x.data_mut()[span.offset..span.offset + span.len];
            op.sub_adjoint_add(l, j, yl, xj);
        }
    }
}

/// Dense-matrix backed block operator, mainly for tests and small oracles.
pub struct DenseBlockOperator<S> {
    primal: Arc<BlockLayout>,
    dual: Arc<BlockLayout>,
    conn: Connectivity,
    /// Row-major `len(l) x len(j)` matrices, indexed by (l, j).
    blocks: Vec<Vec<(usize, Vec<S>)>>, // blocks[l] = [(j, matrix)]
    bounds: Vec<Vec<(usize, S)>>,
    global_bound: S,
}

impl<S: Scalar> DenseBlockOperator<S> {
    /// `entries`: (l, j, row-major matrix of shape dual_dims[l] x primal_dims[j]).
    pub fn new(
        primal_dims: &[usize],
        dual_dims: &[usize],
        entries: Vec<(usize, usize, Vec<S>)>,
    ) -> Result<Self> {
        let primal = BlockLayout::from_dims(primal_dims);
        let dual = BlockLayout::from_dims(dual_dims);
        let pairs: Vec<(usize, usize)> = entries.iter().map(|&(l, j, _)| (l, j)).collect();
        let conn = Connectivity::from_pairs(dual_dims.len(), primal_dims.len(), &pairs);
        let mut blocks = vec![Vec::new(); dual_dims.len()];
        let mut bounds = vec![Vec::new(); dual_dims.len()];
        for (l, j, mat) in entries {
            if mat.len() != dual_dims[l] * primal_dims[j] {
                return Err(Error::Dimension(format!(
                    "sub-block ({l},{j}) matrix has wrong size"
                )));
            }
            // Frobenius norm dominates the spectral norm.
            let frob = mat.iter().map(|&v| v * v).sum::<S>().sqrt();
            blocks[l].push((j, mat));
            bounds[l].push((j, frob));
        }
        for row in blocks.iter_mut() {
            row.sort_by_key(|e| e.0);
        }
        for row in bounds.iter_mut() {
            row.sort_by_key(|e| e.0);
        }
        let global_bound = bounds
            .iter()
            .flat_map(|r| r.iter().map(|&(_, b)| b * b))
            .sum::<S>()
            .sqrt();
        let op = Self {
            primal,
            dual,
            conn,
            blocks,
            bounds,
            global_bound,
        };
        check_norm_bounds(&op, 60, 0x5eed)?;
        Ok(op)
    }

    fn block_matrix(&self, l: usize, j: usize) -> &[S] {
        self.blocks[l]
            .iter()
            .find(|e| e.0 == j)
            .map(|e| e.1.as_slice())
            .expect("absent sub-block")
    }
}

impl<S: Scalar> BlockOp<S> for DenseBlockOperator<S> {
    fn primal_layout(&self) -> &Arc<BlockLayout> {
        &self.primal
    }
    fn dual_layout(&self) -> &Arc<BlockLayout> {
        &self.dual
    }
    fn connectivity(&self) -> &Connectivity {
        &self.conn
    }
    fn apply_into(&self, x: &BlockVector<S>, y: &mut BlockVector<S>) {
        sparse_apply_into(self, x, y);
    }
    fn adjoint_into(&self, y: &BlockVector<S>, x: &mut BlockVector<S>) {
        sparse_adjoint_into(self, y, x);
    }
    fn sub_apply_add(&self, l: usize, j: usize, x_j: &[S], y_l: &mut [S]) {
        let mat = self.block_matrix(l, j);
        let cols = x_j.len();
        for (r, yv) in y_l.iter_mut().enumerate() {
            let row = &mat[r * cols..(r + 1) * cols];
            let mut acc = S::zero();
            for (a, &b) in row.iter().zip(x_j) {
                acc += *a * b;
            }
            *yv += acc;
        }
    }
    fn sub_adjoint_add(&self, l: usize, j: usize, y_l: &[S], x_j: &mut [S]) {
        let mat = self.block_matrix(l, j);
        let cols = x_j.len();
        for (r, &yv) in y_l.iter().enumerate() {
            let row = &mat[r * cols..(r + 1) * cols];
            for (xv, &a) in x_j.iter_mut().zip(row) {
                *xv += a * yv;
            }
        }
    }
    fn norm_bound(&self, l: usize, j: usize) -> S {
        self.bounds[l]
            .iter()
            .find(|e| e.0 == j)
            .map(|e| e.1)
            .unwrap_or_else(S::zero)
    }
    fn global_norm_bound(&self) -> S {
        self.global_bound
    }
}

/// Seeded start vector for power iteration.
pub fn random_vector<S: Scalar>(dim: usize, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| S::f(rng.gen_range(-1.0..1.0))).collect()
}

/// Power-iteration estimate of the spectral norm of a linear map.
///
/// Runs Rayleigh-quotient iteration on `L* L`; the returned estimate is
/// nondecreasing in `iters` for a fixed seed and never exceeds `||L||`.
/// A zero operator yields 0.
pub fn estimate_norm<S: Scalar>(
    apply: impl Fn(&[S], &mut [S]),
    adjoint: impl Fn(&[S], &mut [S]),
    dim_in: usize,
    dim_out: usize,
    iters: usize,
    seed: u64,
) -> S {
    assert!(iters >= 1, "estimate_norm needs at least one iteration");
    let mut v: Vec<S> = random_vector(dim_in, seed);
    let mut w = vec![S::zero(); dim_out];
    let mut t = vec![S::zero(); dim_in];
    let mut lambda = S::zero();
    for _ in 0..iters {
        w.iter_mut().for_each(|x| *x = S::zero());
        apply(&v, &mut w);
        t.iter_mut().for_each(|x| *x = S::zero());
        adjoint(&w, &mut t);
        let vv: S = v.iter().map(|&a| a * a).sum();
        let vt: S = v.iter().zip(&t).map(|(&a, &b)| a * b).sum();
        if vv == S::zero() {
            return S::zero();
        }
        lambda = vt / vv;
        let tn: S = t.iter().map(|&a| a * a).sum::<S>().sqrt();
        if tn == S::zero() {
            return S::zero();
        }
        let inv = S::one() / tn;
        for (vi, &ti) in v.iter_mut().zip(&t) {
            *vi = ti * inv;
        }
    }
    lambda.max(S::zero()).sqrt()
}

/// Estimate the norm of one sub-block of a block operator.
pub fn estimate_sub_norm<S: Scalar>(
    op: &dyn BlockOp<S>,
    l: usize,
    j: usize,
    iters: usize,
    seed: u64,
) -> S {
    let din = op.primal_layout().span(j).len;
    let dout = op.dual_layout().span(l).len;
    estimate_norm(
        |x, y| op.sub_apply_add(l, j, x, y),
        |y, x| op.sub_adjoint_add(l, j, y, x),
        din,
        dout,
        iters,
        seed,
    )
}

/// Estimate the norm of the whole operator.
pub fn estimate_global_norm<S: Scalar>(op: &dyn BlockOp<S>, iters: usize, seed: u64) -> S {
    let din = op.primal_layout().dim();
    let dout = op.dual_layout().dim();
    estimate_norm(
        |x, y| {
            let xv = BlockVector::from_vec(op.primal_layout(), x.to_vec()).unwrap();
            let mut yv = BlockVector::zeros(op.dual_layout());
            op.apply_into(&xv, &mut yv);
            y.copy_from_slice(yv.data());
        },
        |y, x| {
            let yv = BlockVector::from_vec(op.dual_layout(), y.to_vec()).unwrap();
            let mut xv = BlockVector::zeros(op.primal_layout());
            op.adjoint_into(&yv, &mut xv);
            x.copy_from_slice(xv.data());
        },
        din,
        dout,
        iters,
        seed,
    )
}

/// Verify that every stored norm bound dominates a power-iteration estimate
/// of the corresponding sub-block (and likewise the global bound).
pub fn check_norm_bounds<S: Scalar>(op: &dyn BlockOp<S>, iters: usize, seed: u64) -> Result<()> {
    if !op.connectivity().is_dense() {
        let n = op.dual_layout().block_count();
        for l in 0..n {
            for &j in op.connectivity().cinv_of(l) {
                let est = estimate_sub_norm(op, l, j, iters, seed ^ ((l as u64) << 32) ^ j as u64);
                let bound = op.norm_bound(l, j);
                if est > bound * S::f(1.0 + 1e-9) {
                    return Err(Error::Config(format!(
                        "norm bound for sub-block ({l},{j}) too small: bound {bound}, estimate {est}"
                    )));
                }
            }
        }
    }
    let est = estimate_global_norm(op, iters, seed ^ 0xfeed);
    let bound = op.global_norm_bound();
    if est > bound * S::f(1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "global norm bound too small: bound {bound}, estimate {est}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_op(dim: usize) -> DenseBlockOperator<f64> {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0;
        }
        DenseBlockOperator::new(&[dim], &[dim], vec![(0, 0, m)]).unwrap()
    }

    fn random_two_block(seed: u64) -> (DenseBlockOperator<f64>, Vec<Vec<f64>>) {
        // 4x4 total: primal blocks [2,2], dual blocks [2,2]; dense 4x4 matrix oracle
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mats = Vec::new();
        let mut dense = vec![vec![0.0f64; 4]; 4];
        for l in 0..2usize {
            for j in 0..2usize {
                let m: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for r in 0..2 {
                    for c in 0..2 {
                        dense[l * 2 + r][j * 2 + c] = m[r * 2 + c];
                    }
                }
                mats.push((l, j, m));
            }
        }
        let op = DenseBlockOperator::new(&[2, 2], &[2, 2], mats).unwrap();
        (op, dense)
    }

    #[test]
    fn identity_apply_and_adjoint() {
        let op = identity_op(5);
        let x = BlockVector::from_vec(op.primal_layout(), vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
        let y = op.apply(&x);
        assert_eq!(y.data(), x.data());
        let back = op.adjoint(&y);
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn two_block_matches_dense_oracle() {
        let (op, dense) = random_two_block(7);
        let x = BlockVector::from_vec(op.primal_layout(), vec![0.3, -1.1, 2.0, 0.7]).unwrap();
        let y = op.apply(&x);
        for r in 0..4 {
            let want: f64 = (0..4).map(|c| dense[r][c] * x.data()[c]).sum();
            assert!((y.data()[r] - want).abs() <= 1e-12);
        }
        // adjoint vs transpose
        let yv = BlockVector::from_vec(op.dual_layout(), vec![1.0, 0.2, -0.5, 0.9]).unwrap();
        let xa = op.adjoint(&yv);
        for c in 0..4 {
            let want: f64 = (0..4).map(|r| dense[r][c] * yv.data()[r]).sum();
            assert!((xa.data()[c] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_many_pairs() {
        let (op, _) = random_two_block(11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = BlockVector::from_vec(
                op.primal_layout(),
                (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let y = BlockVector::from_vec(
                op.dual_layout(),
                (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let lhs = op.apply(&x).dot(&y);
            let rhs = x.dot(&op.adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-10 * x.norm() * y.norm());
        }
    }

    #[test]
    fn blockwise_equals_whole_exactly() {
        let (op, _) = random_two_block(23);
        let x = BlockVector::from_vec(op.primal_layout(), vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let whole = op.apply(&x);
        let mut manual = BlockVector::zeros(op.dual_layout());
        for l in 0..2 {
            for &j in op.connectivity().cinv_of(l) {
                let xj = x.block(j).to_vec();
                op.sub_apply_add(l, j, &xj, manual.block_mut(l));
            }
        }
        assert_eq!(whole.data(), manual.data());
    }

    #[test]
    fn norm_bounds_dominate_rayleigh_quotients() {
        let (op, _) = random_two_block(5);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for l in 0..2 {
            for j in 0..2 {
                let b = op.norm_bound(l, j);
                for _ in 0..200 {
                    let xj: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let mut yl = vec![0.0; 2];
                    op.sub_apply_add(l, j, &xj, &mut yl);
                    let nx = (xj[0] * xj[0] + xj[1] * xj[1]).sqrt();
                    let ny = (yl[0] * yl[0] + yl[1] * yl[1]).sqrt();
                    assert!(ny <= b * nx * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn estimate_norm_scaled_identity() {
        let apply = |x: &[f64], y: &mut [f64]| {
            for (yv, &xv) in y.iter_mut().zip(x) {
                *yv += 2.0 * xv;
            }
        };
        let est = estimate_norm(apply, apply, 6, 6, 50, 42);
        assert!((est - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn estimate_norm_diagonal() {
        let apply = |x: &[f64], y: &mut [f64]| {
            y[0] += 3.0 * x[0];
            y[1] += 1.0 * x[1];
        };
        let est = estimate_norm(apply, apply, 2, 2, 200, 1);
        assert!((est - 3.0).abs() <= 1e-9);
    }

    #[test]
    fn estimate_norm_zero_operator() {
        let apply = |_: &[f64], _: &mut [f64]| {};
        let est = estimate_norm(apply, apply, 4, 4, 10, 9);
        assert_eq!(est, 0.0);
    }

    #[test]
    fn estimate_norm_monotone_in_iters() {
        let (op, _) = random_two_block(31);
        let mut prev = 0.0;
        for iters in [1, 2, 4, 8, 16, 32, 64] {
            let est: f64 = estimate_global_norm(&op, iters, 77);
            assert!(est >= prev - 1e-12, "estimate decreased: {est} < {prev}");
            prev = est;
        }
    }
}
