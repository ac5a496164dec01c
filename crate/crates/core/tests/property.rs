//! Property tests for the block algebra.

use blockprox::block::{BlockOp, BlockVector, DenseBlockOperator};
use proptest::prelude::*;

fn dense_operator_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<f64>)> {
    // primal dims, dual dims, flat dense entries (row-major over the whole
    // assembled matrix)
    (
        prop::collection::vec(1usize..4, 1..4),
        prop::collection::vec(1usize..4, 1..4),
    )
        .prop_flat_map(|(pd, dd)| {
            let rows: usize = dd.iter().sum();
            let cols: usize = pd.iter().sum();
            (
                Just(pd),
                Just(dd),
                prop::collection::vec(-2.0f64..2.0, rows * cols),
            )
        })
}

fn assemble(pd: &[usize], dd: &[usize], flat: &[f64]) -> DenseBlockOperator<f64> {
    let cols: usize = pd.iter().sum();
    let mut entries = Vec::new();
    let mut roff = 0;
    for (l, &rl) in dd.iter().enumerate() {
        let mut coff = 0;
        for (j, &cj) in pd.iter().enumerate() {
            let mut m = Vec::with_capacity(rl * cj);
            for r in 0..rl {
                for c in 0..cj {
                    m.push(flat[(roff + r) * cols + coff + c]);
                }
            }
            entries.push((l, j, m));
            coff += cj;
        }
        roff += rl;
    }
    DenseBlockOperator::new(pd, dd, entries).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_matches_dense_matvec((pd, dd, flat) in dense_operator_strategy(),
                                  seed in 0u64..1000) {
        let op = assemble(&pd, &dd, &flat);
        let cols: usize = pd.iter().sum();
        let rows: usize = dd.iter().sum();
        let xv: Vec<f64> = blockprox::block::random_vector(cols, seed);
        let x = BlockVector::from_vec(op.primal_layout(), xv.clone()).unwrap();
        let y = op.apply(&x);
        for r in 0..rows {
            let want: f64 = (0..cols).map(|c| flat[r * cols + c] * xv[c]).sum();
            prop_assert!((y.data()[r] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn adjoint_identity_holds((pd, dd, flat) in dense_operator_strategy(),
                              seed in 0u64..1000) {
        let op = assemble(&pd, &dd, &flat);
        let cols: usize = pd.iter().sum();
        let rows: usize = dd.iter().sum();
        let x = BlockVector::from_vec(op.primal_layout(), blockprox::block::random_vector(cols, seed)).unwrap();
        let y = BlockVector::from_vec(op.dual_layout(), blockprox::block::random_vector(rows, seed + 1)).unwrap();
        let lhs = op.apply(&x).dot(&y);
        let rhs = x.dot(&op.adjoint(&y));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * x.norm() * y.norm() + 1e-14);
    }

    #[test]
    fn blockwise_sum_equals_whole_apply((pd, dd, flat) in dense_operator_strategy(),
                                        seed in 0u64..1000) {
        let op = assemble(&pd, &dd, &flat);
        let cols: usize = pd.iter().sum();
        let x = BlockVector::from_vec(op.primal_layout(), blockprox::block::random_vector(cols, seed)).unwrap();
        let whole = op.apply(&x);
        let mut manual = BlockVector::zeros(op.dual_layout());
        for l in 0..dd.len() {
            for &j in op.connectivity().cinv_of(l) {
                let xj = x.block(j).to_vec();
                op.sub_apply_add(l, j, &xj, manual.block_mut(l));
            }
        }
        prop_assert_eq!(whole.data(), manual.data());
    }
}
