// quick convergence probe for the doubly-stochastic engine
use blockprox::experiment::{make_solver, ExperimentConfig, RunVariant};
use blockprox::metrics::pseudo_gap;
use blockprox::ops::Grid2D;
use blockprox::problems::{build_tgv2_denoise, corrupt, synthetic_scene, Corruption};
use blockprox::block::BlockVector;
use std::sync::Arc;

fn main() {
    let g = Grid2D::new(48, 32);
    let scene = synthetic_scene::<f64>(g);
    let data = corrupt(g, &scene, &Corruption::GaussianNoise { std: 6.15 }, 5).unwrap().image;
    let problem = Arc::new(build_tgv2_denoise(g, &data, 4.0, 4.4).unwrap());
    let cfg = ExperimentConfig::default();
    for name in ["A-BDBO", "A-BRBO", "A-BCBO", "A-PDBO", "A-DDBO", "PDHGM"] {
        let v = match name {
            "PDHGM" => RunVariant::Pdhgm,
            _ => RunVariant::Accelerated(name.parse().unwrap()),
        };
        let mut s = make_solver(&problem, v, &cfg, 42, false).unwrap();
        let mut maxn: f64 = 0.0;
        // expected-full-update budget ~ 3000
        let iters = if name.starts_with("A-B") { 4800 } else if name == "A-PDBO" { 4000 } else { 3000 };
        for _ in 0..iters { s.step().unwrap(); maxn = maxn.max(s.x().norm()); }
        let cx = maxn.max(1.0);
        let x0 = BlockVector::zeros(problem.primal_layout());
        let y0 = BlockVector::zeros(problem.dual_layout());
        let gap0 = pseudo_gap(&problem, &x0, &y0, cx);
        let gap = pseudo_gap(&problem, s.x(), s.y(), cx);
        println!("{name:8} iters {iters:5}  gap {:8.2} dB", 20.0 * (gap / gap0).log10());
    }
}
