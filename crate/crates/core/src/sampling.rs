//! Block-selection strategies producing nested sample plans.
//!
//! A plan carries the sampled sets `Ŝ(i) ⊂ S(i)` (primal) and
//! `V̂(i+1) ⊂ V(i+1)` (dual), subject to the nesting conditions
//!
//! ```text
//!   C⁻¹(V̂) ∩ C⁻¹(C(Ŝ)) = ∅,   S ⊇ Ŝ ∪ C⁻¹(V̂),   V ⊇ V̂ ∪ C(Ŝ),
//! ```
//!
//! with iteration-independent inclusion probabilities π̂, π, ν̂, ν. The
//! supersets are completed minimally (`S = Ŝ ∪ C⁻¹(V̂)`, `V = V̂ ∪ C(Ŝ)`),
//! which keeps the number of forced updates as small as possible.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::Connectivity;
use crate::step::WBounds;
use crate::{Error, Result, Scalar};

/// A set of block indices; `All`/`Empty` avoid materialising big sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockSet {
    All,
    Empty,
    /// sorted ascending
    Subset(Vec<usize>),
}

impl BlockSet {
    pub fn contains(&self, i: usize) -> bool {
        match self {
            BlockSet::All => true,
            BlockSet::Empty => false,
            BlockSet::Subset(v) => v.binary_search(&i).is_ok(),
        }
    }

    pub fn iter(&self, total: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        match self {
            BlockSet::All => Box::new(0..total),
            BlockSet::Empty => Box::new(std::iter::empty()),
            BlockSet::Subset(v) => Box::new(v.iter().copied()),
        }
    }

    pub fn len(&self, total: usize) -> usize {
        match self {
            BlockSet::All => total,
            BlockSet::Empty => 0,
            BlockSet::Subset(v) => v.len(),
        }
    }

    pub fn is_empty(&self, total: usize) -> bool {
        self.len(total) == 0
    }

    fn from_sorted(v: Vec<usize>, total: usize) -> Self {
        if v.is_empty() {
            BlockSet::Empty
        } else if v.len() == total {
            BlockSet::All
        } else {
            BlockSet::Subset(v)
        }
    }
}

/// Realised index sets of one iteration.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub s_hat: BlockSet,
    pub s: BlockSet,
    pub v_hat: BlockSet,
    pub v: BlockSet,
    pub m: usize,
    pub n: usize,
}

/// Declared inclusion probabilities (iteration independent).
#[derive(Clone, Debug)]
pub struct SamplerProbs<S> {
    pub pi_hat: Vec<S>,
    pub pi: Vec<S>,
    pub nu_hat: Vec<S>,
    pub nu: Vec<S>,
}

impl<S: Scalar> SamplerProbs<S> {
    /// `(min_j (π_j - π̂_j), argmin)`
    pub fn min_primal_margin(&self) -> (S, usize) {
        let mut best = S::infinity();
        let mut arg = 0;
        for (j, (&p, &ph)) in self.pi.iter().zip(&self.pi_hat).enumerate() {
            if p - ph < best {
                best = p - ph;
                arg = j;
            }
        }
        (best, arg)
    }

    pub fn min_dual_margin(&self) -> (S, usize) {
        let mut best = S::infinity();
        let mut arg = 0;
        for (l, (&p, &ph)) in self.nu.iter().zip(&self.nu_hat).enumerate() {
            if p - ph < best {
                best = p - ph;
                arg = l;
            }
        }
        (best, arg)
    }

    /// Expected fraction of blocks updated per iteration,
    /// `(Σ_j π_j + Σ_l ν_l)/(m + n)`.
    pub fn expected_update_fraction(&self) -> f64 {
        let s: f64 = self.pi.iter().map(|v| v.as_f64()).sum::<f64>()
            + self.nu.iter().map(|v| v.as_f64()).sum::<f64>();
        s / (self.pi.len() + self.nu.len()) as f64
    }
}

/// Checks the three nesting conditions of a plan against a connectivity.
pub fn validate_nesting(plan: &SamplePlan, conn: &Connectivity) -> bool {
    let s_hat: Vec<usize> = plan.s_hat.iter(plan.m).collect();
    let v_hat: Vec<usize> = plan.v_hat.iter(plan.n).collect();
    let c_s_hat = conn.c_of_set(&s_hat);
    let cinv_c_s_hat = conn.cinv_of_set(&c_s_hat);
    let cinv_v_hat = conn.cinv_of_set(&v_hat);
    // C⁻¹(V̂) ∩ C⁻¹(C(Ŝ)) = ∅
    for j in &cinv_v_hat {
        if cinv_c_s_hat.binary_search(j).is_ok() {
            return false;
        }
    }
    // S ⊇ Ŝ ∪ C⁻¹(V̂)
    for &j in s_hat.iter().chain(&cinv_v_hat) {
        if !plan.s.contains(j) {
            return false;
        }
    }
    // V ⊇ V̂ ∪ C(Ŝ)
    for &l in v_hat.iter().chain(&c_s_hat) {
        if !plan.v.contains(l) {
            return false;
        }
    }
    true
}

/// A block-selection strategy.
pub trait Sampler<S: Scalar>: Send {
    fn sample(&mut self, i: usize) -> SamplePlan;
    fn probs(&self) -> &SamplerProbs<S>;
    fn w_bounds(&self) -> WBounds<S>;
    /// a plan stream that never uses randomness
    fn is_deterministic(&self) -> bool {
        false
    }
    /// Algorithm-2 compatible: Ŝ = S, V̂ = ∅, V full
    fn is_full_dual(&self) -> bool;
}

/// `Ŝ = {1..m}`, `V̂ = ∅` every iteration; the only fully deterministic
/// pattern (up to mirroring).
pub struct DeterministicFull<S> {
    m: usize,
    n: usize,
    probs: SamplerProbs<S>,
}

impl<S: Scalar> DeterministicFull<S> {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            probs: SamplerProbs {
                pi_hat: vec![S::one(); m],
                pi: vec![S::one(); m],
                nu_hat: vec![S::zero(); n],
                nu: vec![S::one(); n],
            },
        }
    }
}

impl<S: Scalar> Sampler<S> for DeterministicFull<S> {
    fn sample(&mut self, _i: usize) -> SamplePlan {
        SamplePlan {
            s_hat: BlockSet::All,
            s: BlockSet::All,
            v_hat: BlockSet::Empty,
            v: BlockSet::All,
            m: self.m,
            n: self.n,
        }
    }
    fn probs(&self) -> &SamplerProbs<S> {
        &self.probs
    }
    fn w_bounds(&self) -> WBounds<S> {
        WBounds::One
    }
    fn is_deterministic(&self) -> bool {
        true
    }
    fn is_full_dual(&self) -> bool {
        true
    }
}

/// Independent inclusion of each primal block (full dual updates).
pub struct IndependentSampler<S> {
    m: usize,
    n: usize,
    probs: SamplerProbs<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> IndependentSampler<S> {
    pub fn new(probabilities: &[S], n: usize, seed: u64) -> Result<Self> {
        if probabilities
            .iter()
            .any(|&p| p <= S::zero() || p > S::one())
        {
            return Err(Error::Config(
                "inclusion probabilities must lie in (0,1]".into(),
            ));
        }
        Ok(Self {
            m: probabilities.len(),
            n,
            probs: SamplerProbs {
                pi_hat: probabilities.to_vec(),
                pi: probabilities.to_vec(),
                nu_hat: vec![S::zero(); n],
                nu: vec![S::one(); n],
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl<S: Scalar> Sampler<S> for IndependentSampler<S> {
    fn sample(&mut self, _i: usize) -> SamplePlan {
        let mut s = Vec::new();
        for j in 0..self.m {
            if S::f(self.rng.gen_range(0.0..1.0)) < self.probs.pi_hat[j] {
                s.push(j);
            }
        }
        let s = BlockSet::from_sorted(s, self.m);
        SamplePlan {
            s_hat: s.clone(),
            s,
            v_hat: BlockSet::Empty,
            v: BlockSet::All,
            m: self.m,
            n: self.n,
        }
    }
    fn probs(&self) -> &SamplerProbs<S> {
        &self.probs
    }
    fn w_bounds(&self) -> WBounds<S> {
        WBounds::PrimalOnly(self.probs.pi_hat.iter().map(|&p| S::one() / p).collect())
    }
    fn is_full_dual(&self) -> bool {
        true
    }
}

/// A uniformly random fixed-size subset of primal blocks (full dual).
pub struct FixedMSampler<S> {
    m: usize,
    n: usize,
    count: usize,
    probs: SamplerProbs<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> FixedMSampler<S> {
    pub fn new(m: usize, count: usize, n: usize, seed: u64) -> Result<Self> {
        if count == 0 || count > m {
            return Err(Error::Config(format!(
                "subset size {count} out of range 1..={m}"
            )));
        }
        let p = S::f(count as f64 / m as f64);
        Ok(Self {
            m,
            n,
            count,
            probs: SamplerProbs {
                pi_hat: vec![p; m],
                pi: vec![p; m],
                nu_hat: vec![S::zero(); n],
                nu: vec![S::one(); n],
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl<S: Scalar> Sampler<S> for FixedMSampler<S> {
    fn sample(&mut self, _i: usize) -> SamplePlan {
        let mut idx: Vec<usize> = (0..self.m).collect();
        idx.shuffle(&mut self.rng);
        let mut s: Vec<usize> = idx[..self.count].to_vec();
        s.sort_unstable();
        let s = BlockSet::from_sorted(s, self.m);
        SamplePlan {
            s_hat: s.clone(),
            s,
            v_hat: BlockSet::Empty,
            v: BlockSet::All,
            m: self.m,
            n: self.n,
        }
    }
    fn probs(&self) -> &SamplerProbs<S> {
        &self.probs
    }
    fn w_bounds(&self) -> WBounds<S> {
        WBounds::PrimalOnly(self.probs.pi_hat.iter().map(|&p| S::one() / p).collect())
    }
    fn is_full_dual(&self) -> bool {
        true
    }
}

/// Inner sampling rule used by the alternating sampler when a side is
/// active; must be enumerable to compose the completion probabilities.
#[derive(Clone, Debug)]
pub enum InnerRule {
    FixedCount { total: usize, count: usize },
    Independent { probabilities: Vec<f64> },
    Full { total: usize },
}

impl InnerRule {
    fn total(&self) -> usize {
        match self {
            InnerRule::FixedCount { total, .. } | InnerRule::Full { total } => *total,
            InnerRule::Independent { probabilities } => probabilities.len(),
        }
    }

    fn inclusion_prob(&self, i: usize) -> f64 {
        match self {
            InnerRule::FixedCount { total, count } => *count as f64 / *total as f64,
            InnerRule::Independent { probabilities } => probabilities[i],
            InnerRule::Full { .. } => 1.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self {
            InnerRule::FixedCount { total, count } => {
                let mut idx: Vec<usize> = (0..*total).collect();
                idx.shuffle(rng);
                let mut s = idx[..*count].to_vec();
                s.sort_unstable();
                s
            }
            InnerRule::Independent { probabilities } => {
                let mut s = Vec::new();
                for (i, &p) in probabilities.iter().enumerate() {
                    if rng.gen_range(0.0..1.0) < p {
                        s.push(i);
                    }
                }
                s
            }
            InnerRule::Full { total } => (0..*total).collect(),
        }
    }

    /// Enumerate all realisations with their probabilities.
    fn enumerate(&self) -> Vec<(Vec<usize>, f64)> {
        match self {
            InnerRule::Full { total } => vec![((0..*total).collect(), 1.0)],
            InnerRule::FixedCount { total, count } => {
                let mut out = Vec::new();
                let mut subset: Vec<usize> = Vec::new();
                fn rec(
                    start: usize,
                    total: usize,
                    count: usize,
                    subset: &mut Vec<usize>,
                    out: &mut Vec<Vec<usize>>,
                ) {
                    if subset.len() == count {
                        out.push(subset.clone());
                        return;
                    }
                    for i in start..total {
                        subset.push(i);
                        rec(i + 1, total, count, subset, out);
                        subset.pop();
                    }
                }
                let mut sets = Vec::new();
                rec(0, *total, *count, &mut subset, &mut sets);
                let p = 1.0 / sets.len() as f64;
                for s in sets {
                    out.push((s, p));
                }
                out
            }
            InnerRule::Independent { probabilities } => {
                let n = probabilities.len();
                assert!(
                    n <= 16,
                    "independent inner rule enumeration limited to 16 blocks"
                );
                let mut out = Vec::new();
                for mask in 0..(1usize << n) {
                    let mut p = 1.0;
                    let mut s = Vec::new();
                    for (i, &pi) in probabilities.iter().enumerate() {
                        if mask & (1 << i) != 0 {
                            p *= pi;
                            s.push(i);
                        } else {
                            p *= 1.0 - pi;
                        }
                    }
                    if p > 0.0 {
                        out.push((s, p));
                    }
                }
                out
            }
        }
    }
}

/// Randomly alternate between an x-y step (`V̂ = ∅`) and a y-x step
/// (`Ŝ = ∅`); supersets are the minimal completions, and the declared
/// π, ν come from enumerating the inner rules against the connectivity.
pub struct AlternatingSampler<S> {
    p_x: f64,
    inner_primal: InnerRule,
    inner_dual: InnerRule,
    conn: Connectivity,
    m: usize,
    n: usize,
    probs: SamplerProbs<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> AlternatingSampler<S> {
    pub fn new(
        p_x: f64,
        inner_primal: InnerRule,
        inner_dual: InnerRule,
        conn: &Connectivity,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0 < p_x && p_x < 1.0) {
            return Err(Error::Config("p_x must lie in (0,1)".into()));
        }
        let m = inner_primal.total();
        let n = inner_dual.total();
        // π̂_j = p_x π̃_j ; π_j = p_x π̃_j + (1-p_x) P[j ∈ C⁻¹(V̂) | V̂ ≠ ∅]
        let mut pi_hat = vec![0.0f64; m];
        let mut pi = vec![0.0f64; m];
        let mut nu_hat = vec![0.0f64; n];
        let mut nu = vec![0.0f64; n];
        for j in 0..m {
            pi_hat[j] = p_x * inner_primal.inclusion_prob(j);
            pi[j] = pi_hat[j];
        }
        for l in 0..n {
            nu_hat[l] = (1.0 - p_x) * inner_dual.inclusion_prob(l);
            nu[l] = nu_hat[l];
        }
        for (v_hat, p) in inner_dual.enumerate() {
            let forced = conn.cinv_of_set(&v_hat);
            for j in forced {
                pi[j] += (1.0 - p_x) * p;
            }
        }
        for (s_hat, p) in inner_primal.enumerate() {
            let forced = conn.c_of_set(&s_hat);
            for l in forced {
                nu[l] += p_x * p;
            }
        }
        let probs = SamplerProbs {
            pi_hat: pi_hat.iter().map(|&v| S::f(v)).collect(),
            pi: pi.iter().map(|&v| S::f(v)).collect(),
            nu_hat: nu_hat.iter().map(|&v| S::f(v)).collect(),
            nu: nu.iter().map(|&v| S::f(v)).collect(),
        };
        Ok(Self {
            p_x,
            inner_primal,
            inner_dual,
            conn: conn.clone(),
            m,
            n,
            probs,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl<S: Scalar> Sampler<S> for AlternatingSampler<S> {
    fn sample(&mut self, _i: usize) -> SamplePlan {
        let xy = self.rng.gen_range(0.0..1.0) < self.p_x;
        if xy {
            let s_hat = self.inner_primal.sample(&mut self.rng);
            let v = self.conn.c_of_set(&s_hat);
            SamplePlan {
                s: BlockSet::from_sorted(s_hat.clone(), self.m),
                s_hat: BlockSet::from_sorted(s_hat, self.m),
                v_hat: BlockSet::Empty,
                v: BlockSet::from_sorted(v, self.n),
                m: self.m,
                n: self.n,
            }
        } else {
            let v_hat = self.inner_dual.sample(&mut self.rng);
            let s = self.conn.cinv_of_set(&v_hat);
            SamplePlan {
                s_hat: BlockSet::Empty,
                s: BlockSet::from_sorted(s, self.m),
                v: BlockSet::from_sorted(v_hat.clone(), self.n),
                v_hat: BlockSet::from_sorted(v_hat, self.n),
                m: self.m,
                n: self.n,
            }
        }
    }
    fn probs(&self) -> &SamplerProbs<S> {
        &self.probs
    }
    fn w_bounds(&self) -> WBounds<S> {
        WBounds::MaxPrimalDual {
            primal: self.probs.pi_hat.iter().map(|&p| S::one() / p).collect(),
            dual: self.probs.nu_hat.iter().map(|&p| S::one() / p).collect(),
        }
    }
    fn is_full_dual(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockOp;
    use crate::ops::{Grid2D, Tgv2Operator};

    fn tgv_conn() -> Connectivity {
        let op = Tgv2Operator::<f64>::new(Grid2D::new(4, 4));
        op.connectivity().clone()
    }

    #[test]
    fn deterministic_full_nests_everywhere() {
        let conn = tgv_conn();
        let mut s = DeterministicFull::<f64>::new(2, 2);
        let plan = s.sample(0);
        assert!(validate_nesting(&plan, &conn));
        assert!(s.probs().pi_hat.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn independent_frequencies() {
        let probs = [0.3f64, 0.7];
        let mut s = IndependentSampler::new(&probs, 2, 99).unwrap();
        let trials = 20_000usize;
        let mut count = [0usize; 2];
        let mut both = 0usize;
        for i in 0..trials {
            let plan = s.sample(i);
            for j in 0..2 {
                if plan.s.contains(j) {
                    count[j] += 1;
                }
            }
            if plan.s.contains(0) && plan.s.contains(1) {
                both += 1;
            }
        }
        for j in 0..2 {
            let freq = count[j] as f64 / trials as f64;
            let sd = (probs[j] * (1.0 - probs[j]) / trials as f64).sqrt();
            assert!((freq - probs[j]).abs() <= 3.0 * sd, "block {j}: {freq}");
        }
        let pair = both as f64 / trials as f64;
        let want = probs[0] * probs[1];
        let sd = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((pair - want).abs() <= 3.5 * sd, "pairwise {pair} vs {want}");
        // π = 1 gives the full set always
        let mut s = IndependentSampler::<f64>::new(&[1.0, 1.0], 2, 7).unwrap();
        assert_eq!(s.sample(0).s, BlockSet::All);
    }

    #[test]
    fn fixed_count_properties() {
        let mut s = FixedMSampler::<f64>::new(5, 2, 1, 13).unwrap();
        let trials = 20_000usize;
        let mut count = vec![0usize; 5];
        for i in 0..trials {
            let plan = s.sample(i);
            assert_eq!(plan.s.len(5), 2);
            for j in 0..5 {
                if plan.s.contains(j) {
                    count[j] += 1;
                }
            }
        }
        let p = 2.0 / 5.0;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        for (j, &c) in count.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!((freq - p).abs() <= 3.5 * sd, "block {j}: {freq}");
        }
        // M = m degenerates to the full set
        let mut s = FixedMSampler::<f64>::new(3, 3, 1, 5).unwrap();
        assert_eq!(s.sample(0).s, BlockSet::All);
        assert!(FixedMSampler::<f64>::new(3, 0, 1, 5).is_err());
        assert!(FixedMSampler::<f64>::new(3, 4, 1, 5).is_err());
    }

    #[test]
    fn alternating_tgv2_probabilities() {
        // p_x = π̃ = ν̃ = 0.5 with M = 1 inner rules on the TGV² structure:
        // π̂ = 0.25; π = (0.5, 0.75); ν̂ = 0.25; ν = (0.75, 0.5)
        let conn = tgv_conn();
        let s = AlternatingSampler::<f64>::new(
            0.5,
            InnerRule::FixedCount { total: 2, count: 1 },
            InnerRule::FixedCount { total: 2, count: 1 },
            &conn,
            3,
        )
        .unwrap();
        let p = s.probs();
        assert!((p.pi_hat[0] - 0.25).abs() < 1e-15);
        assert!((p.pi_hat[1] - 0.25).abs() < 1e-15);
        assert!((p.pi[0] - 0.5).abs() < 1e-15);
        assert!((p.pi[1] - 0.75).abs() < 1e-15);
        assert!((p.nu_hat[0] - 0.25).abs() < 1e-15);
        assert!((p.nu[0] - 0.75).abs() < 1e-15);
        assert!((p.nu[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alternating_nesting_over_many_draws() {
        let conn = tgv_conn();
        let mut s = AlternatingSampler::<f64>::new(
            0.5,
            InnerRule::FixedCount { total: 2, count: 1 },
            InnerRule::FixedCount { total: 2, count: 1 },
            &conn,
            17,
        )
        .unwrap();
        let trials = 100_000usize;
        let mut counts = SamplerProbs::<f64> {
            pi_hat: vec![0.0; 2],
            pi: vec![0.0; 2],
            nu_hat: vec![0.0; 2],
            nu: vec![0.0; 2],
        };
        for i in 0..trials {
            let plan = s.sample(i);
            assert!(validate_nesting(&plan, &conn), "draw {i} failed nesting");
            for j in 0..2 {
                if plan.s_hat.contains(j) {
                    counts.pi_hat[j] += 1.0;
                }
                if plan.s.contains(j) {
                    counts.pi[j] += 1.0;
                }
                if plan.v_hat.contains(j) {
                    counts.nu_hat[j] += 1.0;
                }
                if plan.v.contains(j) {
                    counts.nu[j] += 1.0;
                }
            }
        }
        let declared = s.probs();
        let t = trials as f64;
        for j in 0..2 {
            for (emp, dec) in [
                (counts.pi_hat[j] / t, declared.pi_hat[j]),
                (counts.pi[j] / t, declared.pi[j]),
                (counts.nu_hat[j] / t, declared.nu_hat[j]),
                (counts.nu[j] / t, declared.nu[j]),
            ] {
                let sd = (dec * (1.0 - dec) / t).sqrt();
                assert!((emp - dec).abs() <= 4.0 * sd, "block {j}: {emp} vs {dec}");
            }
        }
        // p_x -> 1 limit: only x-y steps, so ν̂ ≡ 0
        let mut s = AlternatingSampler::<f64>::new(
            1.0 - 1e-12,
            InnerRule::FixedCount { total: 2, count: 1 },
            InnerRule::FixedCount { total: 2, count: 1 },
            &conn,
            4,
        )
        .unwrap();
        for i in 0..100 {
            assert_eq!(s.sample(i).v_hat, BlockSet::Empty);
        }
    }

    #[test]
    fn nesting_counterexample() {
        // TGV²: Ŝ = {1}, V̂ = {0}: C(Ŝ) = {0,1}, C⁻¹(C(Ŝ)) = {0,1},
        // C⁻¹({0}) = {0,1} — the intersection is nonempty, so this fails.
        let conn = tgv_conn();
        let plan = SamplePlan {
            s_hat: BlockSet::Subset(vec![1]),
            s: BlockSet::All,
            v_hat: BlockSet::Subset(vec![0]),
            v: BlockSet::All,
            m: 2,
            n: 2,
        };
        assert!(!validate_nesting(&plan, &conn));
        // empty V̂ restores validity
        let plan = SamplePlan {
            s_hat: BlockSet::Subset(vec![1]),
            s: BlockSet::All,
            v_hat: BlockSet::Empty,
            v: BlockSet::All,
            m: 2,
            n: 2,
        };
        assert!(validate_nesting(&plan, &conn));
    }

    #[test]
    fn seeded_determinism() {
        let conn = tgv_conn();
        let mk = || {
            AlternatingSampler::<f64>::new(
                0.5,
                InnerRule::FixedCount { total: 2, count: 1 },
                InnerRule::FixedCount { total: 2, count: 1 },
                &conn,
                123,
            )
            .unwrap()
        };
        let mut a = mk();
        let mut b = mk();
        for i in 0..500 {
            let pa = a.sample(i);
            let pb = b.sample(i);
            assert_eq!(pa.s_hat, pb.s_hat);
            assert_eq!(pa.v_hat, pb.v_hat);
        }
    }
}
