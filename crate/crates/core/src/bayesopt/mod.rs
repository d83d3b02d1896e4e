//! Gaussian-process surrogate optimization of continuous soft prompts.
//!
//! A zero-mean GP posterior scores candidate prompts, expected improvement
//! picks the next batch, and a frozen random projection lifts the
//! low-dimensional search vector into the oracle's input space when the two
//! differ. Scores are "higher is better": loss oracles are negated at this
//! boundary.

mod linalg;
mod normal;

pub use linalg::Cholesky;
pub use normal::{erf, norm_cdf, norm_pdf};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::{evaluate, CallBudget, Oracle, OracleInput};
use crate::rng::DetRng;
use crate::scalar::Real;
use crate::vector::ParamVector;

/// Covariance function selection.
#[derive(Clone)]
pub enum KernelKind<T> {
    /// `variance * exp(-||x-y||^2 / (2 lengthscale^2))`.
    SquaredExponential,
    /// Extension hook for externally supplied similarity (for example an
    /// instruction-coupled kernel). The callback must be pure.
    Hook(Arc<dyn Fn(&ParamVector<T>, &ParamVector<T>) -> T + Send + Sync>),
}

impl<T> std::fmt::Debug for KernelKind<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelKind::SquaredExponential => write!(f, "SquaredExponential"),
            KernelKind::Hook(_) => write!(f, "Hook(..)"),
        }
    }
}

impl<T> PartialEq for KernelKind<T> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (KernelKind::SquaredExponential, KernelKind::SquaredExponential) => true,
            (KernelKind::Hook(a), KernelKind::Hook(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig<T> {
    pub kind: KernelKind<T>,
    pub lengthscale: T,
    pub variance: T,
}

impl<T: Real> KernelConfig<T> {
    pub fn squared_exponential(lengthscale: T, variance: T) -> Result<Self> {
        if !(lengthscale > T::zero() && variance > T::zero()) {
            return Err(Error::InvalidArgument(
                "kernel lengthscale and variance must be > 0".into(),
            ));
        }
        Ok(KernelConfig {
            kind: KernelKind::SquaredExponential,
            lengthscale,
            variance,
        })
    }

    pub fn value(&self, x: &ParamVector<T>, y: &ParamVector<T>) -> Result<T> {
        match &self.kind {
            KernelKind::SquaredExponential => {
                let d2 = x.squared_distance(y)?;
                let two_l2 = T::two() * self.lengthscale * self.lengthscale;
                Ok(self.variance * (-d2 / two_l2).exp())
            }
            KernelKind::Hook(f) => Ok(f(x, y)),
        }
    }
}

/// GP training set plus its cached factorization. Updates produce a new
/// state, so concurrent clients can hold disjoint snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct GpState<T> {
    kernel: KernelConfig<T>,
    noise: T,
    train_x: Vec<ParamVector<T>>,
    train_y: Vec<T>,
    chol: Option<Cholesky<T>>,
    /// Cached `(K + noise^2 I)^-1 train_y`.
    weights: Vec<T>,
}

impl<T: Real> GpState<T> {
    /// Empty training set; the posterior is the prior.
    pub fn new(kernel: KernelConfig<T>, noise: T) -> Result<Self> {
        if !(noise >= T::zero()) {
            return Err(Error::InvalidArgument("gp noise must be >= 0".into()));
        }
        Ok(GpState {
            kernel,
            noise,
            train_x: Vec::new(),
            train_y: Vec::new(),
            chol: None,
            weights: Vec::new(),
        })
    }

    pub fn fit(
        kernel: KernelConfig<T>,
        noise: T,
        train_x: Vec<ParamVector<T>>,
        train_y: Vec<T>,
    ) -> Result<Self> {
        let mut gp = GpState::new(kernel, noise)?;
        gp.train_x = train_x;
        gp.train_y = train_y;
        gp.refit()?;
        Ok(gp)
    }

    /// New state with extra observations appended and the factorization
    /// rebuilt.
    pub fn with_added(&self, xs: Vec<ParamVector<T>>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                context: "gp observations",
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        let mut gp = self.clone();
        gp.train_x.extend(xs);
        gp.train_y.extend(ys);
        gp.refit()?;
        Ok(gp)
    }

    fn refit(&mut self) -> Result<()> {
        if let Some(x0) = self.train_x.first() {
            let dim = x0.dim();
            if let Some(bad) = self.train_x.iter().find(|x| x.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    context: "gp training input",
                    expected: dim,
                    actual: bad.dim(),
                });
            }
        }
        if self.train_x.is_empty() {
            self.chol = None;
            self.weights.clear();
            return Ok(());
        }
        let m = self.train_x.len();
        let mut gram = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let k = self.kernel.value(&self.train_x[i], &self.train_x[j])?;
                gram[(i, j)] = k;
                gram[(j, i)] = k;
            }
            gram[(i, i)] = gram[(i, i)] + self.noise * self.noise;
        }
        let chol = Cholesky::factor_with_jitter(&gram)?;
        self.weights = chol.solve(&self.train_y);
        self.chol = Some(chol);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn train_x(&self) -> &[ParamVector<T>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[T] {
        &self.train_y
    }

    pub fn noise(&self) -> T {
        self.noise
    }

    pub fn kernel(&self) -> &KernelConfig<T> {
        &self.kernel
    }

    /// Best observation so far (highest score, earliest index on ties).
    pub fn incumbent(&self) -> Option<(&ParamVector<T>, T)> {
        let mut best: Option<usize> = None;
        for (i, &y) in self.train_y.iter().enumerate() {
            if best.is_none_or(|b| y > self.train_y[b]) {
                best = Some(i);
            }
        }
        best.map(|i| (&self.train_x[i], self.train_y[i]))
    }

    /// Posterior mean and variance at a query point. An empty training set
    /// yields the prior `(0, k(q, q))`; variance is clamped to `>= 0`.
    pub fn posterior(&self, query: &ParamVector<T>) -> Result<(T, T)> {
        let prior_var = self.kernel.value(query, query)?;
        let Some(chol) = &self.chol else {
            return Ok((T::zero(), prior_var));
        };
        let m = self.train_x.len();
        let mut k_vec = Vec::with_capacity(m);
        for x in &self.train_x {
            k_vec.push(self.kernel.value(query, x)?);
        }
        let mut mean = T::zero();
        for (k, w) in k_vec.iter().zip(self.weights.iter()) {
            mean = mean + *k * *w;
        }
        let half_solve = chol.solve_lower(&k_vec);
        let mut explained = T::zero();
        for v in &half_solve {
            explained = explained + *v * *v;
        }
        let variance = prior_var - explained;
        Ok((mean, if variance > T::zero() { variance } else { T::zero() }))
    }
}

/// Closed-form expected improvement of a Gaussian belief `N(mu, sigma^2)`
/// over the incumbent score. Zero sigma degenerates to `max(0, mu -
/// incumbent)`.
pub fn expected_improvement<T: Real>(mu: T, sigma: T, incumbent: T) -> Result<T> {
    if !(sigma >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let gap = mu - incumbent;
    if sigma == T::zero() {
        return Ok(if gap > T::zero() { gap } else { T::zero() });
    }
    let z = gap / sigma;
    let ei = gap * norm_cdf(z) + sigma * norm_pdf(z);
    Ok(if ei > T::zero() { ei } else { T::zero() })
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> BoxBounds<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                context: "box bounds",
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidArgument("box bounds are empty".into()));
        }
        for (&l, &h) in lo.iter().zip(hi.iter()) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidArgument(format!(
                    "box bounds need finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(BoxBounds { lo, hi })
    }

    pub fn uniform(dim: usize, lo: T, hi: T) -> Result<Self> {
        BoxBounds::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample(&self, rng: &mut DetRng) -> ParamVector<T> {
        ParamVector::from_fn(self.dim(), |i| rng.uniform(self.lo[i], self.hi[i]))
    }

    fn clamp(&self, v: &ParamVector<T>) -> ParamVector<T> {
        ParamVector::from_fn(v.dim(), |i| {
            let x = v[i];
            if x < self.lo[i] {
                self.lo[i]
            } else if x > self.hi[i] {
                self.hi[i]
            } else {
                x
            }
        })
    }

    fn jitter(&self, v: &ParamVector<T>, rng: &mut DetRng) -> ParamVector<T> {
        let percent = T::from_f64_lossy(0.01);
        let moved = ParamVector::from_fn(v.dim(), |i| {
            let width = self.hi[i] - self.lo[i];
            v[i] + rng.uniform(-width * percent, width * percent)
        });
        self.clamp(&moved)
    }
}

/// Argmax of expected improvement over an explicit candidate list; ties go
/// to the lowest index. An empty training set makes EI constant, so the
/// first candidate wins.
pub fn propose_from_candidates<T: Real>(
    gp: &GpState<T>,
    candidates: &[ParamVector<T>],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates to propose".into()));
    }
    if gp.is_empty() {
        return Ok(0);
    }
    let incumbent = gp.incumbent().expect("nonempty training set").1;
    let mut best_idx = 0usize;
    let mut best_ei = T::neg_infinity();
    for (i, c) in candidates.iter().enumerate() {
        let (mu, var) = gp.posterior(c)?;
        let ei = expected_improvement(mu, var.sqrt(), incumbent)?;
        if ei > best_ei {
            best_ei = ei;
            best_idx = i;
        }
    }
    Ok(best_idx)
}

/// Propose the next query point: EI evaluated at `n_candidates` uniform
/// draws from the box plus the jittered best training point.
pub fn propose_next<T: Real>(
    gp: &GpState<T>,
    bounds: &BoxBounds<T>,
    n_candidates: usize,
    rng: &mut DetRng,
) -> Result<ParamVector<T>> {
    if n_candidates == 0 {
        return Err(Error::InvalidArgument("n_candidates must be >= 1".into()));
    }
    let mut candidates: Vec<ParamVector<T>> = (0..n_candidates).map(|_| bounds.sample(rng)).collect();
    if let Some((best_x, _)) = gp.incumbent() {
        candidates.push(bounds.jitter(best_x, rng));
    }
    let idx = propose_from_candidates(gp, &candidates)?;
    Ok(candidates.swap_remove(idx))
}

/// Frozen random linear lift from the `in_dim` search space to the
/// `out_dim` oracle space; entries are i.i.d. Uniform(-1, 1) and never
/// change after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    out_dim: usize,
    in_dim: usize,
    data: Matrix<T>,
}

impl<T: Real> ProjectionMatrix<T> {
    pub fn sample(out_dim: usize, in_dim: usize, rng: &mut DetRng) -> Result<Self> {
        if !(in_dim < out_dim) {
            return Err(Error::InvalidArgument(format!(
                "projection needs in_dim < out_dim, got {in_dim} -> {out_dim}"
            )));
        }
        let data = Matrix::from_fn(out_dim, in_dim, |_, _| rng.uniform(-T::one(), T::one()));
        Ok(ProjectionMatrix {
            out_dim,
            in_dim,
            data,
        })
    }

    /// Test fixture: `out_dim / in_dim` stacked identity blocks.
    pub fn stacked_identity(out_dim: usize, in_dim: usize) -> Result<Self> {
        if !(in_dim < out_dim) || out_dim % in_dim != 0 {
            return Err(Error::InvalidArgument(
                "stacked identity needs out_dim a multiple of in_dim".into(),
            ));
        }
        let data = Matrix::from_fn(out_dim, in_dim, |r, c| {
            if r % in_dim == c {
                T::one()
            } else {
                T::zero()
            }
        });
        Ok(ProjectionMatrix {
            out_dim,
            in_dim,
            data,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `A * theta`.
    pub fn project(&self, theta: &ParamVector<T>) -> Result<ParamVector<T>> {
        if theta.dim() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "projection input",
                expected: self.in_dim,
                actual: theta.dim(),
            });
        }
        Ok(ParamVector::from_fn(self.out_dim, |r| {
            let row = self.data.row(r);
            let mut acc = T::zero();
            for (a, t) in row.iter().zip(theta.iter()) {
                acc = acc + *a * *t;
            }
            acc
        }))
    }

    /// Bit-level fingerprint used to assert the matrix stays frozen.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.data.as_slice() {
            h ^= v.to_f64_lossy().to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}

/// Knobs for one local BO round.
#[derive(Debug, Clone, PartialEq)]
pub struct BoRoundSettings<T> {
    pub batch_size: usize,
    pub n_candidates: usize,
    pub projection: Option<ProjectionMatrix<T>>,
}

/// One surrogate round: propose `batch_size` points by EI, score each via
/// the oracle (negated into "higher is better"), append all observations,
/// and report the running incumbent. Fails before any oracle call if the
/// batch does not fit in the budget.
pub fn bo_round<T: Real>(
    gp: &GpState<T>,
    oracle: &dyn Oracle<T>,
    budget: &CallBudget,
    bounds: &BoxBounds<T>,
    settings: &BoRoundSettings<T>,
    rng: &mut DetRng,
) -> Result<(GpState<T>, ParamVector<T>, T)> {
    if settings.batch_size == 0 {
        return Err(Error::InvalidArgument("bo batch_size must be >= 1".into()));
    }
    let needed = settings.batch_size as u64;
    if budget.used() + needed > budget.limit() {
        return Err(Error::BudgetExhausted {
            used: budget.used(),
            limit: budget.limit(),
            requested: needed,
        });
    }
    let mut proposals = Vec::with_capacity(settings.batch_size);
    for _ in 0..settings.batch_size {
        proposals.push(propose_next(gp, bounds, settings.n_candidates, rng)?);
    }
    let mut scores = Vec::with_capacity(proposals.len());
    for theta in &proposals {
        let lifted = match &settings.projection {
            Some(a) => a.project(theta)?,
            None => theta.clone(),
        };
        let loss = evaluate(oracle, &OracleInput::continuous(lifted)?, budget)?;
        scores.push(-loss.value());
    }
    let gp = gp.with_added(proposals, scores)?;
    let (best_x, best_y) = gp.incumbent().expect("nonempty after appending batch");
    Ok((gp.clone(), best_x.clone(), best_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{SyntheticOracle, SyntheticSpec};

    fn se_kernel(l: f64, v: f64) -> KernelConfig<f64> {
        KernelConfig::squared_exponential(l, v).unwrap()
    }

    fn vec1(x: f64) -> ParamVector<f64> {
        ParamVector::from_vec(vec![x])
    }

    #[test]
    fn empty_gp_returns_the_prior() {
        let gp = GpState::new(se_kernel(1.0, 1.0), 0.0).unwrap();
        let (mu, var) = gp.posterior(&vec1(0.3)).unwrap();
        assert_eq!(mu, 0.0);
        assert!((var - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noiseless_gp_interpolates_a_single_point() {
        let gp = GpState::fit(se_kernel(1.0, 1.0), 0.0, vec![vec1(0.4)], vec![2.0]).unwrap();
        let (mu, var) = gp.posterior(&vec1(0.4)).unwrap();
        assert!((mu - 2.0).abs() < 1e-8);
        assert!(var.abs() < 1e-8);
    }

    #[test]
    fn two_point_posterior_matches_direct_2x2_solve() {
        let (l, v, eta) = (1.0, 1.0, 0.1);
        let x1 = vec1(-0.5);
        let x2 = vec1(0.7);
        let (y1, y2) = (0.9, -0.3);
        let gp = GpState::fit(
            se_kernel(l, v),
            eta,
            vec![x1.clone(), x2.clone()],
            vec![y1, y2],
        )
        .unwrap();
        let query = vec1(0.2);
        let (mu, var) = gp.posterior(&query).unwrap();

        // Independent direct solve of the 2x2 system.
        let k = |a: &ParamVector<f64>, b: &ParamVector<f64>| {
            v * (-(a[0] - b[0]).powi(2) / (2.0 * l * l)).exp()
        };
        let (k11, k12, k22) = (k(&x1, &x1) + eta * eta, k(&x1, &x2), k(&x2, &x2) + eta * eta);
        let det = k11 * k22 - k12 * k12;
        let (i11, i12, i22) = (k22 / det, -k12 / det, k11 / det);
        let (kq1, kq2) = (k(&query, &x1), k(&query, &x2));
        let w1 = i11 * y1 + i12 * y2;
        let w2 = i12 * y1 + i22 * y2;
        let mu_direct = kq1 * w1 + kq2 * w2;
        let var_direct = k(&query, &query)
            - (kq1 * (i11 * kq1 + i12 * kq2) + kq2 * (i12 * kq1 + i22 * kq2));
        assert!((mu - mu_direct).abs() < 1e-8, "{mu} vs {mu_direct}");
        assert!((var - var_direct).abs() < 1e-8, "{var} vs {var_direct}");
    }

    #[test]
    fn duplicated_points_survive_via_jitter() {
        let gp = GpState::fit(
            se_kernel(1.0, 1.0),
            0.0,
            vec![vec1(0.1), vec1(0.1)],
            vec![1.0, 1.0],
        );
        assert!(gp.is_ok());
    }

    #[test]
    fn expected_improvement_boundaries() {
        assert_eq!(expected_improvement(0.5f64, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(2.0f64, 0.0, 1.0).unwrap(), 1.0);
        let ei = expected_improvement(1.0f64, 1.0, 1.0).unwrap();
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-6);
        assert!(expected_improvement(1.0f64, -0.1, 1.0).is_err());
    }

    #[test]
    fn expected_improvement_nondecreasing_in_sigma() {
        for &mu in &[-1.0f64, 0.0, 0.4, 2.0] {
            let mut last = 0.0;
            for step in 0..50 {
                let sigma = step as f64 * 0.1;
                let ei = expected_improvement(mu, sigma, 0.5).unwrap();
                assert!(ei + 1e-9 >= last, "mu {mu} sigma {sigma}");
                assert!(ei >= 0.0);
                last = ei;
            }
        }
    }

    #[test]
    fn empty_gp_proposal_takes_candidate_zero() {
        let gp = GpState::new(se_kernel(1.0, 1.0), 0.0).unwrap();
        let candidates: Vec<ParamVector<f64>> =
            (0..5).map(|i| vec1(i as f64 * 0.1)).collect();
        assert_eq!(propose_from_candidates(&gp, &candidates).unwrap(), 0);
    }

    #[test]
    fn proposal_is_the_exhaustive_ei_argmax() {
        let gp = GpState::fit(se_kernel(0.5, 1.0), 0.05, vec![vec1(0.0)], vec![1.0]).unwrap();
        let mut rng = DetRng::seed(31);
        let candidates: Vec<ParamVector<f64>> = (0..1000)
            .map(|_| vec1(rng.uniform(-1.0, 1.0)))
            .collect();
        let idx = propose_from_candidates(&gp, &candidates).unwrap();
        let incumbent = gp.incumbent().unwrap().1;
        let ei_of = |c: &ParamVector<f64>| {
            let (mu, var) = gp.posterior(c).unwrap();
            expected_improvement(mu, var.sqrt(), incumbent).unwrap()
        };
        let chosen = ei_of(&candidates[idx]);
        for c in &candidates {
            assert!(chosen >= ei_of(c) - 1e-15);
        }
    }

    #[test]
    fn proposals_are_deterministic_under_a_seed() {
        let gp = GpState::fit(se_kernel(0.5, 1.0), 0.05, vec![vec1(0.3)], vec![0.2]).unwrap();
        let bounds = BoxBounds::uniform(1, -1.0, 1.0).unwrap();
        let a = propose_next(&gp, &bounds, 64, &mut DetRng::seed(5)).unwrap();
        let b = propose_next(&gp, &bounds, 64, &mut DetRng::seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projection_examples() {
        let a: ProjectionMatrix<f64> = ProjectionMatrix::stacked_identity(4, 2).unwrap();
        let out = a.project(&ParamVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0, 1.0, 2.0]);

        let mut rng = DetRng::seed(77);
        let r: ProjectionMatrix<f64> = ProjectionMatrix::sample(6, 2, &mut rng).unwrap();
        let zero = r.project(&ParamVector::zeros(2)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        // Naive double-loop oracle.
        let theta = ParamVector::from_vec(vec![0.3, -1.2]);
        let lifted = r.project(&theta).unwrap();
        for row in 0..6 {
            let mut acc = 0.0;
            for col in 0..2 {
                acc += r.data[(row, col)] * theta[col];
            }
            assert!((lifted[row] - acc).abs() < 1e-12);
        }

        assert!(ProjectionMatrix::<f64>::sample(2, 4, &mut rng).is_err());
    }

    #[test]
    fn projection_fingerprint_is_stable() {
        let mut rng = DetRng::seed(123);
        let a: ProjectionMatrix<f64> = ProjectionMatrix::sample(8, 2, &mut rng).unwrap();
        let fp = a.fingerprint();
        let theta = ParamVector::from_vec(vec![0.5, -0.5]);
        let first = a.project(&theta).unwrap();
        for _ in 0..10 {
            assert_eq!(a.project(&theta).unwrap(), first);
            assert_eq!(a.fingerprint(), fp);
        }
    }

    #[test]
    fn bo_round_grows_the_training_set_and_respects_budget() {
        let oracle: SyntheticOracle<f64> = SyntheticOracle::from_spec(SyntheticSpec::Quadratic {
            center: ParamVector::from_vec(vec![0.3]),
            curvature: 1.0,
        });
        let bounds = BoxBounds::uniform(1, -1.0, 1.0).unwrap();
        let settings = BoRoundSettings {
            batch_size: 1,
            n_candidates: 32,
            projection: None,
        };
        let mut rng = DetRng::seed(2);
        let mut gp = GpState::new(se_kernel(0.3, 1.0), 0.01).unwrap();
        let budget = CallBudget::new(100);
        let mut last_best = f64::NEG_INFINITY;
        for round in 1..=10 {
            let (next, _theta, best) =
                bo_round(&gp, &oracle, &budget, &bounds, &settings, &mut rng).unwrap();
            assert_eq!(next.len(), round);
            assert!(best >= last_best, "incumbent must be monotone");
            last_best = best;
            gp = next;
        }
        assert_eq!(budget.used(), 10);
    }

    #[test]
    fn bo_round_checks_budget_before_calling() {
        let oracle: SyntheticOracle<f64> = SyntheticOracle::from_spec(SyntheticSpec::Quadratic {
            center: ParamVector::zeros(1),
            curvature: 1.0,
        });
        let bounds = BoxBounds::uniform(1, -1.0, 1.0).unwrap();
        let settings = BoRoundSettings {
            batch_size: 10,
            n_candidates: 8,
            projection: None,
        };
        let budget = CallBudget::new(5);
        let gp = GpState::new(se_kernel(1.0, 1.0), 0.0).unwrap();
        let err = bo_round(&gp, &oracle, &budget, &bounds, &settings, &mut DetRng::seed(1))
            .unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { requested: 10, .. }));
        assert_eq!(budget.used(), 0);
    }

    #[test]
    fn posterior_consistency_at_noiseless_training_points() {
        let mut rng = DetRng::seed(55);
        let xs: Vec<ParamVector<f64>> = (0..6)
            .map(|_| ParamVector::from_fn(2, |_| rng.uniform(-2.0, 2.0)))
            .collect();
        let ys: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let gp = GpState::fit(se_kernel(1.0, 1.0), 0.0, xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(ys.iter()) {
            let (mu, var) = gp.posterior(x).unwrap();
            assert!((mu - y).abs() < 1e-8);
            assert!(var <= 1e-8);
        }
    }

    #[test]
    fn hook_kernel_is_honored() {
        let hook: KernelConfig<f64> = KernelConfig {
            kind: KernelKind::Hook(Arc::new(
                |x: &ParamVector<f64>, y: &ParamVector<f64>| {
                    if x == y {
                        2.0
                    } else {
                        0.0
                    }
                },
            )),
            lengthscale: 1.0,
            variance: 1.0,
        };
        let gp = GpState::fit(hook, 0.0, vec![vec1(0.0)], vec![3.0]).unwrap();
        let (mu, var) = gp.posterior(&vec1(0.0)).unwrap();
        assert!((mu - 3.0).abs() < 1e-9);
        assert!(var.abs() < 1e-9);
        let (mu_far, var_far) = gp.posterior(&vec1(9.0)).unwrap();
        assert_eq!(mu_far, 0.0);
        assert!((var_far - 2.0).abs() < 1e-9);
    }
}
