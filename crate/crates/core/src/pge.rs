//! Policy-gradient optimization of discrete prompts.
//!
//! A prompt of length `n` is sampled position-by-position from independent
//! categorical distributions over a vocabulary of `N` tokens. The policy
//! matrix itself is the tunable parameter: sampled prompts are scored by the
//! black-box oracle and the `+1/theta` (sampled) / `-1/theta` (unsampled)
//! quasi-gradient moves probability mass toward low-loss tokens. After each
//! update every row is projected back onto the probability simplex with a
//! small floor that keeps the reciprocals bounded.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::oracle::{Oracle, OracleInput};
use crate::rng::DetRng;
use crate::scalar::Real;

/// Enumeration guard for [`expected_loss_exact`].
pub const MAX_EXACT_STATES: u128 = 1_000_000;

/// Row-stochastic `n x N` matrix parameterizing one categorical distribution
/// per prompt position.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPromptPolicy<T> {
    probs: Matrix<T>,
    floor: T,
}

impl<T: Real> CategoricalPromptPolicy<T> {
    /// Validates row sums (to 1 within tolerance) and the entry range
    /// `[floor, 1]`.
    pub fn new(probs: Matrix<T>, floor: T) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(Error::InvalidPolicy("policy matrix is empty".into()));
        }
        if !(floor >= T::zero()) {
            return Err(Error::InvalidPolicy("floor must be >= 0".into()));
        }
        let n_tokens = T::from_usize_lossy(probs.cols());
        if floor * n_tokens >= T::one() {
            return Err(Error::InvalidPolicy(format!(
                "floor {} too large for vocabulary of {}",
                floor,
                probs.cols()
            )));
        }
        let tol = row_sum_tolerance::<T>(probs.cols());
        for r in 0..probs.rows() {
            let mut sum = T::zero();
            for &p in probs.row(r) {
                if !p.is_finite() || p < floor || p > T::one() {
                    return Err(Error::InvalidPolicy(format!(
                        "row {r} entry {p} outside [{floor}, 1]"
                    )));
                }
                sum = sum + p;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidPolicy(format!("row {r} sums to {sum}")));
            }
        }
        Ok(CategoricalPromptPolicy { probs, floor })
    }

    /// Uniform policy over `vocab_size` tokens at each of `prompt_len`
    /// positions.
    pub fn uniform(prompt_len: usize, vocab_size: usize, floor: T) -> Result<Self> {
        let p = T::one() / T::from_usize_lossy(vocab_size);
        CategoricalPromptPolicy::new(Matrix::from_fn(prompt_len, vocab_size, |_, _| p), floor)
    }

    pub fn prompt_len(&self) -> usize {
        self.probs.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.cols()
    }

    pub fn floor(&self) -> T {
        self.floor
    }

    pub fn probs(&self) -> &Matrix<T> {
        &self.probs
    }

    pub fn row(&self, position: usize) -> &[T] {
        self.probs.row(position)
    }

    /// Most likely token at each position (lowest index wins ties).
    pub fn argmax_prompt(&self) -> PromptSample {
        let tokens = (0..self.prompt_len())
            .map(|i| {
                let row = self.row(i);
                let mut best = 0usize;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best as u32
            })
            .collect();
        PromptSample { tokens }
    }
}

/// A sampled discrete prompt: one token index per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSample {
    pub tokens: Vec<u32>,
}

impl PromptSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn check_valid_for<T: Real>(&self, policy: &CategoricalPromptPolicy<T>) -> Result<()> {
        if self.len() != policy.prompt_len() {
            return Err(Error::DimensionMismatch {
                context: "prompt sample",
                expected: policy.prompt_len(),
                actual: self.len(),
            });
        }
        if let Some(&bad) = self
            .tokens
            .iter()
            .find(|&&t| t as usize >= policy.vocab_size())
        {
            return Err(Error::TokenOutOfRange {
                token: bad,
                vocab: policy.vocab_size() as u32,
            });
        }
        Ok(())
    }
}

fn row_sum_tolerance<T: Real>(vocab_size: usize) -> T {
    let fp = T::epsilon() * T::from_usize_lossy(vocab_size * 8);
    let spec = T::from_f64_lossy(1e-9);
    if fp > spec {
        fp
    } else {
        spec
    }
}

/// Draw one prompt, each position independently from its categorical row.
pub fn sample_prompt<T: Real>(
    policy: &CategoricalPromptPolicy<T>,
    rng: &mut DetRng,
) -> PromptSample {
    let tokens = (0..policy.prompt_len())
        .map(|i| rng.categorical(policy.row(i)) as u32)
        .collect();
    PromptSample { tokens }
}

/// Quasi-gradient of the sampled prompt's log-probability w.r.t. the policy:
/// entry `(i, j)` is `1/probs[i,j]` where `j` was sampled at position `i` and
/// `-1/probs[i,j]` elsewhere. The policy floor keeps every entry finite.
pub fn log_prob_grad<T: Real>(
    policy: &CategoricalPromptPolicy<T>,
    prompt: &PromptSample,
) -> Result<Matrix<T>> {
    prompt.check_valid_for(policy)?;
    let mut grad = Matrix::zeros(policy.prompt_len(), policy.vocab_size());
    for i in 0..policy.prompt_len() {
        let sampled = prompt.tokens[i] as usize;
        let row = policy.row(i);
        let out = grad.row_mut(i);
        for (j, &p) in row.iter().enumerate() {
            let r = T::one() / p;
            out[j] = if j == sampled { r } else { -r };
        }
    }
    Ok(grad)
}

/// One policy update from a batch of `(prompt, loss)` pairs.
///
/// Plain mode weights each prompt's quasi-gradient by its raw loss; the
/// variance-reduced mode centers losses at the batch mean and rescales by
/// `1/(I-1)`, which preserves the covariance structure while cancelling the
/// loss level. The updated matrix is projected row-wise back onto the
/// floored simplex.
pub fn pge_step<T: Real>(
    policy: &CategoricalPromptPolicy<T>,
    samples: &[(PromptSample, T)],
    lr: T,
    variance_reduced: bool,
) -> Result<CategoricalPromptPolicy<T>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("pge_step needs samples".into()));
    }
    if variance_reduced && samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "variance-reduced pge_step needs at least 2 samples".into(),
        ));
    }
    for (prompt, _) in samples {
        prompt.check_valid_for(policy)?;
    }
    let count = T::from_usize_lossy(samples.len());
    let mean_loss = if variance_reduced {
        let mut acc = T::zero();
        for (_, loss) in samples {
            acc = acc + *loss;
        }
        acc / count
    } else {
        T::zero()
    };
    let denom = if variance_reduced {
        count - T::one()
    } else {
        count
    };

    let mut grad = Matrix::zeros(policy.prompt_len(), policy.vocab_size());
    for (prompt, loss) in samples {
        let weight = (*loss - mean_loss) / denom;
        for i in 0..policy.prompt_len() {
            let sampled = prompt.tokens[i] as usize;
            let row = policy.row(i);
            let out = grad.row_mut(i);
            for (j, &p) in row.iter().enumerate() {
                let contrib = weight / p;
                out[j] = if j == sampled {
                    out[j] + contrib
                } else {
                    out[j] - contrib
                };
            }
        }
    }

    let mut updated = Matrix::zeros(policy.prompt_len(), policy.vocab_size());
    for i in 0..policy.prompt_len() {
        let row: Vec<T> = policy
            .row(i)
            .iter()
            .zip(grad.row(i).iter())
            .map(|(&p, &g)| p - lr * g)
            .collect();
        let projected = project_simplex_floored(&row, policy.floor)?;
        updated.row_mut(i).copy_from_slice(&projected);
    }
    CategoricalPromptPolicy::new(updated, policy.floor)
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex<T: Real>(v: &[T]) -> Vec<T> {
    // Already feasible: return the input untouched so projection is exactly
    // idempotent.
    let mut sum = T::zero();
    let mut feasible = true;
    for &x in v {
        if !(x >= T::zero()) {
            feasible = false;
            break;
        }
        sum = sum + x;
    }
    if feasible && (sum - T::one()).abs() <= row_sum_tolerance::<T>(v.len()) {
        return v.to_vec();
    }

    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = T::zero();
    let mut threshold = T::zero();
    let mut rho = 0usize;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative = cumulative + u;
        let candidate = (cumulative - T::one()) / T::from_usize_lossy(k + 1);
        if u - candidate > T::zero() {
            rho = k + 1;
            threshold = candidate;
        }
    }
    debug_assert!(rho > 0);
    v.iter()
        .map(|&x| {
            let shifted = x - threshold;
            if shifted > T::zero() {
                shifted
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Projection onto `{x : sum x = 1, x >= floor}`, the simplex shrunk by the
/// floor. Translation plus uniform scaling reduce it to the plain simplex,
/// so this is still the exact Euclidean projection and every output entry is
/// `>= floor` by construction.
pub fn project_simplex_floored<T: Real>(v: &[T], floor: T) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "simplex projection",
        });
    }
    if floor == T::zero() {
        return Ok(project_simplex(v));
    }
    let scale = T::one() - floor * T::from_usize_lossy(v.len());
    if !(scale > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "floor {} infeasible for dimension {}",
            floor,
            v.len()
        )));
    }
    let mut feasible = true;
    let mut sum = T::zero();
    for &x in v {
        if !(x >= floor) {
            feasible = false;
            break;
        }
        sum = sum + x;
    }
    if feasible && (sum - T::one()).abs() <= row_sum_tolerance::<T>(v.len()) {
        return Ok(v.to_vec());
    }
    let shifted: Vec<T> = v.iter().map(|&x| (x - floor) / scale).collect();
    let projected = project_simplex(&shifted);
    Ok(projected.into_iter().map(|p| floor + scale * p).collect())
}

/// Exact expected loss under the policy by enumerating all `N^n` prompts.
/// Test-scale only: fails once the state space exceeds [`MAX_EXACT_STATES`].
pub fn expected_loss_exact<T: Real>(
    policy: &CategoricalPromptPolicy<T>,
    oracle: &dyn Oracle<T>,
) -> Result<T> {
    let n = policy.prompt_len();
    let vocab = policy.vocab_size();
    let mut size: u128 = 1;
    for _ in 0..n {
        size = size.saturating_mul(vocab as u128);
        if size > MAX_EXACT_STATES {
            return Err(Error::StateSpaceTooLarge {
                size,
                limit: MAX_EXACT_STATES,
            });
        }
    }
    let mut tokens = vec![0u32; n];
    let mut acc = T::zero();
    loop {
        let mut probability = T::one();
        for (i, &t) in tokens.iter().enumerate() {
            probability = probability * policy.row(i)[t as usize];
        }
        let loss = oracle.loss(&OracleInput::Discrete {
            tokens: tokens.clone(),
            sample_id: 0,
        })?;
        acc = acc + probability * loss;

        // Odometer increment over token indices.
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(acc);
            }
            pos -= 1;
            tokens[pos] += 1;
            if (tokens[pos] as usize) < vocab {
                break;
            }
            tokens[pos] = 0;
        }
    }
}
