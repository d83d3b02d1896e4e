//! Black-box loss interface.
//!
//! A loss oracle stands in for the frozen pre-trained model behind an API:
//! callers see only loss values, never gradients. This module defines the
//! oracle trait and inputs, prompt-input coupling, call-budget accounting,
//! and deterministic synthetic oracles for desk-scale runs; `remote` adds an
//! HTTP client speaking the wire protocol.

mod remote;
mod synthetic;

pub use remote::{
    remote_evaluate, remote_loss, RemoteOracle, RemoteOracleClient, WireInput, WireRequest,
    WireResponse, TIMEOUT_ENV,
};
pub use synthetic::{CoupledOracle, SyntheticOracle, SyntheticSpec};

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vector::ParamVector;

/// Input to a loss oracle: either a continuous parameter/prompt vector or a
/// discrete token sequence tagged with a sample id.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleInput<T> {
    Continuous(ParamVector<T>),
    Discrete { tokens: Vec<u32>, sample_id: u64 },
}

impl<T: Real> OracleInput<T> {
    pub fn continuous(v: ParamVector<T>) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "oracle input",
            });
        }
        Ok(OracleInput::Continuous(v))
    }

    pub fn discrete(tokens: Vec<u32>, sample_id: u64) -> Self {
        OracleInput::Discrete { tokens, sample_id }
    }
}

/// Task loss; lower is better. Maximization objectives negate at the
/// optimizer boundary so every oracle reports one sign convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T>(T);

impl<T: Real> LossValue<T> {
    pub fn new(value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "loss value",
            });
        }
        Ok(LossValue(value))
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Hard cap on oracle evaluations. `used` never exceeds `limit`; updates are
/// atomic so an oracle shared across clients still counts exactly.
#[derive(Debug)]
pub struct CallBudget {
    limit: u64,
    used: AtomicU64,
}

impl CallBudget {
    pub fn new(limit: u64) -> Self {
        CallBudget {
            limit,
            used: AtomicU64::new(0),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.used()
    }

    /// Reserve `n` calls, failing without any change if they do not fit.
    pub fn try_consume(&self, n: u64) -> Result<()> {
        let mut current = self.used.load(Ordering::SeqCst);
        loop {
            if current + n > self.limit {
                return Err(Error::BudgetExhausted {
                    used: current,
                    limit: self.limit,
                    requested: n,
                });
            }
            match self.used.compare_exchange(
                current,
                current + n,
                Ordering::SeqCst,
                Ordering::SeqCst,
            ) {
                Ok(_) => return Ok(()),
                Err(actual) => current = actual,
            }
        }
    }
}

impl Clone for CallBudget {
    fn clone(&self) -> Self {
        CallBudget {
            limit: self.limit,
            used: AtomicU64::new(self.used()),
        }
    }
}

impl PartialEq for CallBudget {
    fn eq(&self, other: &Self) -> bool {
        self.limit == other.limit && self.used() == other.used()
    }
}

/// How a prompt vector is combined with a raw sample vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// Prompt ignored; sample passes through.
    Identity,
    /// `clip(sample + epsilon * prompt, clip_lo, clip_hi)`.
    AdditiveClip,
    /// `sample + epsilon * prompt`, unclipped.
    Affine,
}

/// Prompt-coupling configuration: `epsilon` scales the prompt's influence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig<T> {
    pub kind: GeneratorKind,
    pub epsilon: T,
    pub clip_lo: T,
    pub clip_hi: T,
}

impl<T: Real> GeneratorConfig<T> {
    pub fn new(kind: GeneratorKind, epsilon: T, clip_lo: T, clip_hi: T) -> Result<Self> {
        if !(epsilon >= T::zero() && epsilon <= T::one()) {
            return Err(Error::InvalidArgument(format!(
                "generator epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        if !(clip_lo < clip_hi) {
            return Err(Error::InvalidArgument(format!(
                "generator clip range must satisfy lo < hi, got [{clip_lo}, {clip_hi}]"
            )));
        }
        Ok(GeneratorConfig {
            kind,
            epsilon,
            clip_lo,
            clip_hi,
        })
    }

    pub fn identity() -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Identity,
            epsilon: T::zero(),
            clip_lo: T::zero(),
            clip_hi: T::one(),
        }
    }
}

/// Couple a prompt with a raw sample vector.
pub fn couple<T: Real>(
    generator: &GeneratorConfig<T>,
    prompt: &ParamVector<T>,
    sample: &ParamVector<T>,
) -> Result<ParamVector<T>> {
    match generator.kind {
        GeneratorKind::Identity => Ok(sample.clone()),
        GeneratorKind::AdditiveClip => {
            sample.check_same_dim(prompt, "prompt coupling")?;
            Ok(sample
                .zip_map(prompt, |x, p| x + generator.epsilon * p)
                .clamp_elementwise(generator.clip_lo, generator.clip_hi))
        }
        GeneratorKind::Affine => {
            sample.check_same_dim(prompt, "prompt coupling")?;
            Ok(sample.zip_map(prompt, |x, p| x + generator.epsilon * p))
        }
    }
}

/// A black-box loss function. Implementations must be pure: the same input
/// always yields the same loss.
pub trait Oracle<T: Real>: Send + Sync {
    fn loss(&self, input: &OracleInput<T>) -> Result<T>;

    /// Oracles that cannot service concurrent callers set this; the
    /// federation loop then runs clients sequentially.
    fn serial_only(&self) -> bool {
        false
    }
}

/// Evaluate an oracle under budget. Consumes exactly one call per loss.
pub fn evaluate<T: Real>(
    oracle: &dyn Oracle<T>,
    input: &OracleInput<T>,
    budget: &CallBudget,
) -> Result<LossValue<T>> {
    budget.try_consume(1)?;
    LossValue::new(oracle.loss(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen_clip(epsilon: f64) -> GeneratorConfig<f64> {
        GeneratorConfig::new(GeneratorKind::AdditiveClip, epsilon, 0.0, 1.0).unwrap()
    }

    #[test]
    fn couple_zero_epsilon_is_identity_for_all_kinds() {
        let prompt = ParamVector::from_vec(vec![0.9, -0.9, 3.0]);
        let sample = ParamVector::from_vec(vec![0.1, 0.2, 0.7]);
        for kind in [
            GeneratorKind::Identity,
            GeneratorKind::AdditiveClip,
            GeneratorKind::Affine,
        ] {
            let g = GeneratorConfig::new(kind, 0.0, 0.0, 1.0).unwrap();
            assert_eq!(couple(&g, &prompt, &sample).unwrap(), sample);
        }
    }

    #[test]
    fn couple_clips_the_overshoot() {
        // 0.8 + 1.0 * 0.5 = 1.3, clipped to 1.0.
        let prompt = ParamVector::from_vec(vec![0.5]);
        let sample = ParamVector::from_vec(vec![0.8]);
        let out = couple(&gen_clip(1.0), &prompt, &sample).unwrap();
        assert_eq!(out.as_slice(), &[1.0]);
    }

    #[test]
    fn couple_rejects_mismatched_dims() {
        let prompt = ParamVector::from_vec(vec![0.5, 0.5]);
        let sample = ParamVector::from_vec(vec![0.8]);
        assert!(matches!(
            couple(&gen_clip(1.0), &prompt, &sample),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn affine_does_not_clip() {
        let g = GeneratorConfig::new(GeneratorKind::Affine, 1.0, 0.0, 1.0).unwrap();
        let prompt = ParamVector::from_vec(vec![0.5]);
        let sample = ParamVector::from_vec(vec![0.8]);
        assert_eq!(couple(&g, &prompt, &sample).unwrap().as_slice(), &[1.3]);
    }

    #[test]
    fn generator_validation() {
        assert!(GeneratorConfig::new(GeneratorKind::Affine, 1.5, 0.0, 1.0).is_err());
        assert!(GeneratorConfig::new(GeneratorKind::Affine, 0.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn budget_counts_every_call_and_stops_at_limit() {
        let oracle = SyntheticOracle::from_spec(SyntheticSpec::Quadratic {
            center: ParamVector::zeros(1),
            curvature: 1.0,
        });
        let budget = CallBudget::new(8000);
        let input = OracleInput::continuous(ParamVector::from_vec(vec![1.0])).unwrap();
        for _ in 0..8000 {
            evaluate(&oracle, &input, &budget).unwrap();
        }
        assert_eq!(budget.used(), 8000);
        let err = evaluate(&oracle, &input, &budget).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { used: 8000, .. }));
        assert_eq!(budget.used(), 8000, "failed call must not advance the ledger");
    }

    #[test]
    fn budget_is_atomic_under_contention() {
        let budget = std::sync::Arc::new(CallBudget::new(1000));
        std::thread::scope(|s| {
            for _ in 0..4 {
                let b = budget.clone();
                s.spawn(move || {
                    for _ in 0..300 {
                        let _ = b.try_consume(1);
                    }
                });
            }
        });
        assert_eq!(budget.used(), 1000);
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(OracleInput::continuous(ParamVector::from_vec(vec![f64::NAN])).is_err());
    }
}
