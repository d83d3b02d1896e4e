//! Deterministic synthetic oracles standing in for real PTM APIs.

use crate::error::{Error, Result};
use crate::oracle::{couple, GeneratorConfig, Oracle, OracleInput};
use crate::scalar::Real;
use crate::vector::ParamVector;

/// Specification of a synthetic loss landscape.
#[derive(Debug, Clone)]
pub enum SyntheticSpec<T> {
    /// `curvature * ||theta - center||^2`.
    Quadratic {
        center: ParamVector<T>,
        curvature: T,
    },
    /// Classic banana valley, minimum 0 at the all-ones vector.
    Rosenbrock,
    /// Mean logistic loss of a linear classifier over a fixed sample set
    /// with labels in `{-1, +1}`.
    LogisticSynthetic {
        features: Vec<ParamVector<T>>,
        labels: Vec<i8>,
    },
    /// Per-position mismatch count against a hidden token sequence,
    /// scaled by `penalty`.
    HiddenPrompt {
        target: Vec<u32>,
        penalty: T,
        vocab_size: u32,
    },
}

/// A pure, referentially transparent oracle built from a [`SyntheticSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticOracle<T> {
    spec: SyntheticSpec<T>,
}

impl<T: Real> SyntheticOracle<T> {
    pub fn from_spec(spec: SyntheticSpec<T>) -> Self {
        SyntheticOracle { spec }
    }

    fn continuous_loss(&self, theta: &ParamVector<T>) -> Result<T> {
        match &self.spec {
            SyntheticSpec::Quadratic { center, curvature } => {
                Ok(*curvature * theta.squared_distance(center)?)
            }
            SyntheticSpec::Rosenbrock => {
                if theta.dim() < 2 {
                    return Err(Error::InvalidArgument(
                        "rosenbrock needs dimension >= 2".into(),
                    ));
                }
                let hundred = T::from_f64_lossy(100.0);
                let mut acc = T::zero();
                for i in 0..theta.dim() - 1 {
                    let a = theta[i + 1] - theta[i] * theta[i];
                    let b = T::one() - theta[i];
                    acc = acc + hundred * a * a + b * b;
                }
                Ok(acc)
            }
            SyntheticSpec::LogisticSynthetic { features, labels } => {
                let mut acc = T::zero();
                for (x, &y) in features.iter().zip(labels.iter()) {
                    let margin = theta.dot(x)? * T::from_f64_lossy(f64::from(y));
                    acc = acc + (T::one() + (-margin).exp()).ln();
                }
                Ok(acc / T::from_usize_lossy(features.len().max(1)))
            }
            SyntheticSpec::HiddenPrompt { .. } => Err(Error::InvalidArgument(
                "hidden-prompt oracle expects discrete token input".into(),
            )),
        }
    }

    fn discrete_loss(&self, tokens: &[u32]) -> Result<T> {
        match &self.spec {
            SyntheticSpec::HiddenPrompt {
                target,
                penalty,
                vocab_size,
            } => {
                if tokens.len() != target.len() {
                    return Err(Error::DimensionMismatch {
                        context: "hidden-prompt query",
                        expected: target.len(),
                        actual: tokens.len(),
                    });
                }
                if let Some(&bad) = tokens.iter().find(|&&t| t >= *vocab_size) {
                    return Err(Error::TokenOutOfRange {
                        token: bad,
                        vocab: *vocab_size,
                    });
                }
                let mismatches = tokens
                    .iter()
                    .zip(target.iter())
                    .filter(|(a, b)| a != b)
                    .count();
                Ok(*penalty * T::from_usize_lossy(mismatches))
            }
            _ => Err(Error::InvalidArgument(
                "continuous oracle expects a parameter vector input".into(),
            )),
        }
    }
}

impl<T: Real> Oracle<T> for SyntheticOracle<T> {
    fn loss(&self, input: &OracleInput<T>) -> Result<T> {
        match input {
            OracleInput::Continuous(theta) => self.continuous_loss(theta),
            OracleInput::Discrete { tokens, .. } => self.discrete_loss(tokens),
        }
    }
}

/// Wraps a continuous oracle so that the evaluated vector is the prompt
/// coupled with each of a fixed set of raw samples; the reported loss is the
/// mean over samples. One call to this oracle is one budget unit regardless
/// of the sample count.
pub struct CoupledOracle<T, O> {
    inner: O,
    generator: GeneratorConfig<T>,
    samples: Vec<ParamVector<T>>,
}

impl<T: Real, O: Oracle<T>> CoupledOracle<T, O> {
    pub fn new(inner: O, generator: GeneratorConfig<T>, samples: Vec<ParamVector<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(
                "coupled oracle needs at least one sample".into(),
            ));
        }
        Ok(CoupledOracle {
            inner,
            generator,
            samples,
        })
    }
}

impl<T: Real, O: Oracle<T>> Oracle<T> for CoupledOracle<T, O> {
    fn loss(&self, input: &OracleInput<T>) -> Result<T> {
        let prompt = match input {
            OracleInput::Continuous(v) => v,
            OracleInput::Discrete { .. } => {
                return Err(Error::InvalidArgument(
                    "coupled oracle expects a continuous prompt".into(),
                ))
            }
        };
        let mut acc = T::zero();
        for sample in &self.samples {
            let coupled = couple(&self.generator, prompt, sample)?;
            acc = acc + self.inner.loss(&OracleInput::Continuous(coupled))?;
        }
        Ok(acc / T::from_usize_lossy(self.samples.len()))
    }

    fn serial_only(&self) -> bool {
        self.inner.serial_only()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GeneratorKind;
    use crate::rng::DetRng;

    fn quadratic(center: Vec<f64>, curvature: f64) -> SyntheticOracle<f64> {
        SyntheticOracle::from_spec(SyntheticSpec::Quadratic {
            center: ParamVector::from_vec(center),
            curvature,
        })
    }

    #[test]
    fn quadratic_values() {
        let oracle = quadratic(vec![0.0, 0.0], 1.0);
        let at = |v: Vec<f64>| {
            oracle
                .loss(&OracleInput::Continuous(ParamVector::from_vec(v)))
                .unwrap()
        };
        assert_eq!(at(vec![3.0, 4.0]), 25.0);
        assert_eq!(at(vec![0.0, 0.0]), 0.0);
    }

    #[test]
    fn quadratic_at_center_is_zero() {
        let oracle = quadratic(vec![1.5, -2.0, 0.25], 3.0);
        let loss = oracle
            .loss(&OracleInput::Continuous(ParamVector::from_vec(vec![
                1.5, -2.0, 0.25,
            ])))
            .unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn rosenbrock_minimum_and_reference_point() {
        let oracle: SyntheticOracle<f64> = SyntheticOracle::from_spec(SyntheticSpec::Rosenbrock);
        let at = |v: Vec<f64>| {
            oracle
                .loss(&OracleInput::Continuous(ParamVector::from_vec(v)))
                .unwrap()
        };
        assert_eq!(at(vec![1.0, 1.0]), 0.0);
        // 100*(1.0 - 1.44)^2 + (1 - 1.2)^2 = 19.36 + 0.04
        assert!((at(vec![1.2, 1.0]) - 19.4).abs() < 1e-12);
    }

    #[test]
    fn hidden_prompt_hamming_count() {
        let oracle: SyntheticOracle<f64> = SyntheticOracle::from_spec(SyntheticSpec::HiddenPrompt {
            target: vec![2, 5, 1],
            penalty: 1.0,
            vocab_size: 8,
        });
        let at = |tokens: Vec<u32>| {
            oracle
                .loss(&OracleInput::discrete(tokens, 0))
                .unwrap()
        };
        assert_eq!(at(vec![2, 5, 1]), 0.0);
        assert_eq!(at(vec![2, 0, 1]), 1.0);
        assert_eq!(at(vec![0, 0, 0]), 3.0);
    }

    #[test]
    fn hidden_prompt_rejects_out_of_vocab_tokens() {
        let oracle: SyntheticOracle<f64> = SyntheticOracle::from_spec(SyntheticSpec::HiddenPrompt {
            target: vec![0, 1],
            penalty: 1.0,
            vocab_size: 4,
        });
        assert!(matches!(
            oracle.loss(&OracleInput::discrete(vec![0, 9], 0)),
            Err(Error::TokenOutOfRange { token: 9, vocab: 4 })
        ));
    }

    #[test]
    fn logistic_loss_drops_along_true_weights() {
        let mut rng = DetRng::seed(5);
        let w = ParamVector::from_fn(4, |_| rng.uniform(-1.0, 1.0));
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..64 {
            let x = ParamVector::from_fn(4, |_| rng.uniform(-1.0, 1.0));
            let y: i8 = if w.dot(&x).unwrap() >= 0.0 { 1 } else { -1 };
            features.push(x);
            labels.push(y);
        }
        let oracle = SyntheticOracle::from_spec(SyntheticSpec::LogisticSynthetic {
            features,
            labels,
        });
        let at = |v: &ParamVector<f64>| {
            oracle.loss(&OracleInput::Continuous(v.clone())).unwrap()
        };
        // Scaling up the separating weights must reduce the logistic loss.
        assert!(at(&w.scale(4.0)) < at(&w));
        assert!(at(&w) < at(&ParamVector::zeros(4)));
    }

    #[test]
    fn synthetic_oracles_are_referentially_transparent() {
        let oracle = quadratic(vec![0.3, -0.7, 1.1], 2.5);
        let mut rng = DetRng::seed(42);
        for _ in 0..1000 {
            let v = ParamVector::from_fn(3, |_| rng.uniform(-5.0, 5.0));
            let input = OracleInput::Continuous(v);
            let a = oracle.loss(&input).unwrap();
            let b = oracle.loss(&input).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn coupled_oracle_averages_over_samples() {
        let inner = quadratic(vec![0.0], 1.0);
        let generator =
            GeneratorConfig::new(GeneratorKind::Affine, 1.0, 0.0, 1.0).unwrap();
        let samples = vec![
            ParamVector::from_vec(vec![1.0]),
            ParamVector::from_vec(vec![-1.0]),
        ];
        let oracle = CoupledOracle::new(inner, generator, samples).unwrap();
        // prompt 0.5: coupled values 1.5 and -0.5 -> (2.25 + 0.25) / 2
        let loss = oracle
            .loss(&OracleInput::Continuous(ParamVector::from_vec(vec![0.5])))
            .unwrap();
        assert!((loss - 1.25).abs() < 1e-15);
    }
}
