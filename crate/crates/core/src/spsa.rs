//! Two-point simultaneous-perturbation gradient estimation and updates.
//!
//! One estimate costs exactly two oracle calls: the loss is probed at
//! `theta + alpha*q` and `theta - alpha*q` for a random sign vector `q`, and
//! the scaled difference is spread back through the elementwise inverse of
//! `q`. Rademacher perturbations keep that inverse bounded (and equal to `q`
//! itself).

use crate::error::{Error, Result};
use crate::oracle::{CallBudget, Oracle, OracleInput};
use crate::rng::DetRng;
use crate::scalar::Real;
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsaVariant {
    /// Heavy-ball momentum SGD on the quasi-gradient.
    Plain,
    /// Momentum update with a Nesterov-style lookahead correction.
    GradientCorrection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaConfig<T> {
    /// Perturbation magnitude at step 0.
    pub alpha0: T,
    /// Learning rate at step 0.
    pub lr0: T,
    /// Momentum coefficient in `[0, 1)`.
    pub momentum: T,
    /// Decay exponent for the perturbation schedule.
    pub gamma_a: T,
    /// Decay exponent for the learning-rate schedule.
    pub gamma_lr: T,
    pub variant: SpsaVariant,
    /// Independent estimates averaged per iteration.
    pub n_probes: usize,
}

impl<T: Real> SpsaConfig<T> {
    pub fn new(alpha0: T, lr0: T) -> Result<Self> {
        let config = SpsaConfig {
            alpha0,
            lr0,
            momentum: T::from_f64_lossy(0.9),
            gamma_a: T::zero(),
            gamma_lr: T::zero(),
            variant: SpsaVariant::Plain,
            n_probes: 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "spsa alpha0 must be > 0, got {}",
                self.alpha0
            )));
        }
        if !(self.lr0 > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "spsa lr0 must be > 0, got {}",
                self.lr0
            )));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "spsa momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.gamma_a >= T::zero() && self.gamma_lr >= T::zero()) {
            return Err(Error::InvalidArgument(
                "spsa decay exponents must be >= 0".into(),
            ));
        }
        if self.n_probes == 0 {
            return Err(Error::InvalidArgument("spsa n_probes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaState<T> {
    pub theta: ParamVector<T>,
    pub velocity: ParamVector<T>,
    pub step: u64,
}

impl<T: Real> SpsaState<T> {
    pub fn new(theta: ParamVector<T>) -> Self {
        let velocity = ParamVector::zeros(theta.dim());
        SpsaState {
            theta,
            velocity,
            step: 0,
        }
    }

    pub fn at_step(theta: ParamVector<T>, step: u64) -> Self {
        let mut state = SpsaState::new(theta);
        state.step = step;
        state
    }
}

/// Draw a Rademacher sign vector; every entry is `+1` or `-1`, so the
/// elementwise reciprocal equals the vector itself.
pub fn perturbation<T: Real>(dim: usize, rng: &mut DetRng) -> Result<ParamVector<T>> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "perturbation dimension must be >= 1".into(),
        ));
    }
    Ok(ParamVector::from_fn(dim, |_| rng.rademacher()))
}

/// Two-point quasi-gradient: `[L(theta+alpha*q) - L(theta-alpha*q)] / (2
/// alpha)` spread through `q^-1` elementwise. Consumes exactly 2 budget
/// units; also returns the two probe losses for metrics.
pub fn estimate_gradient_with_losses<T: Real>(
    oracle: &dyn Oracle<T>,
    theta: &ParamVector<T>,
    alpha: T,
    q: &ParamVector<T>,
    budget: &CallBudget,
) -> Result<(ParamVector<T>, (T, T))> {
    if !(alpha > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "perturbation magnitude must be > 0, got {alpha}"
        )));
    }
    theta.check_same_dim(q, "spsa perturbation")?;
    if q.iter().any(|&qi| qi == T::zero()) {
        return Err(Error::InvalidArgument(
            "perturbation entries must be nonzero".into(),
        ));
    }
    budget.try_consume(2)?;
    let plus = oracle.loss(&OracleInput::Continuous(theta.add(&q.scale(alpha))?))?;
    let minus = oracle.loss(&OracleInput::Continuous(theta.sub(&q.scale(alpha))?))?;
    let slope = (plus - minus) / (T::two() * alpha);
    let grad = ParamVector::from_fn(theta.dim(), |i| slope / q[i]);
    Ok((grad, (plus, minus)))
}

pub fn estimate_gradient<T: Real>(
    oracle: &dyn Oracle<T>,
    theta: &ParamVector<T>,
    alpha: T,
    q: &ParamVector<T>,
    budget: &CallBudget,
) -> Result<ParamVector<T>> {
    estimate_gradient_with_losses(oracle, theta, alpha, q, budget).map(|(g, _)| g)
}

/// Power-decay schedules; zero exponents recover constants.
pub fn schedules<T: Real>(config: &SpsaConfig<T>, t: u64) -> (T, T) {
    let base = T::from_f64_lossy((t + 1) as f64);
    (
        config.alpha0 / base.powf(config.gamma_a),
        config.lr0 / base.powf(config.gamma_lr),
    )
}

/// Apply one update for a given gradient estimate, advancing the step count.
pub fn step<T: Real>(
    state: &SpsaState<T>,
    grad: &ParamVector<T>,
    config: &SpsaConfig<T>,
) -> Result<SpsaState<T>> {
    state.theta.check_same_dim(grad, "spsa step")?;
    let (_, lr) = schedules(config, state.step);
    let m = config.momentum;
    let (velocity, theta) = match config.variant {
        SpsaVariant::Plain => {
            let velocity = state.velocity.scale(m).add(grad)?;
            let theta = state.theta.sub(&velocity.scale(lr))?;
            (velocity, theta)
        }
        SpsaVariant::GradientCorrection => {
            let velocity = state.velocity.scale(m).sub(&grad.scale(lr))?;
            let theta = state.theta.add(&velocity.scale(m))?.sub(&grad.scale(lr))?;
            (velocity, theta)
        }
    };
    Ok(SpsaState {
        theta,
        velocity,
        step: state.step + 1,
    })
}

/// One full optimizer iteration: draw perturbations, estimate (averaging
/// `n_probes` independent estimates), update. Returns the new state and the
/// mean probe loss for metrics. Costs `2 * n_probes` budget units.
pub fn iterate<T: Real>(
    state: &SpsaState<T>,
    oracle: &dyn Oracle<T>,
    config: &SpsaConfig<T>,
    rng: &mut DetRng,
    budget: &CallBudget,
) -> Result<(SpsaState<T>, T)> {
    let (alpha, _) = schedules(config, state.step);
    let mut grad = ParamVector::zeros(state.theta.dim());
    let mut loss_acc = T::zero();
    for _ in 0..config.n_probes {
        let q = perturbation(state.theta.dim(), rng)?;
        let (g, (plus, minus)) =
            estimate_gradient_with_losses(oracle, &state.theta, alpha, &q, budget)?;
        grad = grad.add(&g)?;
        loss_acc = loss_acc + (plus + minus) * T::half();
    }
    let probes = T::from_usize_lossy(config.n_probes);
    let new_state = step(state, &grad.scale(T::one() / probes), config)?;
    Ok((new_state, loss_acc / probes))
}
