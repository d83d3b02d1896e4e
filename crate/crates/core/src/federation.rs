//! Synchronous federated rounds over black-box optimizers.
//!
//! Each round the server broadcasts the global parameters, every client runs
//! up to `K` local optimizer iterations against its own oracle under its own
//! call budget, and the server aggregates the uploads: a weighted mean for
//! parameter vectors, mean-then-project for prompt policies, and a
//! mean `(prompt, score)` pair for the Bayesian-optimization task, which
//! clients fold into their local surrogates at the start of the next round.
//!
//! Client work is keyed by `(master_seed, client_id, round)` RNG streams, so
//! results are independent of execution order and parallelism degree.

use std::time::Instant;

use crate::bayesopt::{bo_round, BoRoundSettings, BoxBounds, GpState, KernelConfig};
use crate::error::{Error, Result};
use crate::metrics::{MetricsRow, MetricsTable, GLOBAL_CLIENT};
use crate::oracle::{evaluate, CallBudget, Oracle, OracleInput};
use crate::pge::{pge_step, sample_prompt, CategoricalPromptPolicy};
use crate::rng::DetRng;
use crate::scalar::Real;
use crate::spsa::{self, SpsaConfig, SpsaState};
use crate::vector::ParamVector;

/// RNG stream domain for per-client round streams.
const STREAM_CLIENT: u64 = 0x11;

/// Parameters broadcast by the server each round.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalParams<T> {
    Vector(ParamVector<T>),
    Policy(CategoricalPromptPolicy<T>),
    /// Mean of the clients' best `(soft prompt, score)` pairs; `None` until
    /// the first aggregation.
    BoPair(Option<(ParamVector<T>, T)>),
}

/// Client-resident optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalState<T> {
    Vector(ParamVector<T>),
    Policy(CategoricalPromptPolicy<T>),
    Gp(GpState<T>),
}

/// PGE knobs used by the federation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct PgeSettings<T> {
    pub sample_size: usize,
    pub lr: T,
    pub variance_reduced: bool,
}

/// BO knobs used by the federation loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BoSettings<T> {
    pub kernel: KernelConfig<T>,
    pub noise: T,
    pub bounds: BoxBounds<T>,
    pub round: BoRoundSettings<T>,
}

/// The zeroth-order optimizer driving local training.
#[derive(Debug, Clone)]
pub enum OptimizerKind<T> {
    Spsa(SpsaConfig<T>),
    Pge(PgeSettings<T>),
    Bo(BoSettings<T>),
}

impl<T: Real> OptimizerKind<T> {
    /// Budget units one local iteration costs.
    pub fn calls_per_iteration(&self) -> u64 {
        match self {
            OptimizerKind::Spsa(c) => 2 * c.n_probes as u64,
            OptimizerKind::Pge(c) => c.sample_size as u64,
            OptimizerKind::Bo(c) => c.round.batch_size as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState<T> {
    pub id: usize,
    pub local: LocalState<T>,
    /// Example ids owned by this client (empty for dataset-free tasks).
    pub data_ids: Vec<u64>,
    pub budget: CallBudget,
    /// Best score (higher is better) this client has observed.
    pub best_score: Option<T>,
}

impl<T: Real> ClientState<T> {
    pub fn new(id: usize, local: LocalState<T>, data_ids: Vec<u64>, budget_limit: u64) -> Self {
        ClientState {
            id,
            local,
            data_ids,
            budget: CallBudget::new(budget_limit),
            best_score: None,
        }
    }

    fn observe_score(&mut self, score: T) {
        if self.best_score.is_none_or(|b| score > b) {
            self.best_score = Some(score);
        }
    }
}

/// How uploads are weighted during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    SampleCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregationRule {
    pub weighting: Weighting,
}

impl Default for AggregationRule {
    fn default() -> Self {
        AggregationRule {
            weighting: Weighting::Uniform,
        }
    }
}

impl AggregationRule {
    fn weights<T: Real>(&self, clients: &[ClientState<T>]) -> Vec<T> {
        match self.weighting {
            Weighting::Uniform => {
                let w = T::one() / T::from_usize_lossy(clients.len());
                vec![w; clients.len()]
            }
            Weighting::SampleCount => {
                let total: usize = clients.iter().map(|c| c.data_ids.len()).sum();
                if total == 0 {
                    return AggregationRule {
                        weighting: Weighting::Uniform,
                    }
                    .weights(clients);
                }
                clients
                    .iter()
                    .map(|c| T::from_usize_lossy(c.data_ids.len()) / T::from_usize_lossy(total))
                    .collect()
            }
        }
    }
}

#[derive(Debug)]
pub struct FederationState<T> {
    pub round: u64,
    pub rounds_total: u64,
    pub local_iters: u64,
    pub global: GlobalParams<T>,
    pub clients: Vec<ClientState<T>>,
    pub history: MetricsTable,
    pub master_seed: u64,
    /// Worker threads used per round; results are identical for any value.
    pub parallelism: usize,
}

impl<T: Real> FederationState<T> {
    pub fn new(
        global: GlobalParams<T>,
        clients: Vec<ClientState<T>>,
        rounds_total: u64,
        local_iters: u64,
        master_seed: u64,
        parallelism: usize,
    ) -> Result<Self> {
        if clients.is_empty() {
            return Err(Error::InvalidArgument("need at least one client".into()));
        }
        if parallelism == 0 {
            return Err(Error::InvalidArgument("parallelism must be >= 1".into()));
        }
        Ok(FederationState {
            round: 0,
            rounds_total,
            local_iters,
            global,
            clients,
            history: MetricsTable::new(),
            master_seed,
            parallelism,
        })
    }

    /// Stream for one client's work in one round.
    pub fn client_stream(master_seed: u64, client_id: usize, round: u64) -> DetRng {
        DetRng::seed(master_seed).derive(&[STREAM_CLIENT, client_id as u64, round])
    }

    /// True when no client can afford another optimizer iteration.
    pub fn all_budgets_exhausted(&self, optimizer: &OptimizerKind<T>) -> bool {
        let cost = optimizer.calls_per_iteration();
        self.clients.iter().all(|c| c.budget.remaining() < cost)
    }

    pub fn total_calls_used(&self) -> u64 {
        self.clients.iter().map(|c| c.budget.used()).sum()
    }
}

/// What one client produced during a round.
#[derive(Debug, Clone)]
pub struct LocalOutcome<T> {
    pub params: LocalState<T>,
    /// Loss observed at each completed iteration.
    pub iter_losses: Vec<T>,
    pub iterations_run: u64,
    /// Best score seen during this round, if any evaluation happened.
    pub round_best_score: Option<T>,
}

/// Run up to `k` local iterations starting from the broadcast parameters.
///
/// Budget exhaustion stops the loop early without error. `start_step` is the
/// global iteration index (`round * K` under the synchronous schedule) so
/// decay schedules continue across rounds.
pub fn local_train<T: Real>(
    optimizer: &OptimizerKind<T>,
    global: &GlobalParams<T>,
    client: &ClientState<T>,
    oracle: &dyn Oracle<T>,
    k: u64,
    start_step: u64,
    rng: &mut DetRng,
) -> Result<LocalOutcome<T>> {
    match (optimizer, global) {
        (OptimizerKind::Spsa(config), GlobalParams::Vector(theta)) => {
            let mut state = SpsaState::at_step(theta.clone(), start_step);
            let mut iter_losses = Vec::new();
            let cost = optimizer.calls_per_iteration();
            for _ in 0..k {
                if client.budget.remaining() < cost {
                    break;
                }
                let (next, loss) = spsa::iterate(&state, oracle, config, rng, &client.budget)?;
                state = next;
                iter_losses.push(loss);
            }
            let best = min_loss_to_score(&iter_losses);
            Ok(LocalOutcome {
                params: LocalState::Vector(state.theta),
                iterations_run: iter_losses.len() as u64,
                round_best_score: best,
                iter_losses,
            })
        }
        (OptimizerKind::Pge(config), GlobalParams::Policy(policy)) => {
            let mut policy = policy.clone();
            let mut iter_losses = Vec::new();
            let cost = optimizer.calls_per_iteration();
            let mut round_best: Option<T> = None;
            for iter in 0..k {
                if client.budget.remaining() < cost {
                    break;
                }
                let mut samples = Vec::with_capacity(config.sample_size);
                let mut batch_sum = T::zero();
                for j in 0..config.sample_size {
                    let prompt = sample_prompt(&policy, rng);
                    let sample_id = pick_sample_id(&client.data_ids, iter, config.sample_size, j);
                    let input = OracleInput::Discrete {
                        tokens: prompt.tokens.clone(),
                        sample_id,
                    };
                    let loss = evaluate(oracle, &input, &client.budget)?.value();
                    batch_sum = batch_sum + loss;
                    let score = -loss;
                    if round_best.is_none_or(|b| score > b) {
                        round_best = Some(score);
                    }
                    samples.push((prompt, loss));
                }
                policy = pge_step(&policy, &samples, config.lr, config.variance_reduced)?;
                iter_losses.push(batch_sum / T::from_usize_lossy(config.sample_size));
            }
            Ok(LocalOutcome {
                params: LocalState::Policy(policy),
                iterations_run: iter_losses.len() as u64,
                round_best_score: round_best,
                iter_losses,
            })
        }
        (OptimizerKind::Bo(config), GlobalParams::BoPair(pair)) => {
            let LocalState::Gp(gp) = &client.local else {
                return Err(Error::InvalidArgument(
                    "bo client must hold a GP state".into(),
                ));
            };
            // Fold the server's aggregated pair in before local rounds.
            let mut gp = match pair {
                Some((theta, score)) => gp.with_added(vec![theta.clone()], vec![*score])?,
                None => gp.clone(),
            };
            let mut iter_losses = Vec::new();
            let cost = optimizer.calls_per_iteration();
            let mut round_best: Option<T> = None;
            for _ in 0..k {
                if client.budget.remaining() < cost {
                    break;
                }
                let (next, _best_theta, best_score) = bo_round(
                    &gp,
                    oracle,
                    &client.budget,
                    &config.bounds,
                    &config.round,
                    rng,
                )?;
                gp = next;
                let batch = config.round.batch_size;
                let tail = &gp.train_y()[gp.len() - batch..];
                let mut mean_loss = T::zero();
                for &score in tail {
                    mean_loss = mean_loss + -score;
                }
                iter_losses.push(mean_loss / T::from_usize_lossy(batch));
                if round_best.is_none_or(|b| best_score > b) {
                    round_best = Some(best_score);
                }
            }
            Ok(LocalOutcome {
                params: LocalState::Gp(gp),
                iterations_run: iter_losses.len() as u64,
                round_best_score: round_best,
                iter_losses,
            })
        }
        _ => Err(Error::InvalidArgument(
            "optimizer kind does not match broadcast parameter kind".into(),
        )),
    }
}

fn pick_sample_id(data_ids: &[u64], iter: u64, sample_size: usize, j: usize) -> u64 {
    let position = iter * sample_size as u64 + j as u64;
    if data_ids.is_empty() {
        position
    } else {
        data_ids[(position % data_ids.len() as u64) as usize]
    }
}

fn min_loss_to_score<T: Real>(losses: &[T]) -> Option<T> {
    losses
        .iter()
        .copied()
        .fold(None, |acc: Option<T>, l| match acc {
            Some(best) if best <= l => Some(best),
            _ => Some(l),
        })
        .map(|l| -l)
}

/// Weighted per-coordinate mean of parameter vectors. Identical uploads
/// short-circuit to an exact copy so consensus is preserved bit-for-bit.
pub fn aggregate<T: Real>(params: &[ParamVector<T>], weights: &[T]) -> Result<ParamVector<T>> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    if params.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregation weights",
            expected: params.len(),
            actual: weights.len(),
        });
    }
    let dim = params[0].dim();
    for p in params {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "aggregation",
                expected: dim,
                actual: p.dim(),
            });
        }
    }
    if params.iter().all(|p| p == &params[0]) {
        return Ok(params[0].clone());
    }
    let mut out = ParamVector::zeros(dim);
    for (p, &w) in params.iter().zip(weights.iter()) {
        for i in 0..dim {
            out[i] = out[i] + w * p[i];
        }
    }
    Ok(out)
}

/// Weighted mean of policy matrices followed by a row-wise simplex
/// projection, which restores the floor after averaging.
pub fn aggregate_policies<T: Real>(
    policies: &[CategoricalPromptPolicy<T>],
    weights: &[T],
) -> Result<CategoricalPromptPolicy<T>> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    if policies.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregation weights",
            expected: policies.len(),
            actual: weights.len(),
        });
    }
    let first = &policies[0];
    for p in policies {
        if p.prompt_len() != first.prompt_len() || p.vocab_size() != first.vocab_size() {
            return Err(Error::DimensionMismatch {
                context: "policy aggregation",
                expected: first.prompt_len() * first.vocab_size(),
                actual: p.prompt_len() * p.vocab_size(),
            });
        }
    }
    if policies.iter().all(|p| p.probs() == first.probs()) {
        return Ok(first.clone());
    }
    let mut mean = crate::matrix::Matrix::zeros(first.prompt_len(), first.vocab_size());
    for (p, &w) in policies.iter().zip(weights.iter()) {
        for i in 0..first.prompt_len() {
            let row = p.row(i);
            let out = mean.row_mut(i);
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = *o + w * v;
            }
        }
    }
    let mut projected = crate::matrix::Matrix::zeros(first.prompt_len(), first.vocab_size());
    for i in 0..first.prompt_len() {
        let row = crate::pge::project_simplex_floored(mean.row(i), first.floor())?;
        projected.row_mut(i).copy_from_slice(&row);
    }
    CategoricalPromptPolicy::new(projected, first.floor())
}

/// Coordinate-wise mean of `(soft prompt, score)` uploads.
pub fn aggregate_bo<T: Real>(pairs: &[(ParamVector<T>, T)]) -> Result<(ParamVector<T>, T)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("nothing to aggregate".into()));
    }
    let dim = pairs[0].0.dim();
    for (theta, _) in pairs {
        if theta.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "bo aggregation",
                expected: dim,
                actual: theta.dim(),
            });
        }
    }
    if pairs.iter().all(|p| p == &pairs[0]) {
        return Ok(pairs[0].clone());
    }
    let count = T::from_usize_lossy(pairs.len());
    let mut theta = ParamVector::zeros(dim);
    let mut score = T::zero();
    for (t, s) in pairs {
        for i in 0..dim {
            theta[i] = theta[i] + t[i];
        }
        score = score + *s;
    }
    Ok((theta.scale(T::one() / count), score / count))
}

/// Execute one synchronous round: broadcast, local training (possibly in
/// parallel), upload, aggregate, and append metrics.
pub fn run_round<T: Real>(
    mut state: FederationState<T>,
    oracles: &[Box<dyn Oracle<T>>],
    optimizer: &OptimizerKind<T>,
    rule: &AggregationRule,
) -> Result<FederationState<T>> {
    if state.round >= state.rounds_total {
        return Err(Error::InvalidArgument(format!(
            "round {} out of range (total {})",
            state.round, state.rounds_total
        )));
    }
    if oracles.len() != state.clients.len() {
        return Err(Error::DimensionMismatch {
            context: "per-client oracles",
            expected: state.clients.len(),
            actual: oracles.len(),
        });
    }
    let round = state.round;
    let round_started = Instant::now();
    let k = state.local_iters;
    let start_step = round * k;
    let master_seed = state.master_seed;
    let global = state.global.clone();

    // Serial-only oracles force sequential execution.
    let parallelism = if oracles.iter().any(|o| o.serial_only()) {
        1
    } else {
        state.parallelism.min(state.clients.len()).max(1)
    };

    let mut results: Vec<Option<(LocalOutcome<T>, u64)>> = Vec::new();
    results.resize_with(state.clients.len(), || None);

    if parallelism == 1 {
        for (client, slot) in state.clients.iter().zip(results.iter_mut()) {
            *slot = Some(train_one(
                optimizer,
                &global,
                client,
                oracles[client.id].as_ref(),
                k,
                start_step,
                master_seed,
                round,
            )?);
        }
    } else {
        let chunk = state.clients.len().div_ceil(parallelism);
        let global_ref = &global;
        let outcome_chunks: Vec<&mut [Option<(LocalOutcome<T>, u64)>]> =
            results.chunks_mut(chunk).collect();
        let client_chunks: Vec<&[ClientState<T>]> = state.clients.chunks(chunk).collect();
        std::thread::scope(|scope| -> Result<()> {
            let mut handles = Vec::new();
            for (clients, slots) in client_chunks.into_iter().zip(outcome_chunks) {
                handles.push(scope.spawn(move || -> Result<()> {
                    for (client, slot) in clients.iter().zip(slots.iter_mut()) {
                        *slot = Some(train_one(
                            optimizer,
                            global_ref,
                            client,
                            oracles[client.id].as_ref(),
                            k,
                            start_step,
                            master_seed,
                            round,
                        )?);
                    }
                    Ok(())
                }));
            }
            for handle in handles {
                handle.join().expect("client thread panicked")?;
            }
            Ok(())
        })?;
    }

    // Record metrics and install local params in client order.
    let weights = rule.weights(&state.clients);
    let mut uploads_vec: Vec<ParamVector<T>> = Vec::new();
    let mut uploads_policy: Vec<CategoricalPromptPolicy<T>> = Vec::new();
    let mut uploads_bo: Vec<(ParamVector<T>, T)> = Vec::new();
    let mut bo_weightless: Vec<usize> = Vec::new();
    let mut global_loss_acc = 0.0f64;
    let mut global_weight_acc = 0.0f64;

    for (idx, slot) in results.into_iter().enumerate() {
        let (outcome, wall_ms) = slot.expect("every client trained");
        let client = &mut state.clients[idx];
        if let Some(score) = outcome.round_best_score {
            client.observe_score(score);
        }
        let mean_loss = if outcome.iter_losses.is_empty() {
            None
        } else {
            let mut acc = T::zero();
            for &l in &outcome.iter_losses {
                acc = acc + l;
            }
            Some((acc / T::from_usize_lossy(outcome.iter_losses.len())).to_f64_lossy())
        };
        if let Some(l) = mean_loss {
            let w = weights[idx].to_f64_lossy();
            global_loss_acc += w * l;
            global_weight_acc += w;
        }
        state.history.push(MetricsRow {
            round,
            client: idx.to_string(),
            loss: mean_loss,
            best_score: client.best_score.map(|s| s.to_f64_lossy()),
            calls_used: client.budget.used(),
            wall_ms,
        });
        client.local = outcome.params;
        match &client.local {
            LocalState::Vector(v) => uploads_vec.push(v.clone()),
            LocalState::Policy(p) => uploads_policy.push(p.clone()),
            LocalState::Gp(gp) => match gp.incumbent() {
                Some((theta, score)) => uploads_bo.push((theta.clone(), score)),
                None => bo_weightless.push(idx),
            },
        }
    }

    state.global = match &state.global {
        GlobalParams::Vector(_) => GlobalParams::Vector(aggregate(&uploads_vec, &weights)?),
        GlobalParams::Policy(_) => {
            GlobalParams::Policy(aggregate_policies(&uploads_policy, &weights)?)
        }
        GlobalParams::BoPair(previous) => {
            if uploads_bo.is_empty() {
                GlobalParams::BoPair(previous.clone())
            } else {
                debug_assert!(bo_weightless.len() < state.clients.len());
                GlobalParams::BoPair(Some(aggregate_bo(&uploads_bo)?))
            }
        }
    };

    let best_global = state
        .clients
        .iter()
        .filter_map(|c| c.best_score)
        .fold(None, |acc: Option<T>, s| match acc {
            Some(b) if b >= s => Some(b),
            _ => Some(s),
        });
    state.history.push(MetricsRow {
        round,
        client: GLOBAL_CLIENT.into(),
        loss: if global_weight_acc > 0.0 {
            Some(global_loss_acc / global_weight_acc)
        } else {
            None
        },
        best_score: best_global.map(|s| s.to_f64_lossy()),
        calls_used: state.total_calls_used(),
        wall_ms: round_started.elapsed().as_millis() as u64,
    });
    state.round += 1;
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn train_one<T: Real>(
    optimizer: &OptimizerKind<T>,
    global: &GlobalParams<T>,
    client: &ClientState<T>,
    oracle: &dyn Oracle<T>,
    k: u64,
    start_step: u64,
    master_seed: u64,
    round: u64,
) -> Result<(LocalOutcome<T>, u64)> {
    let started = Instant::now();
    let mut rng = FederationState::<T>::client_stream(master_seed, client.id, round);
    let outcome = local_train(optimizer, global, client, oracle, k, start_step, &mut rng)?;
    Ok((outcome, started.elapsed().as_millis() as u64))
}
