//! Experiment assembly and execution: config to oracles, clients, rounds,
//! and run artifacts (metrics CSV, final params, replayable metadata).

use std::path::Path;

use crate::bayesopt::{BoRoundSettings, BoxBounds, GpState, KernelConfig, ProjectionMatrix};
use crate::config::{ExperimentConfig, OracleConfig};
use crate::error::{Error, Result};
use crate::federation::{
    run_round, AggregationRule, BoSettings, ClientState, FederationState, GlobalParams,
    LocalState, OptimizerKind, PgeSettings, Weighting,
};
use crate::metrics::MetricsTable;
use crate::oracle::{
    CoupledOracle, GeneratorConfig, GeneratorKind, Oracle, RemoteOracle, RemoteOracleClient,
    SyntheticOracle, SyntheticSpec,
};
use crate::partition::{
    split_dirichlet, split_iid, split_pathological, LabeledDataset, Partition,
};
use crate::pge::CategoricalPromptPolicy;
use crate::rng::{DetRng, RNG_VERSION};
use crate::spsa::{SpsaConfig, SpsaVariant};
use crate::vector::ParamVector;

// RNG stream domains; changing these re-keys every recorded experiment.
const STREAM_DATASET: u64 = 0x21;
const STREAM_FEATURES: u64 = 0x22;
const STREAM_PARTITION: u64 = 0x23;
const STREAM_ORACLE: u64 = 0x24;
const STREAM_PROJECTION: u64 = 0x25;
const STREAM_TARGET: u64 = 0x26;
const STREAM_SAMPLES: u64 = 0x27;
const STREAM_GRID: u64 = 0x28;

/// Synthetic feature vector for one example id; stable across the run.
pub fn feature_vector(seed: u64, id: u64, dim: usize) -> ParamVector<f64> {
    let mut rng = DetRng::seed(seed).derive(&[STREAM_FEATURES, id]);
    ParamVector::from_fn(dim, |_| rng.uniform(-1.0, 1.0))
}

/// Build the task dataset. Logistic tasks label examples by a hidden linear
/// separator over seeded features; other tasks get round-robin labels (used
/// only for partition shape studies).
pub fn build_dataset(config: &ExperimentConfig, seed: u64) -> Result<LabeledDataset> {
    let n = config.task.dataset_size;
    let classes = config.task.num_classes;
    let items: Vec<(u64, u32)> = if config.oracle.kind == "logistic-synthetic" {
        let mut w_rng = DetRng::seed(seed).derive(&[STREAM_DATASET]);
        let w = ParamVector::from_fn(config.oracle.dim, |_| w_rng.uniform(-1.0, 1.0));
        (0..n)
            .map(|id| {
                let x = feature_vector(seed, id, config.oracle.dim);
                let label = u32::from(w.dot(&x).expect("dims fixed") >= 0.0);
                (id, label)
            })
            .collect()
    } else {
        (0..n).map(|id| (id, (id % classes as u64) as u32)).collect()
    };
    LabeledDataset::new(items, classes)
}

/// Partition the dataset per the configured strategy.
pub fn build_partition(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    seed: u64,
) -> Result<Partition> {
    let mut rng = DetRng::seed(seed).derive(&[STREAM_PARTITION]);
    let m = config.federation.clients;
    match config.partition.strategy.as_str() {
        "iid" => split_iid(dataset, m, &mut rng),
        "dirichlet" => split_dirichlet(dataset, m, config.partition.concentration, &mut rng),
        "pathological" => {
            split_pathological(dataset, m, config.partition.classes_per_client, &mut rng)
        }
        other => Err(Error::validation(
            "[partition].strategy",
            format!("unknown strategy `{other}`"),
        )),
    }
}

fn generator_config(oracle: &OracleConfig) -> Result<Option<GeneratorConfig<f64>>> {
    let kind = match oracle.generator.as_str() {
        "identity" => return Ok(None),
        "additive-clip" => GeneratorKind::AdditiveClip,
        "affine" => GeneratorKind::Affine,
        other => {
            return Err(Error::validation(
                "[oracle].generator",
                format!("unknown generator `{other}`"),
            ))
        }
    };
    Ok(Some(GeneratorConfig::new(
        kind,
        oracle.epsilon,
        oracle.clip_lo,
        oracle.clip_hi,
    )?))
}

fn wrap_coupled(
    inner: SyntheticOracle<f64>,
    config: &ExperimentConfig,
    seed: u64,
    client: usize,
) -> Result<Box<dyn Oracle<f64>>> {
    match generator_config(&config.oracle)? {
        Some(generator) if config.oracle.coupling_samples > 0 => {
            let mut rng = DetRng::seed(seed).derive(&[STREAM_SAMPLES, client as u64]);
            let samples = (0..config.oracle.coupling_samples)
                .map(|_| ParamVector::from_fn(config.oracle.dim, |_| rng.uniform(-1.0, 1.0)))
                .collect();
            Ok(Box::new(CoupledOracle::new(inner, generator, samples)?))
        }
        _ => Ok(Box::new(inner)),
    }
}

/// Hidden-prompt target: explicit from config or drawn once per run.
pub fn resolve_target(config: &ExperimentConfig, seed: u64) -> Result<Vec<u32>> {
    if let Some(target) = &config.oracle.target {
        return Ok(target.clone());
    }
    let length = config
        .optimizer
        .pge
        .as_ref()
        .map(|p| p.prompt_length)
        .unwrap_or(10);
    let mut rng = DetRng::seed(seed).derive(&[STREAM_TARGET]);
    Ok((0..length)
        .map(|_| rng.below(config.oracle.vocab_size as u64) as u32)
        .collect())
}

/// Per-client quadratic centers: explicit from config or drawn per client.
pub fn resolve_centers(config: &ExperimentConfig, seed: u64) -> Vec<ParamVector<f64>> {
    if let Some(centers) = &config.oracle.centers {
        return centers
            .iter()
            .map(|c| ParamVector::from_f64_slice(c))
            .collect();
    }
    (0..config.federation.clients)
        .map(|i| {
            let mut rng = DetRng::seed(seed).derive(&[STREAM_ORACLE, i as u64]);
            let s = config.oracle.center_scale;
            ParamVector::from_fn(config.oracle.dim, |_| rng.uniform(-s, s))
        })
        .collect()
}

/// Build one oracle per client.
pub fn build_oracles(
    config: &ExperimentConfig,
    partition: Option<&Partition>,
    seed: u64,
) -> Result<Vec<Box<dyn Oracle<f64>>>> {
    let m = config.federation.clients;
    let mut oracles: Vec<Box<dyn Oracle<f64>>> = Vec::with_capacity(m);
    match config.oracle.kind.as_str() {
        "quadratic" => {
            let centers = resolve_centers(config, seed);
            for (i, center) in centers.into_iter().enumerate() {
                let inner = SyntheticOracle::from_spec(SyntheticSpec::Quadratic {
                    center,
                    curvature: config.oracle.curvature,
                });
                oracles.push(wrap_coupled(inner, config, seed, i)?);
            }
        }
        "rosenbrock" => {
            for i in 0..m {
                let inner = SyntheticOracle::from_spec(SyntheticSpec::Rosenbrock);
                oracles.push(wrap_coupled(inner, config, seed, i)?);
            }
        }
        "logistic-synthetic" => {
            let partition = partition.ok_or_else(|| {
                Error::InvalidArgument("logistic-synthetic needs a partition".into())
            })?;
            for i in 0..m {
                let ids = partition.client(i);
                let features: Vec<ParamVector<f64>> = ids
                    .iter()
                    .map(|&id| feature_vector(seed, id, config.oracle.dim))
                    .collect();
                let labels: Vec<i8> = {
                    let mut w_rng = DetRng::seed(seed).derive(&[STREAM_DATASET]);
                    let w = ParamVector::from_fn(config.oracle.dim, |_| w_rng.uniform(-1.0, 1.0));
                    features
                        .iter()
                        .map(|x| if w.dot(x).expect("dims fixed") >= 0.0 { 1 } else { -1 })
                        .collect()
                };
                let inner = SyntheticOracle::from_spec(SyntheticSpec::LogisticSynthetic {
                    features,
                    labels,
                });
                oracles.push(wrap_coupled(inner, config, seed, i)?);
            }
        }
        "hidden-prompt" => {
            let target = resolve_target(config, seed)?;
            for _ in 0..m {
                oracles.push(Box::new(SyntheticOracle::from_spec(
                    SyntheticSpec::HiddenPrompt {
                        target: target.clone(),
                        penalty: config.oracle.penalty,
                        vocab_size: config.oracle.vocab_size,
                    },
                )));
            }
        }
        "remote" => {
            let endpoint = config
                .oracle
                .endpoint
                .as_ref()
                .ok_or_else(|| Error::validation("[oracle].endpoint", "required"))?;
            for _ in 0..m {
                let mut client = RemoteOracleClient::new(endpoint, &config.oracle.task_id);
                if let Some(token) = &config.oracle.bearer_token {
                    client = client.with_bearer_token(token);
                }
                oracles.push(Box::new(RemoteOracle::new(client)));
            }
        }
        other => return Err(Error::UnknownOracleKind(other.to_string())),
    }
    Ok(oracles)
}

/// Map the config onto the optimizer driving local training.
pub fn build_optimizer(config: &ExperimentConfig, seed: u64) -> Result<OptimizerKind<f64>> {
    if let Some(section) = &config.optimizer.spsa {
        let mut spsa = SpsaConfig::new(section.alpha0, section.lr0)?;
        spsa.momentum = section.momentum;
        spsa.gamma_a = section.gamma_a;
        spsa.gamma_lr = section.gamma_lr;
        spsa.n_probes = section.n_probes;
        spsa.variant = match section.variant.as_str() {
            "plain" => SpsaVariant::Plain,
            "gc" => SpsaVariant::GradientCorrection,
            other => {
                return Err(Error::validation(
                    "[optimizer.spsa].variant",
                    format!("unknown variant `{other}`"),
                ))
            }
        };
        spsa.validate()?;
        return Ok(OptimizerKind::Spsa(spsa));
    }
    if let Some(section) = &config.optimizer.pge {
        return Ok(OptimizerKind::Pge(PgeSettings {
            sample_size: section.sample_size,
            lr: section.lr,
            variance_reduced: section.variance_reduced,
        }));
    }
    if let Some(section) = &config.optimizer.bo {
        let projection = match section.project_dim {
            Some(out_dim) => {
                let mut rng = DetRng::seed(seed).derive(&[STREAM_PROJECTION]);
                Some(ProjectionMatrix::sample(out_dim, section.dim, &mut rng)?)
            }
            None => None,
        };
        return Ok(OptimizerKind::Bo(BoSettings {
            kernel: KernelConfig::squared_exponential(section.lengthscale, section.variance)?,
            noise: section.noise,
            bounds: BoxBounds::uniform(section.dim, section.bounds[0], section.bounds[1])?,
            round: BoRoundSettings {
                batch_size: section.batch_size,
                n_candidates: section.n_candidates,
                projection,
            },
        }));
    }
    Err(Error::validation(
        "[optimizer]",
        "exactly one of spsa, pge, or bo must be configured",
    ))
}

fn initial_global(config: &ExperimentConfig) -> Result<GlobalParams<f64>> {
    if config.optimizer.spsa.is_some() {
        return Ok(GlobalParams::Vector(ParamVector::zeros(config.oracle.dim)));
    }
    if let Some(pge) = &config.optimizer.pge {
        return Ok(GlobalParams::Policy(CategoricalPromptPolicy::uniform(
            pge.prompt_length,
            config.oracle.vocab_size as usize,
            pge.floor,
        )?));
    }
    if config.optimizer.bo.is_some() {
        return Ok(GlobalParams::BoPair(None));
    }
    Err(Error::validation("[optimizer]", "no optimizer configured"))
}

fn initial_local(
    config: &ExperimentConfig,
    global: &GlobalParams<f64>,
    optimizer: &OptimizerKind<f64>,
) -> Result<LocalState<f64>> {
    let _ = config;
    Ok(match (global, optimizer) {
        (GlobalParams::Vector(v), _) => LocalState::Vector(v.clone()),
        (GlobalParams::Policy(p), _) => LocalState::Policy(p.clone()),
        (GlobalParams::BoPair(_), OptimizerKind::Bo(settings)) => {
            LocalState::Gp(GpState::new(settings.kernel.clone(), settings.noise)?)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "optimizer does not match global parameter kind".into(),
            ))
        }
    })
}

/// Fully assembled experiment, ready to run round by round.
pub struct Experiment {
    pub state: FederationState<f64>,
    pub oracles: Vec<Box<dyn Oracle<f64>>>,
    pub optimizer: OptimizerKind<f64>,
    pub rule: AggregationRule,
}

/// Build dataset, partition, oracles, optimizer, and initial federation
/// state from a validated config.
pub fn build_experiment(config: &ExperimentConfig, seed: u64) -> Result<Experiment> {
    config.validate()?;
    let needs_dataset = config.oracle.kind == "logistic-synthetic";
    let (dataset, partition) = if needs_dataset {
        let ds = build_dataset(config, seed)?;
        let part = build_partition(config, &ds, seed)?;
        (Some(ds), Some(part))
    } else {
        (None, None)
    };
    let _ = dataset;
    let oracles = build_oracles(config, partition.as_ref(), seed)?;
    let optimizer = build_optimizer(config, seed)?;
    let global = initial_global(config)?;
    let clients = (0..config.federation.clients)
        .map(|id| {
            let data_ids = partition
                .as_ref()
                .map(|p| p.client(id).to_vec())
                .unwrap_or_default();
            Ok(ClientState::new(
                id,
                initial_local(config, &global, &optimizer)?,
                data_ids,
                config.federation.budget_per_client,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let state = FederationState::new(
        global,
        clients,
        config.federation.rounds,
        config.federation.local_iters,
        seed,
        config.federation.parallelism,
    )?;
    let rule = AggregationRule {
        weighting: match config.federation.aggregation.as_str() {
            "sample-count" => Weighting::SampleCount,
            _ => Weighting::Uniform,
        },
    };
    Ok(Experiment {
        state,
        oracles,
        optimizer,
        rule,
    })
}

/// Run the configured number of rounds (stopping early once every client is
/// out of budget) and write run artifacts when an output directory is given.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<FederationState<f64>> {
    let Experiment {
        mut state,
        oracles,
        optimizer,
        rule,
    } = build_experiment(config, seed)?;
    for _ in 0..state.rounds_total {
        if state.all_budgets_exhausted(&optimizer) {
            break;
        }
        state = run_round(state, &oracles, &optimizer, &rule)?;
    }
    if let Some(dir) = out_dir {
        write_run_artifacts(config, seed, &state, dir)?;
    }
    Ok(state)
}

/// Serialize the final global parameters as flat arrays plus shape metadata.
pub fn params_json(global: &GlobalParams<f64>) -> serde_json::Value {
    match global {
        GlobalParams::Vector(v) => serde_json::json!({
            "kind": "vector",
            "shape": [v.dim()],
            "values": v.to_f64_vec(),
        }),
        GlobalParams::Policy(p) => {
            let values: Vec<f64> = (0..p.prompt_len())
                .flat_map(|i| p.row(i).to_vec())
                .collect();
            serde_json::json!({
                "kind": "policy",
                "shape": [p.prompt_len(), p.vocab_size()],
                "floor": p.floor(),
                "values": values,
            })
        }
        GlobalParams::BoPair(pair) => match pair {
            Some((theta, score)) => serde_json::json!({
                "kind": "bo_pair",
                "shape": [theta.dim()],
                "theta": theta.to_f64_vec(),
                "score": score,
            }),
            None => serde_json::json!({
                "kind": "bo_pair",
                "shape": [0],
                "theta": null,
                "score": null,
            }),
        },
    }
}

/// Write `config.toml`, `run_meta.json`, `metrics.csv`, and `params.json`
/// into the run directory; together they are sufficient to replay the run.
pub fn write_run_artifacts(
    config: &ExperimentConfig,
    seed: u64,
    state: &FederationState<f64>,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.toml"),
        crate::config::serialize_config(config)?,
    )?;
    let meta = serde_json::json!({
        "version": format!("fedzo {}", env!("CARGO_PKG_VERSION")),
        "seed": seed,
        "rng": RNG_VERSION,
        "task": config.task.name,
        "rounds_completed": state.round,
    });
    std::fs::write(
        dir.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).expect("static json"),
    )?;
    state.history.write_csv(&dir.join("metrics.csv"))?;
    std::fs::write(
        dir.join("params.json"),
        serde_json::to_string_pretty(&params_json(&state.global)).expect("params json"),
    )?;
    Ok(())
}

/// One grid cell: override assignments and the metrics it produced.
#[derive(Debug)]
pub struct GridCell {
    pub index: usize,
    pub assignments: Vec<(String, toml::Value)>,
    pub seed: u64,
    pub final_loss: Option<f64>,
    pub best_score: Option<f64>,
    pub calls_used: u64,
    pub history: MetricsTable,
}

/// Cartesian-product sweep over config paths. Each cell runs with a seed
/// derived from `(master_seed, cell index)` and writes into its own
/// subdirectory; a `summary.csv` of final losses lands at the root. An empty
/// grid degenerates to exactly one `run_experiment` call with the master
/// seed.
pub fn grid_run(
    config: &ExperimentConfig,
    grid: &[(String, Vec<toml::Value>)],
    master_seed: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<GridCell>> {
    if grid.is_empty() {
        let state = run_experiment(
            config,
            master_seed,
            out_dir.map(|d| d.join("cell_000")).as_deref(),
        )?;
        let cell = summarize_cell(0, vec![], master_seed, state);
        if let Some(dir) = out_dir {
            write_summary(dir, grid, std::slice::from_ref(&cell))?;
        }
        return Ok(vec![cell]);
    }

    let base = toml::Value::try_from(config).map_err(|e| Error::ConfigParse(e.to_string()))?;
    for (key, values) in grid {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("grid key `{key}` has no values")));
        }
        lookup_path(&base, key)
            .ok_or_else(|| Error::InvalidArgument(format!("invalid grid key `{key}`")))?;
    }

    let total: usize = grid.iter().map(|(_, v)| v.len()).product();
    let mut cells = Vec::with_capacity(total);
    for index in 0..total {
        // Mixed-radix decode, first grid key outermost.
        let mut remainder = index;
        let mut assignments = Vec::with_capacity(grid.len());
        for (key, values) in grid.iter().rev() {
            let pick = remainder % values.len();
            remainder /= values.len();
            assignments.push((key.clone(), values[pick].clone()));
        }
        assignments.reverse();

        let mut tree = base.clone();
        for (key, value) in &assignments {
            set_path(&mut tree, key, value.clone())?;
        }
        let cell_config: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        cell_config.validate()?;

        let seed = DetRng::seed(master_seed)
            .derive(&[STREAM_GRID, index as u64])
            .next_u64();
        let cell_dir = out_dir.map(|d| d.join(format!("cell_{index:03}")));
        let state = run_experiment(&cell_config, seed, cell_dir.as_deref())?;
        cells.push(summarize_cell(index, assignments, seed, state));
    }
    if let Some(dir) = out_dir {
        write_summary(dir, grid, &cells)?;
    }
    Ok(cells)
}

fn summarize_cell(
    index: usize,
    assignments: Vec<(String, toml::Value)>,
    seed: u64,
    state: FederationState<f64>,
) -> GridCell {
    let last_global = state
        .history
        .rows()
        .iter()
        .rev()
        .find(|r| r.client == crate::metrics::GLOBAL_CLIENT);
    GridCell {
        index,
        assignments,
        seed,
        final_loss: last_global.and_then(|r| r.loss),
        best_score: last_global.and_then(|r| r.best_score),
        calls_used: last_global.map(|r| r.calls_used).unwrap_or(0),
        history: state.history,
    }
}

fn write_summary(dir: &Path, grid: &[(String, Vec<toml::Value>)], cells: &[GridCell]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::from("cell,seed");
    for (key, _) in grid {
        out.push(',');
        out.push_str(key);
    }
    out.push_str(",final_loss,best_score,calls_used\n");
    for cell in cells {
        out.push_str(&format!("{},{}", cell.index, cell.seed));
        for (_, value) in &cell.assignments {
            out.push(',');
            out.push_str(value.to_string().trim_matches('"'));
        }
        let loss = cell.final_loss.map(|v| v.to_string()).unwrap_or_default();
        let best = cell.best_score.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(",{loss},{best},{}\n", cell.calls_used));
    }
    std::fs::write(dir.join("summary.csv"), out)?;
    Ok(())
}

fn lookup_path<'a>(tree: &'a toml::Value, path: &str) -> Option<&'a toml::Value> {
    let mut node = tree;
    for segment in path.split('.') {
        node = node.as_table()?.get(segment)?;
    }
    Some(node)
}

fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut node = tree;
    let segments: Vec<&str> = path.split('.').collect();
    for segment in &segments[..segments.len() - 1] {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*segment))
            .ok_or_else(|| Error::InvalidArgument(format!("invalid grid key `{path}`")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::InvalidArgument(format!("invalid grid key `{path}`")))?;
    let last = segments[segments.len() - 1];
    if !table.contains_key(last) {
        return Err(Error::InvalidArgument(format!("invalid grid key `{path}`")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}
