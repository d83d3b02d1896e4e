//! Experiment configuration: TOML schema, defaults, and validation.
//!
//! Unknown keys are rejected at parse time; validation errors carry the
//! offending field path. Defaults follow the reference settings: SPSA lr 0.5
//! with momentum 0.9, PGE sample size 10 / prompt length 10 / lr 1e-4, BO
//! dimension 10 with batch size 10, and an 8000-call budget per client.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: u64 = 8000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub federation: FederationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    /// Synthetic dataset size for data-bearing tasks.
    #[serde(default = "default_dataset_size")]
    pub dataset_size: u64,
    #[serde(default = "default_num_classes")]
    pub num_classes: u32,
}

fn default_dataset_size() -> u64 {
    512
}

fn default_num_classes() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// quadratic | rosenbrock | logistic-synthetic | hidden-prompt | remote
    pub kind: String,
    /// Input dimension for continuous oracles.
    pub dim: usize,
    pub curvature: f64,
    /// Explicit per-client quadratic centers; drawn from the seed when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    /// Box half-width for seeded center draws.
    pub center_scale: f64,
    /// Vocabulary size for discrete oracles.
    pub vocab_size: u32,
    /// Explicit hidden-prompt target; drawn from the seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<u32>>,
    pub penalty: f64,
    /// Remote oracle base URL.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub task_id: String,
    /// Remote batch size knob.
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bearer_token: Option<String>,
    /// identity | additive-clip | affine
    pub generator: String,
    pub epsilon: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// When > 0 and the generator is non-identity, each client's oracle
    /// couples the prompt with this many seeded raw samples.
    pub coupling_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: "quadratic".into(),
            dim: 10,
            curvature: 1.0,
            centers: None,
            center_scale: 0.5,
            vocab_size: 200,
            target: None,
            penalty: 1.0,
            endpoint: None,
            task_id: "default".into(),
            batch_size: 64,
            bearer_token: None,
            generator: "identity".into(),
            epsilon: 1.0,
            clip_lo: 0.0,
            clip_hi: 1.0,
            coupling_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spsa: Option<SpsaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pge: Option<PgeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bo: Option<BoSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpsaSection {
    pub alpha0: f64,
    pub lr0: f64,
    pub momentum: f64,
    pub gamma_a: f64,
    pub gamma_lr: f64,
    /// plain | gc
    pub variant: String,
    pub n_probes: usize,
}

impl Default for SpsaSection {
    fn default() -> Self {
        SpsaSection {
            alpha0: 0.01,
            lr0: 0.5,
            momentum: 0.9,
            gamma_a: 0.0,
            gamma_lr: 0.0,
            variant: "plain".into(),
            n_probes: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PgeSection {
    pub sample_size: usize,
    pub prompt_length: usize,
    pub lr: f64,
    pub floor: f64,
    pub variance_reduced: bool,
}

impl Default for PgeSection {
    fn default() -> Self {
        PgeSection {
            sample_size: 10,
            prompt_length: 10,
            lr: 1e-4,
            floor: 1e-6,
            variance_reduced: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoSection {
    pub dim: usize,
    pub batch_size: usize,
    pub n_candidates: usize,
    pub lengthscale: f64,
    pub variance: f64,
    pub noise: f64,
    /// `[lo, hi]` applied to every search dimension.
    pub bounds: [f64; 2],
    /// When set, searched vectors are lifted through a frozen random
    /// projection into this oracle dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub project_dim: Option<usize>,
}

impl Default for BoSection {
    fn default() -> Self {
        BoSection {
            dim: 10,
            batch_size: 10,
            n_candidates: 256,
            lengthscale: 1.0,
            variance: 1.0,
            noise: 0.1,
            bounds: [-1.0, 1.0],
            project_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// iid | dirichlet | pathological
    pub strategy: String,
    pub concentration: f64,
    pub classes_per_client: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            strategy: "iid".into(),
            concentration: 0.3,
            classes_per_client: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub clients: usize,
    pub rounds: u64,
    pub local_iters: u64,
    /// uniform | sample-count
    pub aggregation: String,
    pub budget_per_client: u64,
    pub parallelism: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            clients: 5,
            rounds: 30,
            local_iters: 10,
            aggregation: "uniform".into(),
            budget_per_client: DEFAULT_BUDGET,
            parallelism: 1,
        }
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config_path(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn serialize_config(config: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::ConfigParse(e.to_string()))
}

const ORACLE_KINDS: &[&str] = &[
    "quadratic",
    "rosenbrock",
    "logistic-synthetic",
    "hidden-prompt",
    "remote",
];

impl ExperimentConfig {
    /// Full semantic validation with field-path errors.
    pub fn validate(&self) -> Result<()> {
        let chosen = [
            self.optimizer.spsa.is_some(),
            self.optimizer.pge.is_some(),
            self.optimizer.bo.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if chosen != 1 {
            return Err(Error::validation(
                "[optimizer]",
                "exactly one of spsa, pge, or bo must be configured",
            ));
        }

        if !ORACLE_KINDS.contains(&self.oracle.kind.as_str()) {
            return Err(Error::validation(
                "[oracle].kind",
                format!("unknown oracle kind `{}`", self.oracle.kind),
            ));
        }
        if self.oracle.dim == 0 {
            return Err(Error::validation("[oracle].dim", "must be >= 1"));
        }
        if !(self.oracle.curvature > 0.0) {
            return Err(Error::validation("[oracle].curvature", "must be > 0"));
        }
        if self.oracle.vocab_size < 2 {
            return Err(Error::validation("[oracle].vocab_size", "must be >= 2"));
        }
        if !(self.oracle.penalty > 0.0) {
            return Err(Error::validation("[oracle].penalty", "must be > 0"));
        }
        if self.oracle.kind == "remote" && self.oracle.endpoint.is_none() {
            return Err(Error::validation(
                "[oracle].endpoint",
                "required for the remote oracle",
            ));
        }
        if self.oracle.batch_size == 0 {
            return Err(Error::validation("[oracle].batch_size", "must be >= 1"));
        }
        match self.oracle.generator.as_str() {
            "identity" | "additive-clip" | "affine" => {}
            other => {
                return Err(Error::validation(
                    "[oracle].generator",
                    format!("unknown generator `{other}`"),
                ))
            }
        }
        if !(0.0..=1.0).contains(&self.oracle.epsilon) {
            return Err(Error::validation("[oracle].epsilon", "must lie in [0, 1]"));
        }
        if !(self.oracle.clip_lo < self.oracle.clip_hi) {
            return Err(Error::validation(
                "[oracle].clip_lo",
                "clip range must satisfy lo < hi",
            ));
        }
        if let Some(centers) = &self.oracle.centers {
            if centers.len() != self.federation.clients {
                return Err(Error::validation(
                    "[oracle].centers",
                    format!(
                        "need one center per client ({} != {})",
                        centers.len(),
                        self.federation.clients
                    ),
                ));
            }
            if centers.iter().any(|c| c.len() != self.oracle.dim) {
                return Err(Error::validation(
                    "[oracle].centers",
                    "center dimension must match [oracle].dim",
                ));
            }
        }

        if let Some(spsa) = &self.optimizer.spsa {
            if !(spsa.alpha0 > 0.0) {
                return Err(Error::validation("[optimizer.spsa].alpha0", "must be > 0"));
            }
            if !(spsa.lr0 > 0.0) {
                return Err(Error::validation("[optimizer.spsa].lr0", "must be > 0"));
            }
            if !(0.0..1.0).contains(&spsa.momentum) {
                return Err(Error::validation(
                    "[optimizer.spsa].momentum",
                    "must lie in [0, 1)",
                ));
            }
            if spsa.gamma_a < 0.0 || spsa.gamma_lr < 0.0 {
                return Err(Error::validation(
                    "[optimizer.spsa].gamma_a",
                    "decay exponents must be >= 0",
                ));
            }
            if spsa.n_probes == 0 {
                return Err(Error::validation("[optimizer.spsa].n_probes", "must be >= 1"));
            }
            if !matches!(spsa.variant.as_str(), "plain" | "gc") {
                return Err(Error::validation(
                    "[optimizer.spsa].variant",
                    format!("unknown variant `{}`", spsa.variant),
                ));
            }
            if self.oracle.kind == "hidden-prompt" {
                return Err(Error::validation(
                    "[oracle].kind",
                    "spsa needs a continuous oracle",
                ));
            }
        }
        if let Some(pge) = &self.optimizer.pge {
            if !(pge.lr > 0.0) {
                return Err(Error::validation("[optimizer.pge].lr", "must be > 0"));
            }
            if pge.prompt_length == 0 {
                return Err(Error::validation(
                    "[optimizer.pge].prompt_length",
                    "must be >= 1",
                ));
            }
            let min_samples = if pge.variance_reduced { 2 } else { 1 };
            if pge.sample_size < min_samples {
                return Err(Error::validation(
                    "[optimizer.pge].sample_size",
                    format!("must be >= {min_samples}"),
                ));
            }
            if !(pge.floor >= 0.0) || pge.floor * self.oracle.vocab_size as f64 >= 1.0 {
                return Err(Error::validation(
                    "[optimizer.pge].floor",
                    "must be >= 0 and feasible for the vocabulary size",
                ));
            }
            if !matches!(self.oracle.kind.as_str(), "hidden-prompt" | "remote") {
                return Err(Error::validation(
                    "[oracle].kind",
                    "pge needs a discrete oracle (hidden-prompt or remote)",
                ));
            }
            if let Some(target) = &self.oracle.target {
                if target.len() != pge.prompt_length {
                    return Err(Error::validation(
                        "[oracle].target",
                        "target length must equal [optimizer.pge].prompt_length",
                    ));
                }
                if target.iter().any(|&t| t >= self.oracle.vocab_size) {
                    return Err(Error::validation(
                        "[oracle].target",
                        "target tokens must be < [oracle].vocab_size",
                    ));
                }
            }
        }
        if let Some(bo) = &self.optimizer.bo {
            if bo.dim == 0 {
                return Err(Error::validation("[optimizer.bo].dim", "must be >= 1"));
            }
            if bo.batch_size == 0 {
                return Err(Error::validation("[optimizer.bo].batch_size", "must be >= 1"));
            }
            if bo.n_candidates == 0 {
                return Err(Error::validation(
                    "[optimizer.bo].n_candidates",
                    "must be >= 1",
                ));
            }
            if !(bo.lengthscale > 0.0) {
                return Err(Error::validation(
                    "[optimizer.bo].lengthscale",
                    "must be > 0",
                ));
            }
            if !(bo.variance > 0.0) {
                return Err(Error::validation("[optimizer.bo].variance", "must be > 0"));
            }
            if !(bo.noise >= 0.0) {
                return Err(Error::validation("[optimizer.bo].noise", "must be >= 0"));
            }
            if !(bo.bounds[0] < bo.bounds[1]) {
                return Err(Error::validation(
                    "[optimizer.bo].bounds",
                    "must satisfy lo < hi",
                ));
            }
            if let Some(project_dim) = bo.project_dim {
                if project_dim <= bo.dim {
                    return Err(Error::validation(
                        "[optimizer.bo].project_dim",
                        "must exceed [optimizer.bo].dim",
                    ));
                }
                if project_dim != self.oracle.dim {
                    return Err(Error::validation(
                        "[optimizer.bo].project_dim",
                        "must equal [oracle].dim",
                    ));
                }
            } else if self.oracle.kind != "hidden-prompt" && bo.dim != self.oracle.dim {
                return Err(Error::validation(
                    "[optimizer.bo].dim",
                    "must equal [oracle].dim unless project_dim is set",
                ));
            }
            if self.oracle.kind == "hidden-prompt" {
                return Err(Error::validation(
                    "[oracle].kind",
                    "bo needs a continuous oracle",
                ));
            }
        }

        match self.partition.strategy.as_str() {
            "iid" | "dirichlet" | "pathological" => {}
            other => {
                return Err(Error::validation(
                    "[partition].strategy",
                    format!("unknown strategy `{other}`"),
                ))
            }
        }
        if !(self.partition.concentration > 0.0) {
            return Err(Error::validation(
                "[partition].concentration",
                "must be > 0",
            ));
        }
        if self.partition.classes_per_client == 0
            || self.partition.classes_per_client > self.task.num_classes as usize
        {
            return Err(Error::validation(
                "[partition].classes_per_client",
                format!("must lie in [1, {}]", self.task.num_classes),
            ));
        }

        if self.federation.clients == 0 {
            return Err(Error::validation("[federation].clients", "must be >= 1"));
        }
        if self.federation.parallelism == 0 {
            return Err(Error::validation("[federation].parallelism", "must be >= 1"));
        }
        if !matches!(
            self.federation.aggregation.as_str(),
            "uniform" | "sample-count"
        ) {
            return Err(Error::validation(
                "[federation].aggregation",
                format!("unknown rule `{}`", self.federation.aggregation),
            ));
        }

        if self.task.num_classes == 0 {
            return Err(Error::validation("[task].num_classes", "must be >= 1"));
        }
        if self.oracle.kind == "logistic-synthetic" {
            if self.task.num_classes != 2 {
                return Err(Error::validation(
                    "[task].num_classes",
                    "logistic-synthetic is binary; set num_classes = 2",
                ));
            }
            if self.task.dataset_size == 0 {
                return Err(Error::validation("[task].dataset_size", "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_all_defaults() {
        let config = parse_config_str(
            r#"
            [task]
            name = "smoke"

            [optimizer.spsa]
            "#,
        )
        .unwrap();
        assert_eq!(config.federation.budget_per_client, 8000);
        assert_eq!(config.federation.clients, 5);
        let spsa = config.optimizer.spsa.as_ref().unwrap();
        assert_eq!(spsa.lr0, 0.5);
        assert_eq!(spsa.momentum, 0.9);
        assert_eq!(config.oracle.kind, "quadratic");
    }

    #[test]
    fn pge_defaults_match_reference_settings() {
        let config = parse_config_str(
            r#"
            [task]
            name = "tc"

            [oracle]
            kind = "hidden-prompt"
            vocab_size = 20

            [optimizer.pge]
            "#,
        )
        .unwrap();
        let pge = config.optimizer.pge.as_ref().unwrap();
        assert_eq!(pge.sample_size, 10);
        assert_eq!(pge.prompt_length, 10);
        assert_eq!(pge.lr, 1e-4);
        assert!(pge.variance_reduced);
    }

    #[test]
    fn bo_defaults_match_reference_settings() {
        let config = parse_config_str(
            r#"
            [task]
            name = "instr"

            [oracle]
            dim = 10

            [optimizer.bo]
            "#,
        )
        .unwrap();
        let bo = config.optimizer.bo.as_ref().unwrap();
        assert_eq!(bo.dim, 10);
        assert_eq!(bo.batch_size, 10);
        assert_eq!(bo.bounds, [-1.0, 1.0]);
    }

    #[test]
    fn negative_lr_names_the_field() {
        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [oracle]
            kind = "hidden-prompt"

            [optimizer.pge]
            lr = -1.0
            "#,
        )
        .unwrap_err();
        match err {
            Error::ConfigValidation { path, .. } => assert_eq!(path, "[optimizer.pge].lr"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_section_is_a_parse_error() {
        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [optimizer.spsa]

            [task]
            name = "y"
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str(
            r#"
            [task]
            name = "x"
            flavor = "spicy"

            [optimizer.spsa]
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_)));
    }

    #[test]
    fn zero_or_two_optimizers_rejected() {
        let err = parse_config_str("[task]\nname = \"x\"\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse(_) | Error::ConfigValidation { .. }));

        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [optimizer.spsa]

            [optimizer.pge]
            "#,
        )
        .unwrap_err();
        match err {
            Error::ConfigValidation { path, .. } => assert_eq!(path, "[optimizer]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_partition_strategy_names_the_field() {
        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [optimizer.spsa]

            [partition]
            strategy = "zigzag"
            "#,
        )
        .unwrap_err();
        match err {
            Error::ConfigValidation { path, .. } => assert_eq!(path, "[partition].strategy"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn round_trips_through_serialization() {
        let config = parse_config_str(
            r#"
            [task]
            name = "round-trip"

            [oracle]
            kind = "quadratic"
            dim = 3
            centers = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]

            [optimizer.spsa]
            lr0 = 0.25
            gamma_lr = 0.5

            [federation]
            clients = 2
            rounds = 4
            "#,
        )
        .unwrap();
        let text = serialize_config(&config).unwrap();
        let reparsed = parse_config_str(&text).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn optimizer_oracle_pairing_is_checked() {
        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [oracle]
            kind = "hidden-prompt"

            [optimizer.spsa]
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConfigValidation { .. }));

        let err = parse_config_str(
            r#"
            [task]
            name = "x"

            [optimizer.pge]
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConfigValidation { .. }));
    }
}
