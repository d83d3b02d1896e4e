//! HTTP client for a remote loss oracle.
//!
//! Wire protocol: `POST {endpoint}/evaluate` with a JSON body
//! `{"task_id": ..., "inputs": [...]}`; the service answers
//! `{"losses": [...]}` with exactly one loss per input, in order.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{CallBudget, LossValue, OracleInput};
use crate::scalar::Real;
use crate::vector::ParamVector;

/// Env var overriding the request timeout, in milliseconds.
pub const TIMEOUT_ENV: &str = "FEDZO_ORACLE_TIMEOUT_MS";
const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum WireInput {
    Continuous { continuous: Vec<f64> },
    Discrete { tokens: Vec<u32>, sample_id: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub task_id: String,
    pub inputs: Vec<WireInput>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireResponse {
    pub losses: Vec<f64>,
}

impl<T: Real> From<&OracleInput<T>> for WireInput {
    fn from(input: &OracleInput<T>) -> Self {
        match input {
            OracleInput::Continuous(v) => WireInput::Continuous {
                continuous: v.to_f64_vec(),
            },
            OracleInput::Discrete { tokens, sample_id } => WireInput::Discrete {
                tokens: tokens.clone(),
                sample_id: *sample_id,
            },
        }
    }
}

/// Client for one remote oracle endpoint.
pub struct RemoteOracleClient {
    endpoint: String,
    task_id: String,
    bearer_token: Option<String>,
    agent: ureq::Agent,
}

impl RemoteOracleClient {
    /// `endpoint` is the service base URL; `/evaluate` is appended per call.
    pub fn new(endpoint: impl Into<String>, task_id: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, task_id, timeout_from_env())
    }

    pub fn with_timeout(
        endpoint: impl Into<String>,
        task_id: impl Into<String>,
        timeout: Duration,
    ) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(timeout)
            .timeout(timeout)
            .build();
        RemoteOracleClient {
            endpoint: endpoint.into(),
            task_id: task_id.into(),
            bearer_token: None,
            agent,
        }
    }

    pub fn with_bearer_token(mut self, token: impl Into<String>) -> Self {
        self.bearer_token = Some(token.into());
        self
    }

    fn url(&self) -> String {
        format!("{}/evaluate", self.endpoint.trim_end_matches('/'))
    }

    fn post(&self, request: &WireRequest) -> Result<WireResponse> {
        let body =
            serde_json::to_string(request).map_err(|e| Error::RemoteMalformed(e.to_string()))?;
        let mut req = self
            .agent
            .post(&self.url())
            .set("Content-Type", "application/json");
        if let Some(token) = &self.bearer_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let response = match req.send_string(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => return Err(Error::RemoteStatus(code)),
            Err(ureq::Error::Transport(t)) => return Err(Error::RemoteTransport(t.to_string())),
        };
        let text = response
            .into_string()
            .map_err(|e| Error::RemoteTransport(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::RemoteMalformed(e.to_string()))
    }

    /// POST a batch and enforce the one-loss-per-input contract. Does not
    /// touch any budget; callers account for calls.
    pub fn fetch_losses(&self, inputs: Vec<WireInput>) -> Result<Vec<f64>> {
        let expected = inputs.len();
        let request = WireRequest {
            task_id: self.task_id.clone(),
            inputs,
        };
        let response = self.post(&request)?;
        if response.losses.len() != expected {
            return Err(Error::RemoteMalformed(format!(
                "expected {expected} losses, got {}",
                response.losses.len()
            )));
        }
        Ok(response.losses)
    }
}

/// Adapter exposing a remote endpoint through the [`Oracle`] trait; each
/// `loss` call is a single-input request, so the standard `evaluate` wrapper
/// accounts one budget unit per loss.
pub struct RemoteOracle {
    client: RemoteOracleClient,
}

impl RemoteOracle {
    pub fn new(client: RemoteOracleClient) -> Self {
        RemoteOracle { client }
    }
}

impl<T: Real> crate::oracle::Oracle<T> for RemoteOracle {
    fn loss(&self, input: &crate::oracle::OracleInput<T>) -> Result<T> {
        let losses = self.client.fetch_losses(vec![WireInput::from(input)])?;
        let value = T::from_f64_lossy(losses[0]);
        if !value.is_finite() {
            return Err(Error::RemoteMalformed("non-finite loss".into()));
        }
        Ok(value)
    }
}

fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.parse::<u64>().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

/// Evaluate a batch against the remote oracle.
///
/// The budget is reserved only after a well-formed response arrives, so
/// transport and format failures leave the ledger untouched; exhaustion is
/// checked before any network traffic.
pub fn remote_evaluate<T: Real>(
    client: &RemoteOracleClient,
    batch: &[OracleInput<T>],
    budget: &CallBudget,
) -> Result<Vec<LossValue<T>>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("remote batch is empty".into()));
    }
    let n = batch.len() as u64;
    if budget.used() + n > budget.limit() {
        return Err(Error::BudgetExhausted {
            used: budget.used(),
            limit: budget.limit(),
            requested: n,
        });
    }
    let raw = client.fetch_losses(batch.iter().map(WireInput::from).collect())?;
    let mut losses = Vec::with_capacity(raw.len());
    for value in raw {
        losses.push(LossValue::new(T::from_f64_lossy(value))?);
    }
    budget.try_consume(n)?;
    Ok(losses)
}

/// Convenience adapter: evaluate a single continuous vector remotely.
pub fn remote_loss<T: Real>(
    client: &RemoteOracleClient,
    theta: &ParamVector<T>,
    budget: &CallBudget,
) -> Result<LossValue<T>> {
    let input = OracleInput::continuous(theta.clone())?;
    Ok(remote_evaluate(client, std::slice::from_ref(&input), budget)?
        .pop()
        .expect("one loss for one input"))
}
