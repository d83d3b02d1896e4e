//! Per-round experiment metrics and their CSV form.

use std::path::Path;

use crate::error::Result;

/// Client tag for the aggregate row.
pub const GLOBAL_CLIENT: &str = "global";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    /// Client id as a string, or `"global"` for the aggregate row.
    pub client: String,
    /// Mean training loss observed this round; empty when the client could
    /// not afford a single iteration.
    pub loss: Option<f64>,
    /// Best score (higher is better) observed so far.
    pub best_score: Option<f64>,
    pub calls_used: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn new() -> Self {
        MetricsTable::default()
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows equal field-by-field except wall-clock timing, which is not
    /// reproducible across runs.
    pub fn rows_equal_ignoring_wall(&self, other: &MetricsTable) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(other.rows.iter()).all(|(a, b)| {
                a.round == b.round
                    && a.client == b.client
                    && a.loss == b.loss
                    && a.best_score == b.best_score
                    && a.calls_used == b.calls_used
            })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("round,client_id,loss,best_score,calls_used,wall_ms\n");
        for row in &self.rows {
            let loss = row.loss.map(|v| v.to_string()).unwrap_or_default();
            let best = row.best_score.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.round, row.client, loss, best, row.calls_used, row.wall_ms
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Sanity checks over the whole table: rounds nondecreasing and
    /// calls_used nondecreasing per client.
    pub fn check_invariants(&self) -> bool {
        let mut last_round = 0u64;
        let mut last_calls: std::collections::HashMap<&str, u64> = Default::default();
        for row in &self.rows {
            if row.round < last_round {
                return false;
            }
            last_round = row.round;
            let entry = last_calls.entry(row.client.as_str()).or_insert(0);
            if row.calls_used < *entry {
                return false;
            }
            *entry = row.calls_used;
        }
        true
    }
}

/// Drop the wall_ms column from a rendered CSV, for byte-level comparisons
/// between replayed runs.
pub fn csv_without_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(idx) => &line[..idx],
            None => line,
        })
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape_and_masking() {
        let mut table = MetricsTable::new();
        table.push(MetricsRow {
            round: 0,
            client: "0".into(),
            loss: Some(1.5),
            best_score: Some(-1.5),
            calls_used: 20,
            wall_ms: 3,
        });
        table.push(MetricsRow {
            round: 0,
            client: GLOBAL_CLIENT.into(),
            loss: None,
            best_score: None,
            calls_used: 20,
            wall_ms: 9,
        });
        let csv = table.to_csv_string();
        assert_eq!(
            csv,
            "round,client_id,loss,best_score,calls_used,wall_ms\n0,0,1.5,-1.5,20,3\n0,global,,,20,9\n"
        );
        assert_eq!(
            csv_without_wall_ms(&csv),
            "round,client_id,loss,best_score,calls_used\n0,0,1.5,-1.5,20\n0,global,,,20\n"
        );
        assert!(table.check_invariants());
    }

    #[test]
    fn invariant_check_catches_regressing_calls() {
        let mut table = MetricsTable::new();
        for (round, calls) in [(0u64, 10u64), (1, 5)] {
            table.push(MetricsRow {
                round,
                client: "0".into(),
                loss: None,
                best_score: None,
                calls_used: calls,
                wall_ms: 0,
            });
        }
        assert!(!table.check_invariants());
    }
}
