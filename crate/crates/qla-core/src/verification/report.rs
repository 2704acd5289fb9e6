//! Probe reports: the measurement grid, the verdict and the rule that
//! produced it, serialized so a reader can recompute pass/fail from the grid
//! alone.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// One measurement row: `x` is the scale T or the radius r depending on the
/// probe; `series` labels sub-reports (condition clauses, per-T tables,
/// auxiliary rates).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRow {
    pub series: String,
    pub x: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub reps: u64,
}

impl GridRow {
    pub fn new(series: impl Into<String>, x: f64, estimate: f64, stderr: f64, reps: u64) -> Self {
        Self {
            series: series.into(),
            x,
            estimate,
            stderr,
            reps,
        }
    }
}

/// Master seed and canonical config hash threaded through every probe.
#[derive(Clone, Debug, Default)]
pub struct ProbeContext {
    pub seed: u64,
    pub config_hash: String,
}

impl ProbeContext {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            seed,
            config_hash: config_hash.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub grid: Vec<GridRow>,
    pub verdict: Verdict,
    /// The decision rule, spelled out verbatim.
    pub rule: String,
}

impl ProbeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Flat tables for plotting, one per series, each with the header
    /// `T_or_r,estimate,stderr,reps`.
    pub fn csv_tables(&self) -> Vec<(String, String)> {
        let mut series_order: Vec<&str> = Vec::new();
        for row in &self.grid {
            if !series_order.contains(&row.series.as_str()) {
                series_order.push(&row.series);
            }
        }
        series_order
            .into_iter()
            .map(|s| {
                let mut body = String::from("T_or_r,estimate,stderr,reps\n");
                for row in self.grid.iter().filter(|r| r.series == s) {
                    body.push_str(&format!(
                        "{},{},{},{}\n",
                        row.x, row.estimate, row.stderr, row.reps
                    ));
                }
                (s.to_string(), body)
            })
            .collect()
    }

    /// All standard errors must be nonnegative and finite.
    pub fn stderrs_valid(&self) -> bool {
        self.grid
            .iter()
            .all(|r| r.stderr.is_finite() && r.stderr >= 0.0)
    }
}
