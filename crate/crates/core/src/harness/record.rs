//! Result records and their CSV / JSON encodings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};

pub const RECORD_SCHEMA: u32 = 1;

/// Metric columns of the CSV encoding, in order. Records may leave any of
/// them empty; a metric outside this list is a programming error.
pub const METRIC_COLUMNS: &[&str] = &[
    "ratio",
    "quantile",
    "factor",
    "alpha",
    "tokens",
    "reduced_tokens",
    "qk_flops",
    "av_flops",
    "softmax_flops",
    "projection_flops",
    "total_flops",
    "attention_flop_ratio",
    "qk_flop_ratio",
    "output_error",
    "reconstruction_error",
    "score_mean",
    "score_std",
    "score_min",
    "score_max",
    "samples",
    "classes",
    "accuracy",
    "map",
    "evaluations",
    "trials",
    "mu",
    "sigma2",
    "band_mu",
    "band_sigma2",
    "cross_covariance",
    "max_cross_correlation",
    "predicted_mu",
    "predicted_sigma2",
    "simulated_mu",
    "simulated_sigma2",
    "mu_relative_error",
    "sigma2_relative_error",
    "delta_mu",
    "delta_sigma2",
    "r",
    "r_prime",
    "exact_condition",
    "first_order_condition",
    "cantelli_before",
    "cantelli_after",
];

const KEY_COLUMNS: &[&str] = &["experiment", "label", "config_hash", "version", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub schema: u32,
    pub experiment: String,
    pub label: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Per-band or per-class vectors; JSON only.
    #[serde(default)]
    pub details: BTreeMap<String, Vec<f64>>,
    pub wall_time_ms: f64,
}

impl ResultRecord {
    pub fn new(experiment: &str, label: impl Into<String>, config_hash: &str, seed: u64) -> Self {
        Self {
            schema: RECORD_SCHEMA,
            experiment: experiment.to_string(),
            label: label.into(),
            config_hash: config_hash.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            metrics: BTreeMap::new(),
            details: BTreeMap::new(),
            wall_time_ms: 0.0,
        }
    }

    /// Records a metric. Non-finite values are dropped with a warning so the
    /// JSON stays parseable.
    pub fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        debug_assert!(METRIC_COLUMNS.contains(&name), "metric {name} has no column");
        if value.is_finite() {
            self.metrics.insert(name.to_string(), value);
        } else {
            log::warn!("{}/{}: dropping non-finite {name}", self.experiment, self.label);
        }
        self
    }

    pub fn detail(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        if values.iter().all(|v| v.is_finite()) {
            self.details.insert(name.to_string(), values);
        } else {
            log::warn!("{}/{}: dropping non-finite detail {name}", self.experiment, self.label);
        }
        self
    }

    /// Equality ignoring wall time.
    pub fn same_result(&self, other: &ResultRecord) -> bool {
        let mut a = self.clone();
        a.wall_time_ms = other.wall_time_ms;
        &a == other
    }
}

/// CSV header plus one row per record. Wall time is left out so reruns are
/// byte-identical.
pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(KEY_COLUMNS.iter().chain(METRIC_COLUMNS)).map_err(err)?;
    for r in records {
        let mut row = vec![
            r.experiment.clone(),
            r.label.clone(),
            r.config_hash.clone(),
            r.version.clone(),
            r.seed.to_string(),
        ];
        row.extend(
            METRIC_COLUMNS
                .iter()
                .map(|c| r.metrics.get(*c).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_json<W: Write>(records: &[ResultRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, records).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_results<W: Write>(records: &[ResultRecord], format: OutputFormat, out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => write_csv(records, out),
        OutputFormat::Json => write_json(records, out),
    }
}

/// Writes to `path`, or stdout when `None`.
pub fn emit_results(records: &[ResultRecord], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            write_results(records, format, std::io::BufWriter::new(file))
        }
        None => write_results(records, format, std::io::stdout().lock()),
    }
}

pub fn read_json(text: &str) -> Result<Vec<ResultRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
}
