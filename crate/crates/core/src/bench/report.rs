//! Benchmark report assembly and serialization.
//!
//! Reports are bit-reproducible from `(config, seed)`: the aggregate CSV,
//! long-format CSV and JSON summary contain no wall-clock data. Timings are
//! collected separately and written to their own sidecar file.

use crate::bench::metrics::{mean_std, quartiles};
use crate::error::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub case: String,
    pub method: String,
    pub metric: String,
    pub n_repeats: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Seed that reproduces this row's repeats.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RawRow {
    pub case: String,
    pub method: String,
    pub metric: String,
    pub repeat: usize,
    pub seed: u64,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub experiment: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub rows: Vec<MetricRow>,
    pub raw: Vec<RawRow>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.to_string().as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl BenchmarkReport {
    pub fn new(experiment: &str, config: serde_json::Value) -> Self {
        Self {
            experiment: experiment.to_string(),
            config_hash: config_hash(&config),
            config,
            rows: Vec::new(),
            raw: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Aggregate one metric over its repeats and record both the summary row
    /// and the per-repeat raw rows.
    pub fn add_metric(
        &mut self,
        case: &str,
        method: &str,
        metric: &str,
        seed: u64,
        values: &[f64],
    ) {
        let (mean, std) = mean_std(values);
        let (q1, median, q3) = quartiles(values);
        self.rows.push(MetricRow {
            case: case.to_string(),
            method: method.to_string(),
            metric: metric.to_string(),
            n_repeats: values.len(),
            mean,
            std,
            median,
            q1,
            q3,
            seed,
        });
        for (i, &v) in values.iter().enumerate() {
            self.raw.push(RawRow {
                case: case.to_string(),
                method: method.to_string(),
                metric: metric.to_string(),
                repeat: i,
                seed,
                value: v,
            });
        }
    }

    pub fn add_timing(&mut self, label: &str, seconds: f64) {
        self.timings.push((label.to_string(), seconds));
    }

    pub fn median_of(&self, case: &str, method: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.method == method && r.metric == metric)
            .map(|r| r.median)
    }

    pub fn mean_of(&self, case: &str, method: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.method == method && r.metric == metric)
            .map(|r| r.mean)
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.case, &a.method, &a.metric).cmp(&(&b.case, &b.method, &b.metric))
        });
        self.raw.sort_by(|a, b| {
            (&a.case, &a.method, &a.metric, a.repeat).cmp(&(
                &b.case,
                &b.method,
                &b.metric,
                b.repeat,
            ))
        });
    }

    pub fn to_csv(&mut self) -> String {
        self.sort();
        let mut out = String::from("case,method,metric,n_repeats,mean,std,median,q1,q3,seed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.case, r.method, r.metric, r.n_repeats, r.mean, r.std, r.median, r.q1, r.q3,
                r.seed
            ));
        }
        out
    }

    /// Plot-ready long format: one row per repeat.
    pub fn to_long_csv(&mut self) -> String {
        self.sort();
        let mut out = String::from("experiment,case,method,metric,repeat,seed,value\n");
        for r in &self.raw {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.experiment, r.case, r.method, r.metric, r.repeat, r.seed, r.value
            ));
        }
        out
    }

    pub fn to_json(&mut self) -> String {
        self.sort();
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn timings_csv(&self) -> String {
        let mut out = String::from("label,seconds\n");
        for (label, secs) in &self.timings {
            out.push_str(&format!("{label},{secs:.3}\n"));
        }
        out
    }

    /// Write `<stem>.csv`, `<stem>_long.csv`, `<stem>.json` and, when any
    /// timings were recorded, `<stem>_timings.csv`.
    pub fn write_all(&mut self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}_long.csv")), self.to_long_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        if !self.timings.is_empty() {
            std::fs::write(dir.join(format!("{stem}_timings.csv")), self.timings_csv())?;
        }
        Ok(())
    }
}
