//! Experiment reports: one CSV row per (method, run), and a JSON document
//! with per-method summaries and metadata.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use anyhow::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub run: usize,
    pub seed: u64,
    pub consensus: usize,
    pub time_s: f64,
    pub converged: bool,
    pub tainted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_consensus: f64,
    pub mean_time_s: f64,
    pub runs: Vec<RunRecord>,
}

impl MethodSummary {
    pub fn new(method: String) -> Self {
        Self {
            method,
            mean_consensus: 0.0,
            mean_time_s: 0.0,
            runs: Vec::new(),
        }
    }

    /// Fills in the means from the runs.
    pub fn finish(&mut self) {
        let n = self.runs.len().max(1) as f64;
        self.mean_consensus = self.runs.iter().map(|r| r.consensus as f64).sum::<f64>() / n;
        self.mean_time_s = self.runs.iter().map(|r| r.time_s).sum::<f64>() / n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub profile: String,
    pub num_data: usize,
    pub model_dim: usize,
    pub epsilon: f64,
    pub master_seed: u64,
    pub version: String,
    /// Resolved configuration, key by key.
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: Metadata,
    pub methods: Vec<MethodSummary>,
}

impl ExperimentReport {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.methods.iter().flat_map(|m| &m.runs)
    }

    pub fn all_converged(&self) -> bool {
        self.records().all(|r| r.converged)
    }

    /// Zeroes every wall-time field.
    pub fn without_times(&self) -> Self {
        let mut out = self.clone();
        for m in &mut out.methods {
            m.mean_time_s = 0.0;
            for r in &mut m.runs {
                r.time_s = 0.0;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.records() {
            w.serialize(r)?;
        }
        // A header is still wanted when there are no rows.
        if self.records().next().is_none() {
            w.write_record(["method", "run", "seed", "consensus", "time_s", "converged", "tainted"])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_csv(input: impl Read) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
