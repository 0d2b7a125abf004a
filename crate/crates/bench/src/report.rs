use std::fs::File;
use std::io;
use std::path::Path;

use pcomb::pmem::Counts;
use serde::{Deserialize, Serialize};

use crate::config::{Algo, BenchConfig, BenchError, Object};

/// One CSV data row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub algo: Algo,
    pub object: Object,
    pub threads: usize,
    pub run: usize,
    pub throughput: f64,
    pub pwb_per_op: f64,
    pub pfence_per_op: f64,
    pub psync_per_op: f64,
    /// Requests per combining round; empty for the lock baseline.
    pub combining_degree: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub row: Row,
    pub ops: u64,
    pub counts: Counts,
    pub rounds: u64,
    pub served: u64,
    pub final_state: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub runs: Vec<RunResult>,
}

/// Arithmetic means over the runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub throughput: f64,
    pub pwb_per_op: f64,
    pub pfence_per_op: f64,
    pub psync_per_op: f64,
    pub combining_degree: Option<f64>,
}

impl BenchReport {
    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.runs.iter().map(|r| &r.row)
    }

    pub fn mean(&self) -> Summary {
        let k = self.runs.len().max(1) as f64;
        let avg = |f: fn(&Row) -> f64| self.rows().map(f).sum::<f64>() / k;
        let degrees: Option<Vec<f64>> = self.rows().map(|r| r.combining_degree).collect();
        Summary {
            throughput: avg(|r| r.throughput),
            pwb_per_op: avg(|r| r.pwb_per_op),
            pfence_per_op: avg(|r| r.pfence_per_op),
            psync_per_op: avg(|r| r.psync_per_op),
            combining_degree: degrees.filter(|d| !d.is_empty()).map(|d| d.iter().sum::<f64>() / k),
        }
    }
}

pub fn write_csv<W: io::Write>(report: &BenchReport, w: W) -> Result<(), BenchError> {
    let mut wr = csv::Writer::from_writer(w);
    for row in report.rows() {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes one header row and one row per run to `path`.
pub fn emit_csv(report: &BenchReport, path: &Path) -> Result<(), BenchError> {
    write_csv(report, File::create(path)?)
}

pub fn read_csv(path: &Path) -> Result<Vec<Row>, BenchError> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// File name of one thread count in a sweep.
pub fn sweep_file(threads: usize) -> String {
    format!("bench_t{threads}.csv")
}
