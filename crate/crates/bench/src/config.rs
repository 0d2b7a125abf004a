use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Bcomb,
    Pbcomb,
    Pwfcomb,
    LockBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Object {
    #[value(name = "atomicfloat")]
    AtomicFloat,
    Queue,
    Stack,
    Heap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Real threads, persistence instructions only counted.
    CountedNoop,
    /// The persistency emulator under a seeded random scheduler. Throughput is
    /// measured against simulated time, so runs are reproducible.
    Model,
    /// Real threads with cache-line write-back and store fences where available.
    Hardware,
}

/// Largest workload run on the model backend.
pub const MODEL_OPS_CAP: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub algo: Algo,
    pub object: Object,
    pub threads: usize,
    pub total_ops: u64,
    pub max_local_work: u64,
    pub runs: usize,
    pub backend: Backend,
    pub seed: u64,
    /// AtomicFloat multiplier.
    pub factor: f64,
    /// Heap capacity.
    pub heap_capacity: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            algo: Algo::Pbcomb,
            object: Object::AtomicFloat,
            threads: 1,
            total_ops: 10_000_000,
            max_local_work: 512,
            runs: 10,
            backend: Backend::CountedNoop,
            seed: 1,
            factor: 1.0,
            heap_capacity: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{algo:?} does not support the {object:?} object")]
    Unsupported { algo: Algo, object: Object },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("worker thread failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Config(#[from] pcomb::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// True for errors in what the user asked for, as opposed to I/O failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            BenchError::Unsupported { .. } | BenchError::Invalid(_) | BenchError::Config(_)
        )
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.threads == 0 {
            return Err(BenchError::Invalid("threads must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(BenchError::Invalid("runs must be at least 1".into()));
        }
        if self.algo == Algo::Pwfcomb && self.object == Object::Heap {
            return Err(BenchError::Unsupported {
                algo: self.algo,
                object: self.object,
            });
        }
        if self.object == Object::Heap && self.heap_capacity == 0 {
            return Err(BenchError::Invalid("heap capacity must be at least 1".into()));
        }
        Ok(())
    }

    /// Operations each thread performs.
    pub fn ops_per_thread(&self) -> u64 {
        let total = match self.backend {
            Backend::Model => self.total_ops.min(MODEL_OPS_CAP),
            _ => self.total_ops,
        };
        total / self.threads as u64
    }
}
