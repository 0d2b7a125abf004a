//! Synthetic throughput and persistence-cost benchmark for the combining
//! protocols and a global-lock baseline.

pub mod baseline;
pub mod config;
pub mod report;
pub mod run;
pub mod work;

pub use config::{Algo, Backend, BenchConfig, BenchError, Object, MODEL_OPS_CAP};
pub use report::{emit_csv, read_csv, sweep_file, write_csv, BenchReport, Row, RunResult, Summary};
pub use run::run_bench;
pub use work::local_work;
