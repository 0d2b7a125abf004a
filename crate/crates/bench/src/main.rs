use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pcomb_bench::{emit_csv, run_bench, sweep_file, write_csv, Algo, Backend, BenchConfig, BenchError, Object};

#[derive(Debug, Parser)]
#[command(
    name = "pcomb-bench",
    about = "Benchmark recoverable combining against a global-lock baseline"
)]
struct Cli {
    #[arg(long, value_enum, default_value = "pbcomb")]
    algo: Algo,
    #[arg(long, value_enum, default_value = "atomicfloat")]
    object: Object,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Total operations over all threads.
    #[arg(long, default_value_t = 10_000_000)]
    ops: u64,
    /// Upper bound of the dummy loop run between operations.
    #[arg(long, default_value_t = 512)]
    max_work: u64,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, value_enum, default_value = "counted-noop")]
    backend: Backend,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// AtomicFloat multiplier.
    #[arg(long, default_value_t = 1.0)]
    factor: f64,
    #[arg(long, default_value_t = 1024)]
    heap_capacity: usize,
    /// Directory for CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Thread counts to sweep, one CSV file each.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let base = BenchConfig {
        algo: cli.algo,
        object: cli.object,
        threads: cli.threads,
        total_ops: cli.ops,
        max_local_work: cli.max_work,
        runs: cli.runs,
        backend: cli.backend,
        seed: cli.seed,
        factor: cli.factor,
        heap_capacity: cli.heap_capacity,
    };
    let sweep = if cli.sweep.is_empty() {
        vec![cli.threads]
    } else {
        cli.sweep.clone()
    };
    let configs: Vec<BenchConfig> = sweep
        .iter()
        .map(|&threads| BenchConfig {
            threads,
            ..base.clone()
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    if !cli.sweep.is_empty() && cli.out.is_none() {
        return Err(BenchError::Invalid("--sweep needs --out".into()));
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
    }
    for c in &configs {
        let report = run_bench(c)?;
        let m = report.mean();
        eprintln!(
            "{:?} {:?} t={} ops/s={:.0} pwb/op={:.4} pfence/op={:.4} psync/op={:.4} degree={}",
            c.algo,
            c.object,
            c.threads,
            m.throughput,
            m.pwb_per_op,
            m.pfence_per_op,
            m.psync_per_op,
            m.combining_degree.map_or("-".into(), |d| format!("{d:.2}")),
        );
        match &cli.out {
            Some(dir) if !cli.sweep.is_empty() => emit_csv(&report, &dir.join(sweep_file(c.threads)))?,
            Some(dir) => emit_csv(&report, &dir.join("bench.csv"))?,
            None => write_csv(&report, std::io::stdout().lock())?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
