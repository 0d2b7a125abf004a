use std::path::Path;
use std::process::{Command, Output};

use pcomb_bench::{read_csv, sweep_file, Algo, Object};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcomb-bench"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn wait_free_heap_is_a_usage_error() {
    let out = bench(&["--algo", "pwfcomb", "--object", "heap", "--ops", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Heap"));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(bench(&["--algo", "flat"]).status.code(), Some(2));
    assert_eq!(bench(&["--threads", "0", "--ops", "10"]).status.code(), Some(2));
    assert_eq!(bench(&["--sweep", "1,2", "--ops", "10"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_one_file_per_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&[
        "--algo",
        "pbcomb",
        "--object",
        "queue",
        "--backend",
        "model",
        "--ops",
        "400",
        "--max-work",
        "0",
        "--sweep",
        "1,2,4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for t in [1, 2, 4] {
        let path = dir.path().join(sweep_file(t));
        assert_eq!(path.file_name().unwrap(), format!("bench_t{t}.csv").as_str());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 11);
        let rows = read_csv(&path).unwrap();
        assert_eq!(rows.len(), 10);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(
                (r.algo, r.object, r.threads, r.run),
                (Algo::Pbcomb, Object::Queue, t, i)
            );
            assert!(r.throughput > 0.0 && r.pwb_per_op > 0.0);
            assert!(r.combining_degree.unwrap() >= 1.0);
        }
    }
}

#[test]
fn without_out_the_csv_goes_to_stdout() {
    let out = bench(&[
        "--algo",
        "lock-baseline",
        "--object",
        "stack",
        "--ops",
        "1000",
        "--runs",
        "3",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("algo,object,threads,run,throughput,"));
    assert!(lines[1].starts_with("lock-baseline,stack,1,0,"));
    assert!(lines[1].ends_with(','), "no combining degree for the baseline");
}

#[test]
fn default_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["--ops", "100", "--runs", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(Path::new(&dir.path().join("bench.csv")).exists());
}
