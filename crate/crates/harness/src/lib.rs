//! Deterministic scheduling, crash injection and correctness checking for
//! step-machine implementations of recoverable objects.

pub mod check;
pub mod explore;
pub mod history;
pub mod oracle;
pub mod persist;
pub mod scenario;
pub mod workload;
pub mod world;

pub use check::{check_detectable, check_linearizable, operations, CheckError, OpId, Verdict};
pub use explore::{
    base_schedules, crash_every_step, crash_suite, enumerate_crash_points, explore, judge, random_suite, EnumConfig,
    EnumerateError, ExploreReport, SuiteReport,
};
pub use history::{Event, EventKind, History};
pub use oracle::{CounterOracle, FloatOracle, HeapOracle, Oracle, QueueOracle, StackOracle};
pub use world::{run_schedule, CrashPlan, Directive, Nested, Run, Schedule, Selector, Target, Trigger, World};
