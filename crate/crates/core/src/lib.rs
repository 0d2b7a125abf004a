//! Recoverable software combining over an emulated persistent memory.
//!
//! The crate provides the persistency model ([`pmem`]), the memory interface
//! algorithms are written against ([`memory`]), the blocking ([`pbcomb`]) and
//! wait-free ([`pwfcomb`]) combining protocols, and data structures built on
//! them ([`structures`]).

pub mod machine;
pub mod memory;
pub mod object;
pub mod pbcomb;
pub mod pmem;
pub mod pwfcomb;
pub mod record;
pub mod structures;

use thiserror::Error;

pub use machine::{combining_degree, drive, execute, Call, CombiningStats, Recoverable, Step};
pub use memory::{LiveBackend, LiveMemory, Memory, ModelMemory, ShadowEvent};
pub use object::{ApplyCtx, SeqObject};
pub use pbcomb::{PbComb, PbConfig, PbMutation};
pub use pwfcomb::{PwfComb, PwfConfig, PwfMutation};
pub use record::{ACK, BOT, FULL};

/// Rejected construction parameters.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{n} threads requested; between 1 and {max} are supported")]
    Threads { n: usize, max: usize },
    #[error("object state of {words} words exceeds the {max}-word limit")]
    StateTooLarge { words: usize, max: usize },
    #[error("initial state has {got} words, object declares {expected}")]
    InitialState { expected: usize, got: usize },
    #[error("capacity must be at least 1, got {0}")]
    Capacity(usize),
}
