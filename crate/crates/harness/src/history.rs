//! Histories of invocations, responses, crashes and recoveries.

use std::fmt;

use serde::{Deserialize, Serialize};

use pcomb::record::ARG_WORDS;
use pcomb::Call;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Invoke,
    Respond,
    Crash,
    RecoverInvoke,
    RecoverRespond,
}

/// One history event, in the shape written to trace files.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub thread: Option<usize>,
    pub kind: EventKind,
    pub op: Option<u64>,
    pub args: Option<[u64; ARG_WORDS]>,
    pub seq: Option<u64>,
    pub value: Option<u64>,
}

impl Event {
    pub fn call(step: usize, thread: usize, kind: EventKind, call: &Call) -> Self {
        Event {
            step,
            thread: Some(thread),
            kind,
            op: Some(call.func),
            args: Some(call.args),
            seq: Some(call.seq),
            value: None,
        }
    }

    pub fn response(step: usize, thread: usize, kind: EventKind, seq: u64, value: u64) -> Self {
        Event {
            step,
            thread: Some(thread),
            kind,
            op: None,
            args: None,
            seq: Some(seq),
            value: Some(value),
        }
    }

    pub fn crash(step: usize) -> Self {
        Event {
            step,
            thread: None,
            kind: EventKind::Crash,
            op: None,
            args: None,
            seq: None,
            value: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History {
    pub events: Vec<Event>,
}

impl History {
    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn crashes(&self) -> usize {
        self.events.iter().filter(|e| e.kind == EventKind::Crash).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self, serde_json::Error> {
        let events = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(History { events })
    }

    /// The events without step numbers, for comparing interleavings.
    pub fn shape(&self) -> Vec<Event> {
        self.events.iter().map(|e| Event { step: 0, ..e.clone() }).collect()
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            write!(f, "{:>5} ", e.step)?;
            match e.kind {
                EventKind::Crash => writeln!(f, "crash")?,
                EventKind::Invoke | EventKind::RecoverInvoke => writeln!(
                    f,
                    "t{} {:?} op={} arg={} seq={}",
                    e.thread.unwrap_or(0),
                    e.kind,
                    e.op.unwrap_or(0),
                    e.args.map_or(0, |a| a[0]),
                    e.seq.unwrap_or(0)
                )?,
                EventKind::Respond | EventKind::RecoverRespond => writeln!(
                    f,
                    "t{} {:?} seq={} -> {}",
                    e.thread.unwrap_or(0),
                    e.kind,
                    e.seq.unwrap_or(0),
                    e.value.unwrap_or(0)
                )?,
            }
        }
        Ok(())
    }
}
