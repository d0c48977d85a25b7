//! Simulation traces and their line-delimited JSON form.
//!
//! A trace file starts with one header record carrying the scenario, then
//! one record per event:
//!
//! ```text
//! {"kind":"header","version":1,"scenario":{...}}
//! {"time":0,"stage":0,"tb":0,"kind":"scheduled","tile":[0,0,0],"wave":1}
//! {"time":6,"stage":0,"tb":0,"kind":"post","dep":0,"sem":0,"tile":[0,0,0]}
//! {"time":6,"stage":0,"tb":0,"kind":"finished"}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::gpu::TileCoord;
use crate::scenario::{Mode, Scenario};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// The block got a slot and drew `tile` from its stage counter.
    Scheduled {
        tile: TileCoord,
        wave: u64,
    },
    WaitBegin {
        dep: usize,
        sem: usize,
        expected: u64,
        k_step: u32,
    },
    WaitEnd {
        dep: usize,
        sem: usize,
        expected: u64,
        k_step: u32,
    },
    Post {
        dep: usize,
        sem: usize,
        tile: TileCoord,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub time: u64,
    pub stage: usize,
    /// Position of the block in its stage's issue sequence.
    pub tb: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimTrace {
    pub events: Vec<Event>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn end_time(&self) -> u64 {
        self.events.last().map_or(0, |e| e.time)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "header")]
struct Header {
    version: u32,
    mode: Mode,
    scenario: Scenario,
}

pub fn write_jsonl<W: Write>(mut out: W, scenario: &Scenario, trace: &SimTrace) -> Result<(), TraceError> {
    let header = Header { version: TRACE_VERSION, mode: scenario.mode, scenario: scenario.clone() };
    let line = serde_json::to_string(&header).map_err(|e| parse_err(0, e))?;
    writeln!(out, "{line}")?;
    for event in &trace.events {
        let line = serde_json::to_string(event).map_err(|e| parse_err(0, e))?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<(Scenario, SimTrace), TraceError> {
    let mut lines = input.lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            None => return Err(TraceError::MissingHeader),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
            }
        }
    };
    if header.version != TRACE_VERSION {
        return Err(TraceError::Parse { line: 1, message: format!("unsupported trace version {}", header.version) });
    }
    let mut scenario = header.scenario;
    scenario.mode = header.mode;
    let mut events = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?);
    }
    Ok((scenario, SimTrace { events }))
}

fn parse_err(line: usize, e: serde_json::Error) -> TraceError {
    TraceError::Parse { line, message: e.to_string() }
}
