//! JSON-lines trace format.
//!
//! A trace is one header line, then per executed slot one slot line followed
//! by one robot line per robot alive in that slot. Robot lines carry the
//! state at the slot's start boundary and the control applied over the slot.
//! Slot events happened within the slot: spawns, acceptances and rejections
//! at its start, exits at its end. Numbers are serialized with serde_json's
//! shortest-roundtrip float encoding, so equal runs produce byte-identical
//! traces and replays recover the exact states.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header(Header),
    Slot(SlotRecord),
    Robot(RobotRecord),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SlotRecord {
    pub slot: u64,
    /// Priority edges (winner, loser) in force during this slot.
    pub graph: Vec<(u32, u32)>,
    pub spawned: Vec<u32>,
    pub accepted: Vec<u32>,
    pub rejected: Vec<u32>,
    pub exited: Vec<u32>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RobotRecord {
    pub slot: u64,
    pub id: u32,
    pub path: u32,
    pub x: f64,
    pub v: f64,
    pub u: f64,
    pub regime: Regime,
    pub status: Status,
}

/// Whether the robot currently obeys its controller or is forced to brake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Controlled,
    Braking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Outside the area, not yet asking for entry.
    Queued,
    /// Has asked for entry at least once and is still waiting.
    Requested,
    /// Admitted into the priority graph.
    Accepted,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn write_line<W: Write>(mut w: W, line: &TraceLine) -> io::Result<()> {
    serde_json::to_writer(&mut w, line).map_err(io::Error::other)?;
    w.write_all(b"\n")
}

/// Iterates over trace lines, tagging parse failures with their line number.
pub fn read_lines<R: BufRead>(r: R) -> impl Iterator<Item = Result<TraceLine, TraceError>> {
    r.lines().enumerate().map(|(i, line)| {
        let line = line?;
        serde_json::from_str(&line).map_err(|source| TraceError::Malformed { line: i + 1, source })
    })
}
