//! Event traces as JSON Lines.
//!
//! The first line is a header; every later line is one [`TraceRecord`].
//! Field order is fixed by the struct definitions, so equal traces are
//! byte-identical.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LinkId, NodeId, RegionId};
use crate::network::Occupancy;
use crate::protocol::MessageBody;
use crate::sim::scenario::Action;
use crate::spectrum::FrequencyBand;

pub const TRACE_FORMAT: &str = "gcrs-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub kind: String,
    pub format: String,
    pub seed: u64,
    pub tick_seconds: u32,
    pub duration_ticks: u64,
}

impl TraceHeader {
    pub fn new(seed: u64, tick_seconds: u32, duration_ticks: u64) -> Self {
        Self {
            kind: "header".into(),
            format: TRACE_FORMAT.into(),
            seed,
            tick_seconds,
            duration_ticks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Send,
    Deliver,
    DecodeError,
    RouteError,
    ProtocolError,
    Transition,
    TxOn,
    TxOff,
    Scripted,
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeOp {
    Apply,
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Message {
        link: LinkId,
        msg_seq: u32,
        sent_tick: u64,
        bytes: usize,
        message: MessageBody,
    },
    DecodeError {
        link: LinkId,
        sent_tick: u64,
        error: String,
        detail: String,
    },
    Error {
        reason: String,
    },
    Transition {
        band: FrequencyBand,
        previous: Occupancy,
        new_state: Occupancy,
    },
    Tx {
        band: FrequencyBand,
    },
    Scripted {
        action: Action,
    },
    Cascade {
        op: CascadeOp,
        busy_region: Option<RegionId>,
        idle_region: Option<RegionId>,
        chain: Vec<NodeId>,
        applied: bool,
        error: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub tick: u64,
    pub seq: u64,
    pub kind: RecordKind,
    pub src: Option<NodeId>,
    pub dst: Option<NodeId>,
    pub payload: Payload,
}

impl TraceRecord {
    pub fn message(&self) -> Option<&MessageBody> {
        match &self.payload {
            Payload::Message { message, .. } => Some(message),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace is empty")]
    Empty,
    #[error("unsupported trace format {0:?}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(&first?).map_err(|source| TraceError::Parse { line: 1, source })?;
        if header.format != TRACE_FORMAT {
            return Err(TraceError::Format(header.format));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|source| TraceError::Parse { line: i + 1, source })?,
            );
        }
        Ok(Self { header, records })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(text.as_bytes())
    }

    /// Records of one kind, in trace order.
    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }
}

/// First line (1-based) where two trace texts differ, with both versions.
/// `None` means identical.
pub fn first_divergence<'a>(a: &'a str, b: &'a str) -> Option<(usize, Option<&'a str>, Option<&'a str>)> {
    let mut la = a.lines();
    let mut lb = b.lines();
    let mut n = 0;
    loop {
        n += 1;
        match (la.next(), lb.next()) {
            (None, None) => return None,
            (x, y) if x == y => continue,
            (x, y) => return Some((n, x, y)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{ProbeRequest, QueryOutcome, SpectrumResponse};

    #[test]
    fn round_trip() {
        let t = Trace {
            header: TraceHeader::new(7, 60, 10),
            records: vec![
                TraceRecord {
                    tick: 1,
                    seq: 0,
                    kind: RecordKind::Send,
                    src: Some(NodeId(1)),
                    dst: Some(NodeId(2)),
                    payload: Payload::Message {
                        link: LinkId(1),
                        msg_seq: 0,
                        sent_tick: 1,
                        bytes: 42,
                        message: MessageBody::SpectrumResponse(SpectrumResponse {
                            request_id: 1,
                            requester: NodeId(2),
                            outcome: QueryOutcome::NoSpectrum,
                        }),
                    },
                },
                TraceRecord {
                    tick: 2,
                    seq: 1,
                    kind: RecordKind::Deliver,
                    src: Some(NodeId(1)),
                    dst: Some(NodeId(2)),
                    payload: Payload::Message {
                        link: LinkId(1),
                        msg_seq: 1,
                        sent_tick: 1,
                        bytes: 42,
                        message: MessageBody::ProbeRequest(ProbeRequest {
                            round_id: 3,
                            busy_region: RegionId(4),
                        }),
                    },
                },
                TraceRecord {
                    tick: 3,
                    seq: 2,
                    kind: RecordKind::TxOn,
                    src: Some(NodeId(1)),
                    dst: Some(NodeId(1)),
                    payload: Payload::Tx {
                        band: FrequencyBand::new(1, 2).unwrap(),
                    },
                },
            ],
        };
        let text = t.to_jsonl();
        assert!(text.starts_with(r#"{"kind":"header","format":"gcrs-trace/1","seed":7"#));
        assert_eq!(Trace::from_jsonl(&text).unwrap(), t);
    }

    #[test]
    fn divergence() {
        assert_eq!(first_divergence("a\nb\n", "a\nb\n"), None);
        assert_eq!(first_divergence("a\nb\n", "a\nc\n"), Some((2, Some("b"), Some("c"))));
        assert_eq!(first_divergence("a\n", "a\nb\n"), Some((2, None, Some("b"))));
    }

    #[test]
    fn rejects_foreign_format() {
        let text = r#"{"kind":"header","format":"other/9","seed":0,"tick_seconds":60,"duration_ticks":0}"#;
        assert!(matches!(Trace::from_jsonl(text), Err(TraceError::Format(_))));
    }
}
