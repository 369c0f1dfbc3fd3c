//! Trace scanners for system-level safety and timing properties.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::ids::{LinkId, NodeId};
use crate::sim::scenario::ScenarioConfig;
use crate::sim::trace::{Payload, RecordKind, Trace};
use crate::spectrum::FrequencyBand;

/// Two networks using overlapping bands of one lessor at once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DoubleUse {
    pub tick: u64,
    pub lessor: NodeId,
    pub first: (NodeId, FrequencyBand),
    pub second: (NodeId, FrequencyBand),
}

/// Remote users of one lessor's bands that collide within `active`.
///
/// The lessor's own licensed users are not counted: a returning licensed
/// user overlaps its lessee until the revocation lands, which is bounded
/// separately.
pub fn conflicts_in(
    active: &BTreeSet<(NodeId, NodeId, FrequencyBand)>,
    tick: u64,
) -> Vec<DoubleUse> {
    let mut by_lessor: BTreeMap<NodeId, Vec<(NodeId, FrequencyBand)>> = BTreeMap::new();
    for (tx, owner, band) in active {
        if tx != owner {
            by_lessor.entry(*owner).or_default().push((*tx, *band));
        }
    }
    let mut out = Vec::new();
    for (lessor, users) in by_lessor {
        for (i, a) in users.iter().enumerate() {
            for b in &users[i + 1..] {
                if a.0 != b.0 && a.1.overlaps(&b.1) {
                    out.push(DoubleUse {
                        tick,
                        lessor,
                        first: *a,
                        second: *b,
                    });
                }
            }
        }
    }
    out
}

/// Replays `tx_on`/`tx_off` records and reports every tick at which the
/// transmitter set contains a double use.
pub fn scan_double_use(trace: &Trace) -> Vec<DoubleUse> {
    let mut active = BTreeSet::new();
    let mut out = Vec::new();
    let mut records = trace
        .records
        .iter()
        .filter(|r| matches!(r.kind, RecordKind::TxOn | RecordKind::TxOff))
        .peekable();
    while let Some(r) = records.next() {
        if let (Payload::Tx { band }, Some(tx), Some(owner)) = (&r.payload, r.src, r.dst) {
            if r.kind == RecordKind::TxOn {
                active.insert((tx, owner, *band));
            } else {
                active.remove(&(tx, owner, *band));
            }
        }
        if records.peek().is_none_or(|next| next.tick != r.tick) {
            out.extend(conflicts_in(&active, r.tick));
        }
    }
    out
}

/// Checks that every delivery happens exactly one link delay after its send,
/// and that each link delivers in send order.
pub fn check_causality(trace: &Trace, config: &ScenarioConfig) -> Result<(), String> {
    let delta: BTreeMap<LinkId, u64> = config.links.iter().map(|l| (l.id, l.delta_ticks)).collect();
    let mut pending: BTreeMap<LinkId, VecDeque<u64>> = BTreeMap::new();
    for r in &trace.records {
        let (link, sent_tick) = match &r.payload {
            Payload::Message { link, sent_tick, .. } => (*link, *sent_tick),
            Payload::DecodeError { link, sent_tick, .. } => (*link, *sent_tick),
            _ => continue,
        };
        let d = *delta
            .get(&link)
            .ok_or_else(|| format!("record {} names unknown link {link}", r.seq))?;
        match r.kind {
            RecordKind::Send => {
                if sent_tick != r.tick {
                    return Err(format!("record {}: send stamped {sent_tick} at tick {}", r.seq, r.tick));
                }
                pending.entry(link).or_default().push_back(sent_tick);
            }
            RecordKind::Deliver | RecordKind::DecodeError => {
                if r.tick < sent_tick {
                    return Err(format!("record {}: delivered before it was sent", r.seq));
                }
                if r.tick - sent_tick != d {
                    return Err(format!(
                        "record {}: took {} ticks on link {link} with delay {d}",
                        r.seq,
                        r.tick - sent_tick
                    ));
                }
                // injected frames have no send record; only match real sends
                if r.kind == RecordKind::Deliver {
                    let queue = pending.entry(link).or_default();
                    match queue.pop_front() {
                        Some(s) if s == sent_tick => {}
                        other => {
                            return Err(format!(
                                "record {}: link {link} out of order (expected send at {other:?})",
                                r.seq
                            ))
                        }
                    }
                }
            }
            _ => {}
        }
    }
    let end = trace.header.duration_ticks;
    for (link, queue) in pending {
        let d = delta[&link];
        if let Some(s) = queue.iter().find(|s| *s + d < end) {
            return Err(format!("send on link {link} at {s} never delivered"));
        }
    }
    Ok(())
}

/// Tick of the last `tx_on`-covered tick for `(transmitter, owner, band)`,
/// i.e. the final tick on which it was transmitting.
pub fn last_transmission(
    trace: &Trace,
    transmitter: NodeId,
    owner: NodeId,
    band: FrequencyBand,
) -> Option<u64> {
    let mut on_since = None;
    let mut last = None;
    for r in &trace.records {
        let Payload::Tx { band: b } = &r.payload else {
            continue;
        };
        if r.src != Some(transmitter) || r.dst != Some(owner) || *b != band {
            continue;
        }
        match r.kind {
            RecordKind::TxOn => on_since = Some(r.tick),
            RecordKind::TxOff
                if on_since.take().is_some() => {
                    last = Some(r.tick - 1);
                }
            _ => {}
        }
    }
    if on_since.is_some() {
        last = Some(trace.header.duration_ticks.saturating_sub(1));
    }
    last
}
