//! Run metrics, recomputed from a trace and its scenario.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::ids::NodeId;
use crate::protocol::{MessageBody, QueryOutcome};
use crate::sim::scenario::ScenarioConfig;
use crate::sim::trace::{Payload, RecordKind, Trace};
use crate::spectrum::FrequencyBand;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandUtilization {
    pub network: NodeId,
    pub band: FrequencyBand,
    pub busy_ticks: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub duration_ticks: u64,
    pub utilization: Vec<BandUtilization>,
    pub lease_grants: u64,
    pub lease_denials: u64,
    pub revocations: u64,
    pub idle_region_answers: u64,
    pub cascades: u64,
    pub handover_directives: u64,
    pub decode_errors: u64,
    pub route_errors: u64,
    pub mean_grant_latency_ticks: Option<f64>,
}

impl MetricsReport {
    pub fn utilization_of(&self, network: NodeId, band: FrequencyBand) -> Option<f64> {
        self.utilization
            .iter()
            .find(|u| u.network == network && u.band == band)
            .map(|u| u.utilization)
    }
}

/// Ticks in `[0, duration)` during which each `(owner, band)` carried at least
/// one transmitter, from the trace's `tx_on`/`tx_off` records.
pub fn busy_ticks(trace: &Trace, duration: u64) -> BTreeMap<(NodeId, FrequencyBand), u64> {
    let mut active: BTreeMap<(NodeId, FrequencyBand), BTreeSet<NodeId>> = BTreeMap::new();
    let mut since: BTreeMap<(NodeId, FrequencyBand), u64> = BTreeMap::new();
    let mut total: BTreeMap<(NodeId, FrequencyBand), u64> = BTreeMap::new();
    for r in &trace.records {
        let (Payload::Tx { band }, Some(tx), Some(owner)) = (&r.payload, r.src, r.dst) else {
            continue;
        };
        let key = (owner, *band);
        let set = active.entry(key).or_default();
        let was_busy = !set.is_empty();
        match r.kind {
            RecordKind::TxOn => {
                set.insert(tx);
            }
            RecordKind::TxOff => {
                set.remove(&tx);
            }
            _ => continue,
        }
        let tick = r.tick.min(duration);
        match (was_busy, !set.is_empty()) {
            (false, true) => {
                since.insert(key, tick);
            }
            (true, false) => {
                let start = since.remove(&key).unwrap_or(tick);
                *total.entry(key).or_default() += tick - start;
            }
            _ => {}
        }
    }
    for (key, start) in since {
        *total.entry(key).or_default() += duration.saturating_sub(start);
    }
    total
}

pub fn compute_metrics(trace: &Trace, config: &ScenarioConfig) -> MetricsReport {
    let duration = trace.header.duration_ticks;
    let busy = busy_ticks(trace, duration);
    let utilization = config
        .networks
        .iter()
        .flat_map(|n| n.bands.iter().map(move |b| (n.id, b.band)))
        .map(|(network, band)| {
            let busy_ticks = busy.get(&(network, band)).copied().unwrap_or(0);
            BandUtilization {
                network,
                band,
                busy_ticks,
                utilization: if duration == 0 {
                    0.0
                } else {
                    busy_ticks as f64 / duration as f64
                },
            }
        })
        .collect();

    let crfc = config.crfc_id();
    let mut m = MetricsReport {
        duration_ticks: duration,
        utilization,
        lease_grants: 0,
        lease_denials: 0,
        revocations: 0,
        idle_region_answers: 0,
        cascades: 0,
        handover_directives: 0,
        decode_errors: 0,
        route_errors: 0,
        mean_grant_latency_ticks: None,
    };
    let mut query_sent: BTreeMap<(NodeId, u64), u64> = BTreeMap::new();
    let mut latencies = Vec::new();
    for r in &trace.records {
        match r.kind {
            RecordKind::DecodeError => m.decode_errors += 1,
            RecordKind::RouteError => m.route_errors += 1,
            RecordKind::Cascade => {
                if let Payload::Cascade { applied: true, op: crate::sim::trace::CascadeOp::Apply, .. } = r.payload {
                    m.cascades += 1;
                }
            }
            RecordKind::Send => {
                let from_crfc = crfc.is_some() && r.src == crfc;
                match r.message() {
                    Some(MessageBody::SpectrumQuery(q)) if r.src == Some(q.requester) => {
                        query_sent.entry((q.requester, q.request_id)).or_insert(r.tick);
                    }
                    Some(MessageBody::SpectrumResponse(resp)) if from_crfc => match resp.outcome {
                        QueryOutcome::Granted(_) => m.lease_grants += 1,
                        QueryOutcome::IdleRegion(_) => m.idle_region_answers += 1,
                        QueryOutcome::NoSpectrum | QueryOutcome::UnknownRequester => {
                            m.lease_denials += 1
                        }
                    },
                    Some(MessageBody::LeaseRevoke(_)) if from_crfc => m.revocations += 1,
                    Some(MessageBody::HandOverDirective(_)) if from_crfc => {
                        m.handover_directives += 1
                    }
                    _ => {}
                }
            }
            RecordKind::Deliver => {
                if let Some(MessageBody::SpectrumResponse(resp)) = r.message() {
                    if matches!(resp.outcome, QueryOutcome::Granted(_))
                        && r.dst == Some(resp.requester)
                    {
                        if let Some(sent) = query_sent.get(&(resp.requester, resp.request_id)) {
                            latencies.push(r.tick - sent);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    if !latencies.is_empty() {
        m.mean_grant_latency_ticks =
            Some(latencies.iter().sum::<u64>() as f64 / latencies.len() as f64);
    }
    m
}

/// Aligned plain-text rendering, three decimals for fractions.
pub fn render_table(m: &MetricsReport) -> String {
    let mut rows: Vec<[String; 4]> = vec![[
        "network".into(),
        "band".into(),
        "busy_ticks".into(),
        "utilization".into(),
    ]];
    for u in &m.utilization {
        rows.push([
            u.network.to_string(),
            u.band.to_string(),
            u.busy_ticks.to_string(),
            format!("{:.3}", u.utilization),
        ]);
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line = format!(
            "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}",
            row[0],
            row[1],
            row[2],
            row[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push('\n');
    let latency = m
        .mean_grant_latency_ticks
        .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    let counters = [
        ("duration_ticks", m.duration_ticks.to_string()),
        ("lease_grants", m.lease_grants.to_string()),
        ("lease_denials", m.lease_denials.to_string()),
        ("revocations", m.revocations.to_string()),
        ("idle_region_answers", m.idle_region_answers.to_string()),
        ("cascades", m.cascades.to_string()),
        ("handover_directives", m.handover_directives.to_string()),
        ("decode_errors", m.decode_errors.to_string()),
        ("route_errors", m.route_errors.to_string()),
        ("mean_grant_latency_ticks", latency),
    ];
    let key_width = counters.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in counters {
        let _ = writeln!(out, "{k:<key_width$}  {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::{TraceHeader, TraceRecord};

    fn tx(tick: u64, kind: RecordKind, who: u32, owner: u32) -> TraceRecord {
        TraceRecord {
            tick,
            seq: 0,
            kind,
            src: Some(NodeId(who)),
            dst: Some(NodeId(owner)),
            payload: Payload::Tx {
                band: FrequencyBand::new(100, 200).unwrap(),
            },
        }
    }

    #[test]
    fn overlapping_transmitters_count_once() {
        let trace = Trace {
            header: TraceHeader::new(0, 60, 100),
            records: vec![
                tx(10, RecordKind::TxOn, 1, 1),
                tx(20, RecordKind::TxOn, 2, 1),
                tx(30, RecordKind::TxOff, 1, 1),
                tx(40, RecordKind::TxOff, 2, 1),
                tx(90, RecordKind::TxOn, 2, 1),
            ],
        };
        let busy = busy_ticks(&trace, 100);
        assert_eq!(busy[&(NodeId(1), FrequencyBand::new(100, 200).unwrap())], 30 + 10);
    }

    #[test]
    fn table_has_three_decimals() {
        let m = MetricsReport {
            duration_ticks: 1440,
            utilization: vec![BandUtilization {
                network: NodeId(1),
                band: FrequencyBand::new(100, 200).unwrap(),
                busy_ticks: 216,
                utilization: 0.15,
            }],
            lease_grants: 0,
            lease_denials: 0,
            revocations: 0,
            idle_region_answers: 0,
            cascades: 0,
            handover_directives: 0,
            decode_errors: 0,
            route_errors: 0,
            mean_grant_latency_ticks: None,
        };
        let t = render_table(&m);
        assert!(t.contains("0.150"), "{t}");
        assert!(t.lines().next().unwrap().starts_with("network"));
    }
}
