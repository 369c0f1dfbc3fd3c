//! The discrete-event loop.
//!
//! Each tick runs, in order: deliveries scheduled by earlier ticks, then the
//! tick's own work (occupancy steps in network id order, coordinator upkeep,
//! sensing, scripted actions), then anything those sent with zero delay.
//! Ties are broken by enqueue order. Transmissions are sampled once at the
//! end of every tick.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::coordinator::Coordinator;
use crate::ids::{NodeId, RegionId};
use crate::link::LinkState;
use crate::network::{Outbound, RegionalNetwork, Uplink};
use crate::protocol::{
    MessageBody, ProbeRequest, QueryOutcome, SpectrumQuery, SpectrumResponse, WireMessage,
};
use crate::satellite::{compute_handover_chain, Constellation, ProbeRound};
use crate::sim::audit::conflicts_in;
use crate::sim::metrics::{compute_metrics, MetricsReport};
use crate::sim::scenario::{Action, ScenarioConfig, ValidationError};
use crate::sim::trace::{CascadeOp, Payload, RecordKind, Trace, TraceHeader, TraceRecord};
use crate::spectrum::{FrequencyBand, UtcTime};
use crate::wire::{decode_frame, encode_frame};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ValidationError>),
    #[error("invariant violated after event {event_index} (tick {tick}): {message}")]
    Invariant {
        event_index: u64,
        tick: u64,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Trace,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Deliver(usize),
    Snapshot(NodeId),
    Advance(NodeId),
    Housekeeping,
    Sense(NodeId),
    Scripted(usize),
    Cascade { busy: RegionId, idle: RegionId },
}

/// Runs `config` to completion and derives its metrics from the trace.
pub fn run_simulation(config: &ScenarioConfig) -> Result<SimOutput, SimError> {
    config.validate().map_err(SimError::Invalid)?;
    let mut engine = Engine::new(config);
    engine.run()?;
    let trace = Trace {
        header: TraceHeader::new(config.global_seed, config.tick_seconds, config.duration_ticks),
        records: engine.records,
    };
    let metrics = compute_metrics(&trace, config);
    Ok(SimOutput { trace, metrics })
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    now: UtcTime,
    networks: BTreeMap<NodeId, RegionalNetwork>,
    crfc: Option<NodeId>,
    coordinator: Coordinator,
    constellation: Option<Constellation>,
    rounds: BTreeMap<u64, ProbeRound>,
    next_round: u64,
    links: Vec<LinkState>,
    routes: BTreeMap<(NodeId, NodeId), usize>,
    queue: BTreeMap<(u64, u64), Event>,
    next_seq: u64,
    msg_seq: BTreeMap<(NodeId, NodeId), u32>,
    scripted: BTreeMap<u64, Vec<usize>>,
    records: Vec<TraceRecord>,
    tx_active: BTreeSet<(NodeId, NodeId, FrequencyBand)>,
    events: u64,
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        let timebase = config.timebase();
        let crfc = config.crfc_id();
        let links: Vec<LinkState> = config.links.iter().map(|l| LinkState::new(*l)).collect();
        let mut routes = BTreeMap::new();
        for (i, l) in config.links.iter().enumerate() {
            routes.insert((l.a, l.b), i);
            routes.insert((l.b, l.a), i);
        }
        let constellation = (!config.satellites.is_empty()).then(|| {
            let ground = config.networks.iter().map(|n| (n.region, n.id)).collect();
            Constellation::new(&config.satellites, config.constellation_topology, ground)
                .expect("validated constellation")
        });
        let mut coordinator = Coordinator::new();
        let mut networks = BTreeMap::new();
        for n in &config.networks {
            let params = config.network_params(n).expect("validated network");
            let mut net = RegionalNetwork::new(params, timebase, config.global_seed);
            let direct = crfc.and_then(|c| config.link_between(n.id, c));
            if constellation.is_some() {
                net.set_uplink(Uplink::Satellite);
            } else if let Some(link) = direct {
                net.set_uplink(Uplink::Coordinator);
                coordinator.register_network(n.id, link.delta_ticks);
            }
            networks.insert(n.id, net);
        }
        let mut scripted: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, a) in config.scripted_actions.iter().enumerate() {
            scripted.entry(a.at).or_default().push(i);
        }
        Self {
            config,
            now: UtcTime::ZERO,
            networks,
            crfc,
            coordinator,
            constellation,
            rounds: BTreeMap::new(),
            next_round: 0,
            links,
            routes,
            queue: BTreeMap::new(),
            next_seq: 0,
            msg_seq: BTreeMap::new(),
            scripted,
            records: Vec::new(),
            tx_active: BTreeSet::new(),
            events: 0,
        }
    }

    fn push(&mut self, at: UtcTime, event: Event) {
        self.queue.insert((at.ticks(), self.next_seq), event);
        self.next_seq += 1;
    }

    fn record(&mut self, kind: RecordKind, src: Option<NodeId>, dst: Option<NodeId>, payload: Payload) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord {
            tick: self.now.ticks(),
            seq,
            kind,
            src,
            dst,
            payload,
        });
    }

    fn run(&mut self) -> Result<(), SimError> {
        let ids: Vec<NodeId> = self.networks.keys().copied().collect();
        for t in 0..self.config.duration_ticks {
            self.now = UtcTime(t);
            for id in &ids {
                let e = if t == 0 { Event::Snapshot(*id) } else { Event::Advance(*id) };
                self.push(self.now, e);
            }
            if self.crfc.is_some() {
                self.push(self.now, Event::Housekeeping);
            }
            for id in &ids {
                if t % self.networks[id].sensing_interval() == 0 {
                    self.push(self.now, Event::Sense(*id));
                }
            }
            for i in self.scripted.get(&t).cloned().unwrap_or_default() {
                self.push(self.now, Event::Scripted(i));
            }
            while let Some(entry) = self.queue.first_entry() {
                if entry.key().0 != t {
                    break;
                }
                let event = entry.remove();
                self.handle(event);
                self.events += 1;
                if cfg!(debug_assertions) {
                    self.check_invariants()?;
                }
            }
            self.account_transmissions()?;
        }
        self.check_invariants()
    }

    fn violation(&self, message: String) -> SimError {
        SimError::Invariant {
            event_index: self.events,
            tick: self.now.ticks(),
            message,
        }
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        self.coordinator
            .leases()
            .check_exclusive()
            .map_err(|m| self.violation(m))?;
        if let Some(c) = &self.constellation {
            c.check().map_err(|m| self.violation(format!("responsibility map: {m}")))?;
        }
        for net in self.networks.values() {
            for (lease_id, band) in net.leased_out() {
                let held = self
                    .coordinator
                    .leases()
                    .get(lease_id)
                    .is_some_and(|l| l.lessor == net.id() && l.band == band);
                if !held {
                    return Err(self.violation(format!(
                        "network {} treats {band} as leased out under {lease_id}, which the coordinator does not hold",
                        net.id()
                    )));
                }
            }
        }
        Ok(())
    }

    fn account_transmissions(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let current: BTreeSet<(NodeId, NodeId, FrequencyBand)> = self
            .networks
            .values()
            .flat_map(|n| {
                let id = n.id();
                n.transmissions(now)
                    .into_iter()
                    .map(move |(owner, band)| (id, owner, band))
            })
            .collect();
        let stopped: Vec<_> = self.tx_active.difference(&current).copied().collect();
        let started: Vec<_> = current.difference(&self.tx_active).copied().collect();
        for (tx, owner, band) in stopped {
            self.record(RecordKind::TxOff, Some(tx), Some(owner), Payload::Tx { band });
        }
        for (tx, owner, band) in started {
            self.record(RecordKind::TxOn, Some(tx), Some(owner), Payload::Tx { band });
        }
        self.tx_active = current;
        if let Some(c) = conflicts_in(&self.tx_active, now.ticks()).first() {
            return Err(self.violation(format!(
                "{} and {} both use bands of lessor {}",
                c.first.0, c.second.0, c.lessor
            )));
        }
        Ok(())
    }

    fn handle(&mut self, event: Event) {
        let now = self.now;
        match event {
            Event::Deliver(link) => self.deliver(link),
            Event::Snapshot(id) => {
                let out = self.net(id).report(crate::protocol::ReportCause::Snapshot);
                self.route(id, out.into_iter().collect());
            }
            Event::Advance(id) => {
                let (transitions, out) = self.net(id).advance_occupancy(now);
                for t in transitions {
                    self.record(
                        RecordKind::Transition,
                        Some(id),
                        None,
                        Payload::Transition {
                            band: t.band,
                            previous: t.previous,
                            new_state: t.new_state,
                        },
                    );
                }
                self.route(id, out);
            }
            Event::Housekeeping => {
                let crfc = self.crfc.expect("housekeeping needs a coordinator");
                for revoke in self.coordinator.housekeeping(now) {
                    self.send(crfc, revoke.lessee, MessageBody::LeaseRevoke(revoke));
                }
            }
            Event::Sense(id) => {
                let net = self.net(id);
                net.sense(now);
                let out = net.poll_demand(now);
                self.route(id, out.into_iter().collect());
            }
            Event::Scripted(i) => self.scripted(i),
            Event::Cascade { busy, idle } => self.cascade(busy, idle),
        }
    }

    fn net(&mut self, id: NodeId) -> &mut RegionalNetwork {
        self.networks.get_mut(&id).expect("known network")
    }

    /// Sends `body` over the link joining `src` and `dst`. False if unroutable.
    fn send(&mut self, src: NodeId, dst: NodeId, body: MessageBody) -> bool {
        let Some(&link) = self.routes.get(&(src, dst)) else {
            self.record(
                RecordKind::RouteError,
                Some(src),
                Some(dst),
                Payload::Error {
                    reason: format!("no link for {:?}", body.kind()),
                },
            );
            return false;
        };
        let counter = self.msg_seq.entry((src, dst)).or_insert(0);
        let seq = *counter;
        *counter = counter.wrapping_add(1);
        let msg = WireMessage {
            src,
            dst,
            seq,
            sent_at: self.now,
            body,
        };
        let frame = match encode_frame(&msg) {
            Ok(f) => f,
            Err(e) => {
                self.record(
                    RecordKind::RouteError,
                    Some(src),
                    Some(dst),
                    Payload::Error {
                        reason: e.to_string(),
                    },
                );
                return false;
            }
        };
        let bytes = frame.len();
        let due = self.links[link]
            .transmit(src, dst, frame, self.now)
            .expect("route table matches link endpoints");
        self.record(
            RecordKind::Send,
            Some(src),
            Some(dst),
            Payload::Message {
                link: self.links[link].config().id,
                msg_seq: seq,
                sent_tick: self.now.ticks(),
                bytes,
                message: msg.body,
            },
        );
        self.push(due, Event::Deliver(link));
        true
    }

    fn route(&mut self, from: NodeId, out: Vec<Outbound>) {
        for o in out {
            match o {
                Outbound::ToCoordinator(body) => match self.crfc {
                    Some(crfc) => {
                        self.send(from, crfc, body);
                    }
                    None => self.record(
                        RecordKind::RouteError,
                        Some(from),
                        None,
                        Payload::Error {
                            reason: "no coordinator".into(),
                        },
                    ),
                },
                Outbound::ToSatellite(body) => {
                    let region = self.networks[&from].region().id;
                    let sat = self
                        .constellation
                        .as_ref()
                        .and_then(|c| c.responsible_satellite(region));
                    match sat {
                        Some(sat) => {
                            self.send(from, sat, body);
                        }
                        None => self.record(
                            RecordKind::RouteError,
                            Some(from),
                            None,
                            Payload::Error {
                                reason: format!("no satellite serves region {region}"),
                            },
                        ),
                    }
                }
                Outbound::Reply { to, body } => {
                    self.send(from, to, body);
                }
            }
        }
    }

    fn deliver(&mut self, link: usize) {
        let frame = self.links[link]
            .deliver(self.now)
            .expect("delivery event matches a queued frame");
        let link_id = self.links[link].config().id;
        let msg = match decode_frame(&frame.frame) {
            Ok(m) => m,
            Err(e) => {
                self.record(
                    RecordKind::DecodeError,
                    Some(frame.src),
                    Some(frame.dst),
                    Payload::DecodeError {
                        link: link_id,
                        sent_tick: frame.sent_at.ticks(),
                        error: e.label().into(),
                        detail: e.to_string(),
                    },
                );
                return;
            }
        };
        self.record(
            RecordKind::Deliver,
            Some(frame.src),
            Some(frame.dst),
            Payload::Message {
                link: link_id,
                msg_seq: msg.seq,
                sent_tick: frame.sent_at.ticks(),
                bytes: frame.frame.len(),
                message: msg.body.clone(),
            },
        );
        if msg.src != frame.src || msg.dst != frame.dst {
            self.record(
                RecordKind::ProtocolError,
                Some(frame.src),
                Some(frame.dst),
                Payload::Error {
                    reason: format!("frame addressed {} -> {} arrived on the wrong hop", msg.src, msg.dst),
                },
            );
            return;
        }
        self.dispatch(frame.dst, msg);
    }

    fn dispatch(&mut self, node: NodeId, msg: WireMessage) {
        let now = self.now;
        if let Some(net) = self.networks.get_mut(&node) {
            let out = net.handle_message(msg.src, &msg.body, now);
            self.route(node, out);
        } else if Some(node) == self.crfc {
            self.coordinator_receive(node, msg);
        } else if let (Some(c), Some(crfc)) = (&self.constellation, self.crfc) {
            if let Some(next) = c.relay(node, crfc, msg.src, &msg.body) {
                self.send(node, next, msg.body);
            }
        }
    }

    fn coordinator_receive(&mut self, crfc: NodeId, msg: WireMessage) {
        let now = self.now;
        match msg.body {
            MessageBody::SpectrumQuery(q) => {
                if self.constellation.is_some() {
                    self.start_round(crfc, msg.src, q);
                    return;
                }
                let result = self.coordinator.handle_query(&q, now);
                self.send(crfc, msg.src, MessageBody::SpectrumResponse(result.response));
                if let Some(grant) = result.grant {
                    self.send(crfc, grant.lease.lessor, MessageBody::LeaseGrant(grant));
                }
            }
            MessageBody::UcltUpdate(report) => match self.coordinator.apply_report(&report, now) {
                Ok(revokes) => {
                    for r in revokes {
                        self.send(crfc, r.lessee, MessageBody::LeaseRevoke(r));
                    }
                }
                Err(e) => self.record(
                    RecordKind::ProtocolError,
                    Some(msg.src),
                    Some(crfc),
                    Payload::Error {
                        reason: e.to_string(),
                    },
                ),
            },
            MessageBody::StatusReport(status) => {
                let Some(round) = self.rounds.get_mut(&status.round_id) else {
                    return;
                };
                if !round.record(&status) {
                    return;
                }
                let round = self.rounds.remove(&status.round_id).expect("present");
                let chosen = round.chosen();
                let response = SpectrumResponse {
                    request_id: round.query.request_id,
                    requester: round.query.requester,
                    outcome: chosen.map_or(QueryOutcome::NoSpectrum, QueryOutcome::IdleRegion),
                };
                let sent = self.send(crfc, round.querying_sat, MessageBody::SpectrumResponse(response));
                if let (true, Some(idle)) = (sent, chosen) {
                    let delta = self.config.link_between(crfc, round.querying_sat).map_or(0, |l| l.delta_ticks);
                    self.push(
                        now.saturating_add(delta),
                        Event::Cascade {
                            busy: round.busy_region,
                            idle,
                        },
                    );
                }
            }
            _ => {}
        }
    }

    /// Satellite path: probe every satellite on duty for its region's status.
    fn start_round(&mut self, crfc: NodeId, querying_sat: NodeId, q: SpectrumQuery) {
        let Some(busy_region) = self.networks.get(&q.requester).map(|n| n.region().id) else {
            let response = SpectrumResponse {
                request_id: q.request_id,
                requester: q.requester,
                outcome: QueryOutcome::UnknownRequester,
            };
            self.send(crfc, querying_sat, MessageBody::SpectrumResponse(response));
            return;
        };
        let targets = self
            .constellation
            .as_ref()
            .map(|c| c.probe_targets())
            .unwrap_or_default();
        let round_id = self.next_round;
        self.next_round += 1;
        let expected = targets.iter().map(|(_, r)| *r).collect();
        self.rounds.insert(
            round_id,
            ProbeRound::new(round_id, querying_sat, q, busy_region, expected),
        );
        let mut routed = true;
        for (sat, _) in targets {
            routed &= self.send(
                crfc,
                sat,
                MessageBody::ProbeRequest(ProbeRequest {
                    round_id,
                    busy_region,
                }),
            );
        }
        if !routed {
            self.rounds.remove(&round_id);
        }
    }

    fn cascade(&mut self, busy: RegionId, idle: RegionId) {
        let now = self.now;
        let crfc = self.crfc.expect("cascades need a coordinator");
        let c = self.constellation.as_mut().expect("cascades need satellites");
        let ends = c.responsible_satellite(busy).zip(c.responsible_satellite(idle));
        let outcome = match ends {
            None => Err(format!("regions {busy} and {idle} are not both served by satellites")),
            Some((busy_sat, idle_sat)) => compute_handover_chain(c.ring(), busy_sat, idle_sat)
                .and_then(|chain| {
                    c.execute_cascade(&chain, idle, now)
                        .map(|directives| (chain, directives))
                })
                .map_err(|e| e.to_string()),
        };
        match outcome {
            Ok((chain, directives)) => {
                self.record(
                    RecordKind::Cascade,
                    Some(crfc),
                    None,
                    Payload::Cascade {
                        op: CascadeOp::Apply,
                        busy_region: Some(busy),
                        idle_region: Some(idle),
                        chain,
                        applied: true,
                        error: None,
                    },
                );
                for d in directives {
                    self.send(crfc, d.from_entity, MessageBody::HandOverDirective(d));
                }
            }
            Err(error) => self.record(
                RecordKind::Cascade,
                Some(crfc),
                None,
                Payload::Cascade {
                    op: CascadeOp::Apply,
                    busy_region: Some(busy),
                    idle_region: Some(idle),
                    chain: Vec::new(),
                    applied: false,
                    error: Some(error),
                },
            ),
        }
    }

    fn scripted(&mut self, i: usize) {
        let now = self.now;
        let action = self.config.scripted_actions[i].action.clone();
        self.record(
            RecordKind::Scripted,
            None,
            None,
            Payload::Scripted {
                action: action.clone(),
            },
        );
        match action {
            Action::PrimaryReturn {
                network,
                band,
                hold_ticks,
            } => {
                let net = self.net(network);
                let Some(band) = net.own_bands().nth(band) else {
                    return;
                };
                let before = net.occupancy(&band);
                let out = net.handle_primary_return(&band, now, hold_ticks);
                let after = net.occupancy(&band);
                if let (Some(previous), Some(new_state)) = (before, after) {
                    if previous != new_state {
                        self.record(
                            RecordKind::Transition,
                            Some(network),
                            None,
                            Payload::Transition {
                                band,
                                previous,
                                new_state,
                            },
                        );
                    }
                }
                self.route(network, out);
            }
            Action::Query { network } => {
                let out = self.net(network).force_query();
                self.route(network, out.into_iter().collect());
            }
            Action::CascadeReversal => {
                let crfc = self.crfc.expect("validated");
                let c = self.constellation.as_mut().expect("validated");
                let chain = c.applied().last().map(|a| a.chain.clone()).unwrap_or_default();
                match c.reverse_last(now) {
                    Ok(directives) => {
                        self.record(
                            RecordKind::Cascade,
                            Some(crfc),
                            None,
                            Payload::Cascade {
                                op: CascadeOp::Reverse,
                                busy_region: None,
                                idle_region: None,
                                chain,
                                applied: true,
                                error: None,
                            },
                        );
                        for d in directives {
                            self.send(crfc, d.to_entity, MessageBody::HandOverDirective(d));
                        }
                    }
                    Err(e) => self.record(
                        RecordKind::Cascade,
                        Some(crfc),
                        None,
                        Payload::Cascade {
                            op: CascadeOp::Reverse,
                            busy_region: None,
                            idle_region: None,
                            chain,
                            applied: false,
                            error: Some(e.to_string()),
                        },
                    ),
                }
            }
            Action::InjectFrame { link, from, hex } => {
                let idx = self
                    .links
                    .iter()
                    .position(|l| l.config().id == link)
                    .expect("validated link");
                let cfg = *self.links[idx].config();
                let to = if cfg.a == from { cfg.b } else { cfg.a };
                let bytes = hex::decode(hex).expect("validated hex");
                let due = self.links[idx]
                    .transmit(from, to, bytes, now)
                    .expect("validated endpoint");
                self.push(due, Event::Deliver(idx));
            }
        }
    }
}
