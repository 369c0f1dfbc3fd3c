//! A regional network: licensed-user occupancy, sampled sensing, UCLT reports
//! and the lessor/lessee halves of the leasing protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ids::{LeaseId, NetworkId, NodeId};
use crate::protocol::{
    AccessMode, Lease, LeaseGrant, LeaseRevoke, MessageBody, QueryOutcome, ReportCause,
    SpectrumQuery, SpectrumResponse, StatusReport, UcltReport,
};
use crate::protocol::ProbeRequest;
use crate::spectrum::{is_downtime, DowntimeWindow, FrequencyBand, Region, Timebase, UtcTime};
use crate::uclt::{AvailabilityWindow, NetworkRecord, PermissionSet};

/// How licensed-user presence evolves on one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimaryUserModel {
    /// Present except inside the local down-time window.
    Diurnal { window: DowntimeWindow },
    /// Two-state chain stepped once per tick.
    Markov { p_on_to_off: f64, p_off_to_on: f64 },
}

impl PrimaryUserModel {
    pub fn is_valid(&self) -> bool {
        match *self {
            PrimaryUserModel::Diurnal { .. } => true,
            PrimaryUserModel::Markov {
                p_on_to_off,
                p_off_to_on,
            } => (0.0..=1.0).contains(&p_on_to_off) && (0.0..=1.0).contains(&p_off_to_on),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Occupied,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub band: FrequencyBand,
    pub model: PrimaryUserModel,
    /// Starting state of a markov band; diurnal bands derive theirs from the clock.
    #[serde(default)]
    pub initial: InitialState,
}

/// What a busy network asks the coordinator for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    pub width_hz: u64,
    #[serde(default = "one")]
    pub min_duration_ticks: u64,
    pub duration_ticks: u64,
    #[serde(default = "dynamic")]
    pub mode: AccessMode,
}

fn one() -> u64 {
    1
}

fn dynamic() -> AccessMode {
    AccessMode::Dynamic
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    OccupiedByPrimary,
    Idle,
    LeasedOut,
    LeasedIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingResult {
    HoleDetected,
    PrimaryPresent,
}

/// Where the network sends coordinator-bound traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Uplink {
    None,
    /// Direct long-distance link to the coordinator.
    Coordinator,
    /// Via the satellite covering the network's region.
    Satellite,
}

/// A message the network wants sent; the engine resolves addresses.
#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    ToCoordinator(MessageBody),
    ToSatellite(MessageBody),
    Reply { to: NodeId, body: MessageBody },
}

/// One licensed-user presence flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub band: FrequencyBand,
    pub new_state: Occupancy,
    pub previous: Occupancy,
}

#[derive(Debug, Clone)]
struct OwnBand {
    spec: BandSpec,
    state: Occupancy,
    leased_as: Option<(LeaseId, UtcTime)>,
    pinned_until: Option<UtcTime>,
    reading: SensingResult,
    /// Version of the latest report that listed this band as occupied.
    last_occupied_report: Option<u64>,
}

impl OwnBand {
    fn primary_present(&self) -> bool {
        self.state == Occupancy::OccupiedByPrimary
    }
}

#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub id: NetworkId,
    pub region: Region,
    pub bands: Vec<BandSpec>,
    pub sensing_interval: u64,
    pub permissions: PermissionSet,
    pub availability: AvailabilityWindow,
    pub demand: Option<Demand>,
}

#[derive(Debug, Clone)]
pub struct RegionalNetwork {
    id: NetworkId,
    region: Region,
    timebase: Timebase,
    own: Vec<OwnBand>,
    leased_in: Vec<Lease>,
    sensing_interval: u64,
    last_sensed_at: Option<UtcTime>,
    rng: ChaCha8Rng,
    permissions: PermissionSet,
    availability: AvailabilityWindow,
    demand: Option<Demand>,
    uplink: Uplink,
    report_version: u64,
    outstanding_request: Option<u64>,
    next_request_id: u64,
    satellite_served: bool,
}

impl RegionalNetwork {
    /// Builds the network in its tick-0 state. The random stream is derived
    /// from `(global_seed, id)` so networks never share draws.
    pub fn new(params: NetworkParams, timebase: Timebase, global_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
        rng.set_stream(u64::from(params.id.0));
        let own = params
            .bands
            .iter()
            .map(|spec| {
                let present = match spec.model {
                    PrimaryUserModel::Diurnal { window } => {
                        !is_downtime(&window, &params.region, timebase, UtcTime::ZERO)
                    }
                    PrimaryUserModel::Markov { .. } => spec.initial == InitialState::Occupied,
                };
                OwnBand {
                    spec: *spec,
                    state: if present {
                        Occupancy::OccupiedByPrimary
                    } else {
                        Occupancy::Idle
                    },
                    leased_as: None,
                    pinned_until: None,
                    reading: if present {
                        SensingResult::PrimaryPresent
                    } else {
                        SensingResult::HoleDetected
                    },
                    last_occupied_report: None,
                }
            })
            .collect();
        Self {
            id: params.id,
            region: params.region,
            timebase,
            own,
            leased_in: Vec::new(),
            sensing_interval: params.sensing_interval.max(1),
            last_sensed_at: None,
            rng,
            permissions: params.permissions,
            availability: params.availability,
            demand: params.demand,
            uplink: Uplink::None,
            report_version: 0,
            outstanding_request: None,
            next_request_id: 0,
            satellite_served: false,
        }
    }

    pub fn id(&self) -> NetworkId {
        self.id
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn uplink(&self) -> Uplink {
        self.uplink
    }

    pub fn set_uplink(&mut self, uplink: Uplink) {
        self.uplink = uplink;
    }

    pub fn sensing_interval(&self) -> u64 {
        self.sensing_interval
    }

    pub fn demand(&self) -> Option<&Demand> {
        self.demand.as_ref()
    }

    pub fn own_bands(&self) -> impl Iterator<Item = FrequencyBand> + '_ {
        self.own.iter().map(|b| b.spec.band)
    }

    /// Every band the network touches with its occupancy, own bands first.
    pub fn bands(&self) -> Vec<(FrequencyBand, Occupancy)> {
        self.own
            .iter()
            .map(|b| (b.spec.band, b.state))
            .chain(self.leased_in.iter().map(|l| (l.band, Occupancy::LeasedIn)))
            .collect()
    }

    pub fn occupancy(&self, band: &FrequencyBand) -> Option<Occupancy> {
        self.own
            .iter()
            .find(|b| b.spec.band == *band)
            .map(|b| b.state)
            .or_else(|| {
                self.leased_in
                    .iter()
                    .any(|l| l.band == *band)
                    .then_some(Occupancy::LeasedIn)
            })
    }

    /// Leases this network currently holds as lessor: `(lease, band)`.
    pub fn leased_out(&self) -> impl Iterator<Item = (LeaseId, FrequencyBand)> + '_ {
        self.own
            .iter()
            .filter_map(|b| b.leased_as.map(|(id, _)| (id, b.spec.band)))
    }

    pub fn leased_in(&self) -> &[Lease] {
        &self.leased_in
    }

    pub fn outstanding_request(&self) -> Option<u64> {
        self.outstanding_request
    }

    fn is_sensing_instant(&self, now: UtcTime) -> bool {
        now.ticks().is_multiple_of(self.sensing_interval)
    }

    /// Drops leases whose term has ended, on both the lessor and lessee side.
    fn expire_local_leases(&mut self, now: UtcTime) {
        for band in &mut self.own {
            if let Some((_, expires_at)) = band.leased_as {
                if expires_at <= now {
                    band.leased_as = None;
                    band.state = Occupancy::Idle;
                }
            }
        }
        self.leased_in.retain(|l| l.expires_at > now);
    }

    fn set_primary(&mut self, idx: usize, present: bool) -> Option<Transition> {
        let band = &mut self.own[idx];
        let previous = band.state;
        let new_state = match (present, previous) {
            (true, Occupancy::OccupiedByPrimary) | (false, Occupancy::Idle | Occupancy::LeasedOut) => {
                return None
            }
            (true, _) => Occupancy::OccupiedByPrimary,
            (false, _) => Occupancy::Idle,
        };
        band.state = new_state;
        band.leased_as = None;
        Some(Transition {
            band: band.spec.band,
            new_state,
            previous,
        })
    }

    /// Steps every band's licensed-user model to `now` and reports any flips.
    ///
    /// Markov bands consume exactly one draw per band per call, pinned or not,
    /// so the random stream stays aligned regardless of scripted actions.
    pub fn advance_occupancy(&mut self, now: UtcTime) -> (Vec<Transition>, Vec<Outbound>) {
        self.expire_local_leases(now);
        let mut transitions = Vec::new();
        for idx in 0..self.own.len() {
            let band = &self.own[idx];
            let modeled = match band.spec.model {
                PrimaryUserModel::Diurnal { window } => {
                    !is_downtime(&window, &self.region, self.timebase, now)
                }
                PrimaryUserModel::Markov {
                    p_on_to_off,
                    p_off_to_on,
                } => {
                    let draw: f64 = self.rng.random();
                    if band.primary_present() {
                        draw >= p_on_to_off
                    } else {
                        draw < p_off_to_on
                    }
                }
            };
            let pinned = band.pinned_until.is_some_and(|until| now < until);
            if !pinned {
                self.own[idx].pinned_until = None;
            }
            if let Some(t) = self.set_primary(idx, modeled || pinned) {
                transitions.push(t);
            }
        }
        let outbound = if transitions.is_empty() {
            Vec::new()
        } else {
            let cause = if transitions.iter().any(|t| t.previous == Occupancy::LeasedOut) {
                ReportCause::PrimaryReturn
            } else {
                ReportCause::Transition
            };
            self.report(cause).into_iter().collect()
        };
        (transitions, outbound)
    }

    /// Licensed user reclaims `band` now and holds it for at least `hold_ticks`.
    pub fn handle_primary_return(
        &mut self,
        band: &FrequencyBand,
        now: UtcTime,
        hold_ticks: u64,
    ) -> Vec<Outbound> {
        let Some(idx) = self.own.iter().position(|b| b.spec.band == *band) else {
            return Vec::new();
        };
        self.own[idx].pinned_until = Some(now.saturating_add(hold_ticks));
        match self.set_primary(idx, true) {
            None => Vec::new(),
            Some(t) => {
                let cause = if t.previous == Occupancy::LeasedOut {
                    ReportCause::PrimaryReturn
                } else {
                    ReportCause::Transition
                };
                self.report(cause).into_iter().collect()
            }
        }
    }

    pub fn record(&self) -> NetworkRecord {
        NetworkRecord {
            network_id: self.id,
            region_id: self.region.id,
            occupied_bands: self
                .own
                .iter()
                .filter(|b| b.primary_present())
                .map(|b| b.spec.band)
                .collect(),
            idle_bands: self
                .own
                .iter()
                .filter(|b| !b.primary_present())
                .map(|b| b.spec.band)
                .collect(),
            permissions: self.permissions.clone(),
            availability: self.availability,
        }
    }

    /// Builds a UCLT update if the network reports to the coordinator directly.
    pub fn report(&mut self, cause: ReportCause) -> Option<Outbound> {
        if self.uplink != Uplink::Coordinator {
            return None;
        }
        self.report_version += 1;
        let version = self.report_version;
        for band in self.own.iter_mut().filter(|b| b.primary_present()) {
            band.last_occupied_report = Some(version);
        }
        Some(Outbound::ToCoordinator(MessageBody::UcltUpdate(UcltReport {
            version,
            cause,
            record: self.record(),
        })))
    }

    /// Samples every own band if `now` is a sensing instant. Returns whether it sampled.
    pub fn sense(&mut self, now: UtcTime) -> bool {
        if !self.is_sensing_instant(now) || self.last_sensed_at == Some(now) {
            return false;
        }
        for band in &mut self.own {
            band.reading = if band.primary_present() {
                SensingResult::PrimaryPresent
            } else {
                SensingResult::HoleDetected
            };
        }
        self.last_sensed_at = Some(now);
        true
    }

    /// Reading for `band` as of the most recent sensing instant.
    pub fn sense_band(&mut self, band: &FrequencyBand, now: UtcTime) -> Option<SensingResult> {
        self.sense(now);
        self.own
            .iter()
            .find(|b| b.spec.band == *band)
            .map(|b| b.reading)
    }

    /// All own bands sensed as carrying their licensed user.
    pub fn is_busy(&self) -> bool {
        self.own
            .iter()
            .all(|b| b.reading == SensingResult::PrimaryPresent)
    }

    fn has_sensed_hole(&self) -> bool {
        self.own
            .iter()
            .any(|b| b.reading == SensingResult::HoleDetected)
    }

    fn make_query(&mut self, demand: Demand) -> SpectrumQuery {
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.outstanding_request = Some(request_id);
        SpectrumQuery {
            request_id,
            requester: self.id,
            width_hz: demand.width_hz,
            min_duration_ticks: demand.min_duration_ticks,
            duration_ticks: demand.duration_ticks,
            mode: demand.mode,
        }
    }

    fn wrap_query(&self, q: SpectrumQuery) -> Option<Outbound> {
        match self.uplink {
            Uplink::None => None,
            Uplink::Coordinator => Some(Outbound::ToCoordinator(MessageBody::SpectrumQuery(q))),
            Uplink::Satellite => Some(Outbound::ToSatellite(MessageBody::SpectrumQuery(q))),
        }
    }

    /// Decides at a sensing instant whether to ask for remote spectrum.
    ///
    /// Over a direct link the network keeps asking while busy and unserved;
    /// over the satellite path it asks once per busy period unless refused.
    pub fn poll_demand(&mut self, now: UtcTime) -> Option<Outbound> {
        let demand = self.demand?;
        if self.last_sensed_at != Some(now) || self.outstanding_request.is_some() {
            return None;
        }
        let busy = self.is_busy();
        match self.uplink {
            Uplink::None => None,
            Uplink::Coordinator => {
                if !busy || !self.leased_in.is_empty() {
                    return None;
                }
                let q = self.make_query(demand);
                self.wrap_query(q)
            }
            Uplink::Satellite => {
                if !busy {
                    self.satellite_served = false;
                    return None;
                }
                if self.satellite_served {
                    return None;
                }
                let q = self.make_query(demand);
                self.wrap_query(q)
            }
        }
    }

    /// Scripted query: ignores busy state but not an outstanding request or held lease.
    pub fn force_query(&mut self) -> Option<Outbound> {
        let demand = self.demand?;
        if self.outstanding_request.is_some()
            || self.uplink == Uplink::None
            || !self.leased_in.is_empty()
        {
            return None;
        }
        let q = self.make_query(demand);
        self.wrap_query(q)
    }

    pub fn handle_message(&mut self, src: NodeId, body: &MessageBody, now: UtcTime) -> Vec<Outbound> {
        match body {
            MessageBody::SpectrumResponse(r) => {
                self.on_response(r, now);
                Vec::new()
            }
            MessageBody::LeaseGrant(g) => {
                self.on_lease_grant(g, now);
                Vec::new()
            }
            MessageBody::LeaseRevoke(r) => {
                self.on_revoke(r);
                Vec::new()
            }
            MessageBody::ProbeRequest(p) => vec![self.on_probe(src, p)],
            _ => Vec::new(),
        }
    }

    fn on_response(&mut self, r: &SpectrumResponse, now: UtcTime) {
        if r.requester != self.id || self.outstanding_request != Some(r.request_id) {
            return;
        }
        self.outstanding_request = None;
        match r.outcome {
            QueryOutcome::Granted(lease) if lease.expires_at > now && lease.lessee == self.id => {
                self.leased_in.push(lease);
            }
            QueryOutcome::IdleRegion(_) => self.satellite_served = true,
            _ => {}
        }
    }

    /// Lessor side of a grant. Refused when the band has been reported occupied
    /// since the coordinator's basis: that report revokes the lease on arrival.
    fn on_lease_grant(&mut self, g: &LeaseGrant, now: UtcTime) {
        let lease = &g.lease;
        if lease.lessor != self.id || lease.expires_at <= now {
            return;
        }
        let Some(band) = self.own.iter_mut().find(|b| b.spec.band == lease.band) else {
            return;
        };
        let stale = band
            .last_occupied_report
            .is_some_and(|v| v > g.basis_version);
        if band.state == Occupancy::Idle && !stale {
            band.state = Occupancy::LeasedOut;
            band.leased_as = Some((lease.lease_id, lease.expires_at));
        }
    }

    fn on_revoke(&mut self, r: &LeaseRevoke) {
        if r.lessee == self.id {
            self.leased_in.retain(|l| l.lease_id != r.lease_id);
        }
    }

    fn on_probe(&self, src: NodeId, p: &ProbeRequest) -> Outbound {
        Outbound::Reply {
            to: src,
            body: MessageBody::StatusReport(StatusReport {
                round_id: p.round_id,
                region: self.region.id,
                network: self.id,
                idle: self.has_sensed_hole(),
            }),
        }
    }

    /// `(owner, band)` pairs this network transmits on during tick `now`.
    pub fn transmissions(&self, now: UtcTime) -> Vec<(NetworkId, FrequencyBand)> {
        self.own
            .iter()
            .filter(|b| b.primary_present())
            .map(|b| (self.id, b.spec.band))
            .chain(
                self.leased_in
                    .iter()
                    .filter(|l| l.expires_at > now)
                    .map(|l| (l.lessor, l.band)),
            )
            .collect()
    }
}
