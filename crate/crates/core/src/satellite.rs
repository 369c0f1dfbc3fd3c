//! Satellite constellation: a ring of satellites, one region each, that
//! relays queries to the coordinator and can shift duties along the ring so
//! the satellite over a busy region becomes free.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NetworkId, NodeId, RegionId};
use crate::protocol::{HandOverDirective, MessageBody, MessageKind, SpectrumQuery, StatusReport};
use crate::spectrum::UtcTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SatelliteError {
    #[error("unknown satellite {0}")]
    UnknownSatellite(NodeId),
    #[error("duplicate satellite {0}")]
    DuplicateSatellite(NodeId),
    #[error("ring positions must be a permutation of 0..{0}")]
    BadPositions(usize),
    #[error("region {0} is covered by more than one satellite")]
    DuplicateRegion(RegionId),
    #[error("busy and idle satellite are both {0}")]
    SameSatellite(NodeId),
    #[error("invalid hand-over chain: {0}")]
    InvalidChain(String),
    #[error("satellite {sat} is not responsible for region {region}")]
    NotResponsible { sat: NodeId, region: RegionId },
    #[error("satellite {0} has no duties to hand over")]
    NoDuties(NodeId),
    #[error("region {0} has no ground network")]
    NoGroundNetwork(RegionId),
    #[error("no cascade to reverse")]
    NothingToReverse,
    #[error("responsibility map no longer matches the cascade being reversed: {0}")]
    Diverged(String),
    #[error("step {step}: no route from {src} to {dst}")]
    Unreachable { step: u8, src: NodeId, dst: NodeId },
}

/// Whether the first and last satellites are adjacent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    #[default]
    Ring,
    /// Open chain: the ends are not neighbours.
    Arc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    order: Vec<NodeId>,
    topology: Topology,
}

impl Ring {
    /// `members` pairs each satellite with its ring position.
    pub fn new(members: &[(NodeId, u32)], topology: Topology) -> Result<Self, SatelliteError> {
        let n = members.len();
        let mut order = vec![None; n];
        for &(sat, pos) in members {
            let slot = order
                .get_mut(pos as usize)
                .ok_or(SatelliteError::BadPositions(n))?;
            if slot.is_some() {
                return Err(SatelliteError::BadPositions(n));
            }
            *slot = Some(sat);
        }
        let order: Vec<NodeId> = order.into_iter().map(Option::unwrap).collect();
        let mut seen = BTreeSet::new();
        for sat in &order {
            if !seen.insert(*sat) {
                return Err(SatelliteError::DuplicateSatellite(*sat));
            }
        }
        Ok(Self { order, topology })
    }

    /// Ring whose positions follow `order`.
    pub fn from_order(order: &[NodeId], topology: Topology) -> Result<Self, SatelliteError> {
        let members: Vec<(NodeId, u32)> = order
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u32))
            .collect();
        Self::new(&members, topology)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn members(&self) -> &[NodeId] {
        &self.order
    }

    pub fn position(&self, sat: NodeId) -> Option<usize> {
        self.order.iter().position(|s| *s == sat)
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        let (Some(pa), Some(pb)) = (self.position(a), self.position(b)) else {
            return false;
        };
        let diff = pa.abs_diff(pb);
        diff == 1 || (self.topology == Topology::Ring && self.len() > 2 && diff == self.len() - 1)
    }
}

/// Shortest path along the ring from `idle_sat` to `busy_sat`, both ends
/// included.
///
/// On a closed ring an even split is resolved by walking from the idle
/// satellite toward lower positions, so duties flow from the busy satellite
/// toward higher positions.
pub fn compute_handover_chain(
    ring: &Ring,
    busy_sat: NodeId,
    idle_sat: NodeId,
) -> Result<Vec<NodeId>, SatelliteError> {
    if busy_sat == idle_sat {
        return Err(SatelliteError::SameSatellite(busy_sat));
    }
    let n = ring.len();
    let j = ring
        .position(busy_sat)
        .ok_or(SatelliteError::UnknownSatellite(busy_sat))?;
    let i = ring
        .position(idle_sat)
        .ok_or(SatelliteError::UnknownSatellite(idle_sat))?;
    let (steps, down) = match ring.topology() {
        Topology::Arc => (i.abs_diff(j), i > j),
        Topology::Ring => {
            let down = (i + n - j) % n;
            let up = (j + n - i) % n;
            if down <= up {
                (down, true)
            } else {
                (up, false)
            }
        }
    };
    Ok((0..=steps)
        .map(|k| {
            let pos = if down { (i + n - k % n) % n } else { (i + k) % n };
            ring.order[pos]
        })
        .collect())
}

/// Who currently serves a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "entity", content = "id", rename_all = "snake_case")]
pub enum Responsible {
    Satellite(NodeId),
    /// The region's own ground network, absorbing its satellite's duties.
    Ground(NetworkId),
}

impl Responsible {
    pub fn node(&self) -> NodeId {
        match *self {
            Responsible::Satellite(id) | Responsible::Ground(id) => id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsibilityMap {
    assignment: BTreeMap<RegionId, Responsible>,
    /// Freed satellites lent to a busy region.
    extra_capacity: BTreeMap<NodeId, RegionId>,
}

impl ResponsibilityMap {
    pub fn responsible(&self, region: RegionId) -> Option<Responsible> {
        self.assignment.get(&region).copied()
    }

    pub fn assignment(&self) -> &BTreeMap<RegionId, Responsible> {
        &self.assignment
    }

    pub fn extra_capacity(&self) -> &BTreeMap<NodeId, RegionId> {
        &self.extra_capacity
    }

    /// Region whose duties `sat` currently carries.
    pub fn region_of(&self, sat: NodeId) -> Option<RegionId> {
        self.assignment
            .iter()
            .find(|(_, r)| **r == Responsible::Satellite(sat))
            .map(|(region, _)| *region)
    }

    pub fn is_free(&self, sat: NodeId) -> bool {
        self.extra_capacity.contains_key(&sat)
    }

    /// Total over `regions`, injective, and every satellite either on duty or free.
    pub fn check(
        &self,
        regions: &BTreeSet<RegionId>,
        satellites: &BTreeSet<NodeId>,
    ) -> Result<(), String> {
        let covered: BTreeSet<RegionId> = self.assignment.keys().copied().collect();
        if covered != *regions {
            return Err(format!(
                "covered regions {covered:?} differ from {regions:?}"
            ));
        }
        let mut entities = BTreeSet::new();
        for (region, r) in &self.assignment {
            if !entities.insert(r.node()) {
                return Err(format!("{} serves more than one region (again at {region})", r.node()));
            }
        }
        for sat in satellites {
            let on_duty = entities.contains(sat);
            let free = self.is_free(*sat);
            if on_duty == free {
                return Err(format!("satellite {sat}: on duty {on_duty}, free {free}"));
            }
        }
        for (sat, region) in &self.extra_capacity {
            if !satellites.contains(sat) || !regions.contains(region) {
                return Err(format!("bad extra capacity {sat} -> {region}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Satellite {
    pub id: NodeId,
    pub region: RegionId,
    pub ring_position: u32,
}

/// A cascade as applied, kept so it can be undone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedCascade {
    pub chain: Vec<NodeId>,
    /// `regions[k]` was served by `chain[k]` before the cascade.
    pub regions: Vec<RegionId>,
    pub ground: NetworkId,
}

#[derive(Debug, Clone)]
pub struct Constellation {
    ring: Ring,
    satellites: BTreeMap<NodeId, Satellite>,
    ground: BTreeMap<RegionId, NetworkId>,
    map: ResponsibilityMap,
    applied: Vec<AppliedCascade>,
}

impl Constellation {
    /// Each satellite starts on duty over its own region. `ground` names the
    /// network in each region.
    pub fn new(
        satellites: &[Satellite],
        topology: Topology,
        ground: BTreeMap<RegionId, NetworkId>,
    ) -> Result<Self, SatelliteError> {
        let members: Vec<(NodeId, u32)> =
            satellites.iter().map(|s| (s.id, s.ring_position)).collect();
        let ring = Ring::new(&members, topology)?;
        let mut map = ResponsibilityMap::default();
        for s in satellites {
            if map
                .assignment
                .insert(s.region, Responsible::Satellite(s.id))
                .is_some()
            {
                return Err(SatelliteError::DuplicateRegion(s.region));
            }
        }
        Ok(Self {
            ring,
            satellites: satellites.iter().map(|s| (s.id, *s)).collect(),
            ground,
            map,
            applied: Vec::new(),
        })
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    pub fn map(&self) -> &ResponsibilityMap {
        &self.map
    }

    pub fn satellite_ids(&self) -> BTreeSet<NodeId> {
        self.satellites.keys().copied().collect()
    }

    pub fn is_satellite(&self, id: NodeId) -> bool {
        self.satellites.contains_key(&id)
    }

    pub fn regions(&self) -> BTreeSet<RegionId> {
        self.satellites.values().map(|s| s.region).collect()
    }

    pub fn ground_network(&self, region: RegionId) -> Option<NetworkId> {
        self.ground.get(&region).copied()
    }

    pub fn responsible_satellite(&self, region: RegionId) -> Option<NodeId> {
        match self.map.responsible(region)? {
            Responsible::Satellite(id) => Some(id),
            Responsible::Ground(_) => None,
        }
    }

    pub fn applied(&self) -> &[AppliedCascade] {
        &self.applied
    }

    /// Satellites currently on duty with their regions, by satellite id.
    pub fn probe_targets(&self) -> Vec<(NodeId, RegionId)> {
        let mut targets: Vec<(NodeId, RegionId)> = self
            .map
            .assignment
            .iter()
            .filter_map(|(region, r)| match r {
                Responsible::Satellite(id) => Some((*id, *region)),
                Responsible::Ground(_) => None,
            })
            .collect();
        targets.sort();
        targets
    }

    pub fn check(&self) -> Result<(), String> {
        self.map.check(&self.regions(), &self.satellite_ids())
    }

    /// Shifts duties along `chain`: `chain[0]`'s region goes to that region's
    /// ground network, every later satellite's region goes to its predecessor
    /// and the last satellite is freed for the region it served. Emits one
    /// directive per hop, in chain order. Leaves the map untouched on error.
    pub fn execute_cascade(
        &mut self,
        chain: &[NodeId],
        idle_region: RegionId,
        now: UtcTime,
    ) -> Result<Vec<HandOverDirective>, SatelliteError> {
        if chain.len() < 2 {
            return Err(SatelliteError::InvalidChain(format!(
                "needs at least two satellites, got {}",
                chain.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for sat in chain {
            if !self.is_satellite(*sat) {
                return Err(SatelliteError::UnknownSatellite(*sat));
            }
            if !seen.insert(*sat) {
                return Err(SatelliteError::InvalidChain(format!("{sat} repeats")));
            }
        }
        for hop in chain.windows(2) {
            if !self.ring.adjacent(hop[0], hop[1]) {
                return Err(SatelliteError::InvalidChain(format!(
                    "{} and {} are not adjacent",
                    hop[0], hop[1]
                )));
            }
        }
        if self.map.responsible(idle_region) != Some(Responsible::Satellite(chain[0])) {
            return Err(SatelliteError::NotResponsible {
                sat: chain[0],
                region: idle_region,
            });
        }
        let ground = self
            .ground_network(idle_region)
            .ok_or(SatelliteError::NoGroundNetwork(idle_region))?;
        let regions = chain
            .iter()
            .map(|sat| self.map.region_of(*sat).ok_or(SatelliteError::NoDuties(*sat)))
            .collect::<Result<Vec<_>, _>>()?;

        let mut directives = Vec::with_capacity(chain.len());
        self.map
            .assignment
            .insert(regions[0], Responsible::Ground(ground));
        directives.push(HandOverDirective {
            from_entity: chain[0],
            to_entity: ground,
            region: regions[0],
            effective_at: now,
        });
        for k in 1..chain.len() {
            self.map
                .assignment
                .insert(regions[k], Responsible::Satellite(chain[k - 1]));
            directives.push(HandOverDirective {
                from_entity: chain[k],
                to_entity: chain[k - 1],
                region: regions[k],
                effective_at: now,
            });
        }
        let last = chain.len() - 1;
        self.map.extra_capacity.insert(chain[last], regions[last]);
        self.applied.push(AppliedCascade {
            chain: chain.to_vec(),
            regions,
            ground,
        });
        Ok(directives)
    }

    /// Undoes the most recent cascade, last hop first.
    pub fn reverse_last(&mut self, now: UtcTime) -> Result<Vec<HandOverDirective>, SatelliteError> {
        let cascade = self
            .applied
            .last()
            .ok_or(SatelliteError::NothingToReverse)?
            .clone();
        let holder = |k: usize| {
            if k == 0 {
                Responsible::Ground(cascade.ground)
            } else {
                Responsible::Satellite(cascade.chain[k - 1])
            }
        };
        for (k, region) in cascade.regions.iter().enumerate() {
            if self.map.responsible(*region) != Some(holder(k)) {
                return Err(SatelliteError::Diverged(format!(
                    "region {region} is not held by {}",
                    holder(k).node()
                )));
            }
        }
        let freed = *cascade.chain.last().unwrap();
        if !self.map.is_free(freed) {
            return Err(SatelliteError::Diverged(format!("{freed} is not free")));
        }
        self.applied.pop();
        self.map.extra_capacity.remove(&freed);
        let mut directives = Vec::with_capacity(cascade.chain.len());
        for k in (0..cascade.chain.len()).rev() {
            let region = cascade.regions[k];
            directives.push(HandOverDirective {
                from_entity: holder(k).node(),
                to_entity: cascade.chain[k],
                region,
                effective_at: now,
            });
            self.map
                .assignment
                .insert(region, Responsible::Satellite(cascade.chain[k]));
        }
        Ok(directives)
    }

    /// Where satellite `sat` forwards a frame from `src`, if anywhere.
    /// Satellites keep no per-query state: responses name their requester.
    pub fn relay(&self, sat: NodeId, crfc: NodeId, src: NodeId, body: &MessageBody) -> Option<NodeId> {
        match body {
            MessageBody::SpectrumQuery(_) | MessageBody::StatusReport(_) if src != crfc => Some(crfc),
            MessageBody::ProbeRequest(_) if src == crfc => {
                self.ground_network(self.map.region_of(sat)?)
            }
            MessageBody::SpectrumResponse(r) if src == crfc => Some(r.requester),
            _ => None,
        }
    }
}

/// First idle region in id order, never the busy one.
pub fn choose_idle_region(statuses: &BTreeMap<RegionId, bool>, busy: RegionId) -> Option<RegionId> {
    statuses
        .iter()
        .find(|(region, idle)| **idle && **region != busy)
        .map(|(region, _)| *region)
}

/// Coordinator-side state of one probe round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRound {
    pub round_id: u64,
    pub querying_sat: NodeId,
    pub query: SpectrumQuery,
    pub busy_region: RegionId,
    expected: BTreeSet<RegionId>,
    statuses: BTreeMap<RegionId, bool>,
}

impl ProbeRound {
    pub fn new(
        round_id: u64,
        querying_sat: NodeId,
        query: SpectrumQuery,
        busy_region: RegionId,
        expected: BTreeSet<RegionId>,
    ) -> Self {
        Self {
            round_id,
            querying_sat,
            query,
            busy_region,
            expected,
            statuses: BTreeMap::new(),
        }
    }

    /// Records a status; true once every probed region has answered.
    pub fn record(&mut self, status: &StatusReport) -> bool {
        if status.round_id == self.round_id && self.expected.contains(&status.region) {
            self.statuses.insert(status.region, status.idle);
        }
        self.is_complete()
    }

    pub fn is_complete(&self) -> bool {
        self.statuses.len() == self.expected.len()
    }

    pub fn chosen(&self) -> Option<RegionId> {
        choose_idle_region(&self.statuses, self.busy_region)
    }
}

/// One message of the query sequence, tagged with its step number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlannedMessage {
    pub step: u8,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuerySequence {
    pub messages: Vec<PlannedMessage>,
    pub chosen: Option<RegionId>,
}

/// Expected message sequence for one satellite-path query from `busy_region`,
/// with `idle` giving each region's sensed status. `reachable(a, b)` says
/// whether a link joins `a` and `b`.
pub fn run_query_sequence(
    constellation: &Constellation,
    crfc: NodeId,
    reachable: impl Fn(NodeId, NodeId) -> bool,
    idle: &BTreeMap<RegionId, bool>,
    busy_region: RegionId,
) -> Result<QuerySequence, SatelliteError> {
    let mut messages = Vec::new();
    let mut hop = |step: u8, src: NodeId, dst: NodeId, kind: MessageKind| {
        if reachable(src, dst) {
            messages.push(PlannedMessage {
                step,
                src,
                dst,
                kind,
            });
            Ok(())
        } else {
            Err(SatelliteError::Unreachable { step, src, dst })
        }
    };
    let busy_net = constellation
        .ground_network(busy_region)
        .ok_or(SatelliteError::NoGroundNetwork(busy_region))?;
    let qsat = constellation
        .responsible_satellite(busy_region)
        .ok_or(SatelliteError::NoGroundNetwork(busy_region))?;
    let targets = constellation.probe_targets();
    let ground = |region: RegionId| {
        constellation
            .ground_network(region)
            .ok_or(SatelliteError::NoGroundNetwork(region))
    };

    hop(1, busy_net, qsat, MessageKind::SpectrumQuery)?;
    hop(2, qsat, crfc, MessageKind::SpectrumQuery)?;
    for (sat, _) in &targets {
        hop(3, crfc, *sat, MessageKind::ProbeRequest)?;
    }
    for (sat, region) in &targets {
        hop(4, *sat, ground(*region)?, MessageKind::ProbeRequest)?;
    }
    for (sat, region) in &targets {
        hop(5, ground(*region)?, *sat, MessageKind::StatusReport)?;
    }
    for (sat, _) in &targets {
        hop(6, *sat, crfc, MessageKind::StatusReport)?;
    }
    hop(7, crfc, qsat, MessageKind::SpectrumResponse)?;
    hop(8, qsat, busy_net, MessageKind::SpectrumResponse)?;

    let statuses: BTreeMap<RegionId, bool> = targets
        .iter()
        .map(|(_, region)| (*region, idle.get(region).copied().unwrap_or(false)))
        .collect();
    Ok(QuerySequence {
        messages,
        chosen: choose_idle_region(&statuses, busy_region),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|i| NodeId(*i)).collect()
    }

    fn ring(v: &[u32], topology: Topology) -> Ring {
        Ring::from_order(&ids(v), topology).unwrap()
    }

    /// Satellites 1..=n at positions 0..n over regions 1..=n; ground network
    /// of region r is 100 + r.
    fn constellation(n: u32, topology: Topology) -> Constellation {
        let sats: Vec<Satellite> = (1..=n)
            .map(|i| Satellite {
                id: NodeId(i),
                region: RegionId(i),
                ring_position: i - 1,
            })
            .collect();
        let ground = (1..=n).map(|i| (RegionId(i), NodeId(100 + i))).collect();
        Constellation::new(&sats, topology, ground).unwrap()
    }

    /// All simple paths between two positions of a cycle (or path) graph.
    fn simple_paths(n: usize, closed: bool, from: usize, to: usize) -> Vec<Vec<usize>> {
        fn walk(
            n: usize,
            closed: bool,
            to: usize,
            path: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            let at = *path.last().unwrap();
            if at == to {
                out.push(path.clone());
                return;
            }
            for next in 0..n {
                let d = at.abs_diff(next);
                let adjacent = d == 1 || (closed && n > 2 && d == n - 1);
                if adjacent && !path.contains(&next) {
                    path.push(next);
                    walk(n, closed, to, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(n, closed, to, &mut vec![from], &mut out);
        out
    }

    /// Shortest path; among ties, the one whose reverse climbs positions mod n.
    fn brute_chain(n: usize, closed: bool, busy: usize, idle: usize) -> Vec<usize> {
        let paths = simple_paths(n, closed, idle, busy);
        let best = paths.iter().map(Vec::len).min().unwrap();
        let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == best).collect();
        if shortest.len() == 1 {
            return shortest[0].clone();
        }
        shortest
            .into_iter()
            .find(|p| p.windows(2).all(|w| w[1] == (w[0] + n - 1) % n))
            .unwrap()
            .clone()
    }

    #[test]
    fn arc_of_three() {
        let r = ring(&[1, 2, 3], Topology::Arc);
        assert_eq!(
            compute_handover_chain(&r, NodeId(1), NodeId(3)).unwrap(),
            ids(&[3, 2, 1])
        );
    }

    #[test]
    fn closed_ring_of_three_takes_the_short_way() {
        let r = ring(&[1, 2, 3], Topology::Ring);
        assert_eq!(
            compute_handover_chain(&r, NodeId(1), NodeId(3)).unwrap(),
            ids(&[3, 1])
        );
    }

    #[test]
    fn adjacent_pair() {
        let r = ring(&[1, 2], Topology::Ring);
        assert_eq!(
            compute_handover_chain(&r, NodeId(1), NodeId(2)).unwrap(),
            ids(&[2, 1])
        );
    }

    #[test]
    fn six_ring_tie() {
        let r = ring(&[1, 2, 3, 4, 5, 6], Topology::Ring);
        assert_eq!(
            compute_handover_chain(&r, NodeId(1), NodeId(4)).unwrap(),
            ids(&[4, 3, 2, 1])
        );
    }

    #[test]
    fn same_or_unknown_satellite() {
        let r = ring(&[1, 2, 3], Topology::Ring);
        assert_eq!(
            compute_handover_chain(&r, NodeId(2), NodeId(2)),
            Err(SatelliteError::SameSatellite(NodeId(2)))
        );
        assert_eq!(
            compute_handover_chain(&r, NodeId(9), NodeId(2)),
            Err(SatelliteError::UnknownSatellite(NodeId(9)))
        );
    }

    #[test]
    fn chains_match_brute_force() {
        for topology in [Topology::Ring, Topology::Arc] {
            for n in 2..=8usize {
                let order: Vec<u32> = (1..=n as u32).collect();
                let r = ring(&order, topology);
                for busy in 0..n {
                    for idle in (0..n).filter(|i| *i != busy) {
                        let got = compute_handover_chain(
                            &r,
                            NodeId(busy as u32 + 1),
                            NodeId(idle as u32 + 1),
                        )
                        .unwrap();
                        let want: Vec<NodeId> =
                            brute_chain(n, topology == Topology::Ring, busy, idle)
                                .into_iter()
                                .map(|p| NodeId(p as u32 + 1))
                                .collect();
                        assert_eq!(got, want, "{topology:?} n={n} busy={busy} idle={idle}");
                    }
                }
            }
        }
    }

    #[test]
    fn positions_must_be_a_permutation() {
        assert!(Ring::new(&[(NodeId(1), 0), (NodeId(2), 2)], Topology::Ring).is_err());
        assert!(Ring::new(&[(NodeId(1), 0), (NodeId(2), 0)], Topology::Ring).is_err());
        assert!(Ring::new(&[(NodeId(1), 0), (NodeId(1), 1)], Topology::Ring).is_err());
    }

    #[test]
    fn three_hop_cascade() {
        let mut c = constellation(3, Topology::Arc);
        let directives = c
            .execute_cascade(&ids(&[3, 2, 1]), RegionId(3), UtcTime(9))
            .unwrap();
        let m = c.map();
        assert_eq!(m.responsible(RegionId(3)), Some(Responsible::Ground(NodeId(103))));
        assert_eq!(m.responsible(RegionId(2)), Some(Responsible::Satellite(NodeId(3))));
        assert_eq!(m.responsible(RegionId(1)), Some(Responsible::Satellite(NodeId(2))));
        assert!(m.is_free(NodeId(1)));
        assert_eq!(m.extra_capacity()[&NodeId(1)], RegionId(1));
        c.check().unwrap();
        let hops: Vec<(u32, u32, u32)> = directives
            .iter()
            .map(|d| (d.from_entity.0, d.to_entity.0, d.region.0))
            .collect();
        assert_eq!(hops, vec![(3, 103, 3), (2, 3, 2), (1, 2, 1)]);
    }

    #[test]
    fn minimal_cascade() {
        let mut c = constellation(2, Topology::Ring);
        let d = c.execute_cascade(&ids(&[2, 1]), RegionId(2), UtcTime(0)).unwrap();
        assert_eq!(d.len(), 2);
        assert!(c.map().is_free(NodeId(1)));
        c.check().unwrap();
    }

    #[test]
    fn invalid_chain_leaves_map_alone() {
        let mut c = constellation(4, Topology::Arc);
        let before = c.map().clone();
        for (chain, region) in [
            (ids(&[3, 1]), 3),
            (ids(&[3]), 3),
            (ids(&[3, 2, 3]), 3),
            (ids(&[2, 1]), 3),
            (ids(&[3, 9]), 3),
        ] {
            assert!(c.execute_cascade(&chain, RegionId(region), UtcTime(0)).is_err());
            assert_eq!(c.map(), &before);
        }
        assert!(c.applied().is_empty());
    }

    #[test]
    fn chain_through_a_free_satellite_is_rejected() {
        let mut c = constellation(4, Topology::Arc);
        c.execute_cascade(&ids(&[3, 2]), RegionId(3), UtcTime(0)).unwrap();
        let before = c.map().clone();
        assert_eq!(
            c.execute_cascade(&ids(&[4, 3, 2, 1]), RegionId(4), UtcTime(0)),
            Err(SatelliteError::NoDuties(NodeId(2)))
        );
        assert_eq!(c.map(), &before);
    }

    #[test]
    fn two_cascades_then_reversal_restore_assignment() {
        let mut c = constellation(6, Topology::Ring);
        let original = c.map().clone();
        let first = compute_handover_chain(c.ring(), NodeId(1), NodeId(3)).unwrap();
        c.execute_cascade(&first, RegionId(3), UtcTime(1)).unwrap();
        c.execute_cascade(&ids(&[5, 6]), RegionId(5), UtcTime(2)).unwrap();
        c.check().unwrap();

        // permutation oracle: compose the two hand-overs on a plain map
        let mut expected: BTreeMap<u32, u32> = (1..=6).map(|r| (r, r)).collect();
        expected.insert(3, 103);
        expected.insert(2, 3);
        expected.insert(1, 2);
        expected.insert(5, 105);
        expected.insert(6, 5);
        let actual: BTreeMap<u32, u32> = c
            .map()
            .assignment()
            .iter()
            .map(|(r, e)| (r.0, e.node().0))
            .collect();
        assert_eq!(actual, expected);

        let back = c.reverse_last(UtcTime(3)).unwrap();
        assert_eq!(back.len(), 2);
        c.reverse_last(UtcTime(4)).unwrap();
        assert_eq!(c.map(), &original);
        assert_eq!(c.reverse_last(UtcTime(5)), Err(SatelliteError::NothingToReverse));
    }

    #[test]
    fn relay_rules() {
        let c = constellation(3, Topology::Arc);
        let crfc = NodeId(50);
        let probe = MessageBody::ProbeRequest(crate::protocol::ProbeRequest {
            round_id: 0,
            busy_region: RegionId(1),
        });
        assert_eq!(c.relay(NodeId(2), crfc, crfc, &probe), Some(NodeId(102)));
        assert_eq!(c.relay(NodeId(2), crfc, NodeId(102), &probe), None);
    }

    #[test]
    fn nine_step_shape() {
        let c = constellation(3, Topology::Arc);
        let idle: BTreeMap<RegionId, bool> =
            [(RegionId(1), false), (RegionId(2), false), (RegionId(3), true)].into();
        let seq = run_query_sequence(&c, NodeId(50), |_, _| true, &idle, RegionId(1)).unwrap();
        use MessageKind::*;
        let kinds: Vec<MessageKind> = seq.messages.iter().map(|m| m.kind).collect();
        let mut want = vec![SpectrumQuery, SpectrumQuery];
        want.extend([ProbeRequest; 6]);
        want.extend([StatusReport; 6]);
        want.extend([SpectrumResponse, SpectrumResponse]);
        assert_eq!(kinds, want);
        assert_eq!(seq.messages.len(), 2 + 2 * 3 + 2 * 3 + 2);
        assert_eq!(seq.chosen, Some(RegionId(3)));

        let none: BTreeMap<RegionId, bool> = BTreeMap::new();
        let seq = run_query_sequence(&c, NodeId(50), |_, _| true, &none, RegionId(1)).unwrap();
        assert_eq!(seq.messages.len(), 16);
        assert_eq!(seq.chosen, None);
    }

    #[test]
    fn single_satellite_excludes_itself() {
        let c = constellation(1, Topology::Ring);
        let idle: BTreeMap<RegionId, bool> = [(RegionId(1), true)].into();
        let seq = run_query_sequence(&c, NodeId(50), |_, _| true, &idle, RegionId(1)).unwrap();
        assert_eq!(seq.chosen, None);
        assert_eq!(seq.messages.len(), 2 + 2 + 2 + 2);
    }

    #[test]
    fn unreachable_coordinator_fails_at_step_two() {
        let c = constellation(3, Topology::Arc);
        let crfc = NodeId(50);
        let err = run_query_sequence(&c, crfc, |a, b| a != crfc && b != crfc, &BTreeMap::new(), RegionId(1))
            .unwrap_err();
        assert_eq!(
            err,
            SatelliteError::Unreachable {
                step: 2,
                src: NodeId(1),
                dst: crfc
            }
        );
    }
}
