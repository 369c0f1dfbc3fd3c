//! Universal Communication Lookup Table.
//!
//! One [`NetworkRecord`] per network: which of its bands are occupied by
//! licensed users, which are idle, who may lease them and until when. The
//! coordinator owns the table and is its only writer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NetworkId, RegionId};
use crate::spectrum::{FrequencyBand, UtcTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UcltError {
    #[error("network {network}: occupied band {occupied} overlaps idle band {idle}")]
    OccupiedIdleOverlap {
        network: NetworkId,
        occupied: FrequencyBand,
        idle: FrequencyBand,
    },
    #[error("network {network}: availability window [{from}, {until}) is empty")]
    EmptyAvailability {
        network: NetworkId,
        from: UtcTime,
        until: UtcTime,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermissionMode {
    OpenToAll,
    AllowList,
}

/// Who may lease a network's idle bands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermissionSet {
    pub mode: PermissionMode,
    #[serde(default)]
    pub allowed: BTreeSet<NetworkId>,
}

impl PermissionSet {
    pub fn open() -> Self {
        Self {
            mode: PermissionMode::OpenToAll,
            allowed: BTreeSet::new(),
        }
    }

    pub fn allow_list(allowed: impl IntoIterator<Item = NetworkId>) -> Self {
        Self {
            mode: PermissionMode::AllowList,
            allowed: allowed.into_iter().collect(),
        }
    }

    pub fn admits(&self, requester: NetworkId) -> bool {
        match self.mode {
            PermissionMode::OpenToAll => true,
            PermissionMode::AllowList => self.allowed.contains(&requester),
        }
    }
}

impl Default for PermissionSet {
    fn default() -> Self {
        Self::open()
    }
}

/// Half-open interval `[from, until)` during which idle bands may be leased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvailabilityWindow {
    pub from: UtcTime,
    pub until: UtcTime,
}

impl AvailabilityWindow {
    pub const ALWAYS: AvailabilityWindow = AvailabilityWindow {
        from: UtcTime(0),
        until: UtcTime(u64::MAX),
    };

    pub fn is_valid(&self) -> bool {
        self.from < self.until
    }
}

impl Default for AvailabilityWindow {
    fn default() -> Self {
        Self::ALWAYS
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub network_id: NetworkId,
    pub region_id: RegionId,
    pub occupied_bands: BTreeSet<FrequencyBand>,
    pub idle_bands: BTreeSet<FrequencyBand>,
    pub permissions: PermissionSet,
    pub availability: AvailabilityWindow,
}

impl NetworkRecord {
    pub fn validate(&self) -> Result<(), UcltError> {
        if !self.availability.is_valid() {
            return Err(UcltError::EmptyAvailability {
                network: self.network_id,
                from: self.availability.from,
                until: self.availability.until,
            });
        }
        for occupied in &self.occupied_bands {
            if let Some(idle) = self.idle_bands.iter().find(|idle| idle.overlaps(occupied)) {
                return Err(UcltError::OccupiedIdleOverlap {
                    network: self.network_id,
                    occupied: *occupied,
                    idle: *idle,
                });
            }
        }
        Ok(())
    }
}

/// One lookup hit: an idle band offered by `lessor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IdleCandidate {
    pub lessor: NetworkId,
    pub band: FrequencyBand,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Uclt {
    records: BTreeMap<NetworkId, NetworkRecord>,
}

impl Uclt {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, network: NetworkId) -> Option<&NetworkRecord> {
        self.records.get(&network)
    }

    pub fn records(&self) -> impl Iterator<Item = &NetworkRecord> {
        self.records.values()
    }

    /// Inserts or wholly replaces the record for `record.network_id`.
    pub fn upsert_record(&mut self, record: NetworkRecord) -> Result<(), UcltError> {
        record.validate()?;
        self.records.insert(record.network_id, record);
        Ok(())
    }

    /// Idle bands `requester` may lease right now, ordered by lessor id then
    /// by `low_hz`. The requester's own record is never a candidate.
    pub fn lookup_idle_bands(
        &self,
        requester: NetworkId,
        needed_width_hz: u64,
        min_duration_ticks: u64,
        now: UtcTime,
    ) -> Vec<IdleCandidate> {
        self.records
            .values()
            .filter(|r| r.network_id != requester)
            .filter(|r| r.permissions.admits(requester))
            .filter(|r| {
                r.availability.from <= now
                    && r.availability.until.ticks_since(now) >= min_duration_ticks
            })
            .flat_map(|r| {
                r.idle_bands
                    .iter()
                    .filter(|b| b.width_hz() >= needed_width_hz)
                    .map(|b| IdleCandidate {
                        lessor: r.network_id,
                        band: *b,
                    })
            })
            .collect()
    }

    /// Drops every record whose availability has ended; returns the dropped ids.
    pub fn purge_expired(&mut self, now: UtcTime) -> Vec<NetworkId> {
        let expired: Vec<NetworkId> = self
            .records
            .values()
            .filter(|r| r.availability.until <= now)
            .map(|r| r.network_id)
            .collect();
        for id in &expired {
            self.records.remove(id);
        }
        expired
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lo: u64, hi: u64) -> FrequencyBand {
        FrequencyBand::new(lo, hi).unwrap()
    }

    fn record(id: u32, idle: &[(u64, u64)], until: u64) -> NetworkRecord {
        NetworkRecord {
            network_id: n(id),
            region_id: RegionId(1),
            occupied_bands: BTreeSet::new(),
            idle_bands: idle.iter().map(|&(l, h)| band(l, h)).collect(),
            permissions: PermissionSet::open(),
            availability: AvailabilityWindow {
                from: UtcTime(0),
                until: UtcTime(until),
            },
        }
    }

    fn n(id: u32) -> NetworkId {
        crate::ids::NodeId(id)
    }

    /// Independent filter written record-by-record, band-by-band.
    fn brute_lookup(
        records: &[NetworkRecord],
        requester: NetworkId,
        width: u64,
        min_dur: u64,
        now: u64,
    ) -> Vec<IdleCandidate> {
        let mut out = Vec::new();
        for r in records {
            if r.network_id == requester {
                continue;
            }
            let permitted = match r.permissions.mode {
                PermissionMode::OpenToAll => true,
                PermissionMode::AllowList => r.permissions.allowed.iter().any(|a| *a == requester),
            };
            let from_ok = r.availability.from.0 <= now;
            let remaining = r.availability.until.0.saturating_sub(now);
            if !permitted || !from_ok || remaining < min_dur {
                continue;
            }
            for b in &r.idle_bands {
                if b.high_hz() - b.low_hz() >= width {
                    out.push(IdleCandidate {
                        lessor: r.network_id,
                        band: *b,
                    });
                }
            }
        }
        out.sort_by_key(|c| (c.lessor, c.band.low_hz()));
        out
    }

    #[test]
    fn upsert_inserts_and_replaces() {
        let mut t = Uclt::new();
        t.upsert_record(record(1, &[(100, 200)], 50)).unwrap();
        assert_eq!(t.len(), 1);
        let v2 = record(1, &[(300, 400)], 60);
        t.upsert_record(v2.clone()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(n(1)), Some(&v2));
    }

    #[test]
    fn upsert_rejects_overlapping_report() {
        let mut t = Uclt::new();
        let mut r = record(1, &[(150, 250)], 50);
        r.occupied_bands.insert(band(100, 200));
        assert!(matches!(
            t.upsert_record(r),
            Err(UcltError::OccupiedIdleOverlap { .. })
        ));
        assert!(t.is_empty());
        // adjacency is fine
        let mut r = record(1, &[(200, 250)], 50);
        r.occupied_bands.insert(band(100, 200));
        t.upsert_record(r).unwrap();
    }

    #[test]
    fn lookup_on_empty_table() {
        assert!(Uclt::new().lookup_idle_bands(n(9), 1, 1, UtcTime(0)).is_empty());
    }

    #[test]
    fn lookup_single_open_record() {
        let mut t = Uclt::new();
        let recs = vec![record(1, &[(100, 200)], 1000)];
        t.upsert_record(recs[0].clone()).unwrap();
        let got = t.lookup_idle_bands(n(2), 50, 10, UtcTime(0));
        assert_eq!(got, brute_lookup(&recs, n(2), 50, 10, 0));
        assert_eq!(
            got,
            vec![IdleCandidate {
                lessor: n(1),
                band: band(100, 200)
            }]
        );
    }

    #[test]
    fn lookup_respects_allow_list() {
        let mut t = Uclt::new();
        let mut r = record(1, &[(100, 200)], 1000);
        r.permissions = PermissionSet::allow_list([n(3)]);
        t.upsert_record(r.clone()).unwrap();
        assert_eq!(t.lookup_idle_bands(n(2), 50, 10, UtcTime(0)), vec![]);
        assert_eq!(brute_lookup(&[r.clone()], n(2), 50, 10, 0), vec![]);
        assert_eq!(t.lookup_idle_bands(n(3), 50, 10, UtcTime(0)).len(), 1);

        // an empty allow-list admits nobody
        r.permissions = PermissionSet::allow_list([]);
        t.upsert_record(r).unwrap();
        assert!(t.lookup_idle_bands(n(3), 50, 10, UtcTime(0)).is_empty());
    }

    #[test]
    fn lookup_excludes_self_narrow_and_short() {
        let mut t = Uclt::new();
        t.upsert_record(record(1, &[(100, 120), (300, 400)], 100)).unwrap();
        assert!(t.lookup_idle_bands(n(1), 1, 1, UtcTime(0)).is_empty());
        assert_eq!(t.lookup_idle_bands(n(2), 50, 1, UtcTime(0)).len(), 1);
        assert_eq!(t.lookup_idle_bands(n(2), 1, 1, UtcTime(0)).len(), 2);
        assert_eq!(t.lookup_idle_bands(n(2), 1, 10, UtcTime(90)).len(), 2);
        assert!(t.lookup_idle_bands(n(2), 1, 11, UtcTime(90)).is_empty());
    }

    #[test]
    fn lookup_ordering_is_lessor_then_low() {
        let mut t = Uclt::new();
        let recs = vec![
            record(7, &[(500, 600), (100, 200)], 1000),
            record(3, &[(900, 1000), (10, 20)], 1000),
        ];
        for r in &recs {
            t.upsert_record(r.clone()).unwrap();
        }
        let got = t.lookup_idle_bands(n(1), 1, 1, UtcTime(0));
        assert_eq!(got, brute_lookup(&recs, n(1), 1, 1, 0));
        let lows: Vec<u64> = got.iter().map(|c| c.band.low_hz()).collect();
        assert_eq!(lows, vec![10, 900, 100, 500]);
    }

    #[test]
    fn window_not_yet_open_is_skipped() {
        let mut t = Uclt::new();
        let mut r = record(1, &[(100, 200)], 1000);
        r.availability.from = UtcTime(50);
        t.upsert_record(r).unwrap();
        assert!(t.lookup_idle_bands(n(2), 1, 1, UtcTime(49)).is_empty());
        assert_eq!(t.lookup_idle_bands(n(2), 1, 1, UtcTime(50)).len(), 1);
    }

    #[test]
    fn purge_boundary() {
        let mut t = Uclt::new();
        t.upsert_record(record(1, &[(1, 2)], 10)).unwrap();
        assert!(t.purge_expired(UtcTime(9)).is_empty());
        assert_eq!(t.len(), 1);
        assert_eq!(t.purge_expired(UtcTime(10)), vec![n(1)]);
        assert!(t.is_empty());
    }

    #[test]
    fn purge_mixed_table() {
        let recs: Vec<NetworkRecord> = [(1, 5), (2, 50), (3, 8), (4, 20), (5, 30)]
            .iter()
            .map(|&(id, until)| record(id, &[(1, 2)], until))
            .collect();
        let mut t = Uclt::new();
        for r in &recs {
            t.upsert_record(r.clone()).unwrap();
        }
        let now = 10;
        let live: Vec<NetworkId> = recs
            .iter()
            .filter(|r| r.availability.until.0 > now)
            .map(|r| r.network_id)
            .collect();
        t.purge_expired(UtcTime(now));
        assert_eq!(t.len(), 3);
        let kept: Vec<NetworkId> = t.records().map(|r| r.network_id).collect();
        assert_eq!(kept, live);
        assert!(t.records().all(|r| r.availability.until.0 > now));
    }
}
