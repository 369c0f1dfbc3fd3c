//! The spectrum coordinator: answers queries from the UCLT and manages leases.
//!
//! A single-threaded state machine. Every mutation goes through one of the
//! `handle_*`/`apply_*`/`expire_*` methods, each of which leaves the
//! [`LeaseTable`] exclusivity invariant intact.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::{LeaseId, NetworkId};
use crate::protocol::{
    Lease, LeaseGrant, LeaseRevoke, QueryOutcome, RevokeReason, SpectrumQuery, SpectrumResponse,
    UcltReport,
};
use crate::spectrum::{FrequencyBand, UtcTime};
use crate::uclt::{IdleCandidate, Uclt, UcltError};

/// Active leases, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeaseTable {
    active: BTreeMap<LeaseId, Lease>,
}

impl LeaseTable {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn get(&self, id: LeaseId) -> Option<&Lease> {
        self.active.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Lease> {
        self.active.values()
    }

    pub fn conflicts_with(&self, lessor: NetworkId, band: &FrequencyBand) -> bool {
        self.active
            .values()
            .any(|l| l.lessor == lessor && l.band.overlaps(band))
    }

    /// Checks that no two leases of one lessor overlap.
    pub fn check_exclusive(&self) -> Result<(), String> {
        let leases: Vec<&Lease> = self.active.values().collect();
        for (i, a) in leases.iter().enumerate() {
            if a.lessor == a.lessee || a.granted_at >= a.expires_at {
                return Err(format!("malformed lease {}", a.lease_id));
            }
            for b in &leases[i + 1..] {
                if a.lessor == b.lessor && a.band.overlaps(&b.band) {
                    return Err(format!(
                        "leases {} and {} overlap on lessor {}",
                        a.lease_id, b.lease_id, a.lessor
                    ));
                }
            }
        }
        Ok(())
    }

    fn insert(&mut self, lease: Lease) {
        self.active.insert(lease.lease_id, lease);
    }

    fn remove_where(&mut self, mut pred: impl FnMut(&Lease) -> bool) -> Vec<Lease> {
        let ids: Vec<LeaseId> = self
            .active
            .values()
            .filter(|l| pred(l))
            .map(|l| l.lease_id)
            .collect();
        ids.iter().filter_map(|id| self.active.remove(id)).collect()
    }
}

/// A band whose previous lessee may still be transmitting until `clear_at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Quarantine {
    lessor: NetworkId,
    band: FrequencyBand,
    clear_at: UtcTime,
}

/// Result of handling one [`SpectrumQuery`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub response: SpectrumResponse,
    /// Notice for the lessor when a lease was granted.
    pub grant: Option<LeaseGrant>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coordinator {
    uclt: Uclt,
    leases: LeaseTable,
    /// Known networks and the one-way delay of the coordinator's link to each.
    roster: BTreeMap<NetworkId, u64>,
    report_versions: BTreeMap<NetworkId, u64>,
    quarantine: Vec<Quarantine>,
    next_lease_id: u64,
}

impl Coordinator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a network reachable over a link with one-way delay `delta_ticks`.
    pub fn register_network(&mut self, network: NetworkId, delta_ticks: u64) {
        self.roster.insert(network, delta_ticks);
    }

    pub fn is_registered(&self, network: NetworkId) -> bool {
        self.roster.contains_key(&network)
    }

    pub fn uclt(&self) -> &Uclt {
        &self.uclt
    }

    pub fn leases(&self) -> &LeaseTable {
        &self.leases
    }

    pub fn registered(&self) -> BTreeSet<NetworkId> {
        self.roster.keys().copied().collect()
    }

    fn delta_to(&self, network: NetworkId) -> u64 {
        self.roster.get(&network).copied().unwrap_or(0)
    }

    fn blocked(&self, candidate: &IdleCandidate, requester: NetworkId, now: UtcTime) -> bool {
        if self.leases.conflicts_with(candidate.lessor, &candidate.band) {
            return true;
        }
        let first_use = now.saturating_add(self.delta_to(requester));
        self.quarantine.iter().any(|q| {
            q.lessor == candidate.lessor && q.band.overlaps(&candidate.band) && first_use < q.clear_at
        })
    }

    /// First-fit allocation over the UCLT's deterministic candidate order.
    pub fn handle_query(&mut self, q: &SpectrumQuery, now: UtcTime) -> QueryResult {
        let respond = |outcome| SpectrumResponse {
            request_id: q.request_id,
            requester: q.requester,
            outcome,
        };
        if !self.is_registered(q.requester) {
            return QueryResult {
                response: respond(QueryOutcome::UnknownRequester),
                grant: None,
            };
        }
        let candidates =
            self.uclt
                .lookup_idle_bands(q.requester, q.width_hz, q.min_duration_ticks, now);
        let Some(chosen) = candidates
            .iter()
            .find(|c| !self.blocked(c, q.requester, now))
            .copied()
        else {
            return QueryResult {
                response: respond(QueryOutcome::NoSpectrum),
                grant: None,
            };
        };
        let until = self
            .uclt
            .get(chosen.lessor)
            .map(|r| r.availability.until)
            .unwrap_or(now);
        let expires_at = now.saturating_add(q.duration_ticks).min(until);
        if expires_at <= now {
            return QueryResult {
                response: respond(QueryOutcome::NoSpectrum),
                grant: None,
            };
        }
        let lease = Lease {
            lease_id: LeaseId(self.next_lease_id),
            lessor: chosen.lessor,
            lessee: q.requester,
            band: chosen.band,
            granted_at: now,
            expires_at,
            mode: q.mode,
        };
        self.next_lease_id += 1;
        self.leases.insert(lease);
        QueryResult {
            response: respond(QueryOutcome::Granted(lease)),
            grant: Some(LeaseGrant {
                lease,
                basis_version: self.report_versions.get(&chosen.lessor).copied().unwrap_or(0),
            }),
        }
    }

    /// Applies a network's report and revokes leases on bands it now marks occupied.
    pub fn apply_report(
        &mut self,
        report: &UcltReport,
        now: UtcTime,
    ) -> Result<Vec<LeaseRevoke>, UcltError> {
        self.uclt.upsert_record(report.record.clone())?;
        let network = report.record.network_id;
        let version = self.report_versions.entry(network).or_insert(0);
        *version = (*version).max(report.version);
        let mut revokes = Vec::new();
        for band in &report.record.occupied_bands {
            revokes.extend(self.revoke_on_primary_return(network, *band, now));
        }
        Ok(revokes)
    }

    /// Revokes every lease of `lessor` overlapping `band`, one notice per lease.
    pub fn revoke_on_primary_return(
        &mut self,
        lessor: NetworkId,
        band: FrequencyBand,
        now: UtcTime,
    ) -> Vec<LeaseRevoke> {
        let removed = self
            .leases
            .remove_where(|l| l.lessor == lessor && l.band.overlaps(&band));
        removed
            .into_iter()
            .map(|lease| {
                self.quarantine.push(Quarantine {
                    lessor,
                    band: lease.band,
                    clear_at: now.saturating_add(self.delta_to(lease.lessee)),
                });
                revoke_for(&lease, RevokeReason::PrimaryReturn)
            })
            .collect()
    }

    /// Removes leases whose term has ended. Idempotent for a fixed `now`.
    pub fn expire_leases(&mut self, now: UtcTime) -> Vec<LeaseRevoke> {
        self.leases
            .remove_where(|l| l.expires_at <= now)
            .iter()
            .map(|l| revoke_for(l, RevokeReason::Expired))
            .collect()
    }

    /// Per-tick upkeep: lease expiry, UCLT staleness, finished quarantines.
    pub fn housekeeping(&mut self, now: UtcTime) -> Vec<LeaseRevoke> {
        let revokes = self.expire_leases(now);
        self.uclt.purge_expired(now);
        self.quarantine.retain(|q| q.clear_at > now);
        revokes
    }
}

fn revoke_for(lease: &Lease, reason: RevokeReason) -> LeaseRevoke {
    LeaseRevoke {
        lease_id: lease.lease_id,
        lessor: lease.lessor,
        lessee: lease.lessee,
        band: lease.band,
        reason,
    }
}
