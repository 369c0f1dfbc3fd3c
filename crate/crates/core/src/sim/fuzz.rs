//! Seeded random scenarios for stress testing the leasing protocol.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ids::{LeaseId, LinkId, NodeId, RegionId};
use crate::link::LinkConfig;
use crate::network::{BandSpec, Demand, InitialState, PrimaryUserModel};
use crate::protocol::{
    AccessMode, HandOverDirective, Lease, LeaseGrant, LeaseRevoke, MessageBody, ProbeRequest,
    QueryOutcome, ReportCause, RevokeReason, SpectrumQuery, SpectrumResponse, StatusReport,
    UcltReport, WireMessage,
};
use crate::satellite::Topology;
use crate::sim::scenario::{Action, CrfcConfig, NetworkConfig, RegionConfig, ScenarioConfig, ScriptedAction};
use crate::spectrum::{DowntimeWindow, FrequencyBand, UtcTime};
use crate::uclt::{AvailabilityWindow, NetworkRecord, PermissionSet};

pub const FUZZ_CRFC: NodeId = NodeId(1000);

/// Bounds for [`random_scenario`].
#[derive(Debug, Clone, Copy)]
pub struct FuzzLimits {
    pub max_networks: usize,
    pub max_bands: usize,
    pub duration_ticks: u64,
}

impl Default for FuzzLimits {
    fn default() -> Self {
        Self {
            max_networks: 5,
            max_bands: 8,
            duration_ticks: 400,
        }
    }
}

/// A valid scenario with 2..=`max_networks` networks sharing at most
/// `max_bands` bands, a coordinator linked to every network with mixed
/// delays, markov and diurnal users, and scripted returns and queries.
pub fn random_scenario(seed: u64, limits: FuzzLimits) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_networks = rng.random_range(2..=limits.max_networks.max(2));
    let n_bands = rng.random_range(n_networks..=limits.max_bands.max(n_networks));
    // a small channel grid so bands of different networks often coincide
    let grid: Vec<FrequencyBand> = (0..4u64)
        .map(|i| FrequencyBand::new(1_000 + i * 200, 1_200 + i * 200).unwrap())
        .collect();

    let mut per_network = vec![1usize; n_networks];
    for _ in n_networks..n_bands {
        per_network[rng.random_range(0..n_networks)] += 1;
    }

    // coarse ticks make diurnal windows turn over within a short run
    let tick_seconds = [60u32, 600, 1800][rng.random_range(0..3)];
    let duration = limits.duration_ticks;
    let mut regions = Vec::new();
    let mut networks = Vec::new();
    let mut links = Vec::new();
    let mut actions = Vec::new();
    for (i, count) in per_network.iter().enumerate() {
        let id = NodeId(i as u32 + 1);
        let region = RegionId(i as u32 + 1);
        regions.push(RegionConfig {
            id: region,
            utc_offset_minutes: rng.random_range(-12..=14) * 60,
        });
        let mut channels: Vec<usize> = (0..grid.len()).collect();
        let mut bands = Vec::new();
        for _ in 0..(*count).min(grid.len()) {
            let band = grid[channels.swap_remove(rng.random_range(0..channels.len()))];
            let model = if rng.random_bool(0.5) {
                PrimaryUserModel::Markov {
                    p_on_to_off: rng.random_range(0.0..0.2),
                    p_off_to_on: rng.random_range(0.0..0.2),
                }
            } else {
                PrimaryUserModel::Diurnal {
                    window: DowntimeWindow::daily(
                        rng.random_range(0..1440),
                        rng.random_range(1..=1440),
                    )
                    .unwrap(),
                }
            };
            let initial = if rng.random_bool(0.5) {
                InitialState::Occupied
            } else {
                InitialState::Idle
            };
            bands.push(BandSpec {
                band,
                model,
                initial,
            });
        }
        bands.sort_by_key(|b| b.band);
        let permissions = if rng.random_bool(0.8) {
            PermissionSet::open()
        } else {
            PermissionSet::allow_list(
                (1..=n_networks as u32)
                    .map(NodeId)
                    .filter(|_| rng.random_bool(0.5)),
            )
        };
        let availability = if rng.random_bool(0.7) {
            AvailabilityWindow::ALWAYS
        } else {
            let from = rng.random_range(0..duration / 2);
            AvailabilityWindow {
                from: UtcTime(from),
                until: UtcTime(rng.random_range(from + 1..=duration)),
            }
        };
        let demand = rng.random_bool(0.9).then(|| Demand {
            width_hz: [50, 100, 200][rng.random_range(0..3)],
            min_duration_ticks: rng.random_range(1..=20),
            duration_ticks: rng.random_range(5..=150),
            mode: if rng.random_bool(0.5) {
                AccessMode::Dynamic
            } else {
                AccessMode::Opportunistic
            },
        });
        let n_bands_here = bands.len();
        networks.push(NetworkConfig {
            id,
            region,
            sensing_interval: rng.random_range(1..=6),
            bands,
            permissions,
            availability,
            demand,
        });
        links.push(LinkConfig {
            id: LinkId(i as u32 + 1),
            a: id,
            b: FUZZ_CRFC,
            delta_ticks: rng.random_range(0..=5),
        });
        for _ in 0..rng.random_range(0..=3) {
            actions.push(ScriptedAction {
                at: rng.random_range(0..duration),
                action: Action::PrimaryReturn {
                    network: id,
                    band: rng.random_range(0..n_bands_here),
                    hold_ticks: rng.random_range(0..=60),
                },
            });
        }
        for _ in 0..rng.random_range(0..=2) {
            actions.push(ScriptedAction {
                at: rng.random_range(0..duration),
                action: Action::Query { network: id },
            });
        }
    }
    actions.sort_by_key(|a| a.at);

    ScenarioConfig {
        tick_seconds,
        duration_ticks: duration,
        global_seed: rng.random(),
        regions,
        crfc: Some(CrfcConfig { id: FUZZ_CRFC }),
        networks,
        links,
        satellites: Vec::new(),
        constellation_topology: Topology::Ring,
        scripted_actions: actions,
    }
}

fn band(rng: &mut ChaCha8Rng) -> FrequencyBand {
    let low = rng.random_range(0..u64::MAX - 1);
    FrequencyBand::new(low, rng.random_range(low + 1..=u64::MAX)).unwrap()
}

fn node(rng: &mut ChaCha8Rng) -> NodeId {
    NodeId(rng.random())
}

fn mode(rng: &mut ChaCha8Rng) -> AccessMode {
    if rng.random_bool(0.5) {
        AccessMode::Opportunistic
    } else {
        AccessMode::Dynamic
    }
}

fn lease(rng: &mut ChaCha8Rng) -> Lease {
    Lease {
        lease_id: LeaseId(rng.random()),
        lessor: node(rng),
        lessee: node(rng),
        band: band(rng),
        granted_at: UtcTime(rng.random()),
        expires_at: UtcTime(rng.random()),
        mode: mode(rng),
    }
}

/// Non-overlapping bands, as a network would report them.
fn disjoint_bands(rng: &mut ChaCha8Rng, n: usize) -> Vec<FrequencyBand> {
    let mut edges: Vec<u64> = (0..2 * n).map(|_| rng.random()).collect();
    edges.sort_unstable();
    edges.dedup();
    edges
        .chunks_exact(2)
        .map(|c| FrequencyBand::new(c[0], c[1]).unwrap())
        .collect()
}

/// One message of every shape the wire format can carry, with random fields.
pub fn random_message(rng: &mut ChaCha8Rng) -> WireMessage {
    let body = match rng.random_range(0..11) {
        0 => MessageBody::SpectrumQuery(SpectrumQuery {
            request_id: rng.random(),
            requester: node(rng),
            width_hz: rng.random(),
            min_duration_ticks: rng.random(),
            duration_ticks: rng.random(),
            mode: mode(rng),
        }),
        1..=4 => MessageBody::SpectrumResponse(SpectrumResponse {
            request_id: rng.random(),
            requester: node(rng),
            outcome: match rng.random_range(0..4) {
                0 => QueryOutcome::Granted(lease(rng)),
                1 => QueryOutcome::NoSpectrum,
                2 => QueryOutcome::UnknownRequester,
                _ => QueryOutcome::IdleRegion(RegionId(rng.random())),
            },
        }),
        5 => {
            let n = rng.random_range(0..12);
            let mut bands = disjoint_bands(rng, n);
            let split = rng.random_range(0..=bands.len());
            let idle = bands.split_off(split);
            let from = rng.random_range(0..u64::MAX);
            MessageBody::UcltUpdate(UcltReport {
                version: rng.random(),
                cause: [ReportCause::Snapshot, ReportCause::Transition, ReportCause::PrimaryReturn]
                    [rng.random_range(0..3)],
                record: NetworkRecord {
                    network_id: node(rng),
                    region_id: RegionId(rng.random()),
                    occupied_bands: bands.into_iter().collect(),
                    idle_bands: idle.into_iter().collect(),
                    permissions: if rng.random_bool(0.5) {
                        PermissionSet::open()
                    } else {
                        PermissionSet::allow_list((0..rng.random_range(0..6)).map(|_| node(rng)))
                    },
                    availability: AvailabilityWindow {
                        from: UtcTime(from),
                        until: UtcTime(rng.random_range(from + 1..=u64::MAX)),
                    },
                },
            })
        }
        6 => MessageBody::ProbeRequest(ProbeRequest {
            round_id: rng.random(),
            busy_region: RegionId(rng.random()),
        }),
        7 => MessageBody::StatusReport(StatusReport {
            round_id: rng.random(),
            region: RegionId(rng.random()),
            network: node(rng),
            idle: rng.random(),
        }),
        8 => MessageBody::LeaseGrant(LeaseGrant {
            lease: lease(rng),
            basis_version: rng.random(),
        }),
        9 => MessageBody::LeaseRevoke(LeaseRevoke {
            lease_id: LeaseId(rng.random()),
            lessor: node(rng),
            lessee: node(rng),
            band: band(rng),
            reason: if rng.random_bool(0.5) {
                RevokeReason::Expired
            } else {
                RevokeReason::PrimaryReturn
            },
        }),
        _ => MessageBody::HandOverDirective(HandOverDirective {
            from_entity: node(rng),
            to_entity: node(rng),
            region: RegionId(rng.random()),
            effective_at: UtcTime(rng.random()),
        }),
    };
    WireMessage {
        src: node(rng),
        dst: node(rng),
        seq: rng.random(),
        sent_at: UtcTime(rng.random()),
        body,
    }
}

/// `count` random messages from a seeded stream.
pub fn random_messages(seed: u64, count: usize) -> Vec<WireMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_message(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_validate() {
        for seed in 0..200 {
            let c = random_scenario(seed, FuzzLimits::default());
            c.validate().unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
            assert!(c.networks.len() <= 5);
            assert!(c.networks.iter().map(|n| n.bands.len()).sum::<usize>() <= 8);
        }
    }

    #[test]
    fn generator_is_seeded() {
        assert_eq!(
            random_scenario(9, FuzzLimits::default()),
            random_scenario(9, FuzzLimits::default())
        );
    }
}
