use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use gcrs::network::{BandSpec, InitialState, NetworkParams, Occupancy, PrimaryUserModel, RegionalNetwork};
use gcrs::satellite::{compute_handover_chain, Constellation, Responsible, Satellite, Topology};
use gcrs::sim::fuzz::random_messages;
use gcrs::spectrum::{
    bands_overlap, convert_time, is_downtime, shift_minute_of_day, DowntimeWindow, Region,
};
use gcrs::uclt::{AvailabilityWindow, NetworkRecord, PermissionSet, Uclt};
use gcrs::wire::{decode_frame, encode_frame};
use gcrs::{FrequencyBand, NodeId, RegionId, Timebase, UtcOffset, UtcTime};

fn band() -> impl Strategy<Value = FrequencyBand> {
    (0u64..10_000, 1u64..5_000).prop_map(|(lo, w)| FrequencyBand::new(lo, lo + w).unwrap())
}

proptest! {
    #[test]
    fn convert_back_recovers_utc(t in 0u64..10_000_000, m in -720i32..=840, tick in prop::sample::select(vec![1u32, 60, 90, 600, 3600])) {
        let tb = Timebase::new(tick).unwrap();
        let local = convert_time(tb, UtcTime(t), UtcOffset::from_minutes(m).unwrap());
        prop_assert_eq!(shift_minute_of_day(local, -m), tb.utc_minute_of_day(UtcTime(t)));
    }

    #[test]
    fn antipodal_downtimes_never_coincide(
        start in 0u32..1440,
        dur in 1u32..=720,
        a in -720i32..=120,
        t in 0u64..100_000,
    ) {
        let tb = Timebase::new(60).unwrap();
        let w = DowntimeWindow::daily(start, dur).unwrap();
        let r1 = Region { id: RegionId(1), utc_offset: UtcOffset::from_minutes(a).unwrap() };
        let r2 = Region { id: RegionId(2), utc_offset: UtcOffset::from_minutes(a + 720).unwrap() };
        prop_assert!(!(is_downtime(&w, &r1, tb, UtcTime(t)) && is_downtime(&w, &r2, tb, UtcTime(t))));
    }

    #[test]
    fn overlap_is_symmetric_and_reflexive(a in band(), b in band()) {
        prop_assert_eq!(bands_overlap(&a, &b), bands_overlap(&b, &a));
        prop_assert!(bands_overlap(&a, &a));
        let brute = (a.low_hz()..a.high_hz()).any(|f| f >= b.low_hz() && f < b.high_hz());
        prop_assert_eq!(bands_overlap(&a, &b), brute);
    }
}

fn record_strategy() -> impl Strategy<Value = NetworkRecord> {
    (
        1u32..6,
        prop::collection::vec((0u64..40, any::<bool>()), 0..6),
        prop::option::of(prop::collection::btree_set(1u32..6, 0..4)),
        0u64..50,
        1u64..100,
    )
        .prop_map(|(id, slots, allow, from, len)| {
            let mut occupied = BTreeSet::new();
            let mut idle = BTreeSet::new();
            let slots: BTreeMap<u64, bool> = slots.into_iter().collect();
            for (slot, is_idle) in slots {
                // width varies with the slot so lookups by width discriminate
                let b = FrequencyBand::new(slot * 100, slot * 100 + 10 + slot).unwrap();
                if is_idle {
                    idle.insert(b);
                } else {
                    occupied.insert(b);
                }
            }
            NetworkRecord {
                network_id: NodeId(id),
                region_id: RegionId(id),
                occupied_bands: occupied,
                idle_bands: idle,
                permissions: match allow {
                    None => PermissionSet::open(),
                    Some(s) => PermissionSet::allow_list(s.into_iter().map(NodeId)),
                },
                availability: AvailabilityWindow {
                    from: UtcTime(from),
                    until: UtcTime(from + len),
                },
            }
        })
}

fn table(records: Vec<NetworkRecord>) -> Uclt {
    let mut t = Uclt::new();
    for r in records {
        t.upsert_record(r).unwrap();
    }
    t
}

proptest! {
    #[test]
    fn lookup_matches_brute_force_filter(
        records in prop::collection::vec(record_strategy(), 0..6),
        requester in 1u32..7,
        width in 1u64..60,
        min_duration in 1u64..60,
        now in 0u64..120,
    ) {
        let t = table(records);
        let requester = NodeId(requester);
        let now = UtcTime(now);
        let got = t.lookup_idle_bands(requester, width, min_duration, now);
        prop_assert_eq!(&got, &t.lookup_idle_bands(requester, width, min_duration, now));

        let mut expected = Vec::new();
        for r in t.records() {
            let admitted = r.permissions.admits(requester);
            let live = r.availability.from <= now
                && r.availability.until.ticks().saturating_sub(now.ticks()) >= min_duration;
            if r.network_id == requester || !admitted || !live {
                continue;
            }
            for b in &r.idle_bands {
                if b.width_hz() >= width {
                    expected.push((r.network_id, *b));
                }
            }
        }
        expected.sort();
        let pairs: Vec<_> = got.iter().map(|c| (c.lessor, c.band)).collect();
        prop_assert_eq!(&pairs, &expected);
        for c in &got {
            let lessor = t.get(c.lessor).unwrap();
            prop_assert!(lessor.occupied_bands.iter().all(|o| !o.overlaps(&c.band)));
        }
    }

    #[test]
    fn purge_drops_exactly_the_expired(records in prop::collection::vec(record_strategy(), 0..6), now in 0u64..160) {
        let mut t = table(records);
        let before: Vec<NetworkRecord> = t.records().cloned().collect();
        t.purge_expired(UtcTime(now));
        prop_assert!(t.records().all(|r| r.availability.until > UtcTime(now)));
        let kept: Vec<NetworkRecord> = before.into_iter().filter(|r| r.availability.until > UtcTime(now)).collect();
        prop_assert_eq!(t.records().cloned().collect::<Vec<_>>(), kept);
    }

    #[test]
    fn wire_round_trip(seed in any::<u64>()) {
        let corpus = random_messages(seed, 16);
        let mut frames = BTreeMap::new();
        for m in &corpus {
            let bytes = encode_frame(m).unwrap();
            prop_assert_eq!(&decode_frame(&bytes).unwrap(), m);
            if let Some(prev) = frames.insert(bytes, m) {
                prop_assert_eq!(prev, m);
            }
        }
    }

    #[test]
    fn truncated_frames_never_decode(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let m = &random_messages(seed, 1)[0];
        let bytes = encode_frame(m).unwrap();
        let cut = cut.index(bytes.len());
        prop_assert!(decode_frame(&bytes[..cut]).is_err());
    }
}

/// Diurnal bands: occupancy from the network model equals the downtime
/// predicate at every tick of a 48 h run.
#[test]
fn diurnal_idleness_equals_downtime() {
    let tb = Timebase::new(60).unwrap();
    for (offset, start, dur) in [(0, 0, 720), (330, 1320, 240), (-300, 90, 1440), (840, 1439, 1)] {
        let region = Region {
            id: RegionId(1),
            utc_offset: UtcOffset::from_minutes(offset).unwrap(),
        };
        let window = DowntimeWindow::daily(start, dur).unwrap();
        let b = FrequencyBand::new(100, 200).unwrap();
        let mut net = RegionalNetwork::new(
            NetworkParams {
                id: NodeId(1),
                region,
                bands: vec![BandSpec {
                    band: b,
                    model: PrimaryUserModel::Diurnal { window },
                    initial: InitialState::Occupied,
                }],
                sensing_interval: 1,
                permissions: PermissionSet::open(),
                availability: AvailabilityWindow::ALWAYS,
                demand: None,
            },
            tb,
            0,
        );
        for t in 0..2880 {
            let now = UtcTime(t);
            net.advance_occupancy(now);
            let idle = net.occupancy(&b) == Some(Occupancy::Idle);
            assert_eq!(idle, is_downtime(&window, &region, tb, now), "offset {offset} tick {t}");
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Cascade { busy: usize, idle: usize },
    Reverse,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0usize..8, 0usize..8).prop_map(|(busy, idle)| Op::Cascade { busy, idle }),
        1 => Just(Op::Reverse),
    ]
}

proptest! {
    #[test]
    fn coverage_survives_any_cascade_sequence(
        n in 2usize..=8,
        arc in any::<bool>(),
        ops in prop::collection::vec(op(), 0..12),
    ) {
        let topology = if arc { Topology::Arc } else { Topology::Ring };
        let sats: Vec<Satellite> = (0..n as u32)
            .map(|i| Satellite { id: NodeId(10 + i), region: RegionId(i + 1), ring_position: i })
            .collect();
        let ground = (0..n as u32).map(|i| (RegionId(i + 1), NodeId(i + 1))).collect();
        let mut c = Constellation::new(&sats, topology, ground).unwrap();
        let original = c.map().clone();
        let mut depth = 0usize;
        for (k, op) in ops.into_iter().enumerate() {
            let now = UtcTime(k as u64);
            match op {
                Op::Cascade { busy, idle } => {
                    let busy_region = RegionId((busy % n) as u32 + 1);
                    let idle_region = RegionId((idle % n) as u32 + 1);
                    let (Some(bs), Some(is)) = (
                        c.responsible_satellite(busy_region),
                        c.responsible_satellite(idle_region),
                    ) else {
                        continue;
                    };
                    let Ok(chain) = compute_handover_chain(c.ring(), bs, is) else {
                        continue;
                    };
                    let before = c.map().clone();
                    match c.execute_cascade(&chain, idle_region, now) {
                        Ok(directives) => {
                            depth += 1;
                            prop_assert_eq!(directives.len(), chain.len());
                            prop_assert!(c.map().is_free(bs));
                            prop_assert_eq!(c.map().responsible(idle_region), Some(Responsible::Ground(NodeId(idle_region.0))));
                        }
                        Err(_) => prop_assert_eq!(c.map(), &before),
                    }
                }
                Op::Reverse => {
                    let ok = c.reverse_last(now).is_ok();
                    prop_assert_eq!(ok, depth > 0);
                    depth = depth.saturating_sub(1);
                }
            }
            prop_assert!(c.check().is_ok(), "{:?}", c.check());
        }
        while depth > 0 {
            c.reverse_last(UtcTime(99)).unwrap();
            depth -= 1;
        }
        prop_assert_eq!(c.map(), &original);
    }
}
