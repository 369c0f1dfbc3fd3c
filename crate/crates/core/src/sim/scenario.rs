//! Scenario documents: parsing and whole-document validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LinkId, NetworkId, NodeId, RegionId};
use crate::link::LinkConfig;
use crate::network::{BandSpec, Demand, NetworkParams};
use crate::satellite::{Ring, Satellite, Topology};
use crate::spectrum::{Region, Timebase, UtcOffset};
use crate::uclt::{AvailabilityWindow, PermissionMode, PermissionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_tick_seconds")]
    pub tick_seconds: u32,
    pub duration_ticks: u64,
    #[serde(default)]
    pub global_seed: u64,
    pub regions: Vec<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crfc: Option<CrfcConfig>,
    #[serde(default)]
    pub networks: Vec<NetworkConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub satellites: Vec<Satellite>,
    #[serde(default)]
    pub constellation_topology: Topology,
    #[serde(default)]
    pub scripted_actions: Vec<ScriptedAction>,
}

fn default_tick_seconds() -> u32 {
    60
}

fn default_sensing_interval() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub id: RegionId,
    pub utc_offset_minutes: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrfcConfig {
    pub id: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub id: NetworkId,
    pub region: RegionId,
    #[serde(default = "default_sensing_interval")]
    pub sensing_interval: u64,
    pub bands: Vec<BandSpec>,
    #[serde(default)]
    pub permissions: PermissionSet,
    #[serde(default)]
    pub availability: AvailabilityWindow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<Demand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAction {
    pub at: u64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// Licensed user reclaims `bands[band]` of `network` and holds it for
    /// `hold_ticks` regardless of its model.
    PrimaryReturn {
        network: NetworkId,
        band: usize,
        #[serde(default)]
        hold_ticks: u64,
    },
    /// Network asks for remote spectrum whether or not it is busy.
    Query { network: NetworkId },
    /// Undo the most recent cascade hand-over.
    CascadeReversal,
    /// Put raw bytes on a link, as if sent by `from`.
    InjectFrame {
        link: LinkId,
        from: NodeId,
        hex: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}", format_errors(.0))]
    Invalid(Vec<ValidationError>),
}

fn format_errors(errors: &[ValidationError]) -> String {
    let lines: Vec<String> = errors.iter().map(ToString::to_string).collect();
    lines.join("\n")
}

/// Reads and validates a scenario file. Nothing partially valid is returned.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    let config: ScenarioConfig =
        serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
            path: path.to_owned(),
            source,
        })?;
    config.validate().map_err(ScenarioError::Invalid)?;
    Ok(config)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|source| ScenarioError::Parse {
                path: PathBuf::from("<string>"),
                source,
            })?;
        config.validate().map_err(ScenarioError::Invalid)?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn timebase(&self) -> Timebase {
        Timebase::new(self.tick_seconds).unwrap_or_default()
    }

    pub fn region(&self, id: RegionId) -> Option<Region> {
        let r = self.regions.iter().find(|r| r.id == id)?;
        Some(Region {
            id: r.id,
            utc_offset: UtcOffset::from_minutes(r.utc_offset_minutes).ok()?,
        })
    }

    pub fn network(&self, id: NetworkId) -> Option<&NetworkConfig> {
        self.networks.iter().find(|n| n.id == id)
    }

    pub fn crfc_id(&self) -> Option<NodeId> {
        self.crfc.map(|c| c.id)
    }

    /// Link joining `a` and `b`, if any.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<&LinkConfig> {
        self.links.iter().find(|l| l.connects(a, b))
    }

    pub fn network_params(&self, n: &NetworkConfig) -> Option<NetworkParams> {
        Some(NetworkParams {
            id: n.id,
            region: self.region(n.region)?,
            bands: n.bands.clone(),
            sensing_interval: n.sensing_interval,
            permissions: n.permissions.clone(),
            availability: n.availability,
            demand: n.demand,
        })
    }

    /// Checks every cross-reference and invariant, collecting all problems.
    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(ValidationError { path, message });

        if self.tick_seconds == 0 {
            err("tick_seconds".into(), "must be positive".into());
        }

        let mut regions = BTreeSet::new();
        for (i, r) in self.regions.iter().enumerate() {
            if !regions.insert(r.id) {
                err(format!("regions[{i}].id"), format!("duplicate region {}", r.id));
            }
            if let Err(e) = UtcOffset::from_minutes(r.utc_offset_minutes) {
                err(format!("regions[{i}].utc_offset_minutes"), e.to_string());
            }
        }

        // one namespace for every addressable node
        let mut nodes: BTreeMap<NodeId, String> = BTreeMap::new();
        let mut claim = |id: NodeId, path: String, err: &mut dyn FnMut(String, String)| {
            if let Some(prev) = nodes.get(&id) {
                err(path, format!("node id {id} already used by {prev}"));
            } else {
                nodes.insert(id, path);
            }
        };
        if let Some(c) = self.crfc {
            claim(c.id, "crfc.id".into(), &mut err);
        }
        for (i, n) in self.networks.iter().enumerate() {
            claim(n.id, format!("networks[{i}].id"), &mut err);
        }
        for (i, s) in self.satellites.iter().enumerate() {
            claim(s.id, format!("satellites[{i}].id"), &mut err);
        }
        let network_ids: BTreeSet<NetworkId> = self.networks.iter().map(|n| n.id).collect();

        for (i, n) in self.networks.iter().enumerate() {
            let p = format!("networks[{i}]");
            if !regions.contains(&n.region) {
                err(format!("{p}.region"), format!("unknown region {}", n.region));
            }
            if n.sensing_interval == 0 {
                err(format!("{p}.sensing_interval"), "must be at least 1".into());
            }
            if n.bands.is_empty() {
                err(format!("{p}.bands"), "at least one band required".into());
            }
            for (j, b) in n.bands.iter().enumerate() {
                if !b.model.is_valid() {
                    err(
                        format!("{p}.bands[{j}].model"),
                        "probabilities must lie in [0, 1]".into(),
                    );
                }
                for (k, other) in n.bands.iter().enumerate().take(j) {
                    if b.band.overlaps(&other.band) {
                        err(
                            format!("{p}.bands[{j}].band"),
                            format!("{} overlaps bands[{k}] {}", b.band, other.band),
                        );
                    }
                }
            }
            if !n.availability.is_valid() {
                err(format!("{p}.availability"), "from must be before until".into());
            }
            if n.permissions.mode == PermissionMode::AllowList {
                for id in &n.permissions.allowed {
                    if !network_ids.contains(id) {
                        err(format!("{p}.permissions.allowed"), format!("unknown network {id}"));
                    }
                }
            }
            if let Some(d) = n.demand {
                if d.width_hz == 0 {
                    err(format!("{p}.demand.width_hz"), "must be positive".into());
                }
                if d.duration_ticks == 0 {
                    err(format!("{p}.demand.duration_ticks"), "must be positive".into());
                }
                if d.min_duration_ticks == 0 {
                    err(format!("{p}.demand.min_duration_ticks"), "must be positive".into());
                }
            }
        }

        let mut link_ids = BTreeSet::new();
        let mut pairs = BTreeMap::new();
        for (i, l) in self.links.iter().enumerate() {
            let p = format!("links[{i}]");
            if !link_ids.insert(l.id) {
                err(format!("{p}.id"), format!("duplicate link {}", l.id));
            }
            for (end, id) in [("a", l.a), ("b", l.b)] {
                if !nodes.contains_key(&id) {
                    err(format!("{p}.{end}"), format!("link {} references unknown node {id}", l.id));
                }
            }
            if l.a == l.b {
                err(p.clone(), format!("link {} joins node {} to itself", l.id, l.a));
            }
            let key = (l.a.min(l.b), l.a.max(l.b));
            if let Some(prev) = pairs.insert(key, l.id) {
                err(p, format!("link {} duplicates link {prev}", l.id));
            }
        }

        if !self.satellites.is_empty() {
            match self.crfc {
                None => err("crfc".into(), "satellites need a coordinator".into()),
                Some(c) => {
                    for s in &self.satellites {
                        if self.link_between(s.id, c.id).is_none() {
                            err(
                                "links".into(),
                                format!("satellite {} has no link to the coordinator", s.id),
                            );
                        }
                    }
                }
            }
            let members: Vec<(NodeId, u32)> =
                self.satellites.iter().map(|s| (s.id, s.ring_position)).collect();
            if let Err(e) = Ring::new(&members, self.constellation_topology) {
                err("satellites".into(), e.to_string());
            }
            for region in &regions {
                let sats = self.satellites.iter().filter(|s| s.region == *region).count();
                let nets = self.networks.iter().filter(|n| n.region == *region).count();
                if sats != 1 || nets != 1 {
                    err(
                        "satellites".into(),
                        format!(
                            "region {region} has {sats} satellites and {nets} networks; each region needs exactly one of each"
                        ),
                    );
                }
            }
            for (i, s) in self.satellites.iter().enumerate() {
                if !regions.contains(&s.region) {
                    err(format!("satellites[{i}].region"), format!("unknown region {}", s.region));
                }
            }
        }

        for (i, a) in self.scripted_actions.iter().enumerate() {
            let p = format!("scripted_actions[{i}].action");
            match &a.action {
                Action::PrimaryReturn { network, band, .. } => match self.network(*network) {
                    None => err(format!("{p}.network"), format!("unknown network {network}")),
                    Some(n) if *band >= n.bands.len() => err(
                        format!("{p}.band"),
                        format!("network {network} has {} bands", n.bands.len()),
                    ),
                    Some(_) => {}
                },
                Action::Query { network } => {
                    if !network_ids.contains(network) {
                        err(format!("{p}.network"), format!("unknown network {network}"));
                    }
                }
                Action::CascadeReversal => {
                    if self.satellites.is_empty() {
                        err(p, "cascade reversal needs satellites".into());
                    }
                }
                Action::InjectFrame { link, from, hex } => {
                    match self.links.iter().find(|l| l.id == *link) {
                        None => err(format!("{p}.link"), format!("unknown link {link}")),
                        Some(l) if !l.has_endpoint(*from) => err(
                            format!("{p}.from"),
                            format!("{from} is not an endpoint of link {link}"),
                        ),
                        Some(_) => {}
                    }
                    if hex::decode(hex).is_err() {
                        err(format!("{p}.hex"), "not a hex string".into());
                    }
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "duration_ticks": 10,
        "regions": [{"id": 1, "utc_offset_minutes": 0}],
        "networks": [{
            "id": 1, "region": 1,
            "bands": [{"band": {"low_hz": 100, "high_hz": 200},
                       "model": {"kind": "diurnal", "window": {"start_local_minutes": 0, "duration_minutes": 60}}}]
        }]
    }"#;

    fn errors(text: &str) -> Vec<ValidationError> {
        match ScenarioConfig::from_json(text) {
            Err(ScenarioError::Invalid(e)) => e,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_loads() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.tick_seconds, 60);
        assert_eq!(c.networks[0].sensing_interval, 1);
    }

    #[test]
    fn dangling_link_is_named() {
        let text = MINIMAL.replacen(
            r#""networks""#,
            r#""links": [{"id": 7, "a": 1, "b": 99, "delta_ticks": 1}], "networks""#,
            1,
        );
        let e = errors(&text);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].path, "links[0].b");
        assert!(e[0].message.contains("link 7"));
    }

    #[test]
    fn overlapping_bands_rejected() {
        let text = MINIMAL.replacen(
            r#""bands": ["#,
            r#""bands": [{"band": {"low_hz": 150, "high_hz": 250}, "model": {"kind": "markov", "p_on_to_off": 0.1, "p_off_to_on": 0.1}}, "#,
            1,
        );
        let e = errors(&text);
        assert_eq!(e[0].path, "networks[0].bands[1].band");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replacen(r#""duration_ticks""#, r#""colour": 1, "duration_ticks""#, 1);
        assert!(matches!(
            ScenarioConfig::from_json(&text),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn collects_several_errors() {
        let text = r#"{
            "tick_seconds": 0, "duration_ticks": 5,
            "regions": [{"id": 1, "utc_offset_minutes": 900}, {"id": 1, "utc_offset_minutes": 0}],
            "networks": [{"id": 1, "region": 3, "sensing_interval": 0, "bands": []}]
        }"#;
        let paths: Vec<String> = errors(text).into_iter().map(|e| e.path).collect();
        for want in [
            "tick_seconds",
            "regions[0].utc_offset_minutes",
            "regions[1].id",
            "networks[0].region",
            "networks[0].sensing_interval",
            "networks[0].bands",
        ] {
            assert!(paths.iter().any(|p| p == want), "missing {want} in {paths:?}");
        }
    }

    #[test]
    fn bad_probability_and_action_refs() {
        let text = r#"{
            "duration_ticks": 5,
            "regions": [{"id": 1, "utc_offset_minutes": 0}],
            "networks": [{"id": 1, "region": 1, "bands": [
                {"band": {"low_hz": 1, "high_hz": 2}, "model": {"kind": "markov", "p_on_to_off": 1.5, "p_off_to_on": 0}}]}],
            "scripted_actions": [
                {"at": 1, "action": {"type": "primary_return", "network": 1, "band": 4}},
                {"at": 2, "action": {"type": "query", "network": 8}},
                {"at": 3, "action": {"type": "cascade_reversal"}}
            ]
        }"#;
        let paths: Vec<String> = errors(text).into_iter().map(|e| e.path).collect();
        assert!(paths.contains(&"networks[0].bands[0].model".to_string()));
        assert!(paths.contains(&"scripted_actions[0].action.band".to_string()));
        assert!(paths.contains(&"scripted_actions[1].action.network".to_string()));
        assert!(paths.contains(&"scripted_actions[2].action".to_string()));
    }

    #[test]
    fn round_trips_through_json() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        let again = ScenarioConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(c, again);
    }
}
