//! Message bodies exchanged between networks, satellites and the coordinator.
//!
//! These are the decoded payloads; [`crate::wire`] frames them.

use serde::{Deserialize, Serialize};

use crate::ids::{LeaseId, NetworkId, NodeId, RegionId};
use crate::spectrum::{FrequencyBand, UtcTime};
use crate::uclt::NetworkRecord;

/// How the lessee intends to use a remote band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessMode {
    /// Primary expected absent for the whole lease.
    Opportunistic,
    /// Primary presence is probabilistic; hand-back on return.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub lease_id: LeaseId,
    pub lessor: NetworkId,
    pub lessee: NetworkId,
    pub band: FrequencyBand,
    pub granted_at: UtcTime,
    pub expires_at: UtcTime,
    pub mode: AccessMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumQuery {
    pub request_id: u64,
    pub requester: NetworkId,
    pub width_hz: u64,
    pub min_duration_ticks: u64,
    pub duration_ticks: u64,
    pub mode: AccessMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOutcome {
    Granted(Lease),
    NoSpectrum,
    UnknownRequester,
    /// Satellite path: a region with idle spectrum was found.
    IdleRegion(RegionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumResponse {
    pub request_id: u64,
    pub requester: NetworkId,
    pub outcome: QueryOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportCause {
    /// Periodic or initial full report.
    Snapshot,
    /// A band changed occupancy.
    Transition,
    /// A licensed user came back on a band that was leased out.
    PrimaryReturn,
}

/// A network pushing its current UCLT row. `version` increases per network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcltReport {
    pub version: u64,
    pub cause: ReportCause,
    pub record: NetworkRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub round_id: u64,
    pub busy_region: RegionId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub round_id: u64,
    pub region: RegionId,
    pub network: NetworkId,
    pub idle: bool,
}

/// Tells the lessor its band is leased out. `basis_version` is the latest
/// report version from the lessor the coordinator had applied when granting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseGrant {
    pub lease: Lease,
    pub basis_version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevokeReason {
    Expired,
    PrimaryReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaseRevoke {
    pub lease_id: LeaseId,
    pub lessor: NetworkId,
    pub lessee: NetworkId,
    pub band: FrequencyBand,
    pub reason: RevokeReason,
}

/// `from_entity` hands its duties over `region` to `to_entity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandOverDirective {
    pub from_entity: NodeId,
    pub to_entity: NodeId,
    pub region: RegionId,
    pub effective_at: UtcTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    SpectrumQuery = 1,
    SpectrumResponse = 2,
    UcltUpdate = 3,
    ProbeRequest = 4,
    StatusReport = 5,
    LeaseGrant = 6,
    LeaseRevoke = 7,
    HandOverDirective = 8,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::SpectrumQuery,
        MessageKind::SpectrumResponse,
        MessageKind::UcltUpdate,
        MessageKind::ProbeRequest,
        MessageKind::StatusReport,
        MessageKind::LeaseGrant,
        MessageKind::LeaseRevoke,
        MessageKind::HandOverDirective,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageBody {
    SpectrumQuery(SpectrumQuery),
    SpectrumResponse(SpectrumResponse),
    UcltUpdate(UcltReport),
    ProbeRequest(ProbeRequest),
    StatusReport(StatusReport),
    LeaseGrant(LeaseGrant),
    LeaseRevoke(LeaseRevoke),
    HandOverDirective(HandOverDirective),
}

impl MessageBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            MessageBody::SpectrumQuery(_) => MessageKind::SpectrumQuery,
            MessageBody::SpectrumResponse(_) => MessageKind::SpectrumResponse,
            MessageBody::UcltUpdate(_) => MessageKind::UcltUpdate,
            MessageBody::ProbeRequest(_) => MessageKind::ProbeRequest,
            MessageBody::StatusReport(_) => MessageKind::StatusReport,
            MessageBody::LeaseGrant(_) => MessageKind::LeaseGrant,
            MessageBody::LeaseRevoke(_) => MessageKind::LeaseRevoke,
            MessageBody::HandOverDirective(_) => MessageKind::HandOverDirective,
        }
    }
}

/// A protocol message with its routing header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub src: NodeId,
    pub dst: NodeId,
    /// Per `(src, dst)` sequence number, strictly increasing.
    pub seq: u32,
    pub sent_at: UtcTime,
    pub body: MessageBody,
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        self.body.kind()
    }
}
