//! Gateway framing for [`WireMessage`].
//!
//! Every frame is a fixed 30-byte big-endian header followed by a
//! kind-specific payload:
//!
//! ```text
//! magic u32 = 0x47435253 ("GCRS") | version u8 = 1 | kind u8
//! src u32 | dst u32 | seq u32 | sent_at u64 | payload_len u32 | payload
//! ```
//!
//! Payload layouts are listed in `docs/protocol.md`.

use thiserror::Error;

use crate::ids::{LeaseId, NodeId, RegionId};
use crate::protocol::{
    AccessMode, HandOverDirective, Lease, LeaseGrant, LeaseRevoke, MessageBody, MessageKind,
    ProbeRequest, QueryOutcome, ReportCause, RevokeReason, SpectrumQuery, SpectrumResponse,
    StatusReport, UcltReport, WireMessage,
};
use crate::spectrum::{FrequencyBand, UtcTime};
use crate::uclt::{AvailabilityWindow, NetworkRecord, PermissionMode, PermissionSet};

pub const MAGIC: u32 = 0x4743_5253;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
pub const MAX_PAYLOAD_LEN: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD_LEN}-byte limit")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
    #[error("bad length: {0}")]
    BadLength(String),
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

impl DecodeError {
    /// Stable short label, used in traces and metrics.
    pub fn label(&self) -> &'static str {
        match self {
            DecodeError::Truncated { .. } => "truncated",
            DecodeError::BadMagic(_) => "bad_magic",
            DecodeError::UnsupportedVersion(_) => "unsupported_version",
            DecodeError::UnknownKind(_) => "unknown_kind",
            DecodeError::BadLength(_) => "bad_length",
            DecodeError::InvalidField { .. } => "invalid_field",
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn count(&mut self, n: usize) -> Result<(), EncodeError> {
        let n = u32::try_from(n).map_err(|_| EncodeError::PayloadTooLarge(n))?;
        self.u32(n);
        Ok(())
    }
    fn band(&mut self, b: &FrequencyBand) {
        self.u64(b.low_hz());
        self.u64(b.high_hz());
    }
}

/// Payload reader. Running short of bytes inside a payload is a length error:
/// the header already promised `payload_len` bytes.
struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], DecodeError> {
        let Some((head, rest)) = self.buf.split_first_chunk::<N>() else {
            return Err(DecodeError::BadLength(format!(
                "payload ends inside {field}"
            )));
        };
        self.buf = rest;
        Ok(*head)
    }
    fn u8(&mut self, field: &'static str) -> Result<u8, DecodeError> {
        Ok(self.take::<1>(field)?[0])
    }
    fn u32(&mut self, field: &'static str) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(field)?))
    }
    fn u64(&mut self, field: &'static str) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(field)?))
    }
    fn node(&mut self, field: &'static str) -> Result<NodeId, DecodeError> {
        Ok(NodeId(self.u32(field)?))
    }
    fn time(&mut self, field: &'static str) -> Result<UtcTime, DecodeError> {
        Ok(UtcTime(self.u64(field)?))
    }
    fn flag(&mut self, field: &'static str) -> Result<bool, DecodeError> {
        match self.u8(field)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(invalid(field, format!("expected 0 or 1, got {v}"))),
        }
    }
    fn band(&mut self, field: &'static str) -> Result<FrequencyBand, DecodeError> {
        let low = self.u64(field)?;
        let high = self.u64(field)?;
        FrequencyBand::new(low, high).map_err(|e| invalid(field, e.to_string()))
    }
    /// Element count, bounded by the bytes actually left.
    fn count(&mut self, field: &'static str, elem_len: usize) -> Result<usize, DecodeError> {
        let n = self.u32(field)? as usize;
        if n.saturating_mul(elem_len) > self.buf.len() {
            return Err(DecodeError::BadLength(format!(
                "{field} count {n} exceeds remaining payload"
            )));
        }
        Ok(n)
    }
    fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::BadLength(format!(
                "{} trailing payload bytes",
                self.buf.len()
            )))
        }
    }
}

fn invalid(field: &'static str, reason: String) -> DecodeError {
    DecodeError::InvalidField { field, reason }
}

/// Lists go on the wire sorted and without repeats, so each set has one encoding.
fn ascending<T: Ord + Copy>(
    set: &mut std::collections::BTreeSet<T>,
    item: T,
    field: &'static str,
) -> Result<(), DecodeError> {
    if set.last().is_some_and(|last| *last >= item) {
        return Err(invalid(field, "entries must be strictly ascending".into()));
    }
    set.insert(item);
    Ok(())
}

fn mode_code(m: AccessMode) -> u8 {
    match m {
        AccessMode::Opportunistic => 1,
        AccessMode::Dynamic => 2,
    }
}

fn mode_from(code: u8) -> Result<AccessMode, DecodeError> {
    match code {
        1 => Ok(AccessMode::Opportunistic),
        2 => Ok(AccessMode::Dynamic),
        v => Err(invalid("mode", format!("unknown access mode {v}"))),
    }
}

fn write_lease(w: &mut Writer, l: &Lease) {
    w.u64(l.lease_id.0);
    w.u32(l.lessor.0);
    w.u32(l.lessee.0);
    w.band(&l.band);
    w.u64(l.granted_at.0);
    w.u64(l.expires_at.0);
    w.u8(mode_code(l.mode));
}

fn read_lease(r: &mut Reader<'_>) -> Result<Lease, DecodeError> {
    Ok(Lease {
        lease_id: LeaseId(r.u64("lease_id")?),
        lessor: r.node("lessor")?,
        lessee: r.node("lessee")?,
        band: r.band("band")?,
        granted_at: r.time("granted_at")?,
        expires_at: r.time("expires_at")?,
        mode: mode_from(r.u8("mode")?)?,
    })
}

fn encode_payload(body: &MessageBody) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer(Vec::new());
    match body {
        MessageBody::SpectrumQuery(q) => {
            w.u64(q.request_id);
            w.u32(q.requester.0);
            w.u64(q.width_hz);
            w.u64(q.min_duration_ticks);
            w.u64(q.duration_ticks);
            w.u8(mode_code(q.mode));
        }
        MessageBody::SpectrumResponse(r) => {
            w.u64(r.request_id);
            w.u32(r.requester.0);
            match &r.outcome {
                QueryOutcome::Granted(lease) => {
                    w.u8(0);
                    write_lease(&mut w, lease);
                }
                QueryOutcome::NoSpectrum => w.u8(1),
                QueryOutcome::UnknownRequester => w.u8(2),
                QueryOutcome::IdleRegion(region) => {
                    w.u8(3);
                    w.u32(region.0);
                }
            }
        }
        MessageBody::UcltUpdate(u) => {
            let rec = &u.record;
            w.u64(u.version);
            w.u8(match u.cause {
                ReportCause::Snapshot => 0,
                ReportCause::Transition => 1,
                ReportCause::PrimaryReturn => 2,
            });
            w.u32(rec.network_id.0);
            w.u32(rec.region_id.0);
            w.u8(match rec.permissions.mode {
                PermissionMode::OpenToAll => 0,
                PermissionMode::AllowList => 1,
            });
            w.count(rec.permissions.allowed.len())?;
            for id in &rec.permissions.allowed {
                w.u32(id.0);
            }
            w.u64(rec.availability.from.0);
            w.u64(rec.availability.until.0);
            w.count(rec.occupied_bands.len())?;
            for b in &rec.occupied_bands {
                w.band(b);
            }
            w.count(rec.idle_bands.len())?;
            for b in &rec.idle_bands {
                w.band(b);
            }
        }
        MessageBody::ProbeRequest(p) => {
            w.u64(p.round_id);
            w.u32(p.busy_region.0);
        }
        MessageBody::StatusReport(s) => {
            w.u64(s.round_id);
            w.u32(s.region.0);
            w.u32(s.network.0);
            w.u8(u8::from(s.idle));
        }
        MessageBody::LeaseGrant(g) => {
            write_lease(&mut w, &g.lease);
            w.u64(g.basis_version);
        }
        MessageBody::LeaseRevoke(r) => {
            w.u64(r.lease_id.0);
            w.u32(r.lessor.0);
            w.u32(r.lessee.0);
            w.band(&r.band);
            w.u8(match r.reason {
                RevokeReason::Expired => 1,
                RevokeReason::PrimaryReturn => 2,
            });
        }
        MessageBody::HandOverDirective(d) => {
            w.u32(d.from_entity.0);
            w.u32(d.to_entity.0);
            w.u32(d.region.0);
            w.u64(d.effective_at.0);
        }
    }
    Ok(w.0)
}

fn decode_payload(kind: MessageKind, payload: &[u8]) -> Result<MessageBody, DecodeError> {
    let mut r = Reader { buf: payload };
    let body = match kind {
        MessageKind::SpectrumQuery => MessageBody::SpectrumQuery(SpectrumQuery {
            request_id: r.u64("request_id")?,
            requester: r.node("requester")?,
            width_hz: r.u64("width_hz")?,
            min_duration_ticks: r.u64("min_duration_ticks")?,
            duration_ticks: r.u64("duration_ticks")?,
            mode: mode_from(r.u8("mode")?)?,
        }),
        MessageKind::SpectrumResponse => {
            let request_id = r.u64("request_id")?;
            let requester = r.node("requester")?;
            let outcome = match r.u8("outcome")? {
                0 => QueryOutcome::Granted(read_lease(&mut r)?),
                1 => QueryOutcome::NoSpectrum,
                2 => QueryOutcome::UnknownRequester,
                3 => QueryOutcome::IdleRegion(RegionId(r.u32("region")?)),
                v => return Err(invalid("outcome", format!("unknown outcome {v}"))),
            };
            MessageBody::SpectrumResponse(SpectrumResponse {
                request_id,
                requester,
                outcome,
            })
        }
        MessageKind::UcltUpdate => {
            let version = r.u64("version")?;
            let cause = match r.u8("cause")? {
                0 => ReportCause::Snapshot,
                1 => ReportCause::Transition,
                2 => ReportCause::PrimaryReturn,
                v => return Err(invalid("cause", format!("unknown cause {v}"))),
            };
            let network_id = r.node("network_id")?;
            let region_id = RegionId(r.u32("region_id")?);
            let mode = match r.u8("permission_mode")? {
                0 => PermissionMode::OpenToAll,
                1 => PermissionMode::AllowList,
                v => return Err(invalid("permission_mode", format!("unknown mode {v}"))),
            };
            let n = r.count("allowed", 4)?;
            let mut allowed = std::collections::BTreeSet::new();
            for _ in 0..n {
                ascending(&mut allowed, r.node("allowed")?, "allowed")?;
            }
            let availability = AvailabilityWindow {
                from: r.time("from")?,
                until: r.time("until")?,
            };
            let mut occupied_bands = std::collections::BTreeSet::new();
            for _ in 0..r.count("occupied", 16)? {
                ascending(&mut occupied_bands, r.band("occupied")?, "occupied")?;
            }
            let mut idle_bands = std::collections::BTreeSet::new();
            for _ in 0..r.count("idle", 16)? {
                ascending(&mut idle_bands, r.band("idle")?, "idle")?;
            }
            let record = NetworkRecord {
                network_id,
                region_id,
                occupied_bands,
                idle_bands,
                permissions: PermissionSet { mode, allowed },
                availability,
            };
            record
                .validate()
                .map_err(|e| invalid("record", e.to_string()))?;
            MessageBody::UcltUpdate(UcltReport {
                version,
                cause,
                record,
            })
        }
        MessageKind::ProbeRequest => MessageBody::ProbeRequest(ProbeRequest {
            round_id: r.u64("round_id")?,
            busy_region: RegionId(r.u32("busy_region")?),
        }),
        MessageKind::StatusReport => MessageBody::StatusReport(StatusReport {
            round_id: r.u64("round_id")?,
            region: RegionId(r.u32("region")?),
            network: r.node("network")?,
            idle: r.flag("idle")?,
        }),
        MessageKind::LeaseGrant => MessageBody::LeaseGrant(LeaseGrant {
            lease: read_lease(&mut r)?,
            basis_version: r.u64("basis_version")?,
        }),
        MessageKind::LeaseRevoke => MessageBody::LeaseRevoke(LeaseRevoke {
            lease_id: LeaseId(r.u64("lease_id")?),
            lessor: r.node("lessor")?,
            lessee: r.node("lessee")?,
            band: r.band("band")?,
            reason: match r.u8("reason")? {
                1 => RevokeReason::Expired,
                2 => RevokeReason::PrimaryReturn,
                v => return Err(invalid("reason", format!("unknown reason {v}"))),
            },
        }),
        MessageKind::HandOverDirective => MessageBody::HandOverDirective(HandOverDirective {
            from_entity: r.node("from_entity")?,
            to_entity: r.node("to_entity")?,
            region: RegionId(r.u32("region")?),
            effective_at: r.time("effective_at")?,
        }),
    };
    r.finish()?;
    Ok(body)
}

/// Serializes `m` into its canonical frame.
pub fn encode_frame(m: &WireMessage) -> Result<Vec<u8>, EncodeError> {
    let payload = encode_payload(&m.body)?;
    if payload.len() > MAX_PAYLOAD_LEN {
        return Err(EncodeError::PayloadTooLarge(payload.len()));
    }
    let mut w = Writer(Vec::with_capacity(HEADER_LEN + payload.len()));
    w.u32(MAGIC);
    w.u8(VERSION);
    w.u8(m.kind().code());
    w.u32(m.src.0);
    w.u32(m.dst.0);
    w.u32(m.seq);
    w.u64(m.sent_at.0);
    w.u32(payload.len() as u32);
    w.0.extend_from_slice(&payload);
    Ok(w.0)
}

/// Parses one complete frame; trailing bytes are a length error.
pub fn decode_frame(bytes: &[u8]) -> Result<WireMessage, DecodeError> {
    let truncated = |needed| DecodeError::Truncated {
        needed,
        have: bytes.len(),
    };
    let Some(magic) = bytes.first_chunk::<4>() else {
        return Err(truncated(HEADER_LEN));
    };
    let magic = u32::from_be_bytes(*magic);
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    let Some(header) = bytes.first_chunk::<HEADER_LEN>() else {
        return Err(truncated(HEADER_LEN));
    };
    let be32 = |at: usize| u32::from_be_bytes(header[at..at + 4].try_into().unwrap());
    let version = header[4];
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let kind = MessageKind::from_code(header[5]).ok_or(DecodeError::UnknownKind(header[5]))?;
    let src = NodeId(be32(6));
    let dst = NodeId(be32(10));
    let seq = be32(14);
    let sent_at = UtcTime(u64::from_be_bytes(header[18..26].try_into().unwrap()));
    let payload_len = be32(26) as usize;
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(DecodeError::BadLength(format!(
            "declared payload {payload_len} exceeds {MAX_PAYLOAD_LEN}"
        )));
    }
    let total = HEADER_LEN + payload_len;
    if bytes.len() < total {
        return Err(truncated(total));
    }
    if bytes.len() > total {
        return Err(DecodeError::BadLength(format!(
            "{} bytes after declared frame end",
            bytes.len() - total
        )));
    }
    let body = decode_payload(kind, &bytes[HEADER_LEN..])?;
    Ok(WireMessage {
        src,
        dst,
        seq,
        sent_at,
        body,
    })
}
