//! Deterministic simulator and protocol library for a global cognitive radio
//! system: regional networks lease idle licensed spectrum from each other
//! through a coordinator, with satellites covering regions without one.

pub mod coordinator;
pub mod ids;
pub mod link;
pub mod network;
pub mod protocol;
pub mod satellite;
pub mod sim;
pub mod spectrum;
pub mod uclt;
pub mod wire;

pub use ids::{LeaseId, LinkId, NetworkId, NodeId, RegionId};
pub use spectrum::{FrequencyBand, Timebase, UtcOffset, UtcTime};
