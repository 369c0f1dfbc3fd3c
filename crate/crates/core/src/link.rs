//! Long-distance links between gateways.
//!
//! A link carries already-encoded frames and hands each one over exactly
//! `delta_ticks` after it was sent, in send order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{LinkId, NodeId};
use crate::spectrum::UtcTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    /// One-way propagation delay.
    pub delta_ticks: u64,
}

impl LinkConfig {
    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }

    pub fn has_endpoint(&self, x: NodeId) -> bool {
        self.a == x || self.b == x
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("link {link} does not connect {src} and {dst}")]
    EndpointMismatch {
        link: LinkId,
        src: NodeId,
        dst: NodeId,
    },
    #[error("no link between {src} and {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
}

/// A frame on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_at: UtcTime,
    pub due: UtcTime,
    pub frame: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct LinkState {
    config: LinkConfig,
    queue: VecDeque<InFlight>,
}

impl LinkState {
    pub fn new(config: LinkConfig) -> Self {
        Self {
            config,
            queue: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    /// Queues `frame` and returns the tick it will arrive.
    pub fn transmit(
        &mut self,
        src: NodeId,
        dst: NodeId,
        frame: Vec<u8>,
        now: UtcTime,
    ) -> Result<UtcTime, RoutingError> {
        if src == dst || !self.config.connects(src, dst) {
            return Err(RoutingError::EndpointMismatch {
                link: self.config.id,
                src,
                dst,
            });
        }
        let due = now.saturating_add(self.config.delta_ticks);
        self.queue.push_back(InFlight {
            src,
            dst,
            sent_at: now,
            due,
            frame,
        });
        Ok(due)
    }

    /// Oldest frame, if it has arrived by `now`.
    pub fn deliver(&mut self, now: UtcTime) -> Option<InFlight> {
        if self.queue.front().is_some_and(|f| f.due <= now) {
            self.queue.pop_front()
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(delta: u64) -> LinkState {
        LinkState::new(LinkConfig {
            id: LinkId(1),
            a: NodeId(1),
            b: NodeId(2),
            delta_ticks: delta,
        })
    }

    #[test]
    fn zero_delay_is_same_tick() {
        let mut l = link(0);
        assert_eq!(l.transmit(NodeId(1), NodeId(2), vec![1], UtcTime(4)), Ok(UtcTime(4)));
        assert_eq!(l.deliver(UtcTime(4)).unwrap().frame, vec![1]);
    }

    #[test]
    fn fifo_delivery_times() {
        let mut l = link(10);
        l.transmit(NodeId(1), NodeId(2), vec![5], UtcTime(5)).unwrap();
        l.transmit(NodeId(2), NodeId(1), vec![6], UtcTime(6)).unwrap();
        assert!(l.deliver(UtcTime(14)).is_none());
        let first = l.deliver(UtcTime(15)).unwrap();
        assert_eq!((first.due, first.frame), (UtcTime(15), vec![5]));
        assert!(l.deliver(UtcTime(15)).is_none());
        let second = l.deliver(UtcTime(16)).unwrap();
        assert_eq!((second.due, second.frame), (UtcTime(16), vec![6]));
    }

    #[test]
    fn round_trip_is_two_deltas() {
        let mut l = link(7);
        let up = l.transmit(NodeId(1), NodeId(2), vec![], UtcTime(3)).unwrap();
        l.deliver(up).unwrap();
        let down = l.transmit(NodeId(2), NodeId(1), vec![], up).unwrap();
        assert_eq!(down.ticks_since(UtcTime(3)), 14);
    }

    #[test]
    fn wrong_endpoints_rejected() {
        let mut l = link(1);
        assert!(matches!(
            l.transmit(NodeId(1), NodeId(3), vec![], UtcTime(0)),
            Err(RoutingError::EndpointMismatch { .. })
        ));
        assert!(l.transmit(NodeId(1), NodeId(1), vec![], UtcTime(0)).is_err());
        assert_eq!(l.in_flight(), 0);
    }
}
