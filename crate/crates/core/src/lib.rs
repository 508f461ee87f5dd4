//! Deterministic discrete-event simulation of multicast routing in mobile ad
//! hoc networks.
//!
//! The crate bundles three mobility models (Random Waypoint, Reference Point
//! Group, Manhattan grid), a unit-disk radio, three multicast protocols
//! (MAODV, ODMRP, ADMR) plus a flooding baseline, CBR traffic generation and
//! the packet-delivery-ratio / routing-overhead metrics used to compare them.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod admr;
pub mod harness;
pub mod kernel;
pub mod maodv;
pub mod metrics;
pub mod mobility;
pub mod net;
pub mod odmrp;
pub mod proto;
pub mod radio;
pub mod traffic;

pub use kernel::{EventHandle, EventQueue, KernelError, RngStreams, SimTime};

/// Index of a node in the simulated population.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Multicast group identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl fmt::Debug for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
