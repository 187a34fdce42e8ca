//! A virtual control cluster served over TCP and the host-side driver that
//! talks to it.
//!
//! Frames are a 4-byte big-endian length followed by a JSON object, see [`wire`].

pub mod client;
pub mod cluster;
pub mod wire;

pub use client::{ClientError, Connection, IterationOutcome, StackClient};
pub use cluster::{serve, Cluster, ClusterConfig, ClusterServer, LatencyProfile};
pub use wire::{Acquisition, ClusterState, ErrorCode, Request, Response};
