//! Deterministic simulator for leaderless replication offloaded to
//! SmartNICs, with a NIC-resident cache in front of a host datastore.

pub mod cache;
pub mod checker;
pub mod datastore;
pub mod harness;
pub mod history;
pub mod log;
pub mod overlay;
pub mod protocol;
pub mod simnet;
pub mod types;
