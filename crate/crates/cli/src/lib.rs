//! Scenario-driven front end for the gaussot transport laboratory.
//!
//! Scenarios are TOML files naming a pair of potentials, a solver backend,
//! and a list of verifications to run against the solved map. Every artifact
//! the binary writes (reports, solved maps, merged documents) uses one
//! canonical JSON form so repeated runs can be compared byte for byte.

pub mod commands;
pub mod report;
pub mod scenario;
