//! Tabular stochastic shortest path (SSP) laboratory.
//!
//! Exact planning oracles, the LCBVI / Search-Horizon / BPI-SSP learners,
//! hard-instance generators and a seeded trial harness.

pub mod bpi;
pub mod format;
pub mod harness;
pub mod instances;
pub mod keyvalue;
pub mod lcbvi;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod sampling;
pub mod search_horizon;

pub use mdp::{FiniteHorizonSpec, SspBuilder, SspMdp, ValueTable};
pub use policy::{FiniteHorizonPolicy, PeriodicPolicy, Policy, StationaryPolicy};
