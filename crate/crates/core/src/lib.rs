//! Distress propagation on leverage networks.
//!
//! The crate models a system of banks holding external assets and nominal
//! claims on each other, shocks their external assets, and propagates the
//! resulting equity losses with five dynamics:
//!
//! * Eisenberg-Noe clearing (fictitious default algorithm),
//! * Rogers-Veraart clearing with bankruptcy costs,
//! * default cascades with an exogenous recovery rate,
//! * acyclic DebtRank (each distressed bank propagates once),
//! * cyclic DebtRank (propagation along every walk).
//!
//! All dynamics share the first-round routine in [`network::apply_first_round`]
//! and report a [`models::Trajectory`] of individual vulnerabilities.
//! [`analysis`] turns trajectories into global vulnerabilities, checks the
//! Eisenberg-Noe loss-conservation identities and audits model orderings.
//! [`reconstruct`] samples interbank networks from per-bank aggregates,
//! [`ingest`] loads and repairs quarterly balance-sheet panels and
//! [`sweep`] drives shock and recovery-rate experiments over ensembles.

pub mod analysis;
pub mod fixtures;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod network;
pub mod reconstruct;
pub mod sweep;

pub use analysis::{global_vulnerability, OrderingReport, VulnerabilityReport};
pub use matrix::Matrix;
pub use models::{Model, ModelConfig, StopReason, Trajectory};
pub use network::{apply_first_round, BalanceSheet, FirstRound, LiabilityNetwork, ShockSpec};
