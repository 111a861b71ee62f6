//! coherence-lab: an exact, desk-scale laboratory for two failure modes of
//! agents built from predictive models — auto-suggestive delusions and
//! predictor-policy incoherence.
//!
//! The library provides:
//! - exact finite-horizon MDP/POMDP plumbing ([`mdp`]),
//! - the goal-conditioning operator, its iterated fixed point, and KL
//!   diagnostics ([`conditioning`]),
//! - an exact confounded history predictor with delusion measures and the
//!   de-confounding refit ([`delusion`]),
//! - four benchmark environments ([`envs`]),
//! - a count-based autoregressive sequence-model surrogate ([`surrogate`]),
//! - trajectory token codecs and dataset I/O ([`data`]),
//! - random problem instances and a property-check suite ([`oracle`]),
//! - a reproducible experiment harness behind the CLI ([`harness`]).

pub mod conditioning;
pub mod data;
pub mod delusion;
pub mod envs;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod surrogate;

pub use conditioning::{expected_return, goal_condition, incoherence, iterate, limit_policy};
pub use mdp::{FiniteMdp, FinitePomdp, TimedPolicy};
