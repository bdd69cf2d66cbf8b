//! Non-uniform eventual consistency (NuEC).
//!
//! Replicas of a NuEC object only have to agree on what queries return once the
//! system is quiescent, not on their full internal state. That lets each replica
//! keep operations that cannot currently influence any query to itself and ship
//! only the ones that do.
//!
//! The crate is organised as:
//!
//! - [`engine`]: the generic operation-based replication engine, parameterised
//!   by a [`contract::NuDataType`], plus the durability (custody) extension that
//!   keeps every local operation on `f` peers.
//! - [`datatypes`]: Top-K with removals, Top Sum, plain Top-K and Histogram, each
//!   with an independent sequential oracle.
//! - [`baselines`]: full-replication comparators (propagate-all and state-shipping).
//! - [`sim`]: a deterministic discrete-event simulator, metrics, and the
//!   exhaustive enumeration checks.
//! - [`batch`]: runs many independent simulations, in parallel when the
//!   `parallel` feature is enabled.

pub mod baselines;
pub mod batch;
pub mod clock;
pub mod contract;
pub mod datatypes;
pub mod engine;
pub mod error;
pub mod ids;
pub mod size;
pub mod sim;

pub use contract::NuDataType;
pub use engine::{Envelope, ReplicaEngine, SyncMessage};
pub use error::{ConfigError, UsageError};
pub use ids::{OpId, ReplicaId};
