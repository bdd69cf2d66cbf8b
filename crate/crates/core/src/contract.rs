//! The pluggable data-type definition consumed by the replication engine.

use std::fmt::Debug;
use std::hash::Hash;

use crate::engine::Envelope;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::Metered;

/// A borrowed view over a set of logged envelopes.
pub type OpView<'a, E> = [&'a Envelope<E>];

/// An object `(S, s0, Q, U_p, U_e)` together with the relevance hooks that let
/// the engine decide which local operations other replicas need to see.
///
/// The three relevance hooks receive the local log, the current state and the
/// log of operations already propagated everywhere, and return keys of
/// envelopes drawn from the local log. They must be pure.
pub trait NuDataType: Clone + Debug + Send + Sync {
    type State: Clone + Debug + Hash + PartialEq + Send + Sync;
    type Prepare: Clone + Debug + Send + Sync;
    type Effect: Clone + Debug + Hash + PartialEq + Eq + Send + Sync + Metered;
    type Output: Clone + Debug + PartialEq + Eq + Send + Sync;
    type Meta: Clone + Debug + Hash + PartialEq + Send + Sync + Metered;

    fn name(&self) -> &'static str;

    fn initial_state(&self) -> Self::State;

    /// The object's single read-only operation, `get()`.
    fn query(&self, state: &Self::State) -> Self::Output;

    /// Source-side generator. May update source-local bookkeeping (for example
    /// a vector clock) but must leave the observable state unchanged.
    fn prepare(
        &self,
        state: &mut Self::State,
        replica: ReplicaId,
        op: &Self::Prepare,
    ) -> Result<Self::Effect, UsageError>;

    fn apply(&self, state: &mut Self::State, op: &Self::Effect);

    fn masked_forever(
        &self,
        local: &OpView<'_, Self::Effect>,
        state: &Self::State,
        recv: &OpView<'_, Self::Effect>,
    ) -> Vec<OpId>;

    fn has_observable_impact(
        &self,
        local: &OpView<'_, Self::Effect>,
        state: &Self::State,
        recv: &OpView<'_, Self::Effect>,
    ) -> Vec<OpId>;

    fn may_have_observable_impact(
        &self,
        _local: &OpView<'_, Self::Effect>,
        _state: &Self::State,
        _recv: &OpView<'_, Self::Effect>,
    ) -> Vec<OpId> {
        Vec::new()
    }

    /// Merges envelopes into an observably equivalent, smaller set. Merged
    /// envelopes carry the union of their constituents' ids.
    fn compact(&self, ops: Vec<Envelope<Self::Effect>>) -> Vec<Envelope<Self::Effect>> {
        ops
    }

    /// Annotation attached to every broadcast this replica sends.
    fn outgoing_meta(&self, _state: &Self::State) -> Option<Self::Meta> {
        None
    }

    fn incoming_meta(&self, _state: &mut Self::State, _meta: &Self::Meta) {}

    /// Metered size of the object state.
    fn state_size(&self, state: &Self::State) -> usize;

    /// Sequential reference: the query result of applying every effect in
    /// `effects` to the initial state. Implemented without the incremental
    /// state so it can serve as an independent check.
    fn oracle(&self, effects: &[Self::Effect]) -> Self::Output;
}

/// Metadata type for data types that never annotate messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NoMeta;

impl Metered for NoMeta {
    fn metered_size(&self) -> usize {
        0
    }
}
