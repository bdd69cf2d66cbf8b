//! The uniform interface the simulator uses to drive any of the three engines.

use std::fmt::Debug;

use super::workload::SimDataType;
use crate::baselines::{FullOpReplica, ShipMessage, StateShipReplica};
use crate::contract::NuDataType;
use crate::engine::{Message, ReplicaEngine};
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::Metered;

/// Result of executing one operation at its source.
pub struct Generated<E, M> {
    pub id: OpId,
    pub effect: E,
    /// Point-to-point sends, one per destination.
    pub direct: Vec<(ReplicaId, M)>,
}

pub trait SimReplica: Clone + Debug + Send {
    type Dt: SimDataType;
    type Msg: Clone + Debug + Metered + Send + Sync;

    fn replica_id(&self) -> ReplicaId;

    #[allow(clippy::type_complexity)]
    fn exec(
        &mut self,
        op: &<Self::Dt as NuDataType>::Prepare,
    ) -> Result<Generated<<Self::Dt as NuDataType>::Effect, Self::Msg>, UsageError>;

    /// A broadcast, if there is anything to send.
    fn sync(&mut self) -> Option<Self::Msg>;

    /// Processes a message; returns any point-to-point sends it triggers.
    fn receive(&mut self, msg: &Self::Msg) -> Vec<(ReplicaId, Self::Msg)>;

    fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Self::Msg)>;

    /// Whether a sync now would emit a message. Must not mutate.
    fn has_pending(&self) -> bool;

    fn query(&self) -> <Self::Dt as NuDataType>::Output;

    fn size_bytes(&self) -> usize;

    /// Whether this replica applied or holds a copy of `op`.
    fn knows(&self, op: OpId) -> bool;

    fn is_broadcast(msg: &Self::Msg) -> bool;
}

impl<T: SimDataType> SimReplica for ReplicaEngine<T> {
    type Dt = T;
    type Msg = Message<T>;

    fn replica_id(&self) -> ReplicaId {
        self.id()
    }

    fn exec(&mut self, op: &T::Prepare) -> Result<Generated<T::Effect, Message<T>>, UsageError> {
        let ex = self.exec_op(op)?;
        Ok(Generated { id: ex.id, effect: ex.effect, direct: ex.durability })
    }

    fn sync(&mut self) -> Option<Message<T>> {
        ReplicaEngine::sync(self)
    }

    fn receive(&mut self, msg: &Message<T>) -> Vec<(ReplicaId, Message<T>)> {
        self.on_receive(msg)
    }

    fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Message<T>)> {
        ReplicaEngine::replica_failed(self, replica)
    }

    fn has_pending(&self) -> bool {
        ReplicaEngine::has_pending(self)
    }

    fn query(&self) -> T::Output {
        ReplicaEngine::query(self)
    }

    fn size_bytes(&self) -> usize {
        ReplicaEngine::size_bytes(self)
    }

    fn knows(&self, op: OpId) -> bool {
        ReplicaEngine::knows(self, op)
    }

    fn is_broadcast(msg: &Message<T>) -> bool {
        msg.broadcast
    }
}

impl<T: SimDataType> SimReplica for FullOpReplica<T> {
    type Dt = T;
    type Msg = Message<T>;

    fn replica_id(&self) -> ReplicaId {
        self.id()
    }

    fn exec(&mut self, op: &T::Prepare) -> Result<Generated<T::Effect, Message<T>>, UsageError> {
        let (id, effect, direct) = self.exec_op(op)?;
        Ok(Generated { id, effect, direct })
    }

    fn sync(&mut self) -> Option<Message<T>> {
        FullOpReplica::sync(self)
    }

    fn receive(&mut self, msg: &Message<T>) -> Vec<(ReplicaId, Message<T>)> {
        self.on_receive(msg)
    }

    fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Message<T>)> {
        FullOpReplica::replica_failed(self, replica)
    }

    fn has_pending(&self) -> bool {
        FullOpReplica::has_pending(self)
    }

    fn query(&self) -> T::Output {
        FullOpReplica::query(self)
    }

    fn size_bytes(&self) -> usize {
        FullOpReplica::size_bytes(self)
    }

    fn knows(&self, op: OpId) -> bool {
        FullOpReplica::knows(self, op)
    }

    fn is_broadcast(msg: &Message<T>) -> bool {
        msg.broadcast
    }
}

impl<T: SimDataType> SimReplica for StateShipReplica<T> {
    type Dt = T;
    type Msg = ShipMessage<T::Shipped, T::Effect>;

    fn replica_id(&self) -> ReplicaId {
        self.id()
    }

    fn exec(&mut self, op: &T::Prepare) -> Result<Generated<T::Effect, Self::Msg>, UsageError> {
        let (id, effect, direct) = self.exec_op(op)?;
        Ok(Generated { id, effect, direct })
    }

    fn sync(&mut self) -> Option<Self::Msg> {
        StateShipReplica::sync(self)
    }

    fn receive(&mut self, msg: &Self::Msg) -> Vec<(ReplicaId, Self::Msg)> {
        self.on_receive(msg)
    }

    fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Self::Msg)> {
        StateShipReplica::replica_failed(self, replica)
    }

    fn has_pending(&self) -> bool {
        StateShipReplica::has_pending(self)
    }

    fn query(&self) -> T::Output {
        StateShipReplica::query(self)
    }

    fn size_bytes(&self) -> usize {
        StateShipReplica::size_bytes(self)
    }

    fn knows(&self, op: OpId) -> bool {
        StateShipReplica::knows(self, op)
    }

    fn is_broadcast(msg: &Self::Msg) -> bool {
        msg.is_broadcast()
    }
}
