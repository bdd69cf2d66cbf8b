use std::collections::BTreeSet;

use crate::contract::NuDataType;
use crate::engine::{Envelope, Message, OpLog, SyncMessage};
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::Metered;

/// Propagate-all replica: state plus an outbox of unsent local operations.
///
/// Like the NuEC engine, each operation is copied to `f` peers as soon as it
/// runs, so an outbox lost in a crash is recovered by a peer. Copies are held
/// unapplied until the source's broadcast arrives or the source fails.
#[derive(Debug, Clone)]
pub struct FullOpReplica<T: NuDataType> {
    dt: T,
    id: ReplicaId,
    state: T::State,
    outbox: Vec<Envelope<T::Effect>>,
    outbox_bytes: usize,
    /// Operations of failed replicas, shipped uncompacted.
    adopted: Vec<Envelope<T::Effect>>,
    custody: OpLog<T::Effect>,
    held: BTreeSet<OpId>,
    seen: BTreeSet<OpId>,
    seq: u64,
    durability_peers: Vec<ReplicaId>,
    failed: BTreeSet<ReplicaId>,
}

impl<T: NuDataType> FullOpReplica<T> {
    /// Replica `id` of `n`, copying each operation to the `f` next replicas.
    pub fn new(dt: T, id: ReplicaId, n: usize, f: usize) -> Self {
        assert!(f < n.max(1), "f must be smaller than the number of replicas");
        let durability_peers = (1..=f)
            .map(|k| ReplicaId(((id.index() + k) % n) as u32))
            .collect();
        let state = dt.initial_state();
        FullOpReplica {
            dt,
            id,
            state,
            outbox: Vec::new(),
            outbox_bytes: 0,
            adopted: Vec::new(),
            custody: OpLog::default(),
            held: BTreeSet::new(),
            seen: BTreeSet::new(),
            seq: 0,
            durability_peers,
            failed: BTreeSet::new(),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn state(&self) -> &T::State {
        &self.state
    }

    pub fn query(&self) -> T::Output {
        self.dt.query(&self.state)
    }

    pub fn knows(&self, op: OpId) -> bool {
        self.seen.contains(&op) || self.held.contains(&op)
    }

    pub fn has_pending(&self) -> bool {
        !self.outbox.is_empty() || !self.adopted.is_empty()
    }

    /// State, unsent operations and custody copies.
    pub fn size_bytes(&self) -> usize {
        self.dt.state_size(&self.state)
            + self.outbox_bytes
            + self.adopted.iter().map(Metered::metered_size).sum::<usize>()
            + self.custody.bytes()
    }

    /// Runs an operation; returns its id, effect and the durability copies.
    #[allow(clippy::type_complexity)]
    pub fn exec_op(
        &mut self,
        op: &T::Prepare,
    ) -> Result<(OpId, T::Effect, Vec<(ReplicaId, Message<T>)>), UsageError> {
        let effect = self.dt.prepare(&mut self.state, self.id, op)?;
        self.seq += 1;
        let id = OpId::new(self.id, self.seq);
        self.dt.apply(&mut self.state, &effect);
        self.seen.insert(id);
        let env = Envelope::single(id, effect.clone());
        let copies = self.durability_sends(vec![env.clone()]);
        self.outbox_bytes += env.metered_size();
        self.outbox.push(env);
        Ok((id, effect, copies))
    }

    fn durability_sends(&self, envelopes: Vec<Envelope<T::Effect>>) -> Vec<(ReplicaId, Message<T>)> {
        if envelopes.is_empty() {
            return Vec::new();
        }
        let envelopes: Vec<_> = envelopes
            .into_iter()
            .map(|e| Envelope { durability_copy: true, ..e })
            .collect();
        self.durability_peers
            .iter()
            .filter(|p| !self.failed.contains(p))
            .map(|&p| (p, SyncMessage { sender: self.id, envelopes: envelopes.clone(), meta: None, broadcast: false }))
            .collect()
    }

    pub fn sync(&mut self) -> Option<Message<T>> {
        if !self.has_pending() {
            return None;
        }
        self.outbox_bytes = 0;
        let mut envelopes = self.dt.compact(std::mem::take(&mut self.outbox));
        envelopes.append(&mut self.adopted);
        Some(SyncMessage { sender: self.id, envelopes, meta: self.dt.outgoing_meta(&self.state), broadcast: true })
    }

    /// Processes a message; returns copies forwarded after adopting operations
    /// of an already failed source.
    pub fn on_receive(&mut self, msg: &Message<T>) -> Vec<(ReplicaId, Message<T>)> {
        if !msg.broadcast {
            let mut adopted = Vec::new();
            for env in &msg.envelopes {
                self.held.extend(env.ids.iter().copied());
                if self.seen.contains(&env.key()) || self.custody.contains(&env.key()) {
                    continue;
                }
                if self.failed.contains(&env.source()) {
                    adopted.extend(self.adopt(env.clone()));
                } else {
                    self.custody.insert(env.clone());
                }
            }
            return self.durability_sends(adopted);
        }
        for env in &msg.envelopes {
            if env.ids.iter().all(|id| !self.seen.contains(id)) {
                self.dt.apply(&mut self.state, &env.payload);
                self.seen.extend(env.ids.iter().copied());
            }
            for id in &env.ids {
                self.custody.remove(id);
            }
        }
        if let Some(meta) = &msg.meta {
            self.dt.incoming_meta(&mut self.state, meta);
        }
        Vec::new()
    }

    fn adopt(&mut self, env: Envelope<T::Effect>) -> Option<Envelope<T::Effect>> {
        if env.ids.iter().any(|id| self.seen.contains(id)) {
            return None;
        }
        self.dt.apply(&mut self.state, &env.payload);
        self.seen.extend(env.ids.iter().copied());
        let env = Envelope { durability_copy: false, ..env };
        self.adopted.push(env.clone());
        Some(env)
    }

    /// Failure notification: custody copies from `replica` are applied, queued
    /// for broadcast and forwarded to this replica's own peers.
    pub fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Message<T>)> {
        if replica == self.id || !self.failed.insert(replica) {
            return Vec::new();
        }
        let keys: Vec<OpId> = self.custody.keys().filter(|k| k.source == replica).collect();
        let held: Vec<_> = keys.into_iter().filter_map(|k| self.custody.remove(&k)).collect();
        let adopted: Vec<_> = held.into_iter().filter_map(|env| self.adopt(env)).collect();
        self.durability_sends(adopted)
    }
}
