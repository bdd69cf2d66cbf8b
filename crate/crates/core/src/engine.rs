//! Operation-based NuEC replication engine.
//!
//! Each replica keeps its object state, the log of local operations not yet
//! propagated (`log_local`), and the log of operations propagated to every
//! replica (`log_recv`). On `sync` the data type's hooks decide which local
//! operations are dropped for good, which are shipped, and which stay local.
//!
//! Durability: every locally generated operation is also sent point-to-point
//! to `f` peers. A peer keeps the copy in custody, unapplied, until either the
//! source propagates it (the copy is discarded) or the source is reported
//! failed, at which point the peer adopts the copy as one of its own local
//! operations and forwards it to its own durability peers. Constituent op ids travel with every envelope so receivers can
//! filter duplicates.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::contract::NuDataType;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

/// A uniquely identified effect operation, possibly the compaction of several.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Envelope<E> {
    /// Constituent operation ids, sorted, never empty. The first is the key.
    pub ids: Vec<OpId>,
    pub payload: E,
    /// Set on point-to-point copies that exist only for fault tolerance.
    pub durability_copy: bool,
}

impl<E> Envelope<E> {
    pub fn single(id: OpId, payload: E) -> Self {
        Envelope { ids: vec![id], payload, durability_copy: false }
    }

    /// Builds a merged envelope; `ids` are sorted and deduplicated.
    pub fn merged(mut ids: Vec<OpId>, payload: E) -> Self {
        assert!(!ids.is_empty(), "envelope needs at least one constituent");
        ids.sort_unstable();
        ids.dedup();
        Envelope { ids, payload, durability_copy: false }
    }

    pub fn key(&self) -> OpId {
        self.ids[0]
    }

    pub fn source(&self) -> ReplicaId {
        self.ids[0].source
    }
}

impl<E: Metered> Metered for Envelope<E> {
    fn metered_size(&self) -> usize {
        size::TAG + size::OP_ID * self.ids.len() + self.payload.metered_size()
    }
}

/// What one replica sends: a broadcast from `sync`, or a durability copy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyncMessage<E, M> {
    pub sender: ReplicaId,
    pub envelopes: Vec<Envelope<E>>,
    pub meta: Option<M>,
    pub broadcast: bool,
}

impl<E: Metered, M: Metered> Metered for SyncMessage<E, M> {
    fn metered_size(&self) -> usize {
        size::HEADER
            + self.envelopes.iter().map(Metered::metered_size).sum::<usize>()
            + self.meta.as_ref().map_or(0, Metered::metered_size)
    }
}

/// Envelope set keyed by envelope key, with a running metered byte count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpLog<E> {
    entries: BTreeMap<OpId, Envelope<E>>,
    bytes: usize,
}

impl<E> Default for OpLog<E> {
    fn default() -> Self {
        OpLog { entries: BTreeMap::new(), bytes: 0 }
    }
}

impl<E: Metered> OpLog<E> {
    pub fn insert(&mut self, env: Envelope<E>) -> bool {
        let key = env.key();
        if self.entries.contains_key(&key) {
            return false;
        }
        self.bytes += env.metered_size();
        self.entries.insert(key, env);
        true
    }

    pub fn remove(&mut self, key: &OpId) -> Option<Envelope<E>> {
        let env = self.entries.remove(key)?;
        self.bytes -= env.metered_size();
        Some(env)
    }

    pub fn contains(&self, key: &OpId) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &OpId) -> Option<&Envelope<E>> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }

    pub fn keys(&self) -> impl Iterator<Item = OpId> + '_ {
        self.entries.keys().copied()
    }

    pub fn values(&self) -> impl Iterator<Item = &Envelope<E>> + '_ {
        self.entries.values()
    }
}

/// Result of executing a prepare-update at its source.
#[derive(Debug, Clone)]
pub struct Executed<E, M> {
    pub id: OpId,
    pub effect: E,
    /// Point-to-point copies for the durability peers, one per destination.
    pub durability: Vec<(ReplicaId, SyncMessage<E, M>)>,
}

pub type Message<T> = SyncMessage<<T as NuDataType>::Effect, <T as NuDataType>::Meta>;

/// Per-replica protocol state.
#[derive(Debug, Clone)]
pub struct ReplicaEngine<T: NuDataType> {
    dt: T,
    id: ReplicaId,
    state: T::State,
    log_local: OpLog<T::Effect>,
    log_recv: OpLog<T::Effect>,
    custody: OpLog<T::Effect>,
    seen: BTreeSet<OpId>,
    /// Every operation ever received as a durability copy.
    held: BTreeSet<OpId>,
    seq: u64,
    durability_peers: Vec<ReplicaId>,
    failed: BTreeSet<ReplicaId>,
    applied: u64,
}

impl<T: NuDataType> ReplicaEngine<T> {
    /// Creates replica `id` of `n`, with the `f` next replica ids (mod `n`) as
    /// durability peers.
    pub fn new(dt: T, id: ReplicaId, n: usize, f: usize) -> Self {
        assert!(f < n.max(1), "f must be smaller than the number of replicas");
        let peers = (1..=f)
            .map(|k| ReplicaId(((id.index() + k) % n) as u32))
            .collect();
        Self::with_peers(dt, id, peers)
    }

    pub fn with_peers(dt: T, id: ReplicaId, durability_peers: Vec<ReplicaId>) -> Self {
        let state = dt.initial_state();
        ReplicaEngine {
            dt,
            id,
            state,
            log_local: OpLog::default(),
            log_recv: OpLog::default(),
            custody: OpLog::default(),
            seen: BTreeSet::new(),
            held: BTreeSet::new(),
            seq: 0,
            durability_peers,
            failed: BTreeSet::new(),
            applied: 0,
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn data_type(&self) -> &T {
        &self.dt
    }

    pub fn state(&self) -> &T::State {
        &self.state
    }

    pub fn query(&self) -> T::Output {
        self.dt.query(&self.state)
    }

    pub fn log_local(&self) -> &OpLog<T::Effect> {
        &self.log_local
    }

    pub fn log_recv(&self) -> &OpLog<T::Effect> {
        &self.log_recv
    }

    pub fn custody(&self) -> &OpLog<T::Effect> {
        &self.custody
    }

    pub fn seen(&self) -> &BTreeSet<OpId> {
        &self.seen
    }

    pub fn durability_peers(&self) -> &[ReplicaId] {
        &self.durability_peers
    }

    /// Number of constituent operations applied to the state so far.
    pub fn applied_count(&self) -> u64 {
        self.applied
    }

    /// True if the operation was applied here or ever arrived as a durability copy.
    pub fn knows(&self, op: OpId) -> bool {
        self.seen.contains(&op) || self.held.contains(&op)
    }

    /// Metered size of state plus all retained logs.
    pub fn size_bytes(&self) -> usize {
        self.dt.state_size(&self.state)
            + self.log_local.bytes()
            + self.log_recv.bytes()
            + self.custody.bytes()
    }

    /// Runs a prepare-update, applies its effect locally and returns the
    /// durability copies to send.
    pub fn exec_op(&mut self, op: &T::Prepare) -> Result<Executed<T::Effect, T::Meta>, UsageError> {
        let effect = self.dt.prepare(&mut self.state, self.id, op)?;
        self.seq += 1;
        let id = OpId::new(self.id, self.seq);
        self.dt.apply(&mut self.state, &effect);
        self.seen.insert(id);
        self.applied += 1;
        let env = Envelope::single(id, effect.clone());
        let durability = self.durability_sends(vec![env.clone()]);
        self.log_local.insert(env);
        Ok(Executed { id, effect, durability })
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
            .map(|&p| {
                let msg = SyncMessage { sender: self.id, envelopes: envelopes.clone(), meta: None, broadcast: false };
                (p, msg)
            })
            .collect()
    }

    /// Drops forever-masked operations from the local log (and from custody)
    /// and returns the local operations that must be propagated now.
    pub fn ops_to_propagate(&mut self) -> Vec<Envelope<T::Effect>> {
        let masked = {
            let local: Vec<_> = self.log_local.values().collect();
            let recv: Vec<_> = self.log_recv.values().collect();
            self.dt.masked_forever(&local, &self.state, &recv)
        };
        for k in masked {
            self.log_local.remove(&k);
        }
        if !self.custody.is_empty() {
            let masked = {
                let held: Vec<_> = self.custody.values().collect();
                let known: Vec<_> = self.log_recv.values().chain(self.log_local.values()).collect();
                self.dt.masked_forever(&held, &self.state, &known)
            };
            for k in masked {
                self.custody.remove(&k);
            }
        }
        let local: Vec<_> = self.log_local.values().collect();
        let keys = self.relevant(&local);
        keys.iter()
            .filter_map(|k| self.log_local.get(k).cloned())
            .collect()
    }

    fn relevant(&self, local: &[&Envelope<T::Effect>]) -> BTreeSet<OpId> {
        let recv: Vec<_> = self.log_recv.values().collect();
        let mut keys: BTreeSet<OpId> = self
            .dt
            .has_observable_impact(local, &self.state, &recv)
            .into_iter()
            .collect();
        keys.extend(self.dt.may_have_observable_impact(local, &self.state, &recv));
        keys
    }

    /// Dry run of [`Self::ops_to_propagate`]: true if a sync would emit a message.
    pub fn has_pending(&self) -> bool {
        if self.log_local.is_empty() {
            return false;
        }
        let all: Vec<_> = self.log_local.values().collect();
        let recv: Vec<_> = self.log_recv.values().collect();
        let masked: BTreeSet<OpId> =
            self.dt.masked_forever(&all, &self.state, &recv).into_iter().collect();
        let local: Vec<_> = all.into_iter().filter(|e| !masked.contains(&e.key())).collect();
        !self.relevant(&local).is_empty()
    }

    /// Propagates the relevant local operations. Own operations are compacted;
    /// adopted operations of failed replicas are shipped individually so that
    /// two adopters never produce partially overlapping envelopes.
    pub fn sync(&mut self) -> Option<Message<T>> {
        let ops = self.ops_to_propagate();
        if ops.is_empty() {
            return None;
        }
        let mut own = Vec::new();
        let mut adopted = Vec::new();
        for env in ops {
            let key = env.key();
            self.log_local.remove(&key);
            self.log_recv.insert(env.clone());
            if key.source == self.id {
                own.push(env);
            } else {
                adopted.push(env);
            }
        }
        let mut envelopes = self.dt.compact(own);
        envelopes.extend(adopted);
        Some(SyncMessage {
            sender: self.id,
            envelopes,
            meta: self.dt.outgoing_meta(&self.state),
            broadcast: true,
        })
    }

    /// Processes a message. Returns forwarded durability copies, produced when a
    /// copy of a failed replica's operation is adopted on arrival.
    pub fn on_receive(&mut self, msg: &Message<T>) -> Vec<(ReplicaId, Message<T>)> {
        if msg.broadcast {
            for env in &msg.envelopes {
                self.receive_broadcast(env);
            }
            if let Some(meta) = &msg.meta {
                self.dt.incoming_meta(&mut self.state, meta);
            }
            Vec::new()
        } else {
            let adopted: Vec<_> = msg.envelopes.iter().filter_map(|env| self.receive_copy(env)).collect();
            self.durability_sends(adopted)
        }
    }

    fn receive_broadcast(&mut self, env: &Envelope<T::Effect>) {
        let unseen = env.ids.iter().filter(|id| !self.seen.contains(id)).count();
        if unseen == env.ids.len() {
            self.dt.apply(&mut self.state, &env.payload);
            self.seen.extend(env.ids.iter().copied());
            self.applied += unseen as u64;
        } else {
            // Compacted envelopes only ever hold a live sender's own operations,
            // each of which it ships once, so overlap is all or nothing.
            assert_eq!(unseen, 0, "partially seen envelope {:?}", env.ids);
        }
        for id in &env.ids {
            self.log_local.remove(id);
            self.custody.remove(id);
        }
        if !self.log_recv.contains(&env.key()) {
            self.log_recv.insert(Envelope { durability_copy: false, ..env.clone() });
        }
    }

    fn receive_copy(&mut self, env: &Envelope<T::Effect>) -> Option<Envelope<T::Effect>> {
        let key = env.key();
        self.held.extend(env.ids.iter().copied());
        if self.seen.contains(&key) || self.custody.contains(&key) {
            return None;
        }
        if self.failed.contains(&env.source()) {
            self.adopt(env.clone())
        } else {
            self.custody.insert(Envelope { durability_copy: true, ..env.clone() });
            None
        }
    }

    fn adopt(&mut self, env: Envelope<T::Effect>) -> Option<Envelope<T::Effect>> {
        if env.ids.iter().any(|id| self.seen.contains(id)) {
            return None;
        }
        self.dt.apply(&mut self.state, &env.payload);
        self.seen.extend(env.ids.iter().copied());
        self.applied += env.ids.len() as u64;
        let env = Envelope { durability_copy: false, ..env };
        self.log_local.insert(env.clone());
        Some(env)
    }

    /// Failure notification: operations held in custody for `replica` become
    /// local operations of this replica and are forwarded to its own peers.
    pub fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Message<T>)> {
        if replica == self.id || !self.failed.insert(replica) {
            return Vec::new();
        }
        let keys: Vec<OpId> = self.custody.keys().filter(|k| k.source == replica).collect();
        let held: Vec<_> = keys.into_iter().filter_map(|k| self.custody.remove(&k)).collect();
        let adopted: Vec<_> = held.into_iter().filter_map(|env| self.adopt(env)).collect();
        self.durability_sends(adopted)
    }

    pub fn has_failed(&self, replica: ReplicaId) -> bool {
        self.failed.contains(&replica)
    }

    /// Hashes everything that determines future behaviour.
    pub fn fingerprint<H: Hasher>(&self, h: &mut H) {
        self.id.hash(h);
        self.state.hash(h);
        self.log_local.hash(h);
        self.log_recv.hash(h);
        self.custody.hash(h);
        self.seen.hash(h);
        self.seq.hash(h);
        self.failed.hash(h);
    }
}

/// Quiescence: nothing in flight and no replica would propagate anything.
pub fn is_quiescent<'a, T: NuDataType + 'a>(
    engines: impl IntoIterator<Item = &'a ReplicaEngine<T>>,
    in_flight: usize,
) -> bool {
    in_flight == 0 && engines.into_iter().all(|e| !e.has_pending())
}
