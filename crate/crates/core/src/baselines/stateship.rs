use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::clock::VectorClock;
use crate::contract::NuDataType;
use crate::datatypes::{
    Entry, Histogram, HistogramOp, TopK, TopKOp, TopKRmv, TopKRmvOp, TopKRmvState, TopKState, TopSum, TopSumOp,
    TopSumState, ENTRY_SIZE,
};
use crate::engine::Envelope;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

/// State-shipping semantics for a data type.
pub trait StateShipped: NuDataType {
    /// What a sync broadcasts.
    type Shipped: Clone + Debug + PartialEq + Eq + Hash + Metered + Send + Sync;
    type ShipState: Clone + Debug + Send + Sync;

    fn ship_init(&self) -> Self::ShipState;

    /// Prepares and applies a local operation.
    fn ship_local(
        &self,
        st: &mut Self::ShipState,
        me: ReplicaId,
        op: &Self::Prepare,
    ) -> Result<Self::Effect, UsageError>;

    /// Folds in every operation of the failed replica `source` held here.
    fn ship_adopt(&self, st: &mut Self::ShipState, source: ReplicaId, held: &[&Self::Effect]);

    fn ship_pending(&self, st: &Self::ShipState) -> bool;

    fn ship_take(&self, st: &mut Self::ShipState) -> Option<Self::Shipped>;

    fn ship_merge(&self, st: &mut Self::ShipState, shipped: &Self::Shipped);

    fn ship_query(&self, st: &Self::ShipState) -> Self::Output;

    fn ship_size(&self, st: &Self::ShipState) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShipBody<S, E> {
    State(S),
    /// Durability copies, sent point-to-point.
    Copies(Vec<Envelope<E>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShipMessage<S, E> {
    pub sender: ReplicaId,
    pub body: ShipBody<S, E>,
}

impl<S, E> ShipMessage<S, E> {
    pub fn is_broadcast(&self) -> bool {
        matches!(self.body, ShipBody::State(_))
    }
}

impl<S: Metered, E: Metered> Metered for ShipMessage<S, E> {
    fn metered_size(&self) -> usize {
        size::HEADER
            + match &self.body {
                ShipBody::State(s) => s.metered_size(),
                ShipBody::Copies(c) => c.iter().map(Metered::metered_size).sum(),
            }
    }
}

type Msg<T> = ShipMessage<<T as StateShipped>::Shipped, <T as NuDataType>::Effect>;

/// State-shipping replica. Durability copies are kept for the whole run, since
/// the shipped state does not say which operations it reflects.
#[derive(Debug, Clone)]
pub struct StateShipReplica<T: StateShipped> {
    dt: T,
    id: ReplicaId,
    st: T::ShipState,
    seq: u64,
    peers: Vec<ReplicaId>,
    failed: BTreeSet<ReplicaId>,
    custody: BTreeMap<OpId, T::Effect>,
    custody_bytes: usize,
}

impl<T: StateShipped> StateShipReplica<T> {
    pub fn new(dt: T, id: ReplicaId, n: usize, f: usize) -> Self {
        let peers = (1..=f).map(|k| ReplicaId(((id.index() + k) % n) as u32)).collect();
        let st = dt.ship_init();
        StateShipReplica {
            dt,
            id,
            st,
            seq: 0,
            peers,
            failed: BTreeSet::new(),
            custody: BTreeMap::new(),
            custody_bytes: 0,
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn ship_state(&self) -> &T::ShipState {
        &self.st
    }

    pub fn query(&self) -> T::Output {
        self.dt.ship_query(&self.st)
    }

    pub fn knows(&self, op: OpId) -> bool {
        (op.source == self.id && op.seq <= self.seq) || self.custody.contains_key(&op)
    }

    pub fn has_pending(&self) -> bool {
        self.dt.ship_pending(&self.st)
    }

    pub fn size_bytes(&self) -> usize {
        self.dt.ship_size(&self.st) + self.custody_bytes
    }

    fn copies_to_peers(&self, envelopes: Vec<Envelope<T::Effect>>) -> Vec<(ReplicaId, Msg<T>)> {
        if envelopes.is_empty() {
            return Vec::new();
        }
        self.peers
            .iter()
            .filter(|p| !self.failed.contains(p))
            .map(|&p| (p, ShipMessage { sender: self.id, body: ShipBody::Copies(envelopes.clone()) }))
            .collect()
    }

    #[allow(clippy::type_complexity)]
    pub fn exec_op(&mut self, op: &T::Prepare) -> Result<(OpId, T::Effect, Vec<(ReplicaId, Msg<T>)>), UsageError> {
        let effect = self.dt.ship_local(&mut self.st, self.id, op)?;
        self.seq += 1;
        let id = OpId::new(self.id, self.seq);
        let mut env = Envelope::single(id, effect.clone());
        env.durability_copy = true;
        Ok((id, effect, self.copies_to_peers(vec![env])))
    }

    pub fn sync(&mut self) -> Option<Msg<T>> {
        let shipped = self.dt.ship_take(&mut self.st)?;
        Some(ShipMessage { sender: self.id, body: ShipBody::State(shipped) })
    }

    pub fn on_receive(&mut self, msg: &Msg<T>) -> Vec<(ReplicaId, Msg<T>)> {
        match &msg.body {
            ShipBody::State(s) => {
                self.dt.ship_merge(&mut self.st, s);
                Vec::new()
            }
            ShipBody::Copies(envs) => {
                let mut forward = Vec::new();
                for env in envs {
                    let key = env.key();
                    if self.custody.contains_key(&key) || key.source == self.id {
                        continue;
                    }
                    self.custody_bytes += env.metered_size();
                    self.custody.insert(key, env.payload.clone());
                    if self.failed.contains(&key.source) {
                        self.dt.ship_adopt(&mut self.st, key.source, &[&env.payload]);
                        forward.push(env.clone());
                    }
                }
                self.copies_to_peers(forward)
            }
        }
    }

    pub fn replica_failed(&mut self, replica: ReplicaId) -> Vec<(ReplicaId, Msg<T>)> {
        if replica == self.id || !self.failed.insert(replica) {
            return Vec::new();
        }
        let held: Vec<(OpId, &T::Effect)> =
            self.custody.iter().filter(|(k, _)| k.source == replica).map(|(k, e)| (*k, e)).collect();
        if held.is_empty() {
            return Vec::new();
        }
        let effects: Vec<&T::Effect> = held.iter().map(|(_, e)| *e).collect();
        self.dt.ship_adopt(&mut self.st, replica, &effects);
        let forward: Vec<Envelope<T::Effect>> = held
            .iter()
            .map(|(k, e)| Envelope { ids: vec![*k], payload: (*e).clone(), durability_copy: true })
            .collect();
        self.copies_to_peers(forward)
    }
}

/// Per-`(replica, key)` monotone contributions merged by entrywise max, with
/// derived per-key totals. Shared by Top Sum and Histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Contributions {
    contrib: BTreeMap<(ReplicaId, u64), u64>,
    totals: TopSumState,
    dirty: BTreeSet<(ReplicaId, u64)>,
}

/// Contribution entry on the wire: replica, key, value.
const CONTRIB_SIZE: usize = size::REPLICA + size::ID + size::VALUE;

impl Contributions {
    pub fn totals(&self) -> &TopSumState {
        &self.totals
    }

    fn raise(&mut self, replica: ReplicaId, key: u64, value: u64) -> bool {
        let cur = self.contrib.entry((replica, key)).or_insert(0);
        if value <= *cur {
            return false;
        }
        let delta = value - *cur;
        *cur = value;
        self.totals.add(key, delta);
        true
    }

    fn add_local(&mut self, me: ReplicaId, key: u64, amount: u64) {
        let v = self.contrib.get(&(me, key)).copied().unwrap_or(0) + amount;
        self.raise(me, key, v);
        self.dirty.insert((me, key));
    }

    fn adopt(&mut self, source: ReplicaId, held: impl Iterator<Item = (u64, u64)>) {
        let mut sums: BTreeMap<u64, u64> = BTreeMap::new();
        for (key, n) in held {
            *sums.entry(key).or_insert(0) += n;
        }
        for (key, total) in sums {
            if self.raise(source, key, total) {
                self.dirty.insert((source, key));
            }
        }
    }

    fn take(&mut self) -> Option<Vec<(ReplicaId, u64, u64)>> {
        if self.dirty.is_empty() {
            return None;
        }
        let out = std::mem::take(&mut self.dirty).into_iter().map(|(r, k)| (r, k, self.contrib[&(r, k)])).collect();
        Some(out)
    }

    fn merge(&mut self, entries: &[(ReplicaId, u64, u64)]) {
        for &(r, k, v) in entries {
            self.raise(r, k, v);
        }
    }

    fn size(&self) -> usize {
        self.contrib.len() * CONTRIB_SIZE
    }
}

/// Shipped contribution entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContribShip(pub Vec<(ReplicaId, u64, u64)>);

impl Metered for ContribShip {
    fn metered_size(&self) -> usize {
        self.0.len() * CONTRIB_SIZE
    }
}

impl StateShipped for TopSum {
    type Shipped = ContribShip;
    type ShipState = Contributions;

    fn ship_init(&self) -> Contributions {
        Contributions::default()
    }

    fn ship_local(&self, st: &mut Contributions, me: ReplicaId, op: &Self::Prepare) -> Result<TopSumOp, UsageError> {
        let effect = self.prepare(&mut TopSumState::default(), me, op)?;
        st.add_local(me, effect.id, effect.amount);
        Ok(effect)
    }

    fn ship_adopt(&self, st: &mut Contributions, source: ReplicaId, held: &[&TopSumOp]) {
        st.adopt(source, held.iter().map(|op| (op.id, op.amount)));
    }

    fn ship_pending(&self, st: &Contributions) -> bool {
        !st.dirty.is_empty()
    }

    fn ship_take(&self, st: &mut Contributions) -> Option<ContribShip> {
        st.take().map(ContribShip)
    }

    fn ship_merge(&self, st: &mut Contributions, shipped: &ContribShip) {
        st.merge(&shipped.0);
    }

    fn ship_query(&self, st: &Contributions) -> Vec<(u64, u64)> {
        st.totals.top(self.k)
    }

    fn ship_size(&self, st: &Contributions) -> usize {
        st.size() + self.state_size(&st.totals)
    }
}

impl StateShipped for Histogram {
    type Shipped = ContribShip;
    type ShipState = Contributions;

    fn ship_init(&self) -> Contributions {
        Contributions::default()
    }

    fn ship_local(&self, st: &mut Contributions, me: ReplicaId, op: &Self::Prepare) -> Result<HistogramOp, UsageError> {
        let effect = self.prepare(&mut BTreeMap::new(), me, op)?;
        for (&bin, &n) in &effect.delta {
            st.add_local(me, bin, n);
        }
        Ok(effect)
    }

    fn ship_adopt(&self, st: &mut Contributions, source: ReplicaId, held: &[&HistogramOp]) {
        st.adopt(source, held.iter().flat_map(|op| op.delta.iter().map(|(&b, &n)| (b, n))));
    }

    fn ship_pending(&self, st: &Contributions) -> bool {
        !st.dirty.is_empty()
    }

    fn ship_take(&self, st: &mut Contributions) -> Option<ContribShip> {
        st.take().map(ContribShip)
    }

    fn ship_merge(&self, st: &mut Contributions, shipped: &ContribShip) {
        st.merge(&shipped.0);
    }

    fn ship_query(&self, st: &Contributions) -> BTreeMap<u64, u64> {
        st.totals.sums().clone()
    }

    fn ship_size(&self, st: &Contributions) -> usize {
        st.size() + st.totals.len() * (size::ID + size::VALUE)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopKShipState {
    state: TopKState,
    shipped: Vec<(u64, u64)>,
}

/// A full top: `(id, score)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopShip(pub Vec<(u64, u64)>);

impl Metered for TopShip {
    fn metered_size(&self) -> usize {
        self.0.len() * (size::ID + size::VALUE)
    }
}

impl StateShipped for TopK {
    type Shipped = TopShip;
    type ShipState = TopKShipState;

    fn ship_init(&self) -> TopKShipState {
        TopKShipState::default()
    }

    fn ship_local(&self, st: &mut TopKShipState, me: ReplicaId, op: &TopKOp) -> Result<TopKOp, UsageError> {
        let effect = self.prepare(&mut st.state, me, op)?;
        self.apply(&mut st.state, &effect);
        Ok(effect)
    }

    fn ship_adopt(&self, st: &mut TopKShipState, _: ReplicaId, held: &[&TopKOp]) {
        for op in held {
            self.apply(&mut st.state, op);
        }
    }

    fn ship_pending(&self, st: &TopKShipState) -> bool {
        st.state.elems() != st.shipped.as_slice()
    }

    fn ship_take(&self, st: &mut TopKShipState) -> Option<TopShip> {
        if !self.ship_pending(st) {
            return None;
        }
        st.shipped = st.state.elems().to_vec();
        Some(TopShip(st.shipped.clone()))
    }

    fn ship_merge(&self, st: &mut TopKShipState, shipped: &TopShip) {
        for &(id, score) in &shipped.0 {
            st.state.insert(self.k, id, score);
        }
        // Everyone received this top, so it need not be shipped again.
        if st.state.elems() == shipped.0.as_slice() {
            st.shipped = shipped.0.clone();
        }
    }

    fn ship_query(&self, st: &TopKShipState) -> Vec<(u64, u64)> {
        self.query(&st.state)
    }

    fn ship_size(&self, st: &TopKShipState) -> usize {
        self.state_size(&st.state)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopKRmvShipState {
    state: TopKRmvState,
    shipped: Vec<Entry>,
    dirty_removes: BTreeSet<u64>,
}

impl TopKRmvShipState {
    pub fn state(&self) -> &TopKRmvState {
        &self.state
    }
}

/// The full top, the removes entries changed since the last ship, and the
/// sender's vector clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopKRmvShip {
    pub top: Vec<Entry>,
    pub removes: Vec<(u64, VectorClock)>,
    pub vc: VectorClock,
}

impl Metered for TopKRmvShip {
    fn metered_size(&self) -> usize {
        self.top.len() * ENTRY_SIZE
            + self.removes.iter().map(|(_, vc)| size::ID + vc.metered_size()).sum::<usize>()
            + self.vc.metered_size()
    }
}

impl StateShipped for TopKRmv {
    type Shipped = TopKRmvShip;
    type ShipState = TopKRmvShipState;

    fn ship_init(&self) -> TopKRmvShipState {
        TopKRmvShipState::default()
    }

    fn ship_local(&self, st: &mut TopKRmvShipState, me: ReplicaId, op: &Self::Prepare) -> Result<TopKRmvOp, UsageError> {
        let effect = self.prepare(&mut st.state, me, op)?;
        self.apply(&mut st.state, &effect);
        if let TopKRmvOp::Rmv { id, .. } = effect {
            st.dirty_removes.insert(id);
        }
        Ok(effect)
    }

    fn ship_adopt(&self, st: &mut TopKRmvShipState, _: ReplicaId, held: &[&TopKRmvOp]) {
        for op in held {
            self.apply(&mut st.state, op);
            if let TopKRmvOp::Rmv { id, .. } = op {
                st.dirty_removes.insert(*id);
            }
        }
    }

    fn ship_pending(&self, st: &TopKRmvShipState) -> bool {
        !st.dirty_removes.is_empty() || st.state.top(self.k) != st.shipped
    }

    fn ship_take(&self, st: &mut TopKRmvShipState) -> Option<TopKRmvShip> {
        if !self.ship_pending(st) {
            return None;
        }
        st.shipped = st.state.top(self.k);
        let removes = std::mem::take(&mut st.dirty_removes)
            .into_iter()
            .filter_map(|id| st.state.removes(id).map(|vc| (id, vc.clone())))
            .collect();
        Some(TopKRmvShip { top: st.shipped.clone(), removes, vc: st.state.vc().clone() })
    }

    fn ship_merge(&self, st: &mut TopKRmvShipState, shipped: &TopKRmvShip) {
        for (id, vc) in &shipped.removes {
            st.state.remove(*id, vc);
        }
        for e in &shipped.top {
            st.state.add(*e);
        }
        st.state.vc_mut().merge(&shipped.vc);
        if st.state.top(self.k) == shipped.top {
            st.shipped = shipped.top.clone();
        }
    }

    fn ship_query(&self, st: &TopKRmvShipState) -> Vec<(u64, u64)> {
        self.query(&st.state)
    }

    fn ship_size(&self, st: &TopKRmvShipState) -> usize {
        self.state_size(&st.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datatypes::{TopKRmvPrepare, TopSumPrepare};

    fn r(i: u32) -> ReplicaId {
        ReplicaId(i)
    }

    #[test]
    fn unchanged_top_is_not_reshipped() {
        let mut a = StateShipReplica::new(TopK::new(1), r(0), 2, 0);
        a.exec_op(&TopKOp { id: 1, score: 5 }).unwrap();
        assert!(a.sync().is_some());
        a.exec_op(&TopKOp { id: 2, score: 1 }).unwrap();
        assert!(a.sync().is_none());
    }

    #[test]
    fn identical_tops_merge_idempotently() {
        let mut a = StateShipReplica::new(TopK::new(2), r(0), 2, 0);
        let mut b = StateShipReplica::new(TopK::new(2), r(1), 2, 0);
        a.exec_op(&TopKOp { id: 1, score: 5 }).unwrap();
        b.exec_op(&TopKOp { id: 1, score: 5 }).unwrap();
        let ma = a.sync().unwrap();
        b.on_receive(&ma);
        b.on_receive(&ma);
        assert_eq!(a.query(), b.query());
        assert!(!b.has_pending());
    }

    #[test]
    fn removes_always_ship() {
        let mut a = StateShipReplica::new(TopKRmv::new(1), r(0), 2, 0);
        a.exec_op(&TopKRmvPrepare::Add { id: 1, score: 9 }).unwrap();
        a.sync().unwrap();
        a.exec_op(&TopKRmvPrepare::Rmv { id: 7 }).unwrap();
        let msg = a.sync().expect("a remove must be shipped");
        match msg.body {
            ShipBody::State(s) => assert_eq!(s.removes.len(), 1),
            ShipBody::Copies(_) => panic!("expected a broadcast"),
        }
    }

    #[test]
    fn top_sum_contributions_do_not_lose_adds() {
        let dt = TopSum::new(1, 2);
        let mut a = StateShipReplica::new(dt, r(0), 2, 0);
        let mut b = StateShipReplica::new(dt, r(1), 2, 0);
        a.exec_op(&TopSumPrepare { id: 1, amount: 3 }).unwrap();
        b.exec_op(&TopSumPrepare { id: 1, amount: 4 }).unwrap();
        let ma = a.sync().unwrap();
        let mb = b.sync().unwrap();
        a.on_receive(&mb);
        b.on_receive(&ma);
        b.on_receive(&ma);
        assert_eq!(a.query(), vec![(1, 7)]);
        assert_eq!(b.query(), vec![(1, 7)]);
    }

    #[test]
    fn adoption_takes_max_of_held_and_shipped() {
        let dt = TopSum::new(1, 2);
        let mut a = StateShipReplica::new(dt, r(0), 2, 1);
        let mut b = StateShipReplica::new(dt, r(1), 2, 1);
        let (_, _, copies) = a.exec_op(&TopSumPrepare { id: 1, amount: 3 }).unwrap();
        b.on_receive(&copies[0].1);
        b.on_receive(&a.sync().unwrap());
        let (_, _, copies) = a.exec_op(&TopSumPrepare { id: 1, amount: 2 }).unwrap();
        b.on_receive(&copies[0].1);
        b.replica_failed(r(0));
        assert_eq!(b.query(), vec![(1, 5)]);
        let msg = b.sync().unwrap();
        assert_eq!(msg.metered_size(), 16 + 20);
    }
}
