//! Top-K without removals. Only adds that are in the top are ever shipped;
//! an add for an id already known with a higher score is dropped for good.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rank;
use crate::contract::{NoMeta, NuDataType, OpView};
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopK {
    pub k: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        assert!(k > 0);
        TopK { k }
    }
}

/// `add(id, score)`; used both as prepare-update and effect-update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopKOp {
    pub id: u64,
    pub score: u64,
}

impl Metered for TopKOp {
    fn metered_size(&self) -> usize {
        size::ID + size::VALUE
    }
}

/// At most K `(id, score)` tuples, one per id, best first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TopKState {
    elems: Vec<(u64, u64)>,
}

impl TopKState {
    pub fn elems(&self) -> &[(u64, u64)] {
        &self.elems
    }

    pub fn contains(&self, id: u64, score: u64) -> bool {
        self.elems.contains(&(id, score))
    }

    pub(crate) fn insert(&mut self, k: usize, id: u64, score: u64) {
        let all = self.elems.iter().map(|&(i, s)| (i, s, ())).chain([(id, score, ())]);
        self.elems = rank::top_k(all, k).into_iter().map(|(i, s, _)| (i, s)).collect();
    }
}

impl NuDataType for TopK {
    type State = TopKState;
    type Prepare = TopKOp;
    type Effect = TopKOp;
    type Output = Vec<(u64, u64)>;
    type Meta = NoMeta;

    fn name(&self) -> &'static str {
        "topk"
    }

    fn initial_state(&self) -> TopKState {
        TopKState::default()
    }

    fn query(&self, state: &TopKState) -> Vec<(u64, u64)> {
        state.elems.clone()
    }

    fn prepare(&self, _: &mut TopKState, _: ReplicaId, op: &TopKOp) -> Result<TopKOp, UsageError> {
        Ok(*op)
    }

    fn apply(&self, state: &mut TopKState, op: &TopKOp) {
        state.insert(self.k, op.id, op.score);
    }

    fn masked_forever(&self, local: &OpView<'_, TopKOp>, _: &TopKState, recv: &OpView<'_, TopKOp>) -> Vec<OpId> {
        let mut best: BTreeMap<u64, u64> = BTreeMap::new();
        for e in recv.iter() {
            let b = best.entry(e.payload.id).or_insert(0);
            *b = (*b).max(e.payload.score);
        }
        local
            .iter()
            .filter(|e| best.get(&e.payload.id).is_some_and(|&b| b > e.payload.score))
            .map(|e| e.key())
            .collect()
    }

    fn has_observable_impact(
        &self,
        local: &OpView<'_, TopKOp>,
        state: &TopKState,
        _: &OpView<'_, TopKOp>,
    ) -> Vec<OpId> {
        local
            .iter()
            .filter(|e| state.contains(e.payload.id, e.payload.score))
            .map(|e| e.key())
            .collect()
    }

    fn state_size(&self, state: &TopKState) -> usize {
        state.elems.len() * (size::ID + size::VALUE)
    }

    fn oracle(&self, effects: &[TopKOp]) -> Vec<(u64, u64)> {
        let mut best: BTreeMap<u64, u64> = BTreeMap::new();
        for op in effects {
            let b = best.entry(op.id).or_insert(0);
            *b = (*b).max(op.score);
        }
        let mut v: Vec<(u64, u64)> = best.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(self.k);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Envelope;

    fn env(seq: u64, id: u64, score: u64) -> Envelope<TopKOp> {
        Envelope::single(OpId::new(ReplicaId(0), seq), TopKOp { id, score })
    }

    #[test]
    fn keeps_k_best() {
        let dt = TopK::new(2);
        let mut s = dt.initial_state();
        assert!(dt.query(&s).is_empty());
        for (id, score) in [(1, 1), (2, 2), (3, 3)] {
            dt.apply(&mut s, &TopKOp { id, score });
        }
        assert_eq!(dt.query(&s), vec![(3, 3), (2, 2)]);
    }

    #[test]
    fn one_tuple_per_id() {
        let dt = TopK::new(3);
        let mut s = dt.initial_state();
        for (id, score) in [(1, 4), (1, 9), (2, 5), (1, 2)] {
            dt.apply(&mut s, &TopKOp { id, score });
        }
        assert_eq!(dt.query(&s), vec![(1, 9), (2, 5)]);
    }

    #[test]
    fn equal_scores_prefer_smaller_id() {
        let dt = TopK::new(1);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &TopKOp { id: 2, score: 100 });
        dt.apply(&mut s, &TopKOp { id: 1, score: 100 });
        assert_eq!(dt.query(&s), vec![(1, 100)]);
    }

    #[test]
    fn lower_local_add_masked_by_received() {
        let dt = TopK::new(1);
        let local = env(1, 1, 1);
        let recv = env(2, 1, 9);
        assert_eq!(dt.masked_forever(&[&local], &dt.initial_state(), &[&recv]), vec![local.key()]);
        let other = env(3, 2, 9);
        assert!(dt.masked_forever(&[&local], &dt.initial_state(), &[&other]).is_empty());
    }

    #[test]
    fn only_top_members_have_impact() {
        let dt = TopK::new(1);
        let mut s = dt.initial_state();
        let a = env(1, 1, 5);
        let b = env(2, 2, 3);
        dt.apply(&mut s, &a.payload);
        dt.apply(&mut s, &b.payload);
        assert_eq!(dt.has_observable_impact(&[&a, &b], &s, &[]), vec![a.key()]);
        assert!(dt.may_have_observable_impact(&[&a, &b], &s, &[]).is_empty());
    }

    #[test]
    fn oracle_matches_state() {
        let dt = TopK::new(2);
        let ops = [TopKOp { id: 5, score: 1 }, TopKOp { id: 6, score: 7 }, TopKOp { id: 5, score: 8 }];
        let mut s = dt.initial_state();
        for op in &ops {
            dt.apply(&mut s, op);
        }
        assert_eq!(dt.oracle(&ops), dt.query(&s));
        assert_eq!(dt.oracle(&ops), vec![(5, 8), (6, 7)]);
    }
}
