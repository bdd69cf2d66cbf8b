//! Top Sum: the K ids with the largest accumulated totals.
//!
//! Local adds for an id in the top are always shipped. Adds for other ids are
//! shipped once the local unshipped total `s` for that id could, if every
//! replica held as much, close the gap to the smallest total in the top:
//! `s >= (min(top) - (state[id] - s)) / n`. The comparison is done exactly in
//! integers. When the top holds fewer than K ids its minimum is taken as 0, so
//! every add ships.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::rank;
use crate::contract::{NoMeta, NuDataType, OpView};
use crate::engine::Envelope;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopSum {
    pub k: usize,
    /// Static number of replicas used by the propagation threshold.
    pub n_replicas: usize,
}

impl TopSum {
    pub fn new(k: usize, n_replicas: usize) -> Self {
        assert!(k > 0 && n_replicas > 0);
        TopSum { k, n_replicas }
    }

    fn min_of_top(&self, top: &[(u64, u64)]) -> u64 {
        if top.len() < self.k {
            0
        } else {
            top.last().map_or(0, |&(_, s)| s)
        }
    }

    /// `s >= (min_top - (total - s)) / n`, evaluated without rounding.
    pub fn meets_threshold(&self, s: u64, total: u64, min_top: u64) -> bool {
        let n = self.n_replicas as i128;
        let known_elsewhere = total as i128 - s as i128;
        n * s as i128 >= min_top as i128 - known_elsewhere
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopSumPrepare {
    pub id: u64,
    pub amount: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopSumOp {
    pub id: u64,
    pub amount: u64,
}

impl Metered for TopSumOp {
    fn metered_size(&self) -> usize {
        size::ID + size::VALUE
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TopSumState {
    sums: BTreeMap<u64, u64>,
    ranked: BTreeSet<(Reverse<u64>, u64)>,
}

impl TopSumState {
    pub fn get(&self, id: u64) -> u64 {
        self.sums.get(&id).copied().unwrap_or(0)
    }

    pub fn add(&mut self, id: u64, amount: u64) {
        let cur = self.sums.entry(id).or_insert(0);
        if *cur > 0 {
            self.ranked.remove(&(Reverse(*cur), id));
        }
        *cur += amount;
        self.ranked.insert((Reverse(*cur), id));
    }

    pub fn top(&self, k: usize) -> Vec<(u64, u64)> {
        self.ranked.iter().take(k).map(|&(Reverse(s), id)| (id, s)).collect()
    }

    pub fn sums(&self) -> &BTreeMap<u64, u64> {
        &self.sums
    }

    pub fn len(&self) -> usize {
        self.sums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }
}

impl NuDataType for TopSum {
    type State = TopSumState;
    type Prepare = TopSumPrepare;
    type Effect = TopSumOp;
    type Output = Vec<(u64, u64)>;
    type Meta = NoMeta;

    fn name(&self) -> &'static str {
        "top-sum"
    }

    fn initial_state(&self) -> TopSumState {
        TopSumState::default()
    }

    fn query(&self, state: &TopSumState) -> Vec<(u64, u64)> {
        state.top(self.k)
    }

    fn prepare(&self, _: &mut TopSumState, _: ReplicaId, op: &TopSumPrepare) -> Result<TopSumOp, UsageError> {
        if op.amount <= 0 {
            return Err(UsageError::NonPositiveAmount(op.amount));
        }
        Ok(TopSumOp { id: op.id, amount: op.amount as u64 })
    }

    fn apply(&self, state: &mut TopSumState, op: &TopSumOp) {
        state.add(op.id, op.amount);
    }

    fn masked_forever(&self, _: &OpView<'_, TopSumOp>, _: &TopSumState, _: &OpView<'_, TopSumOp>) -> Vec<OpId> {
        Vec::new()
    }

    fn has_observable_impact(
        &self,
        local: &OpView<'_, TopSumOp>,
        state: &TopSumState,
        _: &OpView<'_, TopSumOp>,
    ) -> Vec<OpId> {
        let top: BTreeSet<u64> = state.top(self.k).into_iter().map(|(id, _)| id).collect();
        local.iter().filter(|e| top.contains(&e.payload.id)).map(|e| e.key()).collect()
    }

    fn may_have_observable_impact(
        &self,
        local: &OpView<'_, TopSumOp>,
        state: &TopSumState,
        _: &OpView<'_, TopSumOp>,
    ) -> Vec<OpId> {
        let top = state.top(self.k);
        let min_top = self.min_of_top(&top);
        let mut local_sum: BTreeMap<u64, u64> = BTreeMap::new();
        for e in local.iter() {
            *local_sum.entry(e.payload.id).or_insert(0) += e.payload.amount;
        }
        let ship: BTreeSet<u64> = local_sum
            .into_iter()
            .filter(|&(id, s)| {
                !top.iter().any(|&(t, _)| t == id) && self.meets_threshold(s, state.get(id), min_top)
            })
            .map(|(id, _)| id)
            .collect();
        local.iter().filter(|e| ship.contains(&e.payload.id)).map(|e| e.key()).collect()
    }

    fn compact(&self, ops: Vec<Envelope<TopSumOp>>) -> Vec<Envelope<TopSumOp>> {
        let mut groups: BTreeMap<u64, (Vec<OpId>, u64)> = BTreeMap::new();
        for env in ops {
            let g = groups.entry(env.payload.id).or_default();
            g.0.extend(env.ids);
            g.1 += env.payload.amount;
        }
        groups
            .into_iter()
            .map(|(id, (ids, amount))| Envelope::merged(ids, TopSumOp { id, amount }))
            .collect()
    }

    fn state_size(&self, state: &TopSumState) -> usize {
        state.len() * (size::ID + size::VALUE)
    }

    fn oracle(&self, effects: &[TopSumOp]) -> Vec<(u64, u64)> {
        let mut totals: BTreeMap<u64, u64> = BTreeMap::new();
        for op in effects {
            *totals.entry(op.id).or_insert(0) += op.amount;
        }
        rank::top_k(totals.into_iter().map(|(id, s)| (id, s, ())), self.k)
            .into_iter()
            .map(|(id, s, _)| (id, s))
            .collect()
    }
}
