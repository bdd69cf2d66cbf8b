//! Histogram: every operation is core, and a sync always ships a single merge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contract::{NoMeta, NuDataType, OpView};
use crate::engine::Envelope;
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Histogram;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistogramPrepare {
    /// Increment one bin by 1.
    Add(u64),
    Merge(BTreeMap<u64, u64>),
}

/// `merge(delta)`: pointwise sum into the histogram.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistogramOp {
    pub delta: BTreeMap<u64, u64>,
}

impl HistogramOp {
    pub fn single(bin: u64) -> Self {
        HistogramOp { delta: BTreeMap::from([(bin, 1)]) }
    }
}

impl Metered for HistogramOp {
    fn metered_size(&self) -> usize {
        self.delta.len() * (size::ID + size::VALUE)
    }
}

pub type HistogramState = BTreeMap<u64, u64>;

fn pointwise_sum(into: &mut BTreeMap<u64, u64>, delta: &BTreeMap<u64, u64>) {
    for (&bin, &n) in delta {
        *into.entry(bin).or_insert(0) += n;
    }
}

impl NuDataType for Histogram {
    type State = HistogramState;
    type Prepare = HistogramPrepare;
    type Effect = HistogramOp;
    type Output = BTreeMap<u64, u64>;
    type Meta = NoMeta;

    fn name(&self) -> &'static str {
        "histogram"
    }

    fn initial_state(&self) -> HistogramState {
        BTreeMap::new()
    }

    fn query(&self, state: &HistogramState) -> BTreeMap<u64, u64> {
        state.clone()
    }

    fn prepare(&self, _: &mut HistogramState, _: ReplicaId, op: &HistogramPrepare) -> Result<HistogramOp, UsageError> {
        match op {
            HistogramPrepare::Add(bin) => Ok(HistogramOp::single(*bin)),
            HistogramPrepare::Merge(delta) => {
                let delta: BTreeMap<u64, u64> = delta.iter().filter(|(_, &n)| n > 0).map(|(&b, &n)| (b, n)).collect();
                if delta.is_empty() {
                    return Err(UsageError::EmptyDelta);
                }
                Ok(HistogramOp { delta })
            }
        }
    }

    fn apply(&self, state: &mut HistogramState, op: &HistogramOp) {
        pointwise_sum(state, &op.delta);
    }

    fn masked_forever(&self, _: &OpView<'_, HistogramOp>, _: &HistogramState, _: &OpView<'_, HistogramOp>) -> Vec<OpId> {
        Vec::new()
    }

    fn has_observable_impact(
        &self,
        local: &OpView<'_, HistogramOp>,
        _: &HistogramState,
        _: &OpView<'_, HistogramOp>,
    ) -> Vec<OpId> {
        local.iter().map(|e| e.key()).collect()
    }

    fn compact(&self, ops: Vec<Envelope<HistogramOp>>) -> Vec<Envelope<HistogramOp>> {
        if ops.len() <= 1 {
            return ops;
        }
        let mut delta = BTreeMap::new();
        let mut ids = Vec::new();
        for env in ops {
            pointwise_sum(&mut delta, &env.payload.delta);
            ids.extend(env.ids);
        }
        vec![Envelope::merged(ids, HistogramOp { delta })]
    }

    fn state_size(&self, state: &HistogramState) -> usize {
        state.len() * (size::ID + size::VALUE)
    }

    fn oracle(&self, effects: &[HistogramOp]) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for op in effects {
            for (&bin, &n) in &op.delta {
                *out.entry(bin).or_insert(0) += n;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn merge(pairs: &[(u64, u64)]) -> HistogramOp {
        HistogramOp { delta: pairs.iter().copied().collect() }
    }

    fn env(seq: u64, op: HistogramOp) -> Envelope<HistogramOp> {
        Envelope::single(OpId::new(ReplicaId(0), seq), op)
    }

    #[test]
    fn merge_sums_pointwise() {
        let dt = Histogram;
        let mut s = dt.initial_state();
        assert!(dt.query(&s).is_empty());
        dt.apply(&mut s, &merge(&[(5, 1)]));
        dt.apply(&mut s, &merge(&[(5, 1)]));
        assert_eq!(dt.query(&s), BTreeMap::from([(5, 2)]));
    }

    #[test]
    fn compact_yields_one_merge() {
        let dt = Histogram;
        let out = dt.compact(vec![env(1, merge(&[(1, 1)])), env(2, merge(&[(1, 2), (3, 1)]))]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].payload, merge(&[(1, 3), (3, 1)]));
        assert_eq!(out[0].ids.len(), 2);
    }

    #[test]
    fn every_op_is_core() {
        let dt = Histogram;
        let a = env(1, merge(&[(1, 1)]));
        let b = env(2, merge(&[(2, 1)]));
        let s = dt.initial_state();
        assert_eq!(dt.has_observable_impact(&[&a, &b], &s, &[]), vec![a.key(), b.key()]);
        assert!(dt.masked_forever(&[&a, &b], &s, &[]).is_empty());
        assert!(dt.may_have_observable_impact(&[&a, &b], &s, &[]).is_empty());
    }

    #[test]
    fn prepare_add_generates_unit_merge() {
        let dt = Histogram;
        let mut s = dt.initial_state();
        assert_eq!(dt.prepare(&mut s, ReplicaId(0), &HistogramPrepare::Add(4)).unwrap(), merge(&[(4, 1)]));
        assert_eq!(
            dt.prepare(&mut s, ReplicaId(0), &HistogramPrepare::Merge(BTreeMap::new())),
            Err(UsageError::EmptyDelta)
        );
    }

    #[test]
    fn one_bin_merge_message_size() {
        // header 16 + tag 1 + op id 12 + bin and count 8 + 8
        let msg: crate::engine::SyncMessage<HistogramOp, NoMeta> = crate::engine::SyncMessage {
            sender: ReplicaId(0),
            envelopes: vec![env(1, merge(&[(1, 1)]))],
            meta: None,
            broadcast: true,
        };
        assert_eq!(msg.metered_size(), 45);
    }
}
