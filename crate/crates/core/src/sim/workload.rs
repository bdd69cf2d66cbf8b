//! Seeded workload generation and the mapping from workload operations to each
//! data type's prepare-updates.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::baselines::StateShipped;
use crate::datatypes::{
    DataTypeKind, Histogram, HistogramPrepare, TopK, TopKOp, TopKRmv, TopKRmvPrepare, TopSum, TopSumPrepare,
};
use crate::ids::ReplicaId;

/// A data-type-neutral generated operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadOp {
    /// Score for the Top-K types, amount for Top Sum, ignored by Histogram.
    Add { id: u64, value: u64 },
    Rmv { id: u64 },
}

impl WorkloadOp {
    pub fn is_rmv(&self) -> bool {
        matches!(self, WorkloadOp::Rmv { .. })
    }
}

/// A data type the simulator can drive.
pub trait SimDataType: StateShipped + 'static {
    const KIND: DataTypeKind;

    fn from_config(cfg: &SimConfig) -> Self;

    fn supports_remove(&self) -> bool {
        false
    }

    fn prepare_for(&self, op: &WorkloadOp) -> Self::Prepare;
}

impl SimDataType for TopKRmv {
    const KIND: DataTypeKind = DataTypeKind::TopKRmv;

    fn from_config(cfg: &SimConfig) -> Self {
        TopKRmv::new(cfg.k)
    }

    fn supports_remove(&self) -> bool {
        true
    }

    fn prepare_for(&self, op: &WorkloadOp) -> TopKRmvPrepare {
        match *op {
            WorkloadOp::Add { id, value } => TopKRmvPrepare::Add { id, score: value },
            WorkloadOp::Rmv { id } => TopKRmvPrepare::Rmv { id },
        }
    }
}

impl SimDataType for TopSum {
    const KIND: DataTypeKind = DataTypeKind::TopSum;

    fn from_config(cfg: &SimConfig) -> Self {
        TopSum::new(cfg.k, cfg.n_replicas)
    }

    fn prepare_for(&self, op: &WorkloadOp) -> TopSumPrepare {
        match *op {
            WorkloadOp::Add { id, value } => TopSumPrepare { id, amount: value as i64 },
            WorkloadOp::Rmv { .. } => unreachable!("Top Sum has no remove"),
        }
    }
}

impl SimDataType for TopK {
    const KIND: DataTypeKind = DataTypeKind::TopK;

    fn from_config(cfg: &SimConfig) -> Self {
        TopK::new(cfg.k)
    }

    fn prepare_for(&self, op: &WorkloadOp) -> TopKOp {
        match *op {
            WorkloadOp::Add { id, value } => TopKOp { id, score: value },
            WorkloadOp::Rmv { .. } => unreachable!("Top-K without removals has no remove"),
        }
    }
}

impl SimDataType for Histogram {
    const KIND: DataTypeKind = DataTypeKind::Histogram;

    fn from_config(_: &SimConfig) -> Self {
        Histogram
    }

    fn prepare_for(&self, op: &WorkloadOp) -> HistogramPrepare {
        match *op {
            WorkloadOp::Add { id, .. } => HistogramPrepare::Add(id),
            WorkloadOp::Rmv { .. } => unreachable!("Histogram has no remove"),
        }
    }
}

/// `nOps` operations, each at a uniformly chosen replica. With probability
/// `removeRatio` (types with removes only) an operation removes a uniformly
/// chosen previously added id; before any add it falls back to an add.
pub fn generate_workload(cfg: &SimConfig, with_removes: bool) -> Vec<(ReplicaId, WorkloadOp)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut added: Vec<u64> = Vec::new();
    let mut added_set: BTreeSet<u64> = BTreeSet::new();
    let mut out = Vec::with_capacity(cfg.n_ops as usize);
    for _ in 0..cfg.n_ops {
        let replica = ReplicaId(rng.gen_range(0..cfg.n_replicas as u32));
        let rmv = with_removes && rng.gen_bool(cfg.remove_ratio);
        let op = if rmv && !added.is_empty() {
            WorkloadOp::Rmv { id: added[rng.gen_range(0..added.len())] }
        } else {
            let id = rng.gen_range(1..=cfg.n_ids);
            let value = rng.gen_range(1..=cfg.max_score);
            if added_set.insert(id) {
                added.push(id);
            }
            WorkloadOp::Add { id, value }
        };
        out.push((replica, op));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_ops: u64, remove_ratio: f64, seed: u64) -> SimConfig {
        SimConfig { n_ops, remove_ratio, seed, ..SimConfig::default() }
    }

    #[test]
    fn no_removes_at_zero_ratio() {
        let w = generate_workload(&cfg(2000, 0.0, 3), true);
        assert_eq!(w.len(), 2000);
        assert!(w.iter().all(|(_, op)| !op.is_rmv()));
    }

    #[test]
    fn same_seed_same_sequence() {
        assert_eq!(generate_workload(&cfg(500, 0.1, 9), true), generate_workload(&cfg(500, 0.1, 9), true));
        assert_ne!(generate_workload(&cfg(500, 0.1, 9), true), generate_workload(&cfg(500, 0.1, 10), true));
    }

    #[test]
    fn first_op_never_a_remove() {
        let w = generate_workload(&cfg(1, 1.0, 1), true);
        assert!(!w[0].1.is_rmv());
        let w = generate_workload(&cfg(50, 1.0, 1), true);
        assert_eq!(w.iter().filter(|(_, op)| !op.is_rmv()).count(), 1);
    }

    #[test]
    fn removes_target_added_ids() {
        let w = generate_workload(&cfg(5000, 0.3, 4), true);
        let mut added = BTreeSet::new();
        for (r, op) in &w {
            assert!(r.index() < 5);
            match *op {
                WorkloadOp::Add { id, value } => {
                    assert!((1..=1000).contains(&id) && (1..=250_000).contains(&value));
                    added.insert(id);
                }
                WorkloadOp::Rmv { id } => assert!(added.contains(&id)),
            }
        }
    }

    #[test]
    fn remove_count_within_three_sigma() {
        let n = 500_000f64;
        let p = 0.05;
        let w = generate_workload(&cfg(n as u64, p, 17), true);
        let rmvs = w.iter().filter(|(_, op)| op.is_rmv()).count() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((rmvs - n * p).abs() <= 3.0 * sigma, "{rmvs} removes");
    }
}
