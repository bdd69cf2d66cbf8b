use std::collections::BTreeMap;

use super::config::{EngineKind, SimConfig};
use super::metrics::{MetricsReport, SampleRow};
use super::replica::SimReplica;
use super::simulation::Simulation;
use super::workload::{generate_workload, SimDataType};
use crate::baselines::{FullOpReplica, StateShipReplica};
use crate::datatypes::{DataTypeKind, Histogram, TopK, TopKRmv, TopSum};
use crate::engine::ReplicaEngine;
use crate::error::ConfigError;
use crate::ids::ReplicaId;

/// Knobs that do not belong in an experiment file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Emit a [`SampleRow`] every this many sync rounds.
    pub sample_every: Option<u64>,
    /// Deliver every message twice.
    pub duplicate_delivery: bool,
}

/// Runs one simulation.
pub fn run_simulation(cfg: &SimConfig) -> Result<MetricsReport, ConfigError> {
    run_simulation_with(cfg, RunOptions::default()).map(|(r, _)| r)
}

pub fn run_simulation_with(cfg: &SimConfig, opts: RunOptions) -> Result<(MetricsReport, Vec<SampleRow>), ConfigError> {
    cfg.validate()?;
    Ok(match cfg.data_type {
        DataTypeKind::TopKRmv => run_typed::<TopKRmv>(cfg, opts),
        DataTypeKind::TopSum => run_typed::<TopSum>(cfg, opts),
        DataTypeKind::TopK => run_typed::<TopK>(cfg, opts),
        DataTypeKind::Histogram => run_typed::<Histogram>(cfg, opts),
    })
}

fn run_typed<T: SimDataType>(cfg: &SimConfig, opts: RunOptions) -> (MetricsReport, Vec<SampleRow>) {
    let dt = T::from_config(cfg);
    let n = cfg.n_replicas;
    let ids = (0..n).map(|i| ReplicaId(i as u32));
    match cfg.engine {
        EngineKind::Nuec => {
            let rs = ids.map(|r| ReplicaEngine::new(dt.clone(), r, n, cfg.f)).collect();
            drive(cfg, opts, dt, rs)
        }
        EngineKind::Fullop => {
            let rs = ids.map(|r| FullOpReplica::new(dt.clone(), r, n, cfg.f)).collect();
            drive(cfg, opts, dt, rs)
        }
        EngineKind::Stateship => {
            let rs = ids.map(|r| StateShipReplica::new(dt.clone(), r, n, cfg.f)).collect();
            drive(cfg, opts, dt, rs)
        }
    }
}

/// Event `i` (0-based) happens at tick `i + 1`: due deliveries, then any crash
/// scheduled at `i`, then the operation, then the source's periodic sync.
fn drive<R: SimReplica>(cfg: &SimConfig, opts: RunOptions, dt: R::Dt, replicas: Vec<R>) -> (MetricsReport, Vec<SampleRow>) {
    let workload = generate_workload(cfg, dt.supports_remove());
    let mut crashes: BTreeMap<u64, Vec<ReplicaId>> = BTreeMap::new();
    for c in &cfg.crashes {
        crashes.entry(c.at_event).or_default().push(c.replica);
    }
    let mut sim = Simulation::new(dt, replicas, cfg.delivery, cfg.seed).with_duplicates(opts.duplicate_delivery);
    let mut local = vec![0u64; cfg.n_replicas];
    let every = cfg.sync_every_events;
    let mut size_sum = 0.0;
    let mut size_samples = 0u64;
    let mut samples = Vec::new();
    let sample_row = |sim: &Simulation<R>, ops: u64, avg: f64| SampleRow {
        engine: cfg.engine,
        data_type: cfg.data_type,
        seed: cfg.seed,
        n_ops: cfg.n_ops,
        remove_ratio: cfg.remove_ratio,
        ops_executed: ops,
        cumulative_payload_bytes: sim.traffic().payload_bytes,
        avg_replica_bytes: avg,
    };

    for (i, (r, op)) in workload.iter().enumerate() {
        let i = i as u64;
        sim.advance();
        for &c in crashes.get(&i).into_iter().flatten() {
            sim.crash(c);
        }
        if sim.is_alive(*r) {
            let prepare = sim.data_type().prepare_for(op);
            sim.exec(*r, &prepare).expect("generated operations satisfy every precondition");
            local[r.index()] += 1;
            if local[r.index()].is_multiple_of(every) {
                sim.sync(*r);
            }
        }
        if (i + 1).is_multiple_of(every) {
            let avg = sim.avg_replica_bytes();
            size_sum += avg;
            size_samples += 1;
            if opts.sample_every.is_some_and(|k| k > 0 && size_samples.is_multiple_of(k)) {
                samples.push(sample_row(&sim, i + 1, avg));
            }
        }
    }
    for (_, rs) in crashes.range(cfg.n_ops..) {
        for &c in rs {
            sim.crash(c);
        }
    }

    let bound = (cfg.n_ops * cfg.n_replicas as u64).max(1);
    let rounds = sim.run_to_quiescence(bound);
    if size_samples == 0 {
        size_sum = sim.avg_replica_bytes();
        size_samples = 1;
    }
    if opts.sample_every.is_some() {
        let avg = sim.avg_replica_bytes();
        samples.push(sample_row(&sim, cfg.n_ops, avg));
    }
    let traffic = sim.traffic();
    let report = MetricsReport {
        engine: cfg.engine,
        data_type: cfg.data_type,
        seed: cfg.seed,
        n_ops: cfg.n_ops,
        remove_ratio: cfg.remove_ratio,
        total_payload_bytes: traffic.payload_bytes,
        message_count: traffic.messages,
        avg_replica_bytes: size_sum / size_samples as f64,
        quiescent: rounds.is_some(),
        oracle_match: sim.matches_oracle(),
        equivalent: sim.observably_equivalent(),
        durability_bytes: traffic.durability_bytes,
        broadcast_count: traffic.broadcasts,
        final_replica_bytes: sim
            .replicas()
            .iter()
            .map(|r| sim.is_alive(r.replica_id()).then(|| r.size_bytes() as u64))
            .collect(),
        cascade_rounds: rounds.unwrap_or(bound),
    };
    (report, samples)
}
