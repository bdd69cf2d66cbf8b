use std::collections::{BTreeMap, BTreeSet};

use nuec::clock::Timestamp;
use nuec::datatypes::{DataTypeKind, TopKRmv, TopKRmvOp, TopKRmvPrepare, TopSum, TopSumOp};
use nuec::engine::{Message, ReplicaEngine};
use nuec::sim::{generate_workload, run_simulation, Delivery, EngineKind, SimConfig, Simulation, WorkloadOp};
use nuec::{NuDataType, OpId, ReplicaId};
use proptest::prelude::*;

fn small_config() -> impl Strategy<Value = SimConfig> {
    (
        0..4usize,
        prop::sample::select(EngineKind::ALL.to_vec()),
        2..5usize,
        1..6usize,
        0..400u64,
        1..40u64,
        0.0..0.4f64,
        1..12u64,
        any::<u64>(),
        prop::option::of(1..6u64),
    )
        .prop_map(|(dt, engine, n, k, n_ops, n_ids, rr, sync, seed, delay)| SimConfig {
            data_type: DataTypeKind::ALL[dt],
            engine,
            n_replicas: n,
            f: 1,
            k,
            n_ops,
            n_ids,
            max_score: 50,
            remove_ratio: rr,
            sync_every_events: sync,
            seed,
            delivery: delay.map_or(Delivery::Fixed, |max_delay| Delivery::Random { max_delay }),
            ..SimConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn runs_converge_to_the_oracle(cfg in small_config()) {
        let r = run_simulation(&cfg).unwrap();
        prop_assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn workload_is_deterministic_and_prefix_stable(seed in any::<u64>(), n in 0..300u64, extra in 0..100u64, rr in 0.0..0.5f64) {
        let cfg = SimConfig { seed, n_ops: n, remove_ratio: rr, ..SimConfig::default() };
        let a = generate_workload(&cfg, true);
        prop_assert_eq!(&a, &generate_workload(&cfg, true));
        prop_assert_eq!(a.len() as u64, n);
        let longer = generate_workload(&SimConfig { n_ops: n + extra, ..cfg }, true);
        prop_assert_eq!(&longer[..a.len()], &a[..]);
    }

    #[test]
    fn removes_only_target_added_ids(seed in any::<u64>(), rr in 0.0..1.0f64) {
        let cfg = SimConfig { seed, n_ops: 300, n_ids: 20, remove_ratio: rr, ..SimConfig::default() };
        let mut added = BTreeSet::new();
        for (_, op) in generate_workload(&cfg, true) {
            match op {
                WorkloadOp::Add { id, .. } => { added.insert(id); }
                WorkloadOp::Rmv { id } => prop_assert!(added.contains(&id)),
            }
        }
    }

    #[test]
    fn top_sum_oracle_is_per_id_summation(ops in prop::collection::vec((1..30u64, 1..1000u64), 0..200), k in 1..8usize) {
        let effects: Vec<TopSumOp> = ops.iter().map(|&(id, amount)| TopSumOp { id, amount }).collect();
        let mut sums: BTreeMap<u64, u64> = BTreeMap::new();
        for &(id, amount) in &ops {
            *sums.entry(id).or_default() += amount;
        }
        let mut expect: Vec<(u64, u64)> = sums.into_iter().collect();
        expect.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        expect.truncate(k);
        prop_assert_eq!(TopSum::new(k, 3).oracle(&effects), expect);
    }

    #[test]
    fn topk_output_is_permutation_invariant(
        ops in prop::collection::vec((1..10u64, 1..50u64, 0..3u32), 0..40),
        k in 1..5usize,
        shuffle in any::<u64>(),
    ) {
        let dt = TopKRmv::new(k);
        let effects: Vec<TopKRmvOp> = ops
            .iter()
            .enumerate()
            .map(|(i, &(id, score, site))| TopKRmvOp::Add { id, score, ts: Timestamp::new(ReplicaId(site), i as u64 + 1) })
            .collect();
        let mut permuted = effects.clone();
        let mut x = shuffle | 1;
        for i in (1..permuted.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            permuted.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let out = dt.oracle(&effects);
        prop_assert_eq!(&out, &dt.oracle(&permuted));
        let ids: BTreeSet<u64> = out.iter().map(|e| e.0).collect();
        prop_assert_eq!(ids.len(), out.len());
        prop_assert!(out.len() <= k);
    }
}

/// One scripted step over a set of engines.
#[derive(Debug, Clone)]
enum Act {
    Exec { at: usize, id: u64, score: u64, rmv: bool },
    Sync(usize),
    Deliver(usize),
    Redeliver(usize),
}

fn act() -> impl Strategy<Value = Act> {
    prop_oneof![
        4 => (0..3usize, 1..6u64, 1..40u64, prop::bool::weighted(0.2))
            .prop_map(|(at, id, score, rmv)| Act::Exec { at, id, score, rmv }),
        2 => (0..3usize).prop_map(Act::Sync),
        3 => any::<usize>().prop_map(Act::Deliver),
        1 => any::<usize>().prop_map(Act::Redeliver),
    ]
}

type Msg = Message<TopKRmv>;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Random interleavings with reordering and duplicate delivery: received
    /// logs only grow, keys that leave the local log never return, and every
    /// operation is applied at most once per replica.
    #[test]
    fn logs_are_monotone_and_dedup_holds(script in prop::collection::vec(act(), 0..80)) {
        let dt = TopKRmv::new(2);
        let mut es: Vec<ReplicaEngine<TopKRmv>> = (0..3).map(|i| ReplicaEngine::new(dt, ReplicaId(i), 3, 1)).collect();
        let mut pending: Vec<(usize, Msg)> = Vec::new();
        let mut delivered: Vec<(usize, Msg)> = Vec::new();
        let mut left_local: Vec<BTreeSet<OpId>> = vec![BTreeSet::new(); 3];
        let mut applied: Vec<BTreeSet<OpId>> = vec![BTreeSet::new(); 3];
        let mut added: BTreeSet<u64> = BTreeSet::new();

        for a in script {
            let before: Vec<(BTreeSet<OpId>, BTreeSet<OpId>)> =
                es.iter().map(|e| (e.log_local().keys().collect(), e.log_recv().keys().collect())).collect();
            match a {
                Act::Exec { at, id, score, rmv } => {
                    let op = if rmv && added.contains(&id) {
                        TopKRmvPrepare::Rmv { id }
                    } else {
                        added.insert(id);
                        TopKRmvPrepare::Add { id, score }
                    };
                    let x = es[at].exec_op(&op).unwrap();
                    applied[at].insert(x.id);
                    pending.extend(x.durability.into_iter().map(|(to, m)| (to.index(), m)));
                }
                Act::Sync(at) => {
                    if let Some(m) = es[at].sync() {
                        for to in (0..3).filter(|&t| t != at) {
                            pending.push((to, m.clone()));
                        }
                    }
                }
                Act::Deliver(i) if !pending.is_empty() => {
                    let (to, m) = pending.remove(i % pending.len());
                    let before_count = es[to].applied_count();
                    let fresh: BTreeSet<OpId> = if m.broadcast {
                        m.envelopes.iter().flat_map(|e| e.ids.iter().copied()).filter(|id| !applied[to].contains(id)).collect()
                    } else {
                        BTreeSet::new()
                    };
                    let fwd = es[to].on_receive(&m);
                    prop_assert_eq!(es[to].applied_count() - before_count, fresh.len() as u64);
                    applied[to].extend(fresh);
                    pending.extend(fwd.into_iter().map(|(t, m)| (t.index(), m)));
                    delivered.push((to, m));
                }
                Act::Redeliver(i) if !delivered.is_empty() => {
                    let (to, m) = delivered[i % delivered.len()].clone();
                    let q = es[to].query();
                    let count = es[to].applied_count();
                    es[to].on_receive(&m);
                    prop_assert_eq!(es[to].applied_count(), count);
                    prop_assert_eq!(es[to].query(), q);
                }
                _ => {}
            }
            for (i, e) in es.iter().enumerate() {
                let local: BTreeSet<OpId> = e.log_local().keys().collect();
                let recv: BTreeSet<OpId> = e.log_recv().keys().collect();
                prop_assert!(recv.is_superset(&before[i].1));
                prop_assert!(local.is_disjoint(&left_local[i]));
                left_local[i].extend(before[i].0.difference(&local).copied());
                prop_assert_eq!(e.applied_count(), applied[i].len() as u64);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Duplicated delivery of every message changes nothing observable. Fixed
    /// delays keep the first copies on the same schedule in both runs.
    #[test]
    fn duplicate_delivery_is_invisible(seed in any::<u64>(), n_ops in 0..200u64) {
        let dt = TopKRmv::new(3);
        let cfg = SimConfig { seed, n_ops, n_replicas: 3, n_ids: 30, remove_ratio: 0.2, ..SimConfig::default() };
        let ops = generate_workload(&cfg, true);
        let run = |dup: bool| {
            let es = (0..3).map(|i| ReplicaEngine::new(dt, ReplicaId(i), 3, 1)).collect();
            let mut sim = Simulation::new(dt, es, Delivery::Fixed, seed).with_duplicates(dup);
            for (i, (r, op)) in ops.iter().enumerate() {
                let p = match *op {
                    WorkloadOp::Add { id, value } => TopKRmvPrepare::Add { id, score: value },
                    WorkloadOp::Rmv { id } => TopKRmvPrepare::Rmv { id },
                };
                sim.exec(*r, &p).unwrap();
                if i % 7 == 6 {
                    sim.sync(*r);
                }
                sim.advance();
            }
            assert!(sim.run_to_quiescence(1000).is_some());
            let dedup = sim.replicas().iter().all(|e| e.applied_count() == e.seen().len() as u64);
            (sim.outputs(), sim.matches_oracle(), dedup)
        };
        let (once, ok1, dedup1) = run(false);
        let (twice, ok2, dedup2) = run(true);
        prop_assert!(ok1 && ok2 && dedup1 && dedup2);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn payload_grows_with_operations(
        seed in any::<u64>(),
        n in 0..1500u64,
        extra in 0..1500u64,
        dt in 0..4usize,
        engine in prop::sample::select(EngineKind::ALL.to_vec()),
    ) {
        let cfg = SimConfig {
            data_type: DataTypeKind::ALL[dt],
            engine,
            n_ops: n,
            seed,
            n_ids: 100,
            ..SimConfig::default()
        };
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&SimConfig { n_ops: n + extra, ..cfg }).unwrap();
        prop_assert!(a.total_payload_bytes <= b.total_payload_bytes);
    }
}

#[test]
fn remove_share_is_within_three_sigma() {
    let cfg = SimConfig { n_ops: 500_000, remove_ratio: 0.05, seed: 11, ..SimConfig::default() };
    let rmvs = generate_workload(&cfg, true).iter().filter(|(_, op)| op.is_rmv()).count() as f64;
    let (n, p) = (500_000f64, 0.05);
    let sigma = (n * p * (1.0 - p)).sqrt();
    assert!((rmvs - n * p).abs() <= 3.0 * sigma, "{rmvs} removes");
}

#[test]
fn no_removes_without_remove_ratio() {
    let cfg = SimConfig { n_ops: 5000, remove_ratio: 0.0, ..SimConfig::default() };
    assert!(generate_workload(&cfg, true).iter().all(|(_, op)| !op.is_rmv()));
}
