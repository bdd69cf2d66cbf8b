//! The verification suite behind `nuec verify`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Crash, Delivery, SimConfig};
use super::explore::{self, BrokenMaskTopKRmv, CheckResult, EnumDomain, HookBounds};
use super::runner::{run_simulation_with, RunOptions};
use super::workload::generate_workload;
use crate::contract::NuDataType;
use crate::datatypes::{DataTypeKind, Histogram, TopK, TopKRmv, TopKRmvPrepare, TopSum};
use crate::ids::ReplicaId;

/// A deliberately broken hook, to check that the suite notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Top-K with removals forgets local adds outside the current top.
    MaskedForever,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Operation-count bound for the enumerations; also scales the simulations.
    pub budget: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { budget: 5, seed: 1, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    /// Full operation log and delivery order of a failure.
    pub counterexample: Option<String>,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        writeln!(f, "[{tag}] {}: {}", self.name, self.summary)?;
        if let Some(ce) = &self.counterexample {
            write!(f, "{ce}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub data_type: DataTypeKind,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

fn outcome(name: impl Into<String>, r: CheckResult) -> CheckOutcome {
    match r {
        Ok(cov) => CheckOutcome {
            name: name.into(),
            passed: true,
            summary: format!("{} instances, {} states", cov.instances, cov.states),
            counterexample: None,
        },
        Err(ce) => CheckOutcome {
            name: name.into(),
            passed: false,
            summary: "violation found".into(),
            counterexample: Some(ce.to_string()),
        },
    }
}

/// Largest script length used for the hook-soundness enumeration.
pub const HOOK_OPS_CAP: usize = 4;

fn enumeration_checks<T: EnumDomain>(make: impl Fn(usize) -> T + Sync + Copy, budget: usize) -> Vec<CheckOutcome> {
    let hook_ops = budget.min(HOOK_OPS_CAP);
    let mut out = vec![outcome(format!("commutativity ({budget} ops, 2 replicas)"), explore::commutativity(&make(2), budget))];
    for replicas in [2, 3] {
        let b = HookBounds { replicas, max_ops: hook_ops, f: 0 };
        out.push(outcome(
            format!("hook soundness (<= {hook_ops} ops, {replicas} replicas)"),
            explore::hook_soundness(make, b),
        ));
    }
    out
}

/// Runs the suite for one data type.
pub fn verify(kind: DataTypeKind, opts: &VerifyOptions) -> VerifyReport {
    let budget = opts.budget.max(1);
    let mut checks = match (kind, opts.fault) {
        (DataTypeKind::TopKRmv, Some(Fault::MaskedForever)) => {
            let mut c = enumeration_checks(|_| BrokenMaskTopKRmv(TopKRmv::new(1)), budget);
            c.push(CheckOutcome {
                name: "simulation checks".into(),
                passed: true,
                summary: "skipped under fault injection".into(),
                counterexample: None,
            });
            return VerifyReport { data_type: kind, checks: c };
        }
        (_, Some(Fault::MaskedForever)) => {
            return VerifyReport {
                data_type: kind,
                checks: vec![CheckOutcome {
                    name: "fault injection".into(),
                    passed: false,
                    summary: "the masked-forever fault exists only for topk-rmv".into(),
                    counterexample: None,
                }],
            }
        }
        (DataTypeKind::TopKRmv, None) => enumeration_checks(|_| TopKRmv::new(1), budget),
        (DataTypeKind::TopSum, None) => enumeration_checks(|n| TopSum::new(1, n), budget),
        (DataTypeKind::TopK, None) => enumeration_checks(|_| TopK::new(1), budget),
        (DataTypeKind::Histogram, None) => enumeration_checks(|_| Histogram, budget),
    };
    if kind == DataTypeKind::TopSum {
        let max = budget.max(4) as u64;
        checks.push(outcome(
            format!("threshold bound (values <= {max}, 2 and 3 replicas)"),
            explore::top_sum_safety(&[2, 3], max),
        ));
    }
    if kind == DataTypeKind::TopKRmv {
        checks.push(semantic_idempotence(opts.seed, budget));
    }
    checks.push(simulation_check(kind, opts.seed, budget, SimCheck::Redelivery));
    checks.push(simulation_check(kind, opts.seed, budget, SimCheck::Crashes));
    VerifyReport { data_type: kind, checks }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimCheck {
    Redelivery,
    Crashes,
}

/// Small, contended configuration: few ids, low K, random delays.
pub fn small_config(kind: DataTypeKind, seed: u64, n_ops: u64) -> SimConfig {
    SimConfig {
        data_type: kind,
        k: 3,
        n_ops,
        n_ids: 12,
        max_score: 40,
        remove_ratio: 0.2,
        sync_every_events: 10,
        seed,
        delivery: Delivery::Random { max_delay: 6 },
        ..SimConfig::default()
    }
}

fn simulation_check(kind: DataTypeKind, seed: u64, budget: usize, which: SimCheck) -> CheckOutcome {
    let runs = 4 * budget as u64;
    let n_ops = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in seed..seed + runs {
        let mut cfg = small_config(kind, s, n_ops);
        let opts = match which {
            SimCheck::Redelivery => RunOptions { duplicate_delivery: true, ..RunOptions::default() },
            SimCheck::Crashes => {
                let a = rng.gen_range(0..cfg.n_replicas as u32);
                let b = (a + rng.gen_range(1..cfg.n_replicas as u32)) % cfg.n_replicas as u32;
                cfg.crashes = vec![
                    Crash { replica: ReplicaId(a), at_event: rng.gen_range(0..n_ops) },
                    Crash { replica: ReplicaId(b), at_event: rng.gen_range(0..n_ops) },
                ];
                RunOptions::default()
            }
        };
        let (report, _) = run_simulation_with(&cfg, opts).expect("verification configs are valid");
        if !report.passed() {
            return CheckOutcome {
                name: name_of(which, runs),
                passed: false,
                summary: format!(
                    "seed {s}: quiescent={} equivalent={} oracleMatch={}",
                    report.quiescent, report.equivalent, report.oracle_match
                ),
                counterexample: Some(format!("config: {cfg:?}\n")),
            };
        }
    }
    CheckOutcome { name: name_of(which, runs), passed: true, summary: format!("{runs} runs"), counterexample: None }
}

fn name_of(which: SimCheck, runs: u64) -> String {
    match which {
        SimCheck::Redelivery => format!("redelivery idempotence ({runs} runs, every message twice)"),
        SimCheck::Crashes => format!("crash durability ({runs} runs, 2 crashes each)"),
    }
}

/// Applying a remove twice, or an add already covered by a remove, changes nothing.
fn semantic_idempotence(seed: u64, budget: usize) -> CheckOutcome {
    let dt = TopKRmv::new(3);
    let cfg = small_config(DataTypeKind::TopKRmv, seed, 100 * budget as u64);
    let mut state = dt.initial_state();
    let mut checked = 0;
    for (r, op) in generate_workload(&cfg, true) {
        let prepare = match op {
            super::workload::WorkloadOp::Add { id, value } => TopKRmvPrepare::Add { id, score: value },
            super::workload::WorkloadOp::Rmv { id } => TopKRmvPrepare::Rmv { id },
        };
        let effect = dt.prepare(&mut state, r, &prepare).expect("valid");
        dt.apply(&mut state, &effect);
        let mut again = state.clone();
        dt.apply(&mut again, &effect);
        checked += 1;
        if again != state {
            return CheckOutcome {
                name: "semantic idempotence".into(),
                passed: false,
                summary: format!("re-applying {effect:?} changed the state"),
                counterexample: None,
            };
        }
    }
    CheckOutcome {
        name: "semantic idempotence".into(),
        passed: true,
        summary: format!("{checked} effects re-applied"),
        counterexample: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_small_budget_passes() {
        let r = verify(DataTypeKind::Histogram, &VerifyOptions { budget: 2, ..VerifyOptions::default() });
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn fault_only_for_topk_rmv() {
        let opts = VerifyOptions { budget: 2, fault: Some(Fault::MaskedForever), ..VerifyOptions::default() };
        assert!(!verify(DataTypeKind::TopSum, &opts).passed());
    }
}
