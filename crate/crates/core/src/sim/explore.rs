//! Exhaustive small-instance checks: effect commutativity, hook soundness of
//! the replication engine under every interleaving, and the Top Sum
//! propagation threshold bound.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Debug};
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use crate::contract::{NuDataType, OpView};
use crate::datatypes::{
    Histogram, HistogramPrepare, TopK, TopKOp, TopKRmv, TopKRmvOp, TopKRmvPrepare, TopKRmvState, TopSum,
    TopSumOp, TopSumPrepare,
};
use crate::engine::{Envelope, Message, ReplicaEngine};
use crate::ids::{OpId, ReplicaId};

/// Small operation domains used by the enumeration checks.
pub trait EnumDomain: NuDataType {
    /// Prepare-updates for the commutativity check.
    fn commutativity_domain(&self) -> Vec<Self::Prepare>;

    /// Prepare-updates over two ids and values `{1, 2}` for hook soundness.
    fn hook_domain(&self) -> Vec<Self::Prepare>;

    /// Whether the generated effect depends on what the source has seen.
    fn knowledge_dependent(&self, _op: &Self::Prepare) -> bool {
        false
    }
}

impl EnumDomain for TopKRmv {
    fn commutativity_domain(&self) -> Vec<TopKRmvPrepare> {
        vec![
            TopKRmvPrepare::Add { id: 1, score: 1 },
            TopKRmvPrepare::Add { id: 1, score: 2 },
            TopKRmvPrepare::Add { id: 2, score: 2 },
            TopKRmvPrepare::Rmv { id: 1 },
        ]
    }

    fn hook_domain(&self) -> Vec<TopKRmvPrepare> {
        let mut d: Vec<_> = [(1, 1), (1, 2), (2, 1), (2, 2)]
            .into_iter()
            .map(|(id, score)| TopKRmvPrepare::Add { id, score })
            .collect();
        d.extend([TopKRmvPrepare::Rmv { id: 1 }, TopKRmvPrepare::Rmv { id: 2 }]);
        d
    }

    fn knowledge_dependent(&self, op: &TopKRmvPrepare) -> bool {
        matches!(op, TopKRmvPrepare::Rmv { .. })
    }
}

impl EnumDomain for TopSum {
    fn commutativity_domain(&self) -> Vec<TopSumPrepare> {
        vec![TopSumPrepare { id: 1, amount: 1 }, TopSumPrepare { id: 1, amount: 2 }, TopSumPrepare { id: 2, amount: 2 }]
    }

    fn hook_domain(&self) -> Vec<TopSumPrepare> {
        [(1, 1), (1, 2), (2, 1), (2, 2)].into_iter().map(|(id, amount)| TopSumPrepare { id, amount }).collect()
    }
}

impl EnumDomain for TopK {
    fn commutativity_domain(&self) -> Vec<TopKOp> {
        self.hook_domain()
    }

    fn hook_domain(&self) -> Vec<TopKOp> {
        [(1, 1), (1, 2), (2, 1), (2, 2)].into_iter().map(|(id, score)| TopKOp { id, score }).collect()
    }
}

impl EnumDomain for Histogram {
    fn commutativity_domain(&self) -> Vec<HistogramPrepare> {
        vec![
            HistogramPrepare::Add(1),
            HistogramPrepare::Add(2),
            HistogramPrepare::Merge(BTreeMap::from([(1, 1), (2, 2)])),
        ]
    }

    fn hook_domain(&self) -> Vec<HistogramPrepare> {
        vec![HistogramPrepare::Add(1), HistogramPrepare::Add(2)]
    }
}

/// A failing instance, printable as a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub check: &'static str,
    /// The operation log: what each replica generated.
    pub ops: Vec<String>,
    /// Application or delivery order that exposes the failure.
    pub trace: Vec<String>,
    pub expected: String,
    pub got: Vec<String>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "counterexample ({})", self.check)?;
        writeln!(f, "  operations:")?;
        for o in &self.ops {
            writeln!(f, "    {o}")?;
        }
        writeln!(f, "  trace:")?;
        for (i, t) in self.trace.iter().enumerate() {
            writeln!(f, "    {:>3}. {t}", i + 1)?;
        }
        writeln!(f, "  expected: {}", self.expected)?;
        for g in &self.got {
            writeln!(f, "  got:      {g}")?;
        }
        Ok(())
    }
}

/// Totals of an exhaustive check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Coverage {
    /// Distinct operation logs (effect sets or scripts) examined.
    pub instances: u64,
    /// States (or state transitions) visited.
    pub states: u64,
}

impl Coverage {
    fn absorb(&mut self, other: &Coverage) {
        self.instances += other.instances;
        self.states += other.states;
    }
}

pub type CheckResult = Result<Coverage, Box<Counterexample>>;

fn hash_of<H: Hash>(x: &H) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

// ---------------------------------------------------------------------------
// Commutativity

/// Generates every effect log of `n_ops` operations on two replicas, where an
/// operation whose effect depends on knowledge may first learn everything the
/// other replica generated so far. For each distinct log, applies every subset
/// in every order and checks that all states reached for a subset are
/// observably equivalent and match the oracle.
pub fn commutativity<T: EnumDomain>(dt: &T, n_ops: usize) -> CheckResult {
    let domain = dt.commutativity_domain();
    let mut choices = Vec::new();
    for r in 0..2u32 {
        for (i, op) in domain.iter().enumerate() {
            choices.push((ReplicaId(r), i, false));
            if dt.knowledge_dependent(op) {
                choices.push((ReplicaId(r), i, true));
            }
        }
    }
    let mut logs: HashSet<Vec<T::Effect>> = HashSet::new();
    let mut stack: Vec<usize> = Vec::new();
    collect_logs(dt, &domain, &choices, n_ops, &mut stack, &mut logs);
    let mut logs: Vec<Vec<T::Effect>> = logs.into_iter().collect();
    logs.sort_by_cached_key(hash_of);
    let results = crate::batch::map(&logs, |log| check_orders(dt, log));
    let mut cov = Coverage::default();
    for r in results {
        cov.absorb(&r?);
    }
    Ok(cov)
}

fn collect_logs<T: EnumDomain>(
    dt: &T,
    domain: &[T::Prepare],
    choices: &[(ReplicaId, usize, bool)],
    n_ops: usize,
    stack: &mut Vec<usize>,
    out: &mut HashSet<Vec<T::Effect>>,
) {
    if stack.len() == n_ops {
        let mut states = [dt.initial_state(), dt.initial_state()];
        // Effects applied at each replica, by generation index.
        let mut applied = [Vec::new(), Vec::new()];
        let mut effects: Vec<(ReplicaId, T::Effect)> = Vec::new();
        for &c in stack.iter() {
            let (r, op, learn) = choices[c];
            let me = r.index();
            if learn {
                for (i, (src, e)) in effects.iter().enumerate() {
                    if src.index() != me && !applied[me].contains(&i) {
                        dt.apply(&mut states[me], e);
                        applied[me].push(i);
                    }
                }
            }
            let e = dt.prepare(&mut states[me], r, &domain[op]).expect("domain operations are valid");
            dt.apply(&mut states[me], &e);
            applied[me].push(effects.len());
            effects.push((r, e));
        }
        let mut log: Vec<T::Effect> = effects.into_iter().map(|(_, e)| e).collect();
        log.sort_by_cached_key(hash_of);
        out.insert(log);
        return;
    }
    for c in 0..choices.len() {
        // The two replicas are interchangeable: the first operation runs at r0.
        if stack.is_empty() && choices[c].0 != ReplicaId(0) {
            continue;
        }
        stack.push(c);
        collect_logs(dt, domain, choices, n_ops, stack, out);
        stack.pop();
    }
}

fn check_orders<T: NuDataType>(dt: &T, log: &[T::Effect]) -> CheckResult {
    let n = log.len();
    // Distinct states reached per subset, each with one witness order.
    let mut level: HashMap<u32, Vec<(T::State, Vec<usize>)>> = HashMap::new();
    level.insert(0, vec![(dt.initial_state(), Vec::new())]);
    let mut cov = Coverage { instances: 1, states: 0 };
    for size in 0..=n {
        let mut masks: Vec<u32> = level.keys().copied().filter(|m| m.count_ones() as usize == size).collect();
        masks.sort_unstable();
        for mask in masks {
            let states = level.remove(&mask).expect("mask present");
            let subset: Vec<T::Effect> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| log[i].clone()).collect();
            let expected = dt.oracle(&subset);
            for (s, order) in &states {
                cov.states += 1;
                if dt.query(s) != expected {
                    return Err(Box::new(Counterexample {
                        check: "commutativity",
                        ops: log.iter().map(|e| format!("{e:?}")).collect(),
                        trace: order.iter().map(|&i| format!("apply {:?}", log[i])).collect(),
                        expected: format!("{expected:?}"),
                        got: states.iter().map(|(s, o)| format!("{:?} after order {o:?}", dt.query(s))).collect(),
                    }));
                }
            }
            for (s, order) in &states {
                for i in 0..n {
                    if mask & (1 << i) != 0 {
                        continue;
                    }
                    let mut next = s.clone();
                    dt.apply(&mut next, &log[i]);
                    let slot = level.entry(mask | (1 << i)).or_default();
                    if !slot.iter().any(|(t, _)| *t == next) {
                        let mut o = order.clone();
                        o.push(i);
                        slot.push((next, o));
                    }
                }
            }
        }
    }
    Ok(cov)
}

// ---------------------------------------------------------------------------
// Hook soundness

/// Parameters of a hook-soundness enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HookBounds {
    pub replicas: usize,
    /// Scripts of every length `0..=max_ops` are checked.
    pub max_ops: usize,
    pub f: usize,
}

/// A global state. Engines are shared between sibling states and copied only
/// when a step touches them; their hashes are cached alongside.
#[derive(Clone)]
struct World<T: NuDataType> {
    engines: Vec<Rc<ReplicaEngine<T>>>,
    engine_hash: Vec<u64>,
    /// Next script position per replica.
    pos: Vec<usize>,
    /// Destination, message and the hash of both.
    in_flight: Vec<(ReplicaId, Rc<Message<T>>, u64)>,
    generated: Vec<T::Effect>,
}

fn engine_hash<T: NuDataType>(e: &ReplicaEngine<T>) -> u64 {
    let mut h = DefaultHasher::new();
    e.fingerprint(&mut h);
    h.finish()
}

impl<T: NuDataType> World<T> {
    fn new(engines: Vec<ReplicaEngine<T>>) -> Self {
        let n = engines.len();
        World {
            engine_hash: engines.iter().map(engine_hash).collect(),
            engines: engines.into_iter().map(Rc::new).collect(),
            pos: vec![0; n],
            in_flight: Vec::new(),
            generated: Vec::new(),
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.engine_hash.hash(&mut h);
        self.pos.hash(&mut h);
        let mut msgs: Vec<u64> = self.in_flight.iter().map(|m| m.2).collect();
        msgs.sort_unstable();
        msgs.hash(&mut h);
        h.finish()
    }

    fn engine_mut(&mut self, r: ReplicaId) -> &mut ReplicaEngine<T> {
        Rc::make_mut(&mut self.engines[r.index()])
    }

    fn rehash(&mut self, r: ReplicaId) {
        self.engine_hash[r.index()] = engine_hash(&self.engines[r.index()]);
    }

    fn send(&mut self, to: ReplicaId, m: Rc<Message<T>>) {
        let h = hash_of(&(to, &*m));
        self.in_flight.push((to, m, h));
    }
}

#[derive(Debug, Clone)]
enum Action {
    Exec(ReplicaId, usize),
    Sync(ReplicaId),
    Deliver(usize),
}

/// Every script of at most `bounds.max_ops` operations from the hook domain,
/// every interleaving of generation, sync and delivery: whenever the system is
/// quiescent, every replica's query equals the oracle over all generated
/// operations. `make(n)` builds the data type for `n` replicas.
pub fn hook_soundness<T: EnumDomain>(make: impl Fn(usize) -> T + Sync, bounds: HookBounds) -> CheckResult {
    let dt = make(bounds.replicas);
    let domain = dt.hook_domain();
    let mut scripts: Vec<Vec<Vec<usize>>> = Vec::new();
    for total in 0..=bounds.max_ops {
        let mut per = vec![Vec::new(); bounds.replicas];
        scripts_of(total, 0, domain.len(), &mut per, &mut scripts);
    }
    let results = crate::batch::map(&scripts, |script| explore_script(&dt, &domain, script, bounds));
    let mut cov = Coverage::default();
    for r in results {
        cov.absorb(&r?);
    }
    Ok(cov)
}

fn scripts_of(left: usize, r: usize, d: usize, per: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
    if r == per.len() - 1 {
        let mut idx = vec![0usize; left];
        loop {
            per[r] = idx.clone();
            out.push(per.clone());
            // Odometer over domain indices.
            let mut k = 0;
            while k < left {
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == left {
                break;
            }
        }
        per[r].clear();
        return;
    }
    for here in 0..=left {
        let mut idx = vec![0usize; here];
        loop {
            per[r] = idx.clone();
            scripts_of(left - here, r + 1, d, per, out);
            let mut k = 0;
            while k < here {
                idx[k] += 1;
                if idx[k] < d {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == here {
                break;
            }
        }
    }
    per[r].clear();
}

fn explore_script<T: EnumDomain>(
    dt: &T,
    domain: &[T::Prepare],
    script: &[Vec<usize>],
    bounds: HookBounds,
) -> CheckResult {
    let n = bounds.replicas;
    let world = World::new((0..n).map(|i| ReplicaEngine::new(dt.clone(), ReplicaId(i as u32), n, bounds.f)).collect());
    let mut ctx = Explorer { dt, domain, script, visited: HashSet::new(), path: Vec::new(), states: 0 };
    ctx.dfs(world)?;
    Ok(Coverage { instances: 1, states: ctx.states })
}

struct Explorer<'a, T: NuDataType> {
    dt: &'a T,
    domain: &'a [T::Prepare],
    script: &'a [Vec<usize>],
    visited: HashSet<u64>,
    path: Vec<Step<T>>,
    states: u64,
}

/// A taken action, rendered only when a counterexample is reported.
enum Step<T: NuDataType> {
    Exec(ReplicaId, usize, OpId),
    Sync(ReplicaId, Option<Rc<Message<T>>>),
    Deliver(ReplicaId, Rc<Message<T>>),
}

impl<T: EnumDomain> Explorer<'_, T> {
    fn dfs(&mut self, w: World<T>) -> Result<(), Box<Counterexample>> {
        if !self.visited.insert(w.fingerprint()) {
            return Ok(());
        }
        self.states += 1;
        let actions = self.actions(&w);
        // No exec, sync or delivery left: quiescent.
        if actions.is_empty() {
            let expected = self.dt.oracle(&w.generated);
            if w.engines.iter().any(|e| e.query() != expected) {
                return Err(Box::new(self.counterexample(&w, expected)));
            }
        }
        for a in actions {
            let (next, step) = self.step(&w, &a);
            self.path.push(step);
            self.dfs(next)?;
            self.path.pop();
        }
        Ok(())
    }

    fn actions(&self, w: &World<T>) -> Vec<Action> {
        let mut out = Vec::new();
        for (r, e) in w.engines.iter().enumerate() {
            let rid = ReplicaId(r as u32);
            if w.pos[r] < self.script[r].len() {
                out.push(Action::Exec(rid, self.script[r][w.pos[r]]));
            }
            // A sync that emits nothing only drops forever-masked operations,
            // which the next emitting sync drops anyway.
            if e.has_pending() {
                out.push(Action::Sync(rid));
            }
        }
        out.extend((0..w.in_flight.len()).map(Action::Deliver));
        out
    }

    fn step(&self, w: &World<T>, a: &Action) -> (World<T>, Step<T>) {
        let mut w = w.clone();
        let step = match *a {
            Action::Exec(r, op) => {
                let ex = w.engine_mut(r).exec_op(&self.domain[op]).expect("domain operations are valid");
                w.rehash(r);
                w.pos[r.index()] += 1;
                w.generated.push(ex.effect.clone());
                for (to, m) in ex.durability {
                    w.send(to, Rc::new(m));
                }
                Step::Exec(r, op, ex.id)
            }
            Action::Sync(r) => {
                let m = w.engine_mut(r).sync().map(Rc::new);
                w.rehash(r);
                if let Some(m) = &m {
                    for to in 0..w.engines.len() {
                        if to != r.index() {
                            w.send(ReplicaId(to as u32), Rc::clone(m));
                        }
                    }
                }
                Step::Sync(r, m)
            }
            Action::Deliver(i) => {
                let (to, m, _) = w.in_flight.remove(i);
                let fwd = w.engine_mut(to).on_receive(&m);
                w.rehash(to);
                for (dest, f) in fwd {
                    w.send(dest, Rc::new(f));
                }
                Step::Deliver(to, m)
            }
        };
        (w, step)
    }

    fn render(&self, step: &Step<T>) -> String {
        match step {
            Step::Exec(r, op, id) => format!("{r} executes {:?} as {id}", self.domain[*op]),
            Step::Sync(r, Some(m)) => format!("{r} syncs, broadcasting {}", describe(m)),
            Step::Sync(r, None) => format!("{r} syncs, nothing to send"),
            Step::Deliver(to, m) => format!("deliver to {to}: {}", describe(m)),
        }
    }

    fn counterexample(&self, w: &World<T>, expected: T::Output) -> Counterexample {
        let ops = self
            .script
            .iter()
            .enumerate()
            .map(|(r, s)| {
                let ops: Vec<String> = s.iter().map(|&i| format!("{:?}", self.domain[i])).collect();
                format!("r{r}: [{}]", ops.join(", "))
            })
            .collect();
        Counterexample {
            check: "hook soundness",
            ops,
            trace: self.path.iter().map(|s| self.render(s)).collect(),
            expected: format!("{expected:?}"),
            got: w.engines.iter().map(|e| format!("{}: {:?}", e.id(), e.query())).collect(),
        }
    }
}

fn describe<E: Debug, M>(m: &crate::engine::SyncMessage<E, M>) -> String {
    let parts: Vec<String> = m
        .envelopes
        .iter()
        .map(|e| {
            let ids: Vec<String> = e.ids.iter().map(|i| i.to_string()).collect();
            format!("{:?} [{}]", e.payload, ids.join(" "))
        })
        .collect();
    let kind = if m.broadcast { "" } else { "copy " };
    format!("{kind}{{{}}} from {}", parts.join(", "), m.sender)
}

// ---------------------------------------------------------------------------
// Top Sum threshold bound

/// Enumerates `n` replicas sharing a propagated top (one id with total `m`)
/// and a second id with propagated total `p < m` plus per-replica unpropagated
/// local amounts. Whenever no replica's hooks would ship the second id, its
/// global total must be strictly below `m`.
pub fn top_sum_safety(replicas: &[usize], max_value: u64) -> CheckResult {
    let mut cov = Coverage::default();
    for &n in replicas {
        let dt = TopSum::new(1, n);
        let mut locals = vec![0u64; n];
        for m in 1..=max_value {
            for p in 0..m {
                loop {
                    cov.instances += 1;
                    if let Some(ce) = top_sum_instance(&dt, m, p, &locals) {
                        return Err(Box::new(ce));
                    }
                    if !odometer(&mut locals, max_value) {
                        break;
                    }
                }
            }
        }
    }
    cov.states = cov.instances;
    Ok(cov)
}

fn odometer(v: &mut [u64], max: u64) -> bool {
    for x in v.iter_mut() {
        if *x < max {
            *x += 1;
            return true;
        }
        *x = 0;
    }
    false
}

fn top_sum_instance(dt: &TopSum, m: u64, p: u64, locals: &[u64]) -> Option<Counterexample> {
    const TOP: u64 = 1;
    const X: u64 = 2;
    let mut shipped = false;
    for (r, &s) in locals.iter().enumerate() {
        let mut state = dt.initial_state();
        dt.apply(&mut state, &TopSumOp { id: TOP, amount: m });
        if p > 0 {
            dt.apply(&mut state, &TopSumOp { id: X, amount: p });
        }
        if s == 0 {
            continue;
        }
        dt.apply(&mut state, &TopSumOp { id: X, amount: s });
        let env = Envelope::single(OpId::new(ReplicaId(r as u32), 1), TopSumOp { id: X, amount: s });
        let local: Vec<&Envelope<TopSumOp>> = vec![&env];
        let view: &OpView<'_, TopSumOp> = &local;
        let ships = !dt.has_observable_impact(view, &state, &[]).is_empty()
            || !dt.may_have_observable_impact(view, &state, &[]).is_empty();
        shipped |= ships;
    }
    let global = p + locals.iter().sum::<u64>();
    if !shipped && global >= m {
        return Some(Counterexample {
            check: "top-sum threshold bound",
            ops: vec![format!("n = {}, top total {m}, propagated {p}, local amounts {locals:?}", locals.len())],
            trace: Vec::new(),
            expected: format!("global total < {m}"),
            got: vec![format!("global total {global} and nothing propagated")],
        });
    }
    None
}

// ---------------------------------------------------------------------------
// Fault injection

/// Top-K with removals whose forever-masking also drops local adds that are
/// merely outside the current top. Used to show that the checks catch a
/// broken hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BrokenMaskTopKRmv(pub TopKRmv);

impl NuDataType for BrokenMaskTopKRmv {
    type State = TopKRmvState;
    type Prepare = TopKRmvPrepare;
    type Effect = TopKRmvOp;
    type Output = Vec<(u64, u64)>;
    type Meta = crate::clock::VectorClock;

    fn name(&self) -> &'static str {
        "topk-rmv (broken maskedForever)"
    }

    fn initial_state(&self) -> TopKRmvState {
        self.0.initial_state()
    }

    fn query(&self, s: &TopKRmvState) -> Vec<(u64, u64)> {
        self.0.query(s)
    }

    fn prepare(
        &self,
        s: &mut TopKRmvState,
        r: ReplicaId,
        op: &TopKRmvPrepare,
    ) -> Result<TopKRmvOp, crate::error::UsageError> {
        self.0.prepare(s, r, op)
    }

    fn apply(&self, s: &mut TopKRmvState, op: &TopKRmvOp) {
        self.0.apply(s, op)
    }

    fn masked_forever(
        &self,
        local: &OpView<'_, TopKRmvOp>,
        s: &TopKRmvState,
        recv: &OpView<'_, TopKRmvOp>,
    ) -> Vec<OpId> {
        let top = s.top(self.0.k);
        let mut out = self.0.masked_forever(local, s, recv);
        for e in local.iter() {
            if let TopKRmvOp::Add { id, score, ts } = e.payload {
                if !top.iter().any(|t| t.id == id && t.score == score && t.ts == ts) {
                    out.push(e.key());
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn has_observable_impact(
        &self,
        local: &OpView<'_, TopKRmvOp>,
        s: &TopKRmvState,
        recv: &OpView<'_, TopKRmvOp>,
    ) -> Vec<OpId> {
        self.0.has_observable_impact(local, s, recv)
    }

    fn outgoing_meta(&self, s: &TopKRmvState) -> Option<crate::clock::VectorClock> {
        self.0.outgoing_meta(s)
    }

    fn incoming_meta(&self, s: &mut TopKRmvState, meta: &crate::clock::VectorClock) {
        self.0.incoming_meta(s, meta)
    }

    fn state_size(&self, s: &TopKRmvState) -> usize {
        self.0.state_size(s)
    }

    fn oracle(&self, effects: &[TopKRmvOp]) -> Vec<(u64, u64)> {
        self.0.oracle(effects)
    }
}

impl EnumDomain for BrokenMaskTopKRmv {
    fn commutativity_domain(&self) -> Vec<TopKRmvPrepare> {
        self.0.commutativity_domain()
    }

    fn hook_domain(&self) -> Vec<TopKRmvPrepare> {
        self.0.hook_domain()
    }

    fn knowledge_dependent(&self, op: &TopKRmvPrepare) -> bool {
        self.0.knowledge_dependent(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_enumeration_counts() {
        let mut out = Vec::new();
        let mut per = vec![Vec::new(); 2];
        scripts_of(2, 0, 3, &mut per, &mut out);
        // (2,0), (1,1), (0,2) splits: 9 + 9 + 9.
        assert_eq!(out.len(), 27);
        let distinct: HashSet<_> = out.iter().cloned().collect();
        assert_eq!(distinct.len(), 27);
        let mut out = Vec::new();
        let mut per = vec![Vec::new(); 3];
        scripts_of(0, 0, 3, &mut per, &mut out);
        assert_eq!(out, vec![vec![Vec::<usize>::new(); 3]]);
    }

    #[test]
    fn histogram_commutes() {
        let cov = commutativity(&Histogram, 3).unwrap();
        assert!(cov.instances > 0);
    }

    #[test]
    fn small_hook_soundness_runs() {
        let b = HookBounds { replicas: 2, max_ops: 2, f: 0 };
        hook_soundness(|n| TopSum::new(1, n), b).unwrap();
        hook_soundness(|_| TopKRmv::new(1), b).unwrap();
    }

    #[test]
    fn threshold_bound_small() {
        top_sum_safety(&[2], 4).unwrap();
    }

    #[test]
    fn broken_mask_is_caught() {
        let b = HookBounds { replicas: 2, max_ops: 3, f: 0 };
        let ce = hook_soundness(|_| BrokenMaskTopKRmv(TopKRmv::new(1)), b).unwrap_err();
        assert_eq!(ce.check, "hook soundness");
        assert!(!ce.trace.is_empty());
        assert!(ce.to_string().contains("expected"));
    }
}
