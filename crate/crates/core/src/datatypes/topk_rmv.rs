//! Top-K with removals.
//!
//! `add(id, score)` is stamped with `(replica, ++vc[replica])`; `rmv(id)`
//! carries the source's vector clock and removes every add of `id` that
//! happened before it. Concurrent adds survive (add-wins).
//!
//! A local add is forever masked once a later add from the same site for the
//! same id has a higher score, or once any known remove covers it. A local
//! remove is forever masked by a known remove of the same id with a strictly
//! larger clock. Only adds currently in the top, and removes that delete an add
//! which would otherwise be in the top, are shipped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::rank;
use crate::clock::{Timestamp, VectorClock};
use crate::contract::{NuDataType, OpView};
use crate::error::UsageError;
use crate::ids::{OpId, ReplicaId};
use crate::size::{self, Metered};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopKRmv {
    pub k: usize,
}

impl TopKRmv {
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "K must be positive");
        TopKRmv { k }
    }
}

/// An element tuple `<id, score, ts>`. Ordered by rank: best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entry {
    pub id: u64,
    pub score: u64,
    pub ts: Timestamp,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        rank::cmp_rank((self.id, self.score, &self.ts), (other.id, other.score, &other.ts))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub const ENTRY_SIZE: usize = size::ID + size::VALUE + size::TIMESTAMP;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopKRmvPrepare {
    Add { id: u64, score: u64 },
    Rmv { id: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopKRmvOp {
    Add { id: u64, score: u64, ts: Timestamp },
    Rmv { id: u64, vc: VectorClock },
}

impl TopKRmvOp {
    pub fn id(&self) -> u64 {
        match self {
            TopKRmvOp::Add { id, .. } | TopKRmvOp::Rmv { id, .. } => *id,
        }
    }
}

impl Metered for TopKRmvOp {
    fn metered_size(&self) -> usize {
        match self {
            TopKRmvOp::Add { .. } => ENTRY_SIZE,
            TopKRmvOp::Rmv { vc, .. } => size::ID + vc.metered_size(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TopKRmvState {
    elems: BTreeSet<Entry>,
    by_id: BTreeMap<u64, BTreeSet<Entry>>,
    removes: BTreeMap<u64, VectorClock>,
    vc: VectorClock,
}

impl TopKRmvState {
    pub fn elems(&self) -> impl Iterator<Item = &Entry> + '_ {
        self.elems.iter()
    }

    pub fn removes(&self, id: u64) -> Option<&VectorClock> {
        self.removes.get(&id)
    }

    pub fn removes_map(&self) -> &BTreeMap<u64, VectorClock> {
        &self.removes
    }

    pub fn vc(&self) -> &VectorClock {
        &self.vc
    }

    pub fn vc_mut(&mut self) -> &mut VectorClock {
        &mut self.vc
    }

    pub fn contains(&self, e: &Entry) -> bool {
        self.elems.contains(e)
    }

    /// `topK(elems)`, best first.
    pub fn top(&self, k: usize) -> Vec<Entry> {
        let mut out: Vec<Entry> = Vec::with_capacity(k);
        for e in &self.elems {
            if out.len() == k {
                break;
            }
            if !out.iter().any(|o| o.id == e.id) {
                out.push(*e);
            }
        }
        out
    }

    /// Whether `t` belongs to `topK(elems ∪ {t})`.
    pub fn would_be_top(&self, t: &Entry, k: usize) -> bool {
        if let Some(best) = self.by_id.get(&t.id).and_then(|s| s.first()) {
            if best < t {
                return false;
            }
        }
        let mut above: Vec<u64> = Vec::with_capacity(k);
        for e in self.elems.range(..*t) {
            if e.id != t.id && !above.contains(&e.id) {
                above.push(e.id);
                if above.len() >= k {
                    return false;
                }
            }
        }
        true
    }

    /// Inserts the tuple unless a known remove covers it; raises `vc`.
    pub fn add(&mut self, e: Entry) {
        let covered = self.removes.get(&e.id).is_some_and(|r| r.covers(e.ts));
        if !covered {
            self.elems.insert(e);
            self.by_id.entry(e.id).or_default().insert(e);
        }
        self.vc.raise(e.ts.site, e.ts.val);
    }

    pub fn remove(&mut self, id: u64, vc: &VectorClock) {
        let merged = self.removes.entry(id).or_default();
        merged.merge(vc);
        if let Some(set) = self.by_id.get_mut(&id) {
            let gone: Vec<Entry> = set.iter().filter(|e| vc.covers(e.ts)).copied().collect();
            for e in gone {
                set.remove(&e);
                self.elems.remove(&e);
            }
            if set.is_empty() {
                self.by_id.remove(&id);
            }
        }
    }

    pub fn metered_size(&self) -> usize {
        self.elems.len() * ENTRY_SIZE
            + self.removes.values().map(|vc| size::ID + vc.metered_size()).sum::<usize>()
            + self.vc.metered_size()
    }
}

impl NuDataType for TopKRmv {
    type State = TopKRmvState;
    type Prepare = TopKRmvPrepare;
    type Effect = TopKRmvOp;
    type Output = Vec<(u64, u64)>;
    type Meta = VectorClock;

    fn name(&self) -> &'static str {
        "topk-rmv"
    }

    fn initial_state(&self) -> TopKRmvState {
        TopKRmvState::default()
    }

    fn query(&self, state: &TopKRmvState) -> Vec<(u64, u64)> {
        state.top(self.k).into_iter().map(|e| (e.id, e.score)).collect()
    }

    fn prepare(
        &self,
        state: &mut TopKRmvState,
        replica: ReplicaId,
        op: &TopKRmvPrepare,
    ) -> Result<TopKRmvOp, UsageError> {
        Ok(match *op {
            TopKRmvPrepare::Add { id, score } => {
                let val = state.vc.tick(replica);
                TopKRmvOp::Add { id, score, ts: Timestamp::new(replica, val) }
            }
            TopKRmvPrepare::Rmv { id } => TopKRmvOp::Rmv { id, vc: state.vc.clone() },
        })
    }

    fn apply(&self, state: &mut TopKRmvState, op: &TopKRmvOp) {
        match op {
            &TopKRmvOp::Add { id, score, ts } => state.add(Entry { id, score, ts }),
            TopKRmvOp::Rmv { id, vc } => state.remove(*id, vc),
        }
    }

    fn masked_forever(
        &self,
        local: &OpView<'_, TopKRmvOp>,
        _state: &TopKRmvState,
        recv: &OpView<'_, TopKRmvOp>,
    ) -> Vec<OpId> {
        let mut rmvs: HashMap<u64, Vec<&VectorClock>> = HashMap::new();
        for env in local.iter().chain(recv.iter()) {
            if let TopKRmvOp::Rmv { id, vc } = &env.payload {
                rmvs.entry(*id).or_default().push(vc);
            }
        }
        // Local adds grouped per (id, site), for the same-site domination clause.
        let mut adds: HashMap<(u64, ReplicaId), Vec<(u64, u64, OpId)>> = HashMap::new();
        let mut out = Vec::new();
        for env in local.iter() {
            match &env.payload {
                &TopKRmvOp::Add { id, score, ts } => {
                    let covered = rmvs.get(&id).is_some_and(|vs| vs.iter().any(|vc| vc.covers(ts)));
                    if covered {
                        out.push(env.key());
                    } else {
                        adds.entry((id, ts.site)).or_default().push((ts.val, score, env.key()));
                    }
                }
                TopKRmvOp::Rmv { id, vc } => {
                    if rmvs[id].iter().any(|other| vc < *other) {
                        out.push(env.key());
                    }
                }
            }
        }
        for group in adds.values_mut() {
            group.sort_unstable();
            let mut best_later: Option<u64> = None;
            for &(_, score, key) in group.iter().rev() {
                if best_later.is_some_and(|b| b > score) {
                    out.push(key);
                }
                best_later = Some(best_later.map_or(score, |b| b.max(score)));
            }
        }
        out.sort_unstable();
        out
    }

    fn has_observable_impact(
        &self,
        local: &OpView<'_, TopKRmvOp>,
        state: &TopKRmvState,
        recv: &OpView<'_, TopKRmvOp>,
    ) -> Vec<OpId> {
        let top = state.top(self.k);
        let mut out = Vec::new();
        let mut rmv_ids: BTreeSet<u64> = BTreeSet::new();
        for env in local.iter() {
            match &env.payload {
                &TopKRmvOp::Add { id, score, ts } => {
                    if top.contains(&Entry { id, score, ts }) {
                        out.push(env.key());
                    }
                }
                TopKRmvOp::Rmv { id, .. } => {
                    rmv_ids.insert(*id);
                }
            }
        }
        if rmv_ids.is_empty() {
            return out;
        }
        let mut known: HashMap<u64, Vec<Entry>> = HashMap::new();
        for env in local.iter().chain(recv.iter()) {
            if let &TopKRmvOp::Add { id, score, ts } = &env.payload {
                if rmv_ids.contains(&id) {
                    known.entry(id).or_default().push(Entry { id, score, ts });
                }
            }
        }
        for env in local.iter() {
            if let TopKRmvOp::Rmv { id, vc } = &env.payload {
                let hits = known.get(id).is_some_and(|adds| {
                    adds.iter().any(|a| vc.covers(a.ts) && state.would_be_top(a, self.k))
                });
                if hits {
                    out.push(env.key());
                }
            }
        }
        out
    }

    fn outgoing_meta(&self, state: &TopKRmvState) -> Option<VectorClock> {
        Some(state.vc.clone())
    }

    fn incoming_meta(&self, state: &mut TopKRmvState, meta: &VectorClock) {
        state.vc.merge(meta);
    }

    fn state_size(&self, state: &TopKRmvState) -> usize {
        state.metered_size()
    }

    fn oracle(&self, effects: &[TopKRmvOp]) -> Vec<(u64, u64)> {
        let mut removes: BTreeMap<u64, Vec<&VectorClock>> = BTreeMap::new();
        for op in effects {
            if let TopKRmvOp::Rmv { id, vc } = op {
                removes.entry(*id).or_default().push(vc);
            }
        }
        let survivors = effects.iter().filter_map(|op| match op {
            &TopKRmvOp::Add { id, score, ts } => {
                let removed = removes.get(&id).is_some_and(|vs| vs.iter().any(|vc| ts.val <= vc.get(ts.site)));
                (!removed).then_some((id, score, ts))
            }
            TopKRmvOp::Rmv { .. } => None,
        });
        rank::top_k(survivors, self.k).into_iter().map(|(id, s, _)| (id, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Envelope;

    const A: u64 = 1;
    const B: u64 = 2;
    const C: u64 = 3;

    fn r(i: u32) -> ReplicaId {
        ReplicaId(i)
    }

    fn ts(site: u32, val: u64) -> Timestamp {
        Timestamp::new(r(site), val)
    }

    fn vc(entries: &[(u32, u64)]) -> VectorClock {
        VectorClock::from_entries(entries.iter().map(|&(s, v)| (r(s), v)))
    }

    fn env(seq: u64, op: TopKRmvOp) -> Envelope<TopKRmvOp> {
        Envelope::single(OpId::new(r(1), seq), op)
    }

    fn add(id: u64, score: u64, t: Timestamp) -> TopKRmvOp {
        TopKRmvOp::Add { id, score, ts: t }
    }

    fn rmv(id: u64, v: VectorClock) -> TopKRmvOp {
        TopKRmvOp::Rmv { id, vc: v }
    }

    #[test]
    fn add_guarded_by_known_remove_only_raises_vc() {
        let dt = TopKRmv::new(3);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &rmv(B, vc(&[(1, 3)])));
        let before: Vec<_> = s.elems().copied().collect();
        dt.apply(&mut s, &add(B, 7, ts(1, 2)));
        assert_eq!(s.elems().copied().collect::<Vec<_>>(), before);
        assert_eq!(s.vc().get(r(1)), 2);
    }

    #[test]
    fn add_on_fresh_state() {
        let dt = TopKRmv::new(3);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &add(A, 100, ts(1, 1)));
        assert_eq!(s.elems().copied().collect::<Vec<_>>(), vec![Entry { id: A, score: 100, ts: ts(1, 1) }]);
    }

    #[test]
    fn remove_then_redelivered_add_stays_removed() {
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        let a = add(B, 110, ts(2, 1));
        dt.apply(&mut s, &a);
        dt.apply(&mut s, &rmv(B, vc(&[(2, 1)])));
        dt.apply(&mut s, &a);
        assert!(dt.query(&s).is_empty());
    }

    #[test]
    fn remove_deletes_covered_tuples() {
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &add(B, 110, ts(2, 1)));
        dt.apply(&mut s, &rmv(B, vc(&[(2, 1)])));
        assert_eq!(s.elems().count(), 0);
    }

    #[test]
    fn remove_of_unknown_id_only_updates_removes() {
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &rmv(9, vc(&[(1, 4)])));
        assert_eq!(s.elems().count(), 0);
        assert_eq!(s.removes(9), Some(&vc(&[(1, 4)])));
        assert_eq!(s.vc(), &VectorClock::new());
    }

    #[test]
    fn concurrent_add_survives_remove() {
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &add(B, 5, ts(3, 4)));
        dt.apply(&mut s, &rmv(B, vc(&[(3, 2)])));
        assert_eq!(dt.query(&s), vec![(B, 5)]);
    }

    #[test]
    fn masked_by_later_higher_local_add() {
        let dt = TopKRmv::new(1);
        let s = dt.initial_state();
        let e1 = env(1, add(A, 1, ts(1, 1)));
        let e2 = env(2, add(A, 5, ts(1, 2)));
        let got = dt.masked_forever(&[&e1, &e2], &s, &[]);
        assert_eq!(got, vec![e1.key()]);
    }

    #[test]
    fn higher_score_with_older_timestamp_does_not_mask() {
        let dt = TopKRmv::new(1);
        let s = dt.initial_state();
        let e1 = env(1, add(A, 5, ts(1, 1)));
        let e2 = env(2, add(A, 1, ts(1, 2)));
        assert!(dt.masked_forever(&[&e1, &e2], &s, &[]).is_empty());
    }

    #[test]
    fn local_remove_masked_by_larger_received_remove() {
        let dt = TopKRmv::new(1);
        let s = dt.initial_state();
        let mine = env(1, rmv(A, vc(&[(1, 1)])));
        let theirs = Envelope::single(OpId::new(r(2), 1), rmv(A, vc(&[(1, 2)])));
        assert_eq!(dt.masked_forever(&[&mine], &s, &[&theirs]), vec![mine.key()]);
    }

    #[test]
    fn disjoint_ids_mask_nothing() {
        let dt = TopKRmv::new(1);
        let s = dt.initial_state();
        let e1 = env(1, add(A, 1, ts(1, 1)));
        let e2 = env(2, add(B, 5, ts(1, 2)));
        let e3 = env(3, rmv(C, vc(&[(1, 2)])));
        assert!(dt.masked_forever(&[&e1, &e2, &e3], &s, &[]).is_empty());
    }

    #[test]
    fn two_adds_same_id_k1_keeps_only_the_top() {
        // logLocal = {add(a,1), add(a,5)}: add(a,1) is masked, add(a,5) is the top.
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        let e1 = env(1, add(A, 1, ts(1, 1)));
        let e2 = env(2, add(A, 5, ts(1, 2)));
        dt.apply(&mut s, &e1.payload);
        dt.apply(&mut s, &e2.payload);
        let masked = dt.masked_forever(&[&e1, &e2], &s, &[]);
        assert_eq!(masked, vec![e1.key()]);
        assert_eq!(dt.has_observable_impact(&[&e2], &s, &[]), vec![e2.key()]);
    }

    #[test]
    fn add_below_top_is_not_relevant() {
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        let b = Envelope::single(OpId::new(r(2), 1), add(B, 110, ts(2, 1)));
        let c = env(1, add(C, 105, ts(1, 1)));
        dt.apply(&mut s, &b.payload);
        dt.apply(&mut s, &c.payload);
        assert!(dt.has_observable_impact(&[&c], &s, &[&b]).is_empty());
        let b_local = env(2, add(B, 110, ts(1, 2)));
        let mut s2 = dt.initial_state();
        dt.apply(&mut s2, &c.payload);
        dt.apply(&mut s2, &b_local.payload);
        assert_eq!(dt.has_observable_impact(&[&c, &b_local], &s2, &[]), vec![b_local.key()]);
    }

    #[test]
    fn remove_covering_known_top_add_is_relevant() {
        // Two adds (top b, then c), one local rmv(b) covering b's add.
        let dt = TopKRmv::new(1);
        let mut s = dt.initial_state();
        let b = Envelope::single(OpId::new(r(2), 1), add(B, 110, ts(2, 1)));
        let c = Envelope::single(OpId::new(r(2), 2), add(C, 105, ts(2, 2)));
        dt.apply(&mut s, &b.payload);
        dt.apply(&mut s, &c.payload);
        let rm = env(1, rmv(B, vc(&[(2, 2)])));
        dt.apply(&mut s, &rm.payload);
        assert_eq!(dt.has_observable_impact(&[&rm], &s, &[&b, &c]), vec![rm.key()]);
        // A remove covering only the non-top add is not relevant.
        let mut s = dt.initial_state();
        dt.apply(&mut s, &b.payload);
        dt.apply(&mut s, &c.payload);
        let rm_c = env(1, rmv(C, vc(&[(2, 2)])));
        dt.apply(&mut s, &rm_c.payload);
        assert!(dt.has_observable_impact(&[&rm_c], &s, &[&b, &c]).is_empty());
    }

    #[test]
    fn oracle_matches_top1_walkthrough() {
        let dt = TopKRmv::new(1);
        let log = vec![
            add(A, 100, ts(0, 1)),
            add(B, 110, ts(0, 2)),
            add(C, 105, ts(1, 1)),
            rmv(B, vc(&[(0, 2)])),
        ];
        assert_eq!(dt.oracle(&log), vec![(C, 105)]);
        assert!(dt.oracle(&[]).is_empty());
    }

    #[test]
    fn would_be_top_respects_k_and_id() {
        let dt = TopKRmv::new(2);
        let mut s = dt.initial_state();
        dt.apply(&mut s, &add(A, 10, ts(0, 1)));
        dt.apply(&mut s, &add(B, 9, ts(0, 2)));
        let c = Entry { id: C, score: 8, ts: ts(1, 1) };
        assert!(!s.would_be_top(&c, 2));
        let c_hi = Entry { id: C, score: 9, ts: ts(1, 1) };
        assert!(!s.would_be_top(&c_hi, 2));
        let c_top = Entry { id: C, score: 11, ts: ts(1, 1) };
        assert!(s.would_be_top(&c_top, 2));
        let a_low = Entry { id: A, score: 3, ts: ts(1, 2) };
        assert!(!s.would_be_top(&a_low, 2));
        let _ = dt;
    }
}
