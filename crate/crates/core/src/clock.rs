//! Vector clocks and add timestamps.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::ReplicaId;
use crate::size;

/// `(siteId, val)` stamped on every generated add; `val >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub site: ReplicaId,
    pub val: u64,
}

impl Timestamp {
    pub fn new(site: ReplicaId, val: u64) -> Self {
        debug_assert!(val >= 1);
        Timestamp { site, val }
    }
}

/// Map from replica to counter. Absent entries read as zero and zero entries
/// are never stored, so structural equality is clock equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VectorClock {
    entries: BTreeMap<ReplicaId, u64>,
}

impl VectorClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (ReplicaId, u64)>) -> Self {
        let mut vc = VectorClock::new();
        for (r, v) in entries {
            vc.raise(r, v);
        }
        vc
    }

    pub fn get(&self, replica: ReplicaId) -> u64 {
        self.entries.get(&replica).copied().unwrap_or(0)
    }

    /// `self[replica] = max(self[replica], val)`.
    pub fn raise(&mut self, replica: ReplicaId, val: u64) {
        if val == 0 {
            return;
        }
        let e = self.entries.entry(replica).or_insert(0);
        if *e < val {
            *e = val;
        }
    }

    /// Increments the entry of `replica` and returns the new value.
    pub fn tick(&mut self, replica: ReplicaId) -> u64 {
        let e = self.entries.entry(replica).or_insert(0);
        *e += 1;
        *e
    }

    pub fn merge(&mut self, other: &VectorClock) {
        for (&r, &v) in &other.entries {
            self.raise(r, v);
        }
    }

    pub fn pointwise_max(a: &VectorClock, b: &VectorClock) -> VectorClock {
        let mut out = a.clone();
        out.merge(b);
        out
    }

    /// True when the add stamped `ts` happened before the event summarised by this clock.
    pub fn covers(&self, ts: Timestamp) -> bool {
        ts.val <= self.get(ts.site)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.entries.iter().map(|(&r, &v)| (r, v))
    }

    pub fn metered_size(&self) -> usize {
        size::VC_LEN + size::VC_ENTRY * self.entries.len()
    }
}

impl PartialOrd for VectorClock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let mut less = false;
        let mut greater = false;
        for r in self.entries.keys().chain(other.entries.keys()) {
            match self.get(*r).cmp(&other.get(*r)) {
                Ordering::Less => less = true,
                Ordering::Greater => greater = true,
                Ordering::Equal => {}
            }
            if less && greater {
                return None;
            }
        }
        Some(match (less, greater) {
            (false, false) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => unreachable!(),
        })
    }
}

impl size::Metered for VectorClock {
    fn metered_size(&self) -> usize {
        VectorClock::metered_size(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(i: u32) -> ReplicaId {
        ReplicaId(i)
    }

    #[test]
    fn absent_entries_read_as_zero() {
        let vc = VectorClock::from_entries([(r(1), 3)]);
        assert_eq!(vc.get(r(0)), 0);
        assert_eq!(vc.get(r(1)), 3);
        assert_eq!(VectorClock::from_entries([(r(2), 0)]), VectorClock::new());
    }

    #[test]
    fn strict_order_and_concurrency() {
        let a = VectorClock::from_entries([(r(1), 1)]);
        let b = VectorClock::from_entries([(r(1), 2)]);
        let c = VectorClock::from_entries([(r(2), 1)]);
        assert!(a < b);
        assert!(!(b < a));
        assert_eq!(a.partial_cmp(&c), None);
        assert!(!(a < a.clone()));
        assert!(a <= a.clone());
    }

    #[test]
    fn covers_uses_site_entry() {
        let vc = VectorClock::from_entries([(r(1), 3)]);
        assert!(vc.covers(Timestamp::new(r(1), 2)));
        assert!(vc.covers(Timestamp::new(r(1), 3)));
        assert!(!vc.covers(Timestamp::new(r(1), 4)));
        assert!(!vc.covers(Timestamp::new(r(2), 1)));
    }

    fn arb_vc() -> impl Strategy<Value = VectorClock> {
        prop::collection::btree_map(0u32..4, 0u64..5, 0..4)
            .prop_map(|m| VectorClock::from_entries(m.into_iter().map(|(k, v)| (ReplicaId(k), v))))
    }

    proptest! {
        #[test]
        fn pointwise_max_is_an_upper_bound(a in arb_vc(), b in arb_vc()) {
            let m = VectorClock::pointwise_max(&a, &b);
            prop_assert!(a <= m);
            prop_assert!(b <= m);
            prop_assert_eq!(m.clone(), VectorClock::pointwise_max(&b, &a));
        }

        #[test]
        fn order_matches_componentwise_definition(a in arb_vc(), b in arb_vc()) {
            let le = (0..4).all(|i| a.get(ReplicaId(i)) <= b.get(ReplicaId(i)));
            prop_assert_eq!(a < b, le && a != b);
        }
    }
}
