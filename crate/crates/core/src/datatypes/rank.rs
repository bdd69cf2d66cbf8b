//! The shared top-K ordering.
//!
//! Higher score ranks first; equal scores rank the smaller id first; anything
//! still tied ranks by the smaller tiebreak (a timestamp for Top-K with
//! removals). `top_k` keeps one tuple per id, the best-ranked one.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeSet;

/// `Less` means `a` ranks above `b`.
pub fn cmp_rank<X: Ord>(a: (u64, u64, &X), b: (u64, u64, &X)) -> Ordering {
    let (a_id, a_score, a_x) = a;
    let (b_id, b_score, b_x) = b;
    Reverse(a_score)
        .cmp(&Reverse(b_score))
        .then(a_id.cmp(&b_id))
        .then(a_x.cmp(b_x))
}

/// The K best `(id, score, tiebreak)` items, one per id, best first.
pub fn top_k<X: Ord + Clone>(items: impl IntoIterator<Item = (u64, u64, X)>, k: usize) -> Vec<(u64, u64, X)> {
    let mut all: Vec<(u64, u64, X)> = items.into_iter().collect();
    all.sort_by(|a, b| cmp_rank((a.0, a.1, &a.2), (b.0, b.1, &b.2)));
    let mut ids = BTreeSet::new();
    let mut out = Vec::new();
    for item in all {
        if out.len() == k {
            break;
        }
        if ids.insert(item.0) {
            out.push(item);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[(u64, u64, ())]) -> Vec<(u64, u64)> {
        v.iter().map(|&(i, s, _)| (i, s)).collect()
    }

    // a=1, b=2, c=3: numeric order matches lexicographic order of the names.
    #[test]
    fn top1_picks_highest_score() {
        let got = top_k([(1, 100, ()), (2, 110, ()), (3, 105, ())], 1);
        assert_eq!(ids(&got), vec![(2, 110)]);
    }

    #[test]
    fn score_ties_go_to_smaller_id() {
        let got = top_k([(2, 100, ()), (1, 100, ())], 1);
        assert_eq!(ids(&got), vec![(1, 100)]);
    }

    #[test]
    fn empty_input() {
        assert!(top_k(Vec::<(u64, u64, ())>::new(), 3).is_empty());
    }

    #[test]
    fn one_tuple_per_id() {
        let got = top_k([(1, 5, ()), (1, 9, ()), (2, 7, ())], 3);
        assert_eq!(ids(&got), vec![(1, 9), (2, 7)]);
    }

    proptest::proptest! {
        #[test]
        fn permutation_invariant_and_duplicate_free(
            mut items in proptest::collection::vec((0u64..6, 0u64..6, 0u8..3), 0..20),
            k in 1usize..5,
            seed in 0u64..1000,
        ) {
            let a = top_k(items.clone(), k);
            // deterministic shuffle
            let n = items.len();
            for i in 0..n {
                let j = (seed as usize * 31 + i * 17) % n;
                items.swap(i, j);
            }
            let b = top_k(items, k);
            proptest::prop_assert_eq!(&a, &b);
            let distinct: BTreeSet<u64> = a.iter().map(|x| x.0).collect();
            proptest::prop_assert_eq!(distinct.len(), a.len());
            proptest::prop_assert!(a.len() <= k);
        }
    }
}
