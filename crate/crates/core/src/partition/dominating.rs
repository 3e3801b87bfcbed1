//! Dominating sets over a thresholded distance: greedy and exhaustive.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Items chosen as representatives, and for every item the representative
/// covering it (representatives cover themselves).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cover {
    pub representatives: Vec<usize>,
    pub assigned: Vec<usize>,
}

/// Whether every item is within `eps` of some member of `reps`.
pub fn is_cover<T: Scalar>(n: usize, dist: impl Fn(usize, usize) -> T, eps: T, reps: &[usize]) -> bool {
    (0..n).all(|i| reps.iter().any(|&r| r == i || dist(i, r) <= eps))
}

/// Greedy set cover: repeatedly take the item whose neighborhood covers the
/// most uncovered items, ties to the smallest index.
pub fn greedy_dominating_set<T: Scalar>(n: usize, dist: impl Fn(usize, usize) -> T, eps: T) -> Cover {
    let neighborhoods: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| j == i || dist(i, j) <= eps).collect())
        .collect();
    let mut covered = vec![false; n];
    let mut assigned: Vec<usize> = (0..n).collect();
    let mut representatives = Vec::new();
    let mut remaining = n;
    while remaining > 0 {
        let (best, _) = neighborhoods
            .iter()
            .enumerate()
            .map(|(i, nb)| (i, nb.iter().filter(|&&j| !covered[j]).count()))
            .fold((usize::MAX, 0), |acc, (i, c)| if c > acc.1 { (i, c) } else { acc });
        representatives.push(best);
        for &j in &neighborhoods[best] {
            if !covered[j] {
                covered[j] = true;
                assigned[j] = best;
                remaining -= 1;
            }
        }
        // a representative always stands for itself
        assigned[best] = best;
    }
    Cover {
        representatives,
        assigned,
    }
}

/// Minimum dominating set by enumerating subsets in order of size, then
/// lexicographically. Refuses more than 20 items.
pub fn brute_force_dominating_set<T: Scalar>(
    n: usize,
    dist: impl Fn(usize, usize) -> T,
    eps: T,
) -> Result<Vec<usize>> {
    if n > 20 {
        return Err(Error::TooLarge {
            size: n as u128,
            limit: 20,
        });
    }
    let within: Vec<u32> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j == i || dist(i, j) <= eps)
                .fold(0u32, |m, j| m | (1 << j))
        })
        .collect();
    let full: u32 = (1u32 << n) - 1;
    for size in 0..=n {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let mask = combo.iter().fold(0u32, |m, &i| m | within[i]);
            if mask == full {
                return Ok(combo);
            }
            // next combination in lexicographic order
            let mut k = size;
            while k > 0 && combo[k - 1] == n - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            combo[k - 1] += 1;
            for t in k..size {
                combo[t] = combo[t - 1] + 1;
            }
        }
    }
    unreachable!("the full item set always dominates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(i: usize, j: usize) -> f64 {
        (i as f64 - j as f64).abs()
    }

    #[test]
    fn three_item_path() {
        let c = greedy_dominating_set(3, path, 1.0);
        assert_eq!(c.representatives, vec![1]);
        assert_eq!(c.assigned, vec![1, 1, 1]);
        assert_eq!(brute_force_dominating_set(3, path, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn zero_threshold_gives_equivalence_classes() {
        let class = [0, 1, 0, 2, 1];
        let d = |i: usize, j: usize| if class[i] == class[j] { 0.0 } else { 1.0 };
        let c = greedy_dominating_set(5, d, 0.0);
        let mut reps = c.representatives.clone();
        reps.sort();
        assert_eq!(reps, vec![0, 1, 3]);
        assert_eq!(c.assigned, vec![0, 1, 0, 3, 1]);
    }

    #[test]
    fn far_apart_items_are_all_representatives() {
        let c = greedy_dominating_set(4, |i, j| 10.0 * path(i, j), 1.0);
        assert_eq!(c.representatives, vec![0, 1, 2, 3]);
        assert!(brute_force_dominating_set(0, path, 1.0).unwrap().is_empty());
        assert!(brute_force_dominating_set(21, path, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn greedy_is_a_valid_cover(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12),
            eps in 0.0f64..0.6,
        ) {
            let d = |i: usize, j: usize| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            let c = greedy_dominating_set(pts.len(), d, eps);
            prop_assert!(is_cover(pts.len(), d, eps, &c.representatives));
            for (i, &r) in c.assigned.iter().enumerate() {
                prop_assert!(c.representatives.contains(&r));
                prop_assert!(r == i || d(i, r) <= eps);
            }
            let opt = brute_force_dominating_set(pts.len(), d, eps).unwrap();
            prop_assert!(opt.len() <= c.representatives.len());
        }
    }
}
