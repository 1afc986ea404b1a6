//! Quantile bin assignment from sort positions.
//!
//! An asset at ascending position `i` of `n` (ties share their midrank) sits
//! at the point `(2·midrank + 1)·B / (2n)` of the `[0, B)` bin axis and falls
//! in the bin containing that point. A point exactly on a breakpoint goes to
//! the neighbouring bin closer to the middle, which makes the assignment
//! mirror-symmetric: reversing the order maps bin `k` to bin `B - 1 - k`,
//! except for a single value on the central breakpoint.
//!
//! Under [`TiePolicy::OverlappingBins`] a group of `c ≥ 2` tied values
//! covers the interval `[i, i + c)·B / n` instead and joins every bin that
//! interval overlaps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    OverlappingBins,
    Strict,
}

fn strict_bin(first: usize, last: usize, n: usize, bins: usize) -> usize {
    let num = (first + last + 1) * bins;
    let den = 2 * n;
    let k = num / den;
    if num % den == 0 && 2 * k > bins {
        k - 1
    } else {
        k.min(bins - 1)
    }
}

/// Bins (0-based, ascending) of each value. Every value must be finite.
pub fn assign_bins(values: &[f64], bins: usize, policy: TiePolicy) -> Vec<Vec<usize>> {
    assert!(bins >= 1);
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![Vec::new(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let members: Vec<usize> = if policy == TiePolicy::OverlappingBins && j > i {
            let lo = i * bins / n;
            let hi = ((j + 1) * bins).div_ceil(n) - 1;
            (lo..=hi.min(bins - 1)).collect()
        } else {
            vec![strict_bin(i, j, n, bins)]
        };
        for &asset in &order[i..=j] {
            out[asset] = members.clone();
        }
        i = j + 1;
    }
    out
}
