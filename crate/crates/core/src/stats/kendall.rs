//! Kendall rank correlation in O(n log n): sort by the first score, then count
//! the swaps a merge sort needs to order the second score.

use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};
use crate::reputation::RankingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariant {
    /// `(nc - nd) / (n (n - 1) / 2)`, no tie adjustment.
    A,
    /// Tie-adjusted: `(nc - nd) / sqrt((n0 - n1) (n0 - n2))`.
    #[default]
    B,
}

/// Tau-b between two rankings over the same items.
pub fn kendall_tau(a: &RankingVector, b: &RankingVector) -> Result<f64, StatsError> {
    kendall_tau_with(a, b, TauVariant::B)
}

pub fn kendall_tau_with(
    a: &RankingVector,
    b: &RankingVector,
    variant: TauVariant,
) -> Result<f64, StatsError> {
    if a.items() != b.items() {
        return Err(StatsError::DomainMismatch(symmetric_difference(a, b)));
    }
    kendall_tau_slices(a.scores(), b.scores(), variant)
}

fn symmetric_difference(a: &RankingVector, b: &RankingVector) -> Vec<u32> {
    let (xs, ys) = (a.items(), b.items());
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < xs.len() || j < ys.len() {
        match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(x.0);
                i += 1;
            }
            (Some(_), Some(y)) => {
                out.push(y.0);
                j += 1;
            }
            (Some(x), None) => {
                out.push(x.0);
                i += 1;
            }
            (None, Some(y)) => {
                out.push(y.0);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn tied_pairs(run: u64) -> u64 {
    run * (run - 1) / 2
}

/// Kendall tau of paired scores `x[k]`, `y[k]`.
pub fn kendall_tau_slices(x: &[f64], y: &[f64], variant: TauVariant) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::TooFewItems(n));
    }
    check_finite(x)?;
    check_finite(y)?;

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));

    let total = tied_pairs(n as u64);
    let mut tied_x = 0u64;
    let mut tied_xy = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for k in 1..n {
        if pairs[k].0 == pairs[k - 1].0 {
            run_x += 1;
            if pairs[k].1 == pairs[k - 1].1 {
                run_xy += 1;
            } else {
                tied_xy += tied_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += tied_pairs(run_x);
            tied_xy += tied_pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += tied_pairs(run_x);
    tied_xy += tied_pairs(run_xy);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let swaps = merge_sort_swaps(&mut ys);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for k in 1..n {
        if ys[k] == ys[k - 1] {
            run_y += 1;
        } else {
            tied_y += tied_pairs(run_y);
            run_y = 1;
        }
    }
    tied_y += tied_pairs(run_y);

    // concordant - discordant
    let score =
        total as i128 - tied_x as i128 - tied_y as i128 + tied_xy as i128 - 2 * swaps as i128;
    let score = score as f64;
    match variant {
        TauVariant::A => Ok(score / total as f64),
        TauVariant::B => {
            let denom = ((total - tied_x) as f64) * ((total - tied_y) as f64);
            if denom == 0.0 {
                return Err(StatsError::AllTied);
            }
            Ok(score / denom.sqrt())
        }
    }
}

/// Sorts `values` ascending and returns how many inversions it removed.
/// Equal values are never counted as inverted.
fn merge_sort_swaps(values: &mut [f64]) -> u64 {
    let n = values.len();
    let mut buffer = values.to_vec();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut out) = (start, mid, start);
            while i < mid && j < end {
                if values[i] <= values[j] {
                    buffer[out] = values[i];
                    i += 1;
                } else {
                    buffer[out] = values[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                }
                out += 1;
            }
            buffer[out..out + (mid - i)].copy_from_slice(&values[i..mid]);
            out += mid - i;
            buffer[out..out + (end - j)].copy_from_slice(&values[j..end]);
            start = end;
        }
        values.copy_from_slice(&buffer);
        width *= 2;
    }
    swaps
}
