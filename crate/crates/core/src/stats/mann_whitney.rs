use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{check_finite, StatsError};

/// Largest combined sample size for which [`MwMethod::Auto`] enumerates the
/// exact permutation distribution.
const EXACT_LIMIT: usize = 40;

/// Beyond this the rank-sum table no longer fits comfortably in memory.
const EXACT_MAX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwMethod {
    /// Exact when the samples together hold at most 40 values, asymptotic otherwise.
    Auto,
    /// Full permutation distribution of the rank sum, midranks included.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwResult {
    /// U of the first sample: its rank sum minus `n_a (n_a + 1) / 2`.
    pub u_statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// The method actually used (never `Auto`).
    pub method: MwMethod,
}

/// Two-sided Mann-Whitney U test with the method picked by sample size.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwResult, StatsError> {
    mann_whitney_u_with(a, b, MwMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: MwMethod) -> Result<MwResult, StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("first"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("second"));
    }
    check_finite(a)?;
    check_finite(b)?;

    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&combined);
    let na = a.len() as f64;
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;

    let method = match method {
        MwMethod::Auto if combined.len() <= EXACT_LIMIT => MwMethod::Exact,
        MwMethod::Auto => MwMethod::Asymptotic,
        m => m,
    };
    if method == MwMethod::Exact && combined.len() > EXACT_MAX {
        return Err(StatsError::ExactTooLarge(combined.len()));
    }
    let p_value = match method {
        MwMethod::Exact => exact_p(&ranks, a.len()),
        _ => asymptotic_p(u, a.len(), b.len(), &combined),
    };
    Ok(MwResult {
        u_statistic: u,
        p_value,
        method,
    })
}

/// 1-based ranks with ties sharing the mean of the positions they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        sizes.push(end - start);
        start = end;
    }
    sizes
}

fn asymptotic_p(u: f64, na: usize, nb: usize, combined: &[f64]) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let tie_term: f64 = tie_sizes(combined)
        .into_iter()
        .map(|t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let variance = if n > 1.0 {
        na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    } else {
        0.0
    };
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5) / variance.sqrt();
    if z <= 0.0 {
        return 1.0;
    }
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Exact two-sided p-value: the share of all `C(n, na)` ways of drawing the
/// first sample's ranks whose U is at least as far from its mean as observed.
///
/// Midranks are doubled so every rank, rank sum and U is an integer and the
/// tail comparison is exact.
fn exact_p(ranks: &[f64], na: usize) -> f64 {
    let n = ranks.len();
    let nb = n - na;
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();

    // ways[k][s]: subsets of size k of the values seen so far with doubled rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        reach += r;
        for k in (1..=na).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let (prev, cur) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=reach.min(max_sum)).rev() {
                cur[s] += prev[s - r];
            }
        }
    }

    let offset = (na * (na + 1)) as i64; // doubled n_a (n_a + 1) / 2
    let centre = (na * nb) as i64; // doubled mean of U
    let observed: usize = doubled[..na].iter().sum();
    let observed_dev = (observed as i64 - offset - centre).abs();

    let total: f64 = ways[na].iter().sum();
    let extreme: f64 = ways[na]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - offset - centre).abs() >= observed_dev)
        .map(|(_, &w)| w)
        .sum();
    (extreme / total).min(1.0)
}
