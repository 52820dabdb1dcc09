//! Trial statistics: rank-sum test and percentile summaries.

use crate::special::erfc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("statistic requires a nonempty sample")]
    EmptySample,
}

/// Linear-interpolation percentile of a sorted slice: h = (n-1)p,
/// value = x[⌊h⌋] + frac(h)·(x[⌊h⌋+1] − x[⌊h⌋]).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// (median, 25th percentile, 75th percentile) under the linear-interpolation
/// convention.
pub fn median_iqr(samples: &[f64]) -> Result<(f64, f64, f64), StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        percentile(&sorted, 0.5),
        percentile(&sorted, 0.25),
        percentile(&sorted, 0.75),
    ))
}

/// Midranks of the pooled sample, in pooled-sorted order.
fn midranks(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0; // average of 1-based ranks i+1..=j
        for r in ranks.iter_mut().take(j).skip(i) {
            *r = rank;
        }
        i = j;
    }
    ranks
}

/// Mann–Whitney U test. Returns (U of the first sample, two-sided p-value).
///
/// U is computed from midrank sums. The p-value is exact (full enumeration
/// of the C(n1+n2, n1) group assignments, counting arrangements at least as
/// extreme in min(U, n1·n2 − U)) when the combined size is at most 16, and
/// a normal approximation with tie-corrected variance and continuity
/// correction otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(StatsError::EmptySample);
    }
    let n = n1 + n2;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let sorted: Vec<f64> = pooled.iter().map(|&(v, _)| v).collect();
    let ranks = midranks(&sorted);

    let r1: f64 = ranks
        .iter()
        .zip(&pooled)
        .filter(|(_, &(_, first))| first)
        .map(|(&r, _)| r)
        .sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let p = if n <= 16 {
        exact_p(&ranks, n1, u1)
    } else {
        normal_p(&sorted, n1, n2, u1)
    };
    Ok((u1, p))
}

/// Exhaustive two-sided p: fraction of group assignments whose
/// min(U, n1·n2 − U) is at most the observed one.
fn exact_p(ranks: &[f64], n1: usize, u1_obs: f64) -> f64 {
    let n = ranks.len();
    let n2 = n - n1;
    let u_max = (n1 * n2) as f64;
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let obs_min = u1_obs.min(u_max - u1_obs);

    let mut count: u64 = 0;
    let mut total: u64 = 0;
    // lexicographic walk over all size-n1 index subsets
    let mut comb: Vec<usize> = (0..n1).collect();
    loop {
        let rank_sum: f64 = comb.iter().map(|&i| ranks[i]).sum();
        let u = rank_sum - offset;
        if u.min(u_max - u) <= obs_min + 1e-9 {
            count += 1;
        }
        total += 1;

        // advance
        let mut i = n1;
        loop {
            if i == 0 {
                return count as f64 / total as f64;
            }
            i -= 1;
            if comb[i] != i + n - n1 {
                break;
            }
        }
        comb[i] += 1;
        for j in i + 1..n1 {
            comb[j] = comb[j - 1] + 1;
        }
    }
}

fn normal_p(sorted: &[f64], n1: usize, n2: usize, u1: f64) -> f64 {
    let n = n1 + n2;
    let mean = (n1 * n2) as f64 / 2.0;
    // tie correction: sum of t³ − t over tie groups
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_sum += t * t * t - t;
        i = j;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_sum / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u1 - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (erfc(z / std::f64::consts::SQRT_2)).min(1.0)
}
