use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StudyError;

/// Largest number of group assignments enumerated for an exact p-value.
pub const EXACT_ENUMERATION_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    /// U statistic of the first group: pairs where it ranks higher, ties
    /// counting one half.
    pub u: f64,
    /// Normal-approximation z with tie and continuity correction.
    pub z: f64,
    pub p_two_sided: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: RankMethod,
}

fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            ranks[*k] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k) as u64;
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n as u64 - i) {
            Some(v) => v / (i + 1),
            None => return u64::MAX,
        };
    }
    acc
}

/// Two-sided Mann-Whitney U test.
///
/// Uses the exact permutation distribution of U (over midranks, so ties
/// are handled) when there are at most [`EXACT_ENUMERATION_LIMIT`] group
/// assignments, and the normal approximation otherwise.
pub fn rank_significance_test(first: &[f64], second: &[f64]) -> Result<RankTest, StudyError> {
    if first.is_empty() || second.is_empty() {
        return Err(StudyError::EmptyGroup);
    }
    if let Some(bad) = first.iter().chain(second).find(|v| !v.is_finite()) {
        return Err(StudyError::InvalidRank(*bad));
    }
    let (n1, n2) = (first.len(), second.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = first.iter().chain(second).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - offset;
    let mean = (n1 * n2) as f64 / 2.0;

    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        ties += t * t * t - t;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)).max(1.0));
    let dev = u - mean;
    let z = if var > 0.0 {
        dev.signum() * (dev.abs() - 0.5).max(0.0) / var.sqrt()
    } else {
        0.0
    };

    if binomial(n, n1) <= EXACT_ENUMERATION_LIMIT {
        // Midranks are multiples of one half, so doubled sums are integers.
        let twice: Vec<i64> = ranks.iter().map(|r| (r * 2.0) as i64).collect();
        let twice_offset = (n1 * (n1 + 1)) as i64;
        let twice_mean = (n1 * n2) as i64;
        let observed = ((u * 2.0) as i64 - twice_mean).abs();
        let mut comb: Vec<usize> = (0..n1).collect();
        let (mut extreme, mut total) = (0u64, 0u64);
        loop {
            let su: i64 = comb.iter().map(|&i| twice[i]).sum::<i64>() - twice_offset;
            total += 1;
            if (su - twice_mean).abs() >= observed {
                extreme += 1;
            }
            // Next combination in lexicographic order.
            let Some(pos) = (0..n1).rev().find(|&i| comb[i] < n - n1 + i) else {
                break;
            };
            comb[pos] += 1;
            for k in pos + 1..n1 {
                comb[k] = comb[k - 1] + 1;
            }
        }
        return Ok(RankTest {
            u,
            z,
            p_two_sided: extreme as f64 / total as f64,
            n1,
            n2,
            method: RankMethod::Exact,
        });
    }

    let p = if var > 0.0 {
        erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RankTest {
        u,
        z,
        p_two_sided: p,
        n1,
        n2,
        method: RankMethod::Normal,
    })
}
