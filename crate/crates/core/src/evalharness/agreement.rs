use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub resamples: usize,
    /// Resamples skipped because they had no variance.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub alpha: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub kappa: f64,
    pub observed_agreement: f64,
}

/// Krippendorff's α with the ordinal difference metric.
///
/// `ratings[r][u]` is rater `r`'s ordinal code for unit `u` (`None` when
/// missing). Codes only need to be ordered; the metric works on ranks.
pub fn krippendorff_alpha_ordinal(ratings: &[Vec<Option<u32>>]) -> Result<f64, EvalError> {
    if ratings.len() < 2 {
        return Err(EvalError::Insufficient("alpha needs at least two raters".into()));
    }
    let units = ratings[0].len();
    if units < 2 || ratings.iter().any(|r| r.len() != units) {
        return Err(EvalError::Insufficient("alpha needs at least two units of equal length per rater".into()));
    }

    // Coincidence matrix over the values that occur.
    let mut coincidence: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for u in 0..units {
        let vals: Vec<u32> = ratings.iter().filter_map(|r| r[u]).collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        let w = 1.0 / (m - 1) as f64;
        for (i, a) in vals.iter().enumerate() {
            for (j, b) in vals.iter().enumerate() {
                if i != j {
                    *coincidence.entry((*a, *b)).or_default() += w;
                }
            }
        }
    }
    let mut marginals: BTreeMap<u32, f64> = BTreeMap::new();
    for ((c, _), o) in &coincidence {
        *marginals.entry(*c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    if n == 0.0 {
        return Err(EvalError::Insufficient("no pairable values".into()));
    }
    if marginals.len() < 2 {
        return Err(EvalError::NoVariance);
    }

    let values: Vec<u32> = marginals.keys().copied().collect();
    let counts: Vec<f64> = marginals.values().copied().collect();
    // Prefix sums make each ordinal distance O(1).
    let mut prefix = vec![0.0; counts.len() + 1];
    for (i, c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c;
    }
    let delta2 = |i: usize, k: usize| {
        let (lo, hi) = (i.min(k), i.max(k));
        let d = prefix[hi + 1] - prefix[lo] - (counts[lo] + counts[hi]) / 2.0;
        d * d
    };
    let index: BTreeMap<u32, usize> = values.iter().enumerate().map(|(i, v)| (*v, i)).collect();

    let observed: f64 = coincidence.iter().map(|((c, k), o)| o * delta2(index[c], index[k])).sum();
    let mut expected = 0.0;
    for i in 0..counts.len() {
        for k in 0..counts.len() {
            expected += counts[i] * counts[k] * delta2(i, k);
        }
    }
    if expected == 0.0 {
        return Err(EvalError::NoVariance);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile 95% interval of α over `b` item resamples. Resample `i`
/// draws from its own ChaCha stream of the master seed, so the result does
/// not depend on thread scheduling.
pub fn bootstrap_ci(ratings: &[Vec<Option<u32>>], b: usize, seed: u64) -> Result<BootstrapCi, EvalError> {
    if b == 0 {
        return Err(EvalError::Insufficient("bootstrap needs at least one resample".into()));
    }
    krippendorff_alpha_ordinal(ratings)?;
    let units = ratings[0].len();
    let alphas: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let picks: Vec<usize> = (0..units).map(|_| rng.random_range(0..units)).collect();
            let sample: Vec<Vec<Option<u32>>> = ratings.iter().map(|r| picks.iter().map(|&u| r[u]).collect()).collect();
            krippendorff_alpha_ordinal(&sample).ok()
        })
        .collect();
    let mut kept: Vec<f64> = alphas.iter().flatten().copied().collect();
    let skipped = b - kept.len();
    if kept.is_empty() {
        return Err(EvalError::NoVariance);
    }
    kept.sort_by(f64::total_cmp);
    Ok(BootstrapCi { low: percentile(&kept, 0.025), high: percentile(&kept, 0.975), resamples: kept.len(), skipped })
}

fn tally<L: Ord + Clone>(a: &[L], b: &[L]) -> Result<(u64, u64, u64), EvalError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvalError::Insufficient("kappa needs two non-empty label vectors of equal length".into()));
    }
    let n = a.len() as u64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u64;
    let mut ma: BTreeMap<&L, u64> = BTreeMap::new();
    let mut mb: BTreeMap<&L, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let chance: u64 = ma.iter().map(|(l, c)| c * mb.get(l).copied().unwrap_or(0)).sum();
    Ok((n, agree, chance))
}

/// Cohen's κ over pooled nominal labels, computed in integers until the
/// final division: `(n·agree − Σ aᶜbᶜ) / (n² − Σ aᶜbᶜ)`.
pub fn cohens_kappa<L: Ord + Clone>(a: &[L], b: &[L]) -> Result<f64, EvalError> {
    let (n, agree, chance) = tally(a, b)?;
    let den = n as i128 * n as i128 - chance as i128;
    if den == 0 {
        return Err(EvalError::DegenerateMarginals);
    }
    Ok((n as i128 * agree as i128 - chance as i128) as f64 / den as f64)
}

pub fn observed_agreement<L: Ord + Clone>(a: &[L], b: &[L]) -> Result<f64, EvalError> {
    let (n, agree, _) = tally(a, b)?;
    Ok(agree as f64 / n as f64)
}
