//! Stratified sampling over discretized confidence scores.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// How the target size is split across strata before capping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Proportional to stratum population.
    #[default]
    Proportional,
    /// Equal share per non-empty stratum; oversamples rare score ranges.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    /// `[lower, upper)`; the last stratum also contains `upper`.
    pub lower: f64,
    pub upper: f64,
    pub population: usize,
    pub sampled: Vec<String>,
}

impl Stratum {
    /// Inverse inclusion probability `N_h / n_h`.
    pub fn weight(&self) -> Option<f64> {
        (!self.sampled.is_empty()).then(|| self.population as f64 / self.sampled.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSample {
    pub strata: Vec<Stratum>,
    pub target: usize,
    pub seed: u64,
}

impl StratifiedSample {
    pub fn size(&self) -> usize {
        self.strata.iter().map(|s| s.sampled.len()).sum()
    }

    /// Sampled id -> `N_h / n_h`.
    pub fn weights(&self) -> HashMap<String, f64> {
        self.strata
            .iter()
            .filter_map(|s| s.weight().map(|w| (s, w)))
            .flat_map(|(s, w)| s.sampled.iter().map(move |id| (id.clone(), w)))
            .collect()
    }

    pub fn sampled_ids(&self) -> impl Iterator<Item = &str> {
        self.strata.iter().flat_map(|s| s.sampled.iter().map(String::as_str))
    }
}

/// Index of the equal-width bin holding `score`.
pub fn bin_of(score: f64, bins: usize) -> usize {
    ((score.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

/// Split `target` across strata with the given populations.
///
/// Quotas follow `allocation`; any stratum whose quota exceeds its
/// population is capped and the excess is redistributed over the remaining
/// strata in the same proportions, repeatedly. Fractional quotas are then
/// rounded by largest remainder (ties to the lower stratum).
pub fn allocate(populations: &[usize], target: usize, allocation: Allocation) -> Vec<usize> {
    let total: usize = populations.iter().sum();
    let goal = target.min(total);
    let weight = |n: usize| match allocation {
        Allocation::Proportional => n as f64,
        Allocation::Equal => f64::from(u8::from(n > 0)),
    };
    let mut capped = vec![false; populations.len()];
    let mut quota = vec![0.0; populations.len()];
    loop {
        let fixed: usize = populations.iter().zip(&capped).filter(|(_, &c)| c).map(|(n, _)| n).sum();
        let free = (goal - fixed) as f64;
        let w_sum: f64 = populations.iter().zip(&capped).filter(|(_, &c)| !c).map(|(&n, _)| weight(n)).sum();
        let mut changed = false;
        for (h, &n) in populations.iter().enumerate() {
            if capped[h] {
                quota[h] = n as f64;
                continue;
            }
            quota[h] = if w_sum > 0.0 { free * weight(n) / w_sum } else { 0.0 };
            if quota[h] > n as f64 + 1e-9 {
                capped[h] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out: Vec<usize> = quota
        .iter()
        .zip(populations)
        .map(|(&q, &n)| (q.floor() as usize).min(n))
        .collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..populations.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quota[a] - quota[a].floor();
        let fb = quota[b] - quota[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = goal - assigned;
    for h in order.into_iter().cycle().take(populations.len() * 2) {
        if remaining == 0 {
            break;
        }
        if out[h] < populations[h] {
            out[h] += 1;
            remaining -= 1;
        }
    }
    out
}

pub fn stratified_sample(
    scores: &[(String, f64)],
    bins: usize,
    target: usize,
    seed: u64,
) -> Result<StratifiedSample, CalibrationError> {
    stratified_sample_with(scores, bins, target, seed, Allocation::Proportional)
}

/// Draw a stratified sample of article ids by binned score. Deterministic
/// for a fixed seed regardless of input order.
pub fn stratified_sample_with(
    scores: &[(String, f64)],
    bins: usize,
    target: usize,
    seed: u64,
    allocation: Allocation,
) -> Result<StratifiedSample, CalibrationError> {
    if bins < 2 {
        return Err(CalibrationError::Bins(bins));
    }
    if target == 0 {
        return Err(CalibrationError::TargetSize);
    }
    if scores.is_empty() {
        return Err(CalibrationError::EmptyPredictions);
    }
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); bins];
    for (id, s) in scores {
        members[bin_of(*s, bins)].push(id);
    }
    for m in &mut members {
        m.sort_unstable();
    }
    let populations: Vec<usize> = members.iter().map(Vec::len).collect();
    let counts = allocate(&populations, target, allocation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata = members
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(h, (m, n))| {
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, m.len(), n).into_vec();
            picked.sort_unstable();
            Stratum {
                lower: h as f64 / bins as f64,
                upper: (h + 1) as f64 / bins as f64,
                population: m.len(),
                sampled: picked.into_iter().map(|i| m[i].to_owned()).collect(),
            }
        })
        .collect();
    Ok(StratifiedSample { strata, target, seed })
}
