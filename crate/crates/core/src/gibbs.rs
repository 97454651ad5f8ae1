//! Gibbs sampling of fixed-size feature subsets from the pseudo-target
//! `p(v) ∝ exp(−η·C(v))`, and per-feature inclusion probabilities.
//!
//! Each sweep visits positions `1..m` in order and redraws position `j`
//! from its full conditional: every index not used at another position is
//! a candidate (the current one included), weighted by `exp(−η·C)` of the
//! subset it would produce.

use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::linalg::{subset_cost, CostSpec};
use crate::rng::{random_subset, seeded_rng};
use crate::search::binomial;

pub const DEFAULT_ETA: f64 = 100.0;
pub const DEFAULT_ENUMERATION_BUDGET: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub m: usize,
    pub eta: f64,
    pub cost: CostSpec,
    /// Number of sweeps (chain length).
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl GibbsConfig {
    /// Defaults: η = 100, L1 cost, burn-in of 20% of the sweeps.
    pub fn new(m: usize, sweeps: usize, seed: u64) -> Self {
        Self {
            m,
            eta: DEFAULT_ETA,
            cost: CostSpec::default(),
            sweeps,
            burn_in: sweeps / 5,
            seed,
        }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.m == 0 || self.m > n_features {
            return Err(Error::InvalidConfig(format!(
                "Gibbs subset size must lie in [1, {n_features}], got {}",
                self.m
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than the number of sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsChain {
    /// State after each sweep (the initial state is not included).
    pub states: Vec<FeatureSubset>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionProfile {
    /// `probabilities[k]`: fraction of subsets (retained states, or target
    /// mass) that contain feature `k`.
    pub probabilities: Vec<f64>,
    /// `1/R`.
    pub uniform_reference: f64,
}

impl InclusionProfile {
    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Feature with the largest probability (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = k;
            }
        }
        best
    }
}

/// Normalized weights from costs: `softmax(−η·c)` with the minimum cost
/// shifted to zero. `None` costs get weight 0.
pub fn tempered_weights(costs: &[Option<f64>], eta: f64) -> Option<Vec<f64>> {
    let min = costs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let raw: Vec<f64> = costs
        .iter()
        .map(|c| c.map_or(0.0, |c| (-eta * (c - min)).exp()))
        .collect();
    let total: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|w| w / total).collect())
}

/// Full conditional of one position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalWeights {
    /// Candidate indices in ascending order.
    pub candidates: Vec<usize>,
    pub costs: Vec<Option<f64>>,
    pub weights: Vec<f64>,
}

impl ConditionalWeights {
    pub fn weight_of(&self, k: usize) -> Option<f64> {
        self.candidates.iter().position(|&c| c == k).map(|i| self.weights[i])
    }

    /// Inverse-CDF draw from a uniform variate in `[0, 1)`.
    pub fn draw(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = None;
        for (&k, &w) in self.candidates.iter().zip(&self.weights) {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = Some(k);
            if u < acc {
                return k;
            }
        }
        last.expect("at least one positive weight")
    }
}

fn cost_or_none(dataset: &Dataset, subset: &FeatureSubset, cost: CostSpec) -> Result<Option<f64>> {
    match subset_cost(dataset, subset, cost) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degenerate_fit() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-sweep memo of candidate costs keyed by ascending index tuple.
type SweepCache = HashMap<FeatureSubset, Option<f64>>;

fn conditional_with_cache(
    dataset: &Dataset,
    state: &FeatureSubset,
    j: usize,
    eta: f64,
    cost: CostSpec,
    cache: &mut SweepCache,
) -> Result<ConditionalWeights> {
    let candidates: Vec<usize> = (0..dataset.n_features())
        .filter(|&k| k == state.indices()[j] || !state.contains(k))
        .collect();
    let keys: Vec<FeatureSubset> = candidates.iter().map(|&k| state.with_position(j, k).sorted()).collect();
    let missing: Vec<&FeatureSubset> = keys.iter().filter(|k| !cache.contains_key(*k)).unique().collect();
    let fresh: Vec<Option<f64>> = missing
        .par_iter()
        .map(|s| cost_or_none(dataset, s, cost))
        .collect::<Result<_>>()?;
    for (s, v) in missing.into_iter().zip(fresh) {
        cache.insert(s.clone(), v);
    }
    let costs: Vec<Option<f64>> = keys.iter().map(|k| cache[k]).collect();
    let weights = tempered_weights(&costs, eta).ok_or_else(|| Error::DegenerateStep {
        method: "Gibbs full conditional".into(),
        step: j + 1,
    })?;
    Ok(ConditionalWeights {
        candidates,
        costs,
        weights,
    })
}

/// Full conditional of position `j` (0-based) given the rest of `state`.
pub fn full_conditional_weights(
    dataset: &Dataset,
    state: &FeatureSubset,
    j: usize,
    eta: f64,
    cost: CostSpec,
) -> Result<ConditionalWeights> {
    state.validate(dataset.n_features())?;
    if j >= state.len() {
        return Err(Error::InvalidConfig(format!(
            "position {} outside a subset of size {}",
            j + 1,
            state.len()
        )));
    }
    conditional_with_cache(dataset, state, j, eta, cost, &mut SweepCache::new())
}

/// Runs a systematic-scan Gibbs chain.
pub fn gibbs_run(dataset: &Dataset, config: &GibbsConfig) -> Result<GibbsChain> {
    config.validate(dataset.n_features())?;
    let mut rng = seeded_rng(config.seed);
    let mut state = FeatureSubset::new(random_subset(&mut rng, dataset.n_features(), config.m));
    let mut states = Vec::with_capacity(config.sweeps);
    let mut costs = Vec::with_capacity(config.sweeps);
    let mut cache = SweepCache::new();
    for _ in 0..config.sweeps {
        cache.clear();
        let mut current = None;
        for j in 0..config.m {
            let cond = conditional_with_cache(dataset, &state, j, config.eta, config.cost, &mut cache)?;
            let u: f64 = rng.random();
            let k = cond.draw(u);
            current = cond.candidates.iter().position(|&c| c == k).and_then(|i| cond.costs[i]);
            state = state.with_position(j, k);
        }
        debug_assert!(state.validate(dataset.n_features()).is_ok());
        states.push(state.clone());
        costs.push(current.expect("drawn candidates have finite cost"));
    }
    Ok(GibbsChain { states, costs })
}

/// Empirical inclusion probabilities over the states after `burn_in`.
pub fn inclusion_frequencies(chain: &GibbsChain, n_features: usize, burn_in: usize) -> Result<InclusionProfile> {
    if burn_in >= chain.states.len() {
        return Err(Error::InvalidConfig(format!(
            "burn-in ({burn_in}) must be smaller than the chain length ({})",
            chain.states.len()
        )));
    }
    let retained = &chain.states[burn_in..];
    let mut counts = vec![0usize; n_features];
    for s in retained {
        for &k in s.indices() {
            counts[k] += 1;
        }
    }
    let n = retained.len() as f64;
    Ok(InclusionProfile {
        probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
        uniform_reference: 1.0 / n_features as f64,
    })
}

/// Empirical frequency of each (ascending) subset after `burn_in`.
pub fn subset_frequencies(chain: &GibbsChain, burn_in: usize) -> HashMap<FeatureSubset, f64> {
    let retained = &chain.states[burn_in..];
    let mut freq = HashMap::new();
    for s in retained {
        *freq.entry(s.sorted()).or_insert(0.0) += 1.0;
    }
    let n = retained.len() as f64;
    freq.values_mut().for_each(|v| *v /= n);
    freq
}

/// The target distribution normalized over every size-`m` subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTarget {
    /// Ascending subsets in lexicographic order with their probabilities.
    pub subsets: Vec<(FeatureSubset, f64)>,
    pub profile: InclusionProfile,
}

impl ExactTarget {
    /// Total-variation distance to an empirical subset distribution.
    pub fn total_variation(&self, empirical: &HashMap<FeatureSubset, f64>) -> f64 {
        let mut tv = 0.0;
        let mut seen = 0.0;
        for (s, p) in &self.subsets {
            let q = empirical.get(s).copied().unwrap_or(0.0);
            seen += q;
            tv += (p - q).abs();
        }
        // Empirical mass outside the support (degenerate subsets).
        tv += (1.0 - seen).max(0.0);
        0.5 * tv
    }
}

/// Enumerates every size-`m` subset and normalizes `exp(−η·C)`.
pub fn exact_target_enumeration(
    dataset: &Dataset,
    m: usize,
    eta: f64,
    cost: CostSpec,
    budget: u128,
) -> Result<ExactTarget> {
    let r = dataset.n_features();
    if m == 0 || m > r {
        return Err(Error::InvalidConfig(format!(
            "subset size must lie in [1, {r}], got {m}"
        )));
    }
    let count = binomial(r, m);
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "exact target enumeration",
            count,
            budget,
        });
    }
    let subsets: Vec<FeatureSubset> = (0..r).combinations(m).map(FeatureSubset::new).collect();
    let costs: Vec<Option<f64>> = subsets
        .par_iter()
        .map(|s| cost_or_none(dataset, s, cost))
        .collect::<Result<_>>()?;
    let probs = tempered_weights(&costs, eta).ok_or_else(|| Error::DegenerateStep {
        method: "exact target enumeration".into(),
        step: 1,
    })?;
    let mut inclusion = vec![0.0; r];
    for (s, &p) in subsets.iter().zip(&probs) {
        for &k in s.indices() {
            inclusion[k] += p;
        }
    }
    Ok(ExactTarget {
        subsets: subsets.into_iter().zip(probs).collect(),
        profile: InclusionProfile {
            probabilities: inclusion,
            uniform_reference: 1.0 / r as f64,
        },
    })
}
