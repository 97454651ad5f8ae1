//! Minimum-cost feature subsets of a fixed size.

use std::collections::HashMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSubset};
use crate::error::{Error, Result};
use crate::linalg::{subset_cost, CostSpec};
use crate::rng::{random_subset, stream_rng};

pub const DEFAULT_EXHAUSTIVE_BUDGET: u128 = 2_000_000;
pub const DEFAULT_RESTARTS: usize = 1000;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Ascending feature indices.
    pub subset: FeatureSubset,
    pub cost: f64,
    /// Sweeps performed (alternating optimization) or subsets evaluated
    /// (exhaustive search).
    pub iterations: usize,
    pub converged: bool,
    pub restarts_used: usize,
    /// Cost after every coordinate update, starting with the initial cost.
    #[serde(skip)]
    pub cost_trace: Vec<f64>,
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn cost_or_none(dataset: &Dataset, subset: &FeatureSubset, cost: CostSpec) -> Result<Option<f64>> {
    match subset_cost(dataset, subset, cost) {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degenerate_fit() => Ok(None),
        Err(e) => Err(e),
    }
}

fn check_size(dataset: &Dataset, m: usize) -> Result<()> {
    if m == 0 || m > dataset.n_features() {
        return Err(Error::InvalidConfig(format!(
            "subset size must lie in [1, {}], got {m}",
            dataset.n_features()
        )));
    }
    Ok(())
}

/// Global minimum over all size-`m` subsets. Ties go to the
/// lexicographically smallest subset.
pub fn exhaustive_best_subset(dataset: &Dataset, m: usize, cost: CostSpec, budget: u128) -> Result<SearchResult> {
    check_size(dataset, m)?;
    let count = binomial(dataset.n_features(), m);
    if count > budget {
        return Err(Error::BudgetExceeded {
            what: "exhaustive search",
            count,
            budget,
        });
    }
    let best = (0..dataset.n_features())
        .combinations(m)
        .par_bridge()
        .map(|c| {
            let s = FeatureSubset::new(c);
            cost_or_none(dataset, &s, cost).map(|v| v.map(|v| (v, s)))
        })
        .try_fold(
            || None,
            |acc: Option<(f64, FeatureSubset)>, item| item.map(|it| better_of(acc, it)),
        )
        .try_reduce(|| None, |a, b| Ok(better_of(a, b)))?;
    let (cost_value, subset) = best.ok_or_else(|| Error::DegenerateStep {
        method: "exhaustive search".into(),
        step: 1,
    })?;
    Ok(SearchResult {
        subset,
        cost: cost_value,
        iterations: count as usize,
        converged: true,
        restarts_used: 0,
        cost_trace: Vec::new(),
    })
}

/// Deterministic preference by `(cost, subset)`.
fn better_of(a: Option<(f64, FeatureSubset)>, b: Option<(f64, FeatureSubset)>) -> Option<(f64, FeatureSubset)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if (b.0, &b.1).partial_cmp(&(a.0, &a.1)) == Some(std::cmp::Ordering::Less) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Memoized subset costs keyed by the ascending index tuple.
struct CostCache<'a> {
    dataset: &'a Dataset,
    cost: CostSpec,
    memo: HashMap<FeatureSubset, Option<f64>>,
}

impl<'a> CostCache<'a> {
    fn new(dataset: &'a Dataset, cost: CostSpec) -> Self {
        Self {
            dataset,
            cost,
            memo: HashMap::new(),
        }
    }

    fn get(&mut self, subset: &FeatureSubset) -> Result<Option<f64>> {
        let key = subset.sorted();
        if let Some(v) = self.memo.get(&key) {
            return Ok(*v);
        }
        let v = cost_or_none(self.dataset, &key, self.cost)?;
        self.memo.insert(key, v);
        Ok(v)
    }
}

/// Cyclic coordinate-wise exact minimization over subset positions.
///
/// Position `j` is replaced by the index (among those not used at other
/// positions) giving the lowest cost, but only on strict improvement, so a
/// sweep without improvement is a fixed point. Stops after a sweep with no
/// change or after `max_sweeps` sweeps.
pub fn alternating_optimization(
    dataset: &Dataset,
    init: &FeatureSubset,
    max_sweeps: usize,
    cost: CostSpec,
) -> Result<SearchResult> {
    let m = init.len();
    check_size(dataset, m)?;
    init.validate(dataset.n_features())?;
    let r = dataset.n_features();
    let mut cache = CostCache::new(dataset, cost);
    let mut state = init.clone();
    let mut current = cache.get(&state)?.unwrap_or(f64::INFINITY);
    let mut trace = vec![current];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for j in 0..m {
            let mut best: Option<(usize, f64)> = None;
            for k in 0..r {
                if k == state.indices()[j] || state.contains(k) {
                    continue;
                }
                let Some(c) = cache.get(&state.with_position(j, k))? else {
                    continue;
                };
                if c < current && best.is_none_or(|(_, b)| c < b) {
                    best = Some((k, c));
                }
            }
            if let Some((k, c)) = best {
                state = state.with_position(j, k);
                current = c;
                changed = true;
            }
            trace.push(current);
        }
        if !changed {
            converged = true;
            break;
        }
    }
    if !current.is_finite() {
        // Never left a degenerate initialization.
        return Err(Error::DegenerateStep {
            method: "alternating optimization".into(),
            step: sweeps,
        });
    }
    Ok(SearchResult {
        subset: state.sorted(),
        cost: current,
        iterations: sweeps,
        converged,
        restarts_used: 1,
        cost_trace: trace,
    })
}

/// Random initialization for restart `run` under `seed`.
pub fn restart_init(seed: u64, run: usize, r: usize, m: usize) -> FeatureSubset {
    FeatureSubset::new(random_subset(&mut stream_rng(seed, run as u64), r, m))
}

/// Best of `runs` alternating optimizations from seeded random starts.
///
/// Run `i` starts from [`restart_init`]`(seed, i, R, m)`, so the result is
/// independent of thread scheduling and extending `runs` can only lower the
/// final cost.
pub fn multi_restart_search(
    dataset: &Dataset,
    m: usize,
    runs: usize,
    seed: u64,
    max_sweeps: usize,
    cost: CostSpec,
) -> Result<SearchResult> {
    check_size(dataset, m)?;
    if runs == 0 {
        return Err(Error::InvalidConfig("restart count must be at least 1".into()));
    }
    let r = dataset.n_features();
    let results: Vec<Option<SearchResult>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let init = restart_init(seed, i, r, m);
            match alternating_optimization(dataset, &init, max_sweeps, cost) {
                Ok(res) => Ok(Some(res)),
                Err(Error::DegenerateStep { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut best: Option<SearchResult> = None;
    for res in results.into_iter().flatten() {
        let replace = match &best {
            None => true,
            Some(b) => (res.cost, &res.subset) < (b.cost, &b.subset),
        };
        if replace {
            best = Some(res);
        }
    }
    let mut best = best.ok_or_else(|| Error::DegenerateStep {
        method: "multi-restart search".into(),
        step: 1,
    })?;
    best.restarts_used = runs;
    Ok(best)
}
