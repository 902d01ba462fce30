//! Exhaustive feature-subset search and its greedy extension. Every subset
//! is scored by its best number of components; the ranking is a total
//! order, so the parallel reduction gives the same winner in any
//! completion order.

use std::cmp::Ordering;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{loocv_curve, CvConfig, CvMetrics};
use super::dataset::Dataset;
use crate::bifurcation::AngleCode;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub angles: Vec<AngleCode>,
    /// Positions in the pool, increasing.
    pub positions: Vec<usize>,
    pub k: usize,
    pub metrics: CvMetrics,
}

/// Higher accuracy, then higher specificity, then fewer components.
fn rank_k(a: &CvMetrics, b: &CvMetrics) -> Ordering {
    a.correct()
        .cmp(&b.correct())
        .then(a.tn.cmp(&b.tn))
        .then(b.k.cmp(&a.k))
}

/// `Greater` means `a` wins; the lexicographically smaller subset wins the
/// last tie.
pub fn rank(a: &SubsetResult, b: &SubsetResult) -> Ordering {
    rank_k(&a.metrics, &b.metrics).then_with(|| b.positions.cmp(&a.positions))
}

fn pick(a: SubsetResult, b: SubsetResult) -> SubsetResult {
    if rank(&a, &b) == Ordering::Less {
        b
    } else {
        a
    }
}

/// Best k for the pool positions `positions`.
pub fn evaluate_subset(
    ds: &Dataset,
    pool: &[AngleCode],
    pool_cols: &[usize],
    positions: &[usize],
    cfg: &CvConfig,
) -> Result<SubsetResult> {
    let cols: Vec<usize> = positions.iter().map(|&p| pool_cols[p]).collect();
    let curve = loocv_curve(ds, &cols, cols.len(), cfg)?;
    let metrics = curve
        .into_iter()
        .max_by(rank_k)
        .expect("non-empty subset");
    Ok(SubsetResult {
        angles: positions.iter().map(|&p| pool[p].clone()).collect(),
        positions: positions.to_vec(),
        k: metrics.k,
        metrics,
    })
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k) as usize);
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        let Some(i) = (0..k).rev().find(|&i| c[i] != i + n - k) else {
            return out;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeBest {
    pub size: usize,
    pub subsets_evaluated: u64,
    /// LOOCV runs: one per subset and component count.
    pub models_evaluated: u64,
    pub best: SubsetResult,
}

fn check_pool(ds: &Dataset, pool: &[AngleCode]) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::Config("empty angle pool".into()));
    }
    for (i, a) in pool.iter().enumerate() {
        if pool[..i].contains(a) {
            return Err(Error::Config(format!("angle {a} repeated in pool")));
        }
    }
    ds.columns(pool)
}

/// For each size `1..=max_size`, every subset of the pool is evaluated over
/// all component counts and the best one kept.
pub fn subset_search(ds: &Dataset, pool: &[AngleCode], max_size: usize, cfg: &CvConfig) -> Result<Vec<SizeBest>> {
    let pool_cols = check_pool(ds, pool)?;
    if max_size == 0 || max_size > pool.len() {
        return Err(Error::Config(format!("max size must be in 1..={}", pool.len())));
    }
    let mut out = Vec::with_capacity(max_size);
    for size in 1..=max_size {
        let subsets = combinations(pool.len(), size);
        let eval = |c: &Vec<usize>| evaluate_subset(ds, pool, &pool_cols, c, cfg);
        #[cfg(feature = "parallel")]
        let best = subsets.par_iter().map(eval).try_reduce_with(|a, b| Ok(pick(a, b)));
        #[cfg(not(feature = "parallel"))]
        let best = subsets.iter().map(eval).try_fold(None, |acc: Option<SubsetResult>, r| {
            r.map(|b| Some(match acc {
                None => b,
                Some(a) => pick(a, b),
            }))
        }).transpose();
        let best = best.expect("at least one subset")?;
        let n = subsets.len() as u64;
        out.push(SizeBest {
            size,
            subsets_evaluated: n,
            models_evaluated: n * size as u64,
            best,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub size: usize,
    /// Candidate supersets tried at this step (1 for the seed itself).
    pub candidates: usize,
    pub best: SubsetResult,
}

/// Grows the seed one angle at a time: each step tries every remaining pool
/// angle added to the current best and keeps the winner, until the whole
/// pool is used.
pub fn greedy_extend(ds: &Dataset, seed: &[AngleCode], pool: &[AngleCode], cfg: &CvConfig) -> Result<Vec<GreedyStep>> {
    greedy_extend_to(ds, seed, pool, pool.len(), cfg)
}

/// [`greedy_extend`] stopped once the subset reaches `max_size`.
pub fn greedy_extend_to(
    ds: &Dataset,
    seed: &[AngleCode],
    pool: &[AngleCode],
    max_size: usize,
    cfg: &CvConfig,
) -> Result<Vec<GreedyStep>> {
    let pool_cols = check_pool(ds, pool)?;
    if seed.is_empty() {
        return Err(Error::Config("empty greedy seed".into()));
    }
    let mut current: Vec<usize> = seed
        .iter()
        .map(|a| {
            pool.iter()
                .position(|p| p == a)
                .ok_or_else(|| Error::Config(format!("seed angle {a} is not in the pool")))
        })
        .collect::<Result<_>>()?;
    current.sort_unstable();
    current.dedup();
    let first = evaluate_subset(ds, pool, &pool_cols, &current, cfg)?;
    let mut steps = vec![GreedyStep {
        size: current.len(),
        candidates: 1,
        best: first,
    }];
    while current.len() < max_size.min(pool.len()) {
        let candidates: Vec<Vec<usize>> = (0..pool.len())
            .filter(|p| !current.contains(p))
            .map(|p| {
                let mut c = current.clone();
                c.push(p);
                c.sort_unstable();
                c
            })
            .collect();
        let eval = |c: &Vec<usize>| evaluate_subset(ds, pool, &pool_cols, c, cfg);
        #[cfg(feature = "parallel")]
        let results: Vec<Result<SubsetResult>> = candidates.par_iter().map(eval).collect();
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<SubsetResult>> = candidates.iter().map(eval).collect();
        let mut best: Option<SubsetResult> = None;
        for r in results {
            let r = r?;
            best = Some(match best {
                None => r,
                Some(b) => pick(b, r),
            });
        }
        let best = best.expect("a remaining angle");
        current = best.positions.clone();
        steps.push(GreedyStep {
            size: current.len(),
            candidates: candidates.len(),
            best,
        });
    }
    Ok(steps)
}
