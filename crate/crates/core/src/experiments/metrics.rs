//! Permutation-matched parameter errors, ARI and geodesic errors.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_transform, GmmParams};
use crate::spd::spd_geodesic_distance;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MseTriple {
    pub weights: f64,
    pub means: f64,
    pub covariances: f64,
}

/// Minimum-cost assignment for a square cost matrix; `out[row] = column`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "square cost matrix required");
    // Potentials formulation, 1-based with a sentinel column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

fn exhaustive(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
    let consider = |p: &Vec<usize>, best: &mut Vec<usize>, best_cost: &mut f64| {
        let v = eval(p);
        if v < *best_cost {
            *best_cost = v;
            best.clone_from(p);
        }
    };
    consider(&perm, &mut best, &mut best_cost);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            consider(&perm, &mut best, &mut best_cost);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// `perm[j]` is the fitted component matched to true component `j`,
/// minimizing the total squared distance between means.
pub fn match_components(truth: &GmmParams, fitted: &GmmParams) -> Result<Vec<usize>> {
    let k = truth.n_components();
    if fitted.n_components() != k {
        return Err(Error::ComponentCountMismatch {
            left: k,
            right: fitted.n_components(),
        });
    }
    if fitted.dim() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            got: fitted.dim(),
        });
    }
    let cost = DMatrix::from_fn(k, k, |i, j| (&truth.means()[i] - &fitted.means()[j]).norm_squared());
    Ok(if k <= 8 { exhaustive(&cost) } else { hungarian(&cost) })
}

fn per_component_errors(truth: &GmmParams, fitted: &GmmParams, perm: &[usize]) -> Vec<(f64, f64, f64)> {
    let d = truth.dim() as f64;
    perm.iter()
        .enumerate()
        .map(|(j, &p)| {
            let w = (truth.weights()[j] - fitted.weights()[p]).powi(2);
            let mu = (&truth.means()[j] - &fitted.means()[p]).norm_squared() / d;
            let cov = (truth.covariances()[j].matrix() - fitted.covariances()[p].matrix()).norm_squared() / (d * d);
            (w, mu, cov)
        })
        .collect()
}

/// Mean squared entry errors after matching, averaged over components.
pub fn matched_mse(truth: &GmmParams, fitted: &GmmParams) -> Result<MseTriple> {
    let perm = match_components(truth, fitted)?;
    let errs = per_component_errors(truth, fitted, &perm);
    let k = errs.len() as f64;
    Ok(MseTriple {
        weights: errs.iter().map(|e| e.0).sum::<f64>() / k,
        means: errs.iter().map(|e| e.1).sum::<f64>() / k,
        covariances: errs.iter().map(|e| e.2).sum::<f64>() / k,
    })
}

/// Same errors weighted by the true mixture weights.
pub fn weighted_mse(truth: &GmmParams, fitted: &GmmParams) -> Result<MseTriple> {
    let perm = match_components(truth, fitted)?;
    let errs = per_component_errors(truth, fitted, &perm);
    let w = truth.weights();
    Ok(MseTriple {
        weights: errs.iter().enumerate().map(|(j, e)| w[j] * e.0).sum(),
        means: errs.iter().enumerate().map(|(j, e)| w[j] * e.1).sum(),
        covariances: errs.iter().enumerate().map(|(j, e)| w[j] * e.2).sum(),
    })
}

/// Sum of affine-invariant distances between matched augmented blocks.
pub fn geodesic_error(truth: &GmmParams, fitted: &GmmParams) -> Result<f64> {
    let perm = match_components(truth, fitted)?;
    let t = forward_transform(truth)?;
    let f = forward_transform(fitted)?;
    perm.iter()
        .enumerate()
        .map(|(j, &p)| spd_geodesic_distance(&t.s_blocks()[j], &f.s_blocks()[p]))
        .sum()
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len() as u64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Evaluation of one fit against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_all: f64,
    pub mse: MseTriple,
    pub wmse: MseTriple,
    pub ari: Option<f64>,
    pub geodesic: f64,
    pub rmise: Option<f64>,
}
