//! CTR metrics, Recall@K and the 2-D SVD projection of item embeddings.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CtrResult {
    pub auc: f64,
    pub f1: f64,
    pub n_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKResult {
    pub k: usize,
    pub recall: f64,
    /// `(user, recall)` for every user with at least one test positive.
    pub per_user: Vec<(usize, f64)>,
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half, from the rank sum of the positives.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    assert_eq!(labels.len(), scores.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&k| labels[k]).count();
        rank_sum += mean_rank * pos_in_group as f64;
        start = end;
    }
    let np = n_pos as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// F1 of the decision `score >= 0`; 0 when precision and recall are both 0.
pub fn f1(labels: &[bool], scores: &[f64]) -> f64 {
    assert_eq!(labels.len(), scores.len());
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&l, &s) in labels.iter().zip(scores) {
        match (s >= 0.0, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

pub fn ctr(labels: &[bool], scores: &[f64]) -> Result<CtrResult> {
    Ok(CtrResult {
        auc: auc(labels, scores)?,
        f1: f1(labels, scores),
        n_evaluated: labels.len(),
    })
}

/// Highest-scoring `k` candidates, ties broken by smaller item id.
pub fn top_k(scores: &[f64], candidates: &[usize], k: usize) -> Vec<usize> {
    let mut c = candidates.to_vec();
    let order = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
    if k == 0 {
        return Vec::new();
    }
    if k < c.len() {
        c.select_nth_unstable_by(k - 1, order);
        c.truncate(k);
    }
    c.sort_unstable_by(order);
    c
}

/// Mean per-user recall of the top `k` items.
///
/// `score_row(u)` gives user `u`'s scores over the catalog; candidates are the
/// catalog minus `train_positives[u]`; `test_positives[u]` is the target set.
pub fn recall_at_k<F>(
    n_items: usize,
    train_positives: &[Vec<usize>],
    test_positives: &[Vec<usize>],
    k: usize,
    score_row: F,
) -> TopKResult
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let users: Vec<usize> = (0..test_positives.len()).filter(|&u| !test_positives[u].is_empty()).collect();
    let per_user: Vec<(usize, f64)> = users
        .par_iter()
        .map(|&u| {
            let scores = score_row(u);
            let train = &train_positives[u];
            let candidates: Vec<usize> = (0..n_items).filter(|i| train.binary_search(i).is_err()).collect();
            let top = top_k(&scores, &candidates, k);
            let hits = test_positives[u].iter().filter(|i| top.contains(i)).count();
            (u, hits as f64 / test_positives[u].len() as f64)
        })
        .collect();
    let recall = if per_user.is_empty() {
        0.0
    } else {
        per_user.iter().map(|p| p.1).sum::<f64>() / per_user.len() as f64
    };
    TopKResult { k, recall, per_user }
}

/// Item coordinates on the top two right singular directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection2d {
    pub coords: Array2<f64>,
    /// `d x 2`, orthonormal columns.
    pub directions: Array2<f64>,
    /// Top two singular values divided by the largest.
    pub singular: [f64; 2],
    pub iterations: usize,
}

impl Projection2d {
    /// `item_id x y` lines followed by a `singular s1 s2` line.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for (i, row) in self.coords.rows().into_iter().enumerate() {
            let _ = writeln!(out, "{i} {:.17e} {:.17e}", row[0], row[1]);
        }
        let _ = writeln!(out, "singular {:.17e} {:.17e}", self.singular[0], self.singular[1]);
        out
    }
}

const SVD_MAX_ITER: usize = 10_000;
/// Block width; after Rayleigh-Ritz the top two directions converge at the
/// rate of the first eigenvalue past the block over the second.
const SVD_BLOCK: usize = 16;
/// Largest accepted eigen-residual `|G q - λ q|` of the two leading columns,
/// with `G` scaled to unit largest diagonal entry.
const SVD_TOL: f64 = 1e-10;

/// Orthogonal iteration for the top-2 eigenvectors of the `d x d` Gram
/// matrix `XᵀX`. Fails with `ConvergenceFailure` after the iteration cap.
pub fn svd_project_2d(table: ArrayView2<f64>) -> Result<Projection2d> {
    let (n, d) = table.dim();
    if n < 2 || d < 2 {
        return Err(Error::DimensionMismatch(format!("need at least 2x2, got {n}x{d}")));
    }
    let gram = table.t().dot(&table);
    let scale = gram.diag().iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(Projection2d {
            coords: Array2::zeros((n, 2)),
            directions: Array2::eye(d).slice(ndarray::s![.., ..2]).to_owned(),
            singular: [0.0, 0.0],
            iterations: 0,
        });
    }
    let g = &gram / scale;
    let p = SVD_BLOCK.min(d);
    // Fixed, non-degenerate starting block so runs are reproducible.
    let mut q = Array2::from_shape_fn((d, p), |(r, c)| ((r * p + c) as f64 * 0.618_033_988_75 + 0.5).sin());
    orthonormalize(&mut q);
    for it in 1..=SVD_MAX_ITER {
        let mut z = g.dot(&q);
        orthonormalize(&mut z);
        q = z;
        rayleigh_ritz(&g, &mut q);
        let residual = (0..2)
            .map(|c| {
                let col = q.column(c);
                let gq = g.dot(&col);
                let lambda = col.dot(&gq);
                (&gq - &(&col * lambda)).dot(&(&gq - &(&col * lambda))).sqrt()
            })
            .fold(0.0, f64::max);
        if residual <= SVD_TOL {
            return Ok(finish(table, q.slice(ndarray::s![.., ..2]).to_owned(), it));
        }
    }
    Err(Error::ConvergenceFailure(SVD_MAX_ITER))
}

/// Gram-Schmidt, two passes per column. A column that vanishes against the
/// earlier ones is replaced by the standard axis with the largest residual.
fn orthonormalize(q: &mut Array2<f64>) {
    let d = q.nrows();
    for c in 0..q.ncols() {
        let original = q.column(c).dot(&q.column(c)).sqrt();
        let mut norm = project_out(q, c);
        if !(norm > 1e-8 * original) {
            let mut best = (0.0, 0);
            for axis in 0..d {
                q.column_mut(c).fill(0.0);
                q[[axis, c]] = 1.0;
                let r = project_out(q, c);
                if r > best.0 {
                    best = (r, axis);
                }
            }
            q.column_mut(c).fill(0.0);
            q[[best.1, c]] = 1.0;
            norm = project_out(q, c);
        }
        q.column_mut(c).mapv_inplace(|v| v / norm);
    }
}

/// Removes the components of column `c` along the earlier columns; returns
/// the remaining norm.
fn project_out(q: &mut Array2<f64>, c: usize) -> f64 {
    for _ in 0..2 {
        for p in 0..c {
            let proj = q.column(c).dot(&q.column(p));
            let prev = q.column(p).to_owned();
            q.column_mut(c).scaled_add(-proj, &prev);
        }
    }
    q.column(c).dot(&q.column(c)).sqrt()
}

/// Rayleigh-Ritz on the block: rotates the columns of `q` onto the
/// eigenvectors of `qᵀ g q`, larger eigenvalues first.
fn rayleigh_ritz(g: &Array2<f64>, q: &mut Array2<f64>) {
    let h = q.t().dot(&g.dot(q));
    let (values, vectors) = jacobi_eigen(h);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let rotated = q.dot(&vectors);
    for (dst, &src) in order.iter().enumerate() {
        q.column_mut(dst).assign(&rotated.column(src));
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix; returns the
/// eigenvalues and the eigenvectors as columns.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::<f64>::eye(n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apr = a[[p, r]];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[[r, r]] - a[[p, p]]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akr) = (a[[k, p]], a[[k, r]]);
                    a[[k, p]] = c * akp - s * akr;
                    a[[k, r]] = s * akp + c * akr;
                }
                for k in 0..n {
                    let (apk, ark) = (a[[p, k]], a[[r, k]]);
                    a[[p, k]] = c * apk - s * ark;
                    a[[r, k]] = s * apk + c * ark;
                }
                for k in 0..n {
                    let (vkp, vkr) = (v[[k, p]], v[[k, r]]);
                    v[[k, p]] = c * vkp - s * vkr;
                    v[[k, r]] = s * vkp + c * vkr;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), v)
}

fn finish(table: ArrayView2<f64>, q: Array2<f64>, iterations: usize) -> Projection2d {
    let coords = table.dot(&q);
    // Norms of the projections; going through the Gram matrix would square
    // the rounding error of a vanishing second value.
    let mut sv = [0.0; 2];
    for (c, s) in sv.iter_mut().enumerate() {
        *s = coords.column(c).dot(&coords.column(c)).sqrt();
    }
    let (q, coords, sv) = if sv[1] > sv[0] {
        let mut q2 = q.clone();
        q2.column_mut(0).assign(&q.column(1));
        q2.column_mut(1).assign(&q.column(0));
        let mut c2 = coords.clone();
        c2.column_mut(0).assign(&coords.column(1));
        c2.column_mut(1).assign(&coords.column(0));
        (q2, c2, [sv[1], sv[0]])
    } else {
        (q, coords, sv)
    };
    Projection2d {
        coords,
        directions: q,
        singular: [1.0, sv[1] / sv[0]],
        iterations,
    }
}

/// Squared Frobenius norm.
pub fn frobenius_sq(x: ArrayView2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Sum of squared coordinates.
pub fn projected_energy(p: &Projection2d) -> f64 {
    p.coords.map_axis(Axis(1), |r| r.dot(&r)).sum()
}
