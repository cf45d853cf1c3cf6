//! Projection heads and the cross-view InfoNCE losses.
//!
//! For anchor view `A` and partner view `B` (rows aligned by node), the loss of
//! anchor `i` is
//!
//! ```text
//! -log  exp(s(a_i, b_i)/τ) / ( Σ_k exp(s(a_i, b_k)/τ) + Σ_{k≠i} exp(s(a_i, a_k)/τ) )
//! ```
//!
//! with `s` the cosine similarity. The denominator holds the positive pair,
//! the inter-view negatives `b_k` and the intra-view negatives `a_k`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProjectionHead;

/// Which nodes serve as negatives for an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeScope {
    /// Distinct nodes of the current training batch.
    InBatch,
    /// Every node of the graph.
    FullGraph,
}

impl std::str::FromStr for NegativeScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-batch" => Ok(NegativeScope::InBatch),
            "full-graph" => Ok(NegativeScope::FullGraph),
            _ => Err(Error::Config(format!("unknown negative scope {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastConfig {
    pub tau: f64,
    pub negative_scope: NegativeScope,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Forward values kept for [`ProjectionHead::backward`].
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl ProjectionHead {
    fn check(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "projection input d={d}, head d={}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Projects every row of `z`.
    pub fn forward(&self, z: ArrayView2<f64>) -> Result<(Array2<f64>, ProjectionCache)> {
        self.check(z.ncols())?;
        let pre = z.dot(&self.w1.t()) + &self.b1;
        let hidden = pre.mapv(elu);
        let out = hidden.dot(&self.w2.t()) + &self.b2;
        Ok((
            out,
            ProjectionCache {
                input: z.to_owned(),
                pre,
                hidden,
            },
        ))
    }

    /// Gradient with respect to the input rows; parameter gradients are
    /// accumulated into `grad`.
    pub fn backward(&self, cache: &ProjectionCache, grad_out: ArrayView2<f64>, grad: &mut ProjectionHead) -> Array2<f64> {
        grad.w2 += &grad_out.t().dot(&cache.hidden);
        grad.b2 += &grad_out.sum_axis(Axis(0));
        let mut grad_pre = grad_out.dot(&self.w2);
        Zip::from(&mut grad_pre)
            .and(&cache.pre)
            .for_each(|g, &p| *g *= elu_grad(p));
        grad.w1 += &grad_pre.t().dot(&cache.input);
        grad.b1 += &grad_pre.sum_axis(Axis(0));
        grad_pre.dot(&self.w1)
    }
}

/// `W2 · elu(W1 · z + b1) + b2` for a single vector.
pub fn project(z: &Array1<f64>, head: &ProjectionHead) -> Result<Array1<f64>> {
    head.check(z.len())?;
    let hidden = (head.w1.dot(z) + &head.b1).mapv(elu);
    Ok(head.w2.dot(&hidden) + &head.b2)
}

/// Unit rows and the original norms.
fn normalize_rows(x: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut unit = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for mut row in unit.rows_mut() {
        let n = row.dot(&row).sqrt();
        norms.push(n);
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    (unit, norms)
}

/// Maps a gradient on unit rows back to the raw rows.
fn normalize_backward(unit: &Array2<f64>, norms: &[f64], mut grad_unit: Array2<f64>) -> Array2<f64> {
    for ((mut g, u), &n) in grad_unit.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        if n == 0.0 {
            g.fill(0.0);
            continue;
        }
        let radial = g.dot(&u);
        Zip::from(&mut g).and(&u).for_each(|gv, &uv| *gv = (*gv - radial * uv) / n);
    }
    grad_unit
}

/// Sum over anchors of the InfoNCE loss, plus gradients with respect to the
/// raw (unnormalized) anchor and partner rows, each scaled by `weight`.
pub fn info_nce(
    anchor: ArrayView2<f64>,
    partner: ArrayView2<f64>,
    tau: f64,
    weight: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let n = anchor.nrows();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if partner.dim() != anchor.dim() {
        return Err(Error::DimensionMismatch(format!(
            "anchor {:?} vs partner {:?}",
            anchor.dim(),
            partner.dim()
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let (a, a_norm) = normalize_rows(anchor);
    let (b, b_norm) = normalize_rows(partner);
    let inv_tau = 1.0 / tau;
    // Rows become softmax probabilities in place.
    let mut p_ab = a.dot(&b.t());
    let mut p_aa = a.dot(&a.t());
    let losses: Vec<f64> = p_ab
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(p_aa.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .map(|(i, (mut ab, mut aa))| {
            ab.mapv_inplace(|s| s * inv_tau);
            aa.mapv_inplace(|s| s * inv_tau);
            let pos = ab[i];
            let mut max = f64::NEG_INFINITY;
            for (k, (&x, &y)) in ab.iter().zip(aa.iter()).enumerate() {
                max = max.max(x);
                if k != i {
                    max = max.max(y);
                }
            }
            let mut total = 0.0;
            for (k, (x, y)) in ab.iter_mut().zip(aa.iter_mut()).enumerate() {
                *x = (*x - max).exp();
                total += *x;
                if k != i {
                    *y = (*y - max).exp();
                    total += *y;
                } else {
                    *y = 0.0;
                }
            }
            ab.mapv_inplace(|x| x / total);
            aa.mapv_inplace(|y| y / total);
            max + total.ln() - pos
        })
        .collect();
    let loss: f64 = losses.iter().sum();

    let scale = weight * inv_tau;
    // d/da_i: Σ_k P_ab[i,k] b_k - b_i + Σ_k P_aa[i,k] a_k ; plus intra terms where a_k is the negative.
    let p_aa_sym = &p_aa + &p_aa.t();
    let mut grad_a = p_ab.dot(&b) - &b + p_aa_sym.dot(&a);
    grad_a.mapv_inplace(|g| g * scale);
    let mut grad_b = p_ab.t().dot(&a) - &a;
    grad_b.mapv_inplace(|g| g * scale);

    let grad_anchor = normalize_backward(&a, &a_norm, grad_a);
    let grad_partner = normalize_backward(&b, &b_norm, grad_b);
    Ok((weight * loss, grad_anchor, grad_partner))
}

/// Local loss between semantic and collaborative item projections: the mean
/// over batch items, anchored on the semantic view.
pub fn local_contrastive_loss(semantic_proj: ArrayView2<f64>, collab_proj: ArrayView2<f64>, tau: f64) -> Result<f64> {
    let n = semantic_proj.nrows() as f64;
    Ok(info_nce(semantic_proj, collab_proj, tau, 1.0 / n)?.0)
}

/// Global loss: for items and users separately, the average of the
/// global-anchored and local-anchored losses, each half averaged over nodes.
pub fn global_contrastive_loss(
    item_global: ArrayView2<f64>,
    item_local: ArrayView2<f64>,
    user_global: ArrayView2<f64>,
    user_local: ArrayView2<f64>,
    tau: f64,
) -> Result<f64> {
    Ok(symmetric_half(item_global, item_local, tau)?.0 + symmetric_half(user_global, user_local, tau)?.0)
}

/// `(1/2n) Σ_i (L_i^g + L_i^l)` with gradients for both views.
pub fn symmetric_half(
    global: ArrayView2<f64>,
    local: ArrayView2<f64>,
    tau: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let w = 0.5 / global.nrows() as f64;
    let (l1, g_global, g_local) = info_nce(global, local, tau, w)?;
    let (l2, g_local2, g_global2) = info_nce(local, global, tau, w)?;
    Ok((l1 + l2, g_global + g_global2, g_local + g_local2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng as _;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    /// Direct evaluation of the loss definition, one anchor at a time.
    fn nce_reference(a: &Array2<f64>, b: &Array2<f64>, tau: f64) -> f64 {
        let cos = |x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>| {
            x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
        };
        let n = a.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let pos = (cos(a.row(i), b.row(i)) / tau).exp();
            let mut denom = pos;
            for k in 0..n {
                if k != i {
                    denom += (cos(a.row(i), a.row(k)) / tau).exp();
                    denom += (cos(a.row(i), b.row(k)) / tau).exp();
                }
            }
            total += -(pos / denom).ln();
        }
        total
    }

    #[test]
    fn project_zero_head() {
        let z = array![1.0, -2.0, 3.0];
        assert_eq!(project(&z, &ProjectionHead::zeros(3)).unwrap(), Array1::<f64>::zeros(3));
    }

    #[test]
    fn project_identity_on_nonnegative() {
        let z = array![0.0, 2.0, 3.5];
        let out = project(&z, &ProjectionHead::identity(3)).unwrap();
        assert_eq!(out, z);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn project_dimension_mismatch() {
        let r = project(&array![1.0, 2.0], &ProjectionHead::identity(3));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = Rng::new(1);
        let head = ProjectionHead::init(4, &mut rng);
        let z = random(3, 4, &mut rng);
        let (out, _) = head.forward(z.view()).unwrap();
        for i in 0..3 {
            let single = project(&z.row(i).to_owned(), &head).unwrap();
            for k in 0..4 {
                assert_abs_diff_eq!(out[[i, k]], single[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn identical_embeddings_closed_form() {
        for n in [2usize, 3, 7] {
            let z = Array2::from_elem((n, 4), 0.3);
            let l = local_contrastive_loss(z.view(), z.view(), 0.8).unwrap();
            assert_abs_diff_eq!(l, ((2 * n - 1) as f64).ln(), epsilon = 1e-10);
        }
    }

    #[test]
    fn two_item_hand_case() {
        let s = array![[1.0, 0.0], [0.0, 1.0]];
        let c = array![[1.0, 1.0], [-1.0, 1.0]];
        // anchor 0: s(s0,c0)=1/√2, s(s0,s1)=0, s(s0,c1)=-1/√2
        // anchor 1: s(s1,c1)=1/√2, s(s1,s0)=0, s(s1,c0)=1/√2
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let l0 = -(h.exp() / (h.exp() + 1.0 + (-h).exp())).ln();
        let l1 = -(h.exp() / (h.exp() + 1.0 + h.exp())).ln();
        let expected = (l0 + l1) / 2.0;
        assert_abs_diff_eq!(local_contrastive_loss(s.view(), c.view(), 1.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn global_two_by_two_hand_case() {
        let ig = array![[1.0, 0.0], [0.0, 1.0]];
        let il = array![[1.0, 1.0], [-1.0, 1.0]];
        let ug = array![[2.0, 1.0], [1.0, -1.0]];
        let ul = array![[1.0, 0.0], [0.5, 0.5]];
        let direct = (nce_reference(&ig, &il, 1.0) + nce_reference(&il, &ig, 1.0)) / 4.0
            + (nce_reference(&ug, &ul, 1.0) + nce_reference(&ul, &ug, 1.0)) / 4.0;
        let got = global_contrastive_loss(ig.view(), il.view(), ug.view(), ul.view(), 1.0).unwrap();
        assert_abs_diff_eq!(got, direct, epsilon = 1e-13);
    }

    #[test]
    fn global_identical_closed_form() {
        let items = Array2::from_elem((5, 3), 1.0);
        let users = Array2::from_elem((3, 3), -2.0);
        let got = global_contrastive_loss(items.view(), items.view(), users.view(), users.view(), 0.5).unwrap();
        assert_abs_diff_eq!(got, 9f64.ln() + 5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn batch_too_small() {
        let z = Array2::from_elem((1, 3), 1.0);
        assert!(matches!(local_contrastive_loss(z.view(), z.view(), 1.0), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn matches_reference_on_random_input() {
        let mut rng = Rng::new(9);
        let a = random(6, 5, &mut rng);
        let b = random(6, 5, &mut rng);
        let got = info_nce(a.view(), b.view(), 0.3, 1.0).unwrap().0;
        assert_abs_diff_eq!(got, nce_reference(&a, &b, 0.3), epsilon = 1e-11);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = Rng::new(21);
        let a = random(5, 4, &mut rng);
        let b = random(5, 4, &mut rng);
        let tau = 0.5;
        let (_, ga, gb) = info_nce(a.view(), b.view(), tau, 1.0).unwrap();
        let h = 1e-6;
        for (which, grad) in [(0, &ga), (1, &gb)] {
            let mut num = Array2::zeros(grad.raw_dim());
            for idx in 0..num.len() {
                let (i, k) = (idx / 4, idx % 4);
                let eval = |delta: f64| {
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    if which == 0 {
                        a2[[i, k]] += delta;
                    } else {
                        b2[[i, k]] += delta;
                    }
                    nce_reference(&a2, &b2, tau)
                };
                num[[i, k]] = (eval(h) - eval(-h)) / (2.0 * h);
            }
            let diff = (&num - grad).mapv(|v| v * v).sum().sqrt();
            let scale = num.mapv(|v| v * v).sum().sqrt().max(1e-12);
            assert!(diff / scale < 1e-6, "view {which}: rel err {}", diff / scale);
        }
    }

    #[test]
    fn projection_backward_matches_central_differences() {
        let mut rng = Rng::new(4);
        let mut head = ProjectionHead::init(3, &mut rng);
        head.b1 = array![0.1, -0.2, 0.05];
        let z = random(4, 3, &mut rng);
        let upstream = random(4, 3, &mut rng);
        let objective = |h: &ProjectionHead, z: &Array2<f64>| (h.forward(z.view()).unwrap().0 * &upstream).sum();
        let (_, cache) = head.forward(z.view()).unwrap();
        let mut grad = ProjectionHead::zeros(3);
        let gz = head.backward(&cache, upstream.view(), &mut grad);
        let h = 1e-6;
        for idx in 0..z.len() {
            let (i, k) = (idx / 3, idx % 3);
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[[i, k]] += h;
            zm[[i, k]] -= h;
            let num = (objective(&head, &zp) - objective(&head, &zm)) / (2.0 * h);
            assert_abs_diff_eq!(num, gz[[i, k]], epsilon = 1e-7);
        }
        for idx in 0..9 {
            let (i, k) = (idx / 3, idx % 3);
            let (mut hp, mut hm) = (head.clone(), head.clone());
            hp.w1[[i, k]] += h;
            hm.w1[[i, k]] -= h;
            let num = (objective(&hp, &z) - objective(&hm, &z)) / (2.0 * h);
            assert_abs_diff_eq!(num, grad.w1[[i, k]], epsilon = 1e-7);
        }
    }
}
