//! Prediction, BPR, the combined objective and its gradient, and the
//! finite-difference gradient checker.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::config::ModelConfig;
use crate::contrastive::{info_nce, symmetric_half, NegativeScope};
use crate::encoders::{
    collaborative_backward, collaborative_encode, semantic_backward, semantic_encode, structural_backward,
    structural_encode, CollabGraph, KgNeighbors, StructuralCache, UserItemMean,
};
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::ingest::KnowledgeGraph;
use crate::params::{Params, Shape, BLOCK_NAMES};
use crate::semantic::{build_semantic_graph, SemanticGraph};

/// The propagation structures of one dataset, built from the train split.
#[derive(Debug, Clone)]
pub struct Graphs {
    pub shape: Shape,
    pub collab: CollabGraph,
    pub user_items: UserItemMean,
    pub kg: KgNeighbors,
    semantic: SemanticGraph,
    semantic_t: SparseAdjacency,
}

impl Graphs {
    /// `kg` must already be in the unified node space (items first).
    pub fn new(shape: Shape, train_positives: &[(usize, usize)], kg: &KnowledgeGraph) -> Result<Self> {
        let n_nodes = shape.n_items + shape.n_extra_entities;
        if kg.n_relations > shape.n_relations {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} relations, table has {}",
                kg.n_relations, shape.n_relations
            )));
        }
        let mut kg_nodes = KgNeighbors::new(kg, n_nodes)?;
        let collab = CollabGraph::new(shape.n_users, shape.n_items, train_positives)?;
        let user_items = UserItemMean::new(shape.n_users, shape.n_items, train_positives)?;
        kg_nodes.widen_relations(shape.n_relations);
        let semantic = SemanticGraph::empty(shape.n_items, 1);
        let semantic_t = semantic.adjacency.transpose();
        Ok(Graphs {
            shape,
            collab,
            user_items,
            kg: kg_nodes,
            semantic,
            semantic_t,
        })
    }

    pub fn semantic(&self) -> &SemanticGraph {
        &self.semantic
    }

    pub fn set_semantic(&mut self, graph: SemanticGraph) -> Result<()> {
        let a = &graph.adjacency;
        if a.n_rows() != self.shape.n_items || a.n_cols() != self.shape.n_items {
            return Err(Error::DimensionMismatch(format!(
                "semantic graph {}x{} for {} items",
                a.n_rows(),
                a.n_cols(),
                self.shape.n_items
            )));
        }
        self.semantic_t = graph.adjacency.transpose();
        self.semantic = graph;
        Ok(())
    }

    /// Rebuilds the item-item graph from the current embeddings.
    pub fn rebuild_semantic(&mut self, params: &Params, cfg: &ModelConfig, epoch: usize) -> Result<()> {
        let mut g = build_semantic_graph(
            &self.kg,
            params.emb.items.view(),
            params.emb.entities.view(),
            params.emb.relations.view(),
            cfg.knn_k,
            cfg.kg_depth,
            cfg.sim_block_rows,
        )?;
        g.built_from_epoch = epoch;
        self.set_semantic(g)
    }
}

/// Encoder outputs of every view.
#[derive(Debug, Clone)]
pub struct Views {
    pub user_collab: Array2<f64>,
    pub item_collab: Array2<f64>,
    pub item_semantic: Array2<f64>,
    pub user_struct: Array2<f64>,
    /// Structural outputs of all nodes; the first `N` rows are the items.
    pub node_struct: Array2<f64>,
    cache: StructuralCache,
}

impl Views {
    pub fn item_struct(&self) -> ArrayView2<'_, f64> {
        self.node_struct.slice(s![..self.item_collab.nrows(), ..])
    }

    /// Input of the local side of the global contrast for items.
    pub fn item_local(&self) -> Array2<f64> {
        &self.item_collab + &self.item_semantic
    }
}

pub fn encode(graphs: &Graphs, params: &Params, cfg: &ModelConfig) -> Result<Views> {
    let e = &params.emb;
    let (user_collab, item_collab) = collaborative_encode(&graphs.collab, e.users.view(), e.items.view(), cfg.collab_depth)?;
    let item_semantic = semantic_encode(&graphs.semantic.adjacency, e.items.view(), cfg.semantic_depth)?;
    let nodes = e.node_table();
    let (user_struct, node_struct, cache) = structural_encode(
        &graphs.user_items,
        &graphs.kg,
        e.users.view(),
        nodes.view(),
        e.relations.view(),
        cfg.structural_depth,
    )?;
    Ok(Views {
        user_collab,
        item_collab,
        item_semantic,
        user_struct,
        node_struct,
        cache,
    })
}

/// Concatenated `2d` representations used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalReps {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl FinalReps {
    pub fn score(&self, user: usize, item: usize) -> f64 {
        self.users.row(user).dot(&self.items.row(item))
    }

    /// Scores of one user against every item.
    pub fn user_scores(&self, user: usize) -> Array1<f64> {
        self.items.dot(&self.users.row(user))
    }
}

/// Users: structural then collaborative. Items: structural then the sum of
/// collaborative and semantic.
pub fn final_representations(views: &Views) -> Result<FinalReps> {
    let d = views.user_collab.ncols();
    for t in [&views.item_collab, &views.item_semantic, &views.user_struct, &views.node_struct] {
        if t.ncols() != d {
            return Err(Error::DimensionMismatch(format!("view width {} vs {d}", t.ncols())));
        }
    }
    if views.item_semantic.nrows() != views.item_collab.nrows() || views.user_struct.nrows() != views.user_collab.nrows() {
        return Err(Error::DimensionMismatch("view row counts differ".into()));
    }
    let users = ndarray::concatenate(Axis(1), &[views.user_struct.view(), views.user_collab.view()]).unwrap();
    let local = views.item_local();
    let items = ndarray::concatenate(Axis(1), &[views.item_struct(), local.view()]).unwrap();
    Ok(FinalReps { users, items })
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of `-ln σ(pos - neg)`.
pub fn bpr_loss(pos_scores: &[f64], neg_scores: &[f64]) -> f64 {
    assert_eq!(pos_scores.len(), neg_scores.len());
    if pos_scores.is_empty() {
        return 0.0;
    }
    let sum: f64 = pos_scores.iter().zip(neg_scores).map(|(p, n)| softplus(n - p)).sum();
    sum / pos_scores.len() as f64
}

/// `bpr + β(α local + (1-α) global) + λ reg`, honoring the ablation.
pub fn total_loss(bpr: f64, local: f64, global: f64, reg: f64, cfg: &ModelConfig) -> Result<f64> {
    let (wl, wg) = cfg.contrast_weights();
    let total = bpr + wl * local + wg * global + cfg.l2 * reg;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "bpr={bpr} local={local} global={global} reg={reg}"
        )));
    }
    Ok(total)
}

/// Multipliers of each loss term; a zero weight skips the term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub bpr: f64,
    pub local: f64,
    pub global: f64,
    pub l2: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let (local, global) = cfg.contrast_weights();
        LossWeights {
            bpr: 1.0,
            local,
            global,
            l2: cfg.l2,
        }
    }
}

/// Unweighted loss terms of one batch and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub bpr: f64,
    pub local: f64,
    pub global: f64,
    /// Sum of squares of the batch-touched parameters.
    pub reg: f64,
    pub total: f64,
}

/// `(user, positive item, negative item)`.
pub type Triple = (usize, usize, usize);

fn unique(xs: impl Iterator<Item = usize>) -> Vec<usize> {
    xs.collect::<BTreeSet<_>>().into_iter().collect()
}

fn scatter_add(dst: &mut Array2<f64>, rows: &[usize], src: ArrayView2<f64>) {
    for (k, &r) in rows.iter().enumerate() {
        let mut row = dst.row_mut(r);
        row += &src.row(k);
    }
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum()
}

/// Loss of one batch and, when `backward` is set, its gradient.
///
/// The contrastive terms use the distinct batch users and distinct positive
/// items, or every node under [`NegativeScope::FullGraph`]. The L2 term covers
/// the rows of batch users, positive and negative items, and both heads.
pub fn loss_and_grad(
    graphs: &Graphs,
    params: &Params,
    batch: &[Triple],
    weights: LossWeights,
    cfg: &ModelConfig,
    backward: bool,
) -> Result<(LossParts, Option<Params>)> {
    let views = encode(graphs, params, cfg)?;
    let shape = graphs.shape;
    let d = shape.dim;
    let mut parts = LossParts::default();

    let mut g_user_collab = Array2::<f64>::zeros((shape.n_users, d));
    let mut g_item_collab = Array2::<f64>::zeros((shape.n_items, d));
    let mut g_item_sem = Array2::<f64>::zeros((shape.n_items, d));
    let mut g_user_struct = Array2::<f64>::zeros((shape.n_users, d));
    let mut g_item_struct = Array2::<f64>::zeros((shape.n_items, d));
    let mut grad = params.zeros_like();

    if weights.bpr != 0.0 && !batch.is_empty() {
        let reps = final_representations(&views)?;
        let item_local = views.item_local();
        let item_struct = views.item_struct();
        let n = batch.len() as f64;
        let mut total = 0.0;
        for &(u, i, j) in batch {
            let diff = reps.score(u, i) - reps.score(u, j);
            total += softplus(-diff);
            if !backward {
                continue;
            }
            let g = -weights.bpr * sigmoid(-diff) / n;
            let mut gu = g_user_struct.row_mut(u);
            gu.scaled_add(g, &(&item_struct.row(i) - &item_struct.row(j)));
            let mut gu = g_user_collab.row_mut(u);
            gu.scaled_add(g, &(&item_local.row(i) - &item_local.row(j)));
            g_item_struct.row_mut(i).scaled_add(g, &views.user_struct.row(u));
            g_item_struct.row_mut(j).scaled_add(-g, &views.user_struct.row(u));
            for t in [&mut g_item_collab, &mut g_item_sem] {
                t.row_mut(i).scaled_add(g, &views.user_collab.row(u));
                t.row_mut(j).scaled_add(-g, &views.user_collab.row(u));
            }
        }
        parts.bpr = total / n;
    }

    let (batch_users, batch_items) = match cfg.negative_scope {
        NegativeScope::InBatch => (unique(batch.iter().map(|t| t.0)), unique(batch.iter().map(|t| t.1))),
        NegativeScope::FullGraph => ((0..shape.n_users).collect(), (0..shape.n_items).collect()),
    };

    if weights.local != 0.0 {
        let head = &params.local_head;
        let (sem_p, sem_cache) = head.forward(views.item_semantic.select(Axis(0), &batch_items).view())?;
        let (col_p, col_cache) = head.forward(views.item_collab.select(Axis(0), &batch_items).view())?;
        let (loss, g_sem, g_col) = info_nce(sem_p.view(), col_p.view(), cfg.tau, 1.0 / batch_items.len() as f64)?;
        parts.local = loss;
        if backward {
            let g_sem = head.backward(&sem_cache, (g_sem * weights.local).view(), &mut grad.local_head);
            let g_col = head.backward(&col_cache, (g_col * weights.local).view(), &mut grad.local_head);
            scatter_add(&mut g_item_sem, &batch_items, g_sem.view());
            scatter_add(&mut g_item_collab, &batch_items, g_col.view());
        }
    }

    if weights.global != 0.0 {
        let head = &params.global_head;
        let (ig, ig_cache) = head.forward(views.item_struct().select(Axis(0), &batch_items).view())?;
        let (il, il_cache) = head.forward(views.item_local().select(Axis(0), &batch_items).view())?;
        let (ug, ug_cache) = head.forward(views.user_struct.select(Axis(0), &batch_users).view())?;
        let (ul, ul_cache) = head.forward(views.user_collab.select(Axis(0), &batch_users).view())?;
        let (item_loss, g_ig, g_il) = symmetric_half(ig.view(), il.view(), cfg.tau)?;
        let (user_loss, g_ug, g_ul) = symmetric_half(ug.view(), ul.view(), cfg.tau)?;
        parts.global = item_loss + user_loss;
        if backward {
            let w = weights.global;
            let g_ig = head.backward(&ig_cache, (g_ig * w).view(), &mut grad.global_head);
            let g_il = head.backward(&il_cache, (g_il * w).view(), &mut grad.global_head);
            let g_ug = head.backward(&ug_cache, (g_ug * w).view(), &mut grad.global_head);
            let g_ul = head.backward(&ul_cache, (g_ul * w).view(), &mut grad.global_head);
            scatter_add(&mut g_item_struct, &batch_items, g_ig.view());
            scatter_add(&mut g_item_collab, &batch_items, g_il.view());
            scatter_add(&mut g_item_sem, &batch_items, g_il.view());
            scatter_add(&mut g_user_struct, &batch_users, g_ug.view());
            scatter_add(&mut g_user_collab, &batch_users, g_ul.view());
        }
    }

    let reg_users = unique(batch.iter().map(|t| t.0));
    let reg_items = unique(batch.iter().flat_map(|t| [t.1, t.2]));
    if weights.l2 != 0.0 {
        let mut reg = 0.0;
        for &u in &reg_users {
            reg += sum_sq(params.emb.users.row(u).as_slice().unwrap());
        }
        for &i in &reg_items {
            reg += sum_sq(params.emb.items.row(i).as_slice().unwrap());
        }
        for t in &params.tensors()[4..] {
            reg += sum_sq(t);
        }
        parts.reg = reg;
    }

    parts.total =
        weights.bpr * parts.bpr + weights.local * parts.local + weights.global * parts.global + weights.l2 * parts.reg;
    if !parts.total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "bpr={} local={} global={} reg={}",
            parts.bpr, parts.local, parts.global, parts.reg
        )));
    }
    if !backward {
        return Ok((parts, None));
    }

    let (gu, gi) = collaborative_backward(&graphs.collab, g_user_collab.view(), g_item_collab.view(), cfg.collab_depth)?;
    grad.emb.users += &gu;
    grad.emb.items += &gi;
    grad.emb.items += &semantic_backward(&graphs.semantic_t, g_item_sem.view(), cfg.semantic_depth)?;

    let n_nodes = shape.n_items + shape.n_extra_entities;
    let mut g_nodes_out = Array2::<f64>::zeros((n_nodes, d));
    g_nodes_out.slice_mut(s![..shape.n_items, ..]).assign(&g_item_struct);
    let (gu, gn, gr) = structural_backward(
        &graphs.user_items,
        &graphs.kg,
        params.emb.relations.view(),
        &views.cache,
        g_user_struct.view(),
        g_nodes_out.view(),
    );
    grad.emb.users += &gu;
    grad.emb.items += &gn.slice(s![..shape.n_items, ..]);
    grad.emb.entities += &gn.slice(s![shape.n_items.., ..]);
    grad.emb.relations += &gr;

    if weights.l2 != 0.0 {
        let c = 2.0 * weights.l2;
        for &u in &reg_users {
            grad.emb.users.row_mut(u).scaled_add(c, &params.emb.users.row(u));
        }
        for &i in &reg_items {
            grad.emb.items.row_mut(i).scaled_add(c, &params.emb.items.row(i));
        }
        for (dst, src) in grad.tensors_mut().into_iter().skip(4).zip(params.tensors().into_iter().skip(4)) {
            for (g, p) in dst.iter_mut().zip(src) {
                *g += c * p;
            }
        }
    }
    Ok((parts, Some(grad)))
}

/// `‖a - b‖ / max(‖a‖, ‖b‖, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = sum_sq(a).sqrt();
    let nb = sum_sq(b).sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Central differences of `f` with respect to every parameter.
pub fn numeric_gradient(params: &Params, eps: f64, mut f: impl FnMut(&Params) -> Result<f64>) -> Result<Params> {
    let mut p = params.clone();
    let mut out = params.zeros_like();
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        for k in 0..len {
            let orig = p.tensors()[t][k];
            p.tensors_mut()[t][k] = orig + eps;
            let up = f(&p)?;
            p.tensors_mut()[t][k] = orig - eps;
            let down = f(&p)?;
            p.tensors_mut()[t][k] = orig;
            out.tensors_mut()[t][k] = (up - down) / (2.0 * eps);
        }
    }
    Ok(out)
}

/// Analytic against numeric gradient of one block for one loss component.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub component: String,
    pub block: &'static str,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradientReport {
    pub tolerance: f64,
    pub eps: f64,
    pub checks: Vec<BlockCheck>,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:<12} {:>14} {:>14} {:>12}  result",
            "component", "block", "|analytic|", "|numeric|", "rel_err"
        );
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<10} {:<12} {:>14.6e} {:>14.6e} {:>12.3e}  {}",
                c.component,
                c.block,
                sum_sq(&c.analytic).sqrt(),
                sum_sq(&c.numeric).sqrt(),
                c.rel_err,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        out
    }

    /// `Err(GradCheckFailure)` naming every failing block.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        Err(Error::GradCheckFailure(
            self.checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{}/{} rel_err={:.3e}", c.component, c.block, c.rel_err))
                .collect(),
        ))
    }
}

fn flatten(blocks: Vec<(&'static str, Vec<&[f64]>)>) -> Vec<(&'static str, Vec<f64>)> {
    blocks
        .into_iter()
        .map(|(name, ts)| (name, ts.into_iter().flatten().copied().collect()))
        .collect()
}

/// Compares the analytic gradient of each named weighting against central
/// differences, block by block.
pub fn grad_check(
    graphs: &Graphs,
    params: &Params,
    batch: &[Triple],
    cfg: &ModelConfig,
    components: &[(&str, LossWeights)],
    eps: f64,
    tolerance: f64,
) -> Result<GradientReport> {
    let mut checks = Vec::new();
    for &(name, weights) in components {
        let (_, analytic) = loss_and_grad(graphs, params, batch, weights, cfg, true)?;
        let analytic = analytic.expect("backward requested");
        let numeric = numeric_gradient(params, eps, |p| {
            Ok(loss_and_grad(graphs, p, batch, weights, cfg, false)?.0.total)
        })?;
        for ((block, a), (_, n)) in flatten(analytic.blocks()).into_iter().zip(flatten(numeric.blocks())) {
            let rel_err = relative_error(&a, &n);
            checks.push(BlockCheck {
                component: name.to_string(),
                block,
                analytic: a,
                numeric: n,
                rel_err,
                pass: rel_err <= tolerance,
            });
        }
    }
    debug_assert!(checks.iter().all(|c| BLOCK_NAMES.contains(&c.block)));
    Ok(GradientReport {
        tolerance,
        eps,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn bpr_equal_scores_is_ln2() {
        assert_abs_diff_eq!(bpr_loss(&[0.3], &[0.3]), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(bpr_loss(&[800.0], &[-800.0]) < 1e-300);
        assert!(bpr_loss(&[0.0, 5.0], &[1.0, 4.0]) > 0.0);
        assert!(bpr_loss(&[-800.0], &[800.0]).is_finite());
    }

    #[test]
    fn total_loss_hand_arithmetic() {
        let cfg = ModelConfig {
            l2: 0.0,
            ..ModelConfig::default()
        };
        assert_abs_diff_eq!(total_loss(1.0, 2.0, 4.0, 9.0, &cfg).unwrap(), 1.36, epsilon = 1e-12);
        let cfg = ModelConfig {
            alpha: 1.0,
            ..cfg
        };
        assert_abs_diff_eq!(total_loss(1.0, 2.0, 4.0, 0.0, &cfg).unwrap(), 1.2, epsilon = 1e-12);
        assert!(matches!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &cfg), Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn final_representation_hand_case() {
        let views = Views {
            user_collab: array![[2.0]],
            item_collab: array![[1.0]],
            item_semantic: array![[1.0]],
            user_struct: array![[1.0]],
            node_struct: array![[3.0]],
            cache: StructuralCache {
                layers: vec![],
                attention: crate::encoders::Attention {
                    edge: vec![],
                    self_weight: vec![],
                },
            },
        };
        let reps = final_representations(&views).unwrap();
        assert_eq!(reps.users.ncols(), 2);
        assert_eq!(reps.score(0, 0), 7.0);
    }

    #[test]
    fn regularizer_gradient_is_two_lambda_theta() {
        let g = numeric_gradient(
            &crate::params::Params::zeros(Shape {
                dim: 1,
                n_users: 1,
                n_items: 0,
                n_extra_entities: 0,
                n_relations: 0,
            }),
            1e-5,
            |p| {
                let t = p.emb.users[[0, 0]] + 3.0;
                Ok(t * t)
            },
        )
        .unwrap();
        assert_abs_diff_eq!(g.emb.users[[0, 0]], 6.0, epsilon = 1e-8);
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert_abs_diff_eq!(relative_error(&[1.0, 0.0], &[0.0, 1.0]), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn toy_gradients_match_central_differences() {
        let toy = crate::toy::gradcheck_instance();
        let params = toy.params();
        let graphs = toy.graphs(&params).unwrap();
        assert!(graphs.semantic().adjacency.nnz() > 0);
        let report = grad_check(&graphs, &params, &toy.batch, &toy.config, &toy.components(), 1e-5, 1e-4).unwrap();
        assert_eq!(report.checks.len(), 4 * 6);
        assert!(report.passed(), "{}", report.table());
    }

    #[test]
    fn beta_zero_lambda_zero_total_is_bpr() {
        let toy = crate::toy::gradcheck_instance();
        let params = toy.params();
        let graphs = toy.graphs(&params).unwrap();
        let cfg = ModelConfig {
            beta: 1e-300,
            l2: 0.0,
            ..toy.config.clone()
        };
        let mut w = LossWeights::from_config(&cfg);
        w.local = 0.0;
        w.global = 0.0;
        let (parts, _) = loss_and_grad(&graphs, &params, &toy.batch, w, &cfg, false).unwrap();
        let reps = final_representations(&encode(&graphs, &params, &cfg).unwrap()).unwrap();
        let pos: Vec<f64> = toy.batch.iter().map(|&(u, i, _)| reps.score(u, i)).collect();
        let neg: Vec<f64> = toy.batch.iter().map(|&(u, _, j)| reps.score(u, j)).collect();
        assert_eq!(parts.total, bpr_loss(&pos, &neg));
    }
}
