//! Item-item semantic graph: relation-aware propagation over the knowledge
//! graph, cosine similarity, top-k sparsification and degree normalization.
//!
//! The resulting weights are constants for the encoders; no gradient flows
//! through similarity or neighbor selection.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::encoders::KgNeighbors;
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;

/// Normalized sparsified item-item adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub adjacency: SparseAdjacency,
    pub k: usize,
    pub built_from_epoch: usize,
}

impl SemanticGraph {
    /// A graph without edges; the semantic view then returns the item table.
    pub fn empty(n_items: usize, k: usize) -> Self {
        SemanticGraph {
            adjacency: SparseAdjacency::empty(n_items, n_items),
            k,
            built_from_epoch: 0,
        }
    }

    /// `i j weight` lines.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for (i, j, w) in self.adjacency.triplets() {
            let _ = writeln!(out, "{i} {j} {w:.17e}");
        }
        out
    }
}

/// `K'` rounds of mean relational aggregation `mean (e_r ⊙ e_v)` over the
/// bidirectional knowledge-graph neighborhood of every node. Nodes without
/// neighbors carry their previous layer forward. Returns the item rows of the
/// final layer.
pub fn relation_aware_propagate(
    kg: &KgNeighbors,
    items: ArrayView2<f64>,
    entities: ArrayView2<f64>,
    relations: ArrayView2<f64>,
    depth: usize,
) -> Result<Array2<f64>> {
    let d = items.ncols();
    if entities.ncols() != d || relations.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "item d={d}, entity d={}, relation d={}",
            entities.ncols(),
            relations.ncols()
        )));
    }
    if items.nrows() + entities.nrows() != kg.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} items + {} entities vs {} graph nodes",
            items.nrows(),
            entities.nrows(),
            kg.n_nodes()
        )));
    }
    if relations.nrows() < kg.n_relations() {
        return Err(Error::DimensionMismatch(format!(
            "{} relation rows for {} relations",
            relations.nrows(),
            kg.n_relations()
        )));
    }
    let mut layer = ndarray::concatenate(Axis(0), &[items, entities]).expect("shared d");
    for _ in 0..depth {
        let mut next = Array2::zeros(layer.raw_dim());
        next.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(n, mut out)| {
                let deg = kg.degree(n);
                if deg == 0 {
                    out.assign(&layer.row(n));
                    return;
                }
                for e in kg.edge_range(n) {
                    let (r, m) = kg.edge(e);
                    Zip::from(&mut out)
                        .and(relations.row(r))
                        .and(layer.row(m))
                        .for_each(|o, &rv, &mv| *o += rv * mv);
                }
                out.mapv_inplace(|v| v / deg as f64);
            });
        layer = next;
    }
    Ok(layer.slice(s![..items.nrows(), ..]).to_owned())
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_sim(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        log::debug!("cosine similarity of a zero vector defined as 0");
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Rows scaled to unit norm; zero rows stay zero.
pub fn unit_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

/// Indices of the `k` largest off-diagonal entries of `row`, larger value
/// first and smaller column first among equal values.
pub fn top_k_columns(row: ArrayView1<f64>, self_index: usize, k: usize) -> Vec<usize> {
    let mut cols: Vec<usize> = (0..row.len()).filter(|&j| j != self_index).collect();
    let order = |&a: &usize, &b: &usize| -> Ordering { row[b].total_cmp(&row[a]).then(a.cmp(&b)) };
    if k < cols.len() {
        if k == 0 {
            return Vec::new();
        }
        cols.select_nth_unstable_by(k - 1, order);
        cols.truncate(k);
    }
    cols.sort_unstable_by(order);
    cols
}

/// Keeps, per row, the `k` largest off-diagonal similarities. The result is
/// directed; its entries are the raw similarities.
pub fn knn_sparsify(sim: ArrayView2<f64>, k: usize) -> Result<SparseAdjacency> {
    if k == 0 {
        return Err(Error::Config("kNN k must be at least 1".into()));
    }
    let n = sim.nrows();
    let rows: Vec<Vec<(usize, usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sim.row(i);
            top_k_columns(row, i, k).into_iter().map(|j| (i, j, row[j])).collect()
        })
        .collect();
    let edges: Vec<_> = rows.into_iter().flatten().collect();
    SparseAdjacency::build_csr(&edges, n, sim.ncols())
}

/// Full pipeline from embeddings to the normalized kNN graph.
///
/// Similarities are computed in blocks of `block_rows` rows. Selected
/// neighbors with non-positive similarity are dropped before normalization
/// so that every degree is a sum of positive weights.
pub fn build_semantic_graph(
    kg: &KgNeighbors,
    items: ArrayView2<f64>,
    entities: ArrayView2<f64>,
    relations: ArrayView2<f64>,
    k: usize,
    depth: usize,
    block_rows: usize,
) -> Result<SemanticGraph> {
    if k == 0 {
        return Err(Error::Config("kNN k must be at least 1".into()));
    }
    let reps = relation_aware_propagate(kg, items, entities, relations, depth)?;
    let unit = unit_rows(reps.view());
    let n = unit.nrows();
    let block = block_rows.max(1);
    let mut edges = Vec::with_capacity(n * k.min(n.saturating_sub(1)));
    for start in (0..n).step_by(block) {
        let end = (start + block).min(n);
        let sims = unit.slice(s![start..end, ..]).dot(&unit.t());
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..end - start)
            .into_par_iter()
            .map(|b| {
                let i = start + b;
                let row = sims.row(b);
                top_k_columns(row, i, k)
                    .into_iter()
                    .map(|j| (i, j, row[j].clamp(-1.0, 1.0)))
                    .filter(|&(_, _, w)| w > 0.0)
                    .collect()
            })
            .collect();
        edges.extend(rows.into_iter().flatten());
    }
    let adjacency = SparseAdjacency::build_csr(&edges, n, n)?.sym_degree_normalize()?;
    Ok(SemanticGraph {
        adjacency,
        k,
        built_from_epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::KnowledgeGraph;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cosine_cases() {
        let a = array![1.0, 2.0, -0.5];
        assert_abs_diff_eq!(cosine_sim(a.view(), a.view()), 1.0, epsilon = 1e-15);
        assert_eq!(cosine_sim(array![1.0, 0.0].view(), array![0.0, 3.0].view()), 0.0);
        assert_eq!(cosine_sim(array![1.0, 0.0].view(), array![-1.0, 0.0].view()), -1.0);
        assert_eq!(cosine_sim(array![0.0, 0.0].view(), array![0.0, 0.0].view()), 0.0);
    }

    #[test]
    fn knn_keeps_largest() {
        let sim = array![
            [1.0, 0.9, 0.5, 0.1],
            [0.9, 1.0, 0.2, 0.3],
            [0.5, 0.2, 1.0, 0.4],
            [0.1, 0.3, 0.4, 1.0]
        ];
        let a = knn_sparsify(sim.view(), 2).unwrap();
        assert_eq!(a.row(0).collect::<Vec<_>>(), vec![(1, 0.9), (2, 0.5)]);
        assert!(a.triplets().all(|(i, j, _)| i != j));
    }

    #[test]
    fn knn_tie_break_smaller_column() {
        let sim = array![[1.0, 0.5, 0.5, 0.5], [0.0; 4], [0.0; 4], [0.0; 4]];
        let a = knn_sparsify(sim.view(), 2).unwrap();
        let cols: Vec<usize> = a.row(0).map(|(c, _)| c).collect();
        assert_eq!(cols, vec![1, 2]);
    }

    #[test]
    fn knn_large_k_keeps_all_off_diagonal() {
        let sim = array![[1.0, 0.2, 0.3], [0.2, 1.0, 0.4], [0.3, 0.4, 1.0]];
        let a = knn_sparsify(sim.view(), 5).unwrap();
        assert_eq!(a.nnz(), 6);
    }

    #[test]
    fn propagate_zero_depth_identity() {
        let kg = KgNeighbors::new(&KnowledgeGraph::new(vec![(0, 0, 2)]), 3).unwrap();
        let items = array![[1.0, 2.0], [3.0, 4.0]];
        let ents = array![[5.0, 6.0]];
        let rel = array![[1.0, 1.0]];
        let out = relation_aware_propagate(&kg, items.view(), ents.view(), rel.view(), 0).unwrap();
        assert_eq!(out, items);
    }

    #[test]
    fn propagate_single_triple_unit_relation() {
        // item 0 -- r --> entity 2; item 1 has no triples and carries forward.
        let kg = KgNeighbors::new(&KnowledgeGraph::new(vec![(0, 0, 2)]), 3).unwrap();
        let items = array![[1.0, 2.0], [3.0, 4.0]];
        let ents = array![[5.0, -6.0]];
        let rel = array![[1.0, 1.0]];
        let out = relation_aware_propagate(&kg, items.view(), ents.view(), rel.view(), 1).unwrap();
        assert_eq!(out.row(0), ents.row(0));
        assert_eq!(out.row(1), items.row(1));
    }

    #[test]
    fn propagate_dimension_mismatch() {
        let kg = KgNeighbors::new(&KnowledgeGraph::new(vec![(0, 0, 1)]), 2).unwrap();
        let r = relation_aware_propagate(
            &kg,
            Array2::zeros((1, 2)).view(),
            Array2::zeros((1, 3)).view(),
            Array2::zeros((1, 2)).view(),
            1,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
