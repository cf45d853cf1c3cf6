//! View encoders: collaborative (user-item LightGCN), semantic (item-item
//! LightGCN over the kNN graph) and structural (relation-aware attention over
//! the user-item-entity graph). Each forward pass has a matching backward
//! pass that maps output gradients onto the input tables.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::ingest::KnowledgeGraph;

/// Symmetric-normalized bipartite interaction graph, weight `1/sqrt(|N_u| |N_i|)`.
#[derive(Debug, Clone)]
pub struct CollabGraph {
    user_item: SparseAdjacency,
    item_user: SparseAdjacency,
}

impl CollabGraph {
    pub fn new(n_users: usize, n_items: usize, positives: &[(usize, usize)]) -> Result<Self> {
        let mut user_deg = vec![0usize; n_users];
        let mut item_deg = vec![0usize; n_items];
        for &(u, i) in positives {
            if u >= n_users || i >= n_items {
                return Err(Error::IndexOutOfBounds {
                    row: u,
                    col: i,
                    n_rows: n_users,
                    n_cols: n_items,
                });
            }
            user_deg[u] += 1;
            item_deg[i] += 1;
        }
        let edges: Vec<_> = positives
            .iter()
            .map(|&(u, i)| (u, i, 1.0 / ((user_deg[u] * item_deg[i]) as f64).sqrt()))
            .collect();
        let user_item = SparseAdjacency::build_csr(&edges, n_users, n_items)?;
        let item_user = user_item.transpose();
        Ok(CollabGraph { user_item, item_user })
    }

    pub fn user_item(&self) -> &SparseAdjacency {
        &self.user_item
    }
}

fn check_dims(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `K` rounds of bipartite propagation followed by the layerwise sum.
pub fn collaborative_encode(
    graph: &CollabGraph,
    users: ArrayView2<f64>,
    items: ArrayView2<f64>,
    depth: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_dims("collaborative users", users.nrows(), graph.user_item.n_rows())?;
    check_dims("collaborative items", items.nrows(), graph.user_item.n_cols())?;
    check_dims("collaborative d", users.ncols(), items.ncols())?;
    let mut z_u = users.to_owned();
    let mut z_i = items.to_owned();
    let mut e_u = users.to_owned();
    let mut e_i = items.to_owned();
    for _ in 0..depth {
        let next_u = graph.user_item.propagate(e_i.view());
        let next_i = graph.item_user.propagate(e_u.view());
        z_u += &next_u;
        z_i += &next_i;
        e_u = next_u;
        e_i = next_i;
    }
    Ok((z_u, z_i))
}

/// The propagation operator is symmetric, so the backward pass is the
/// forward pass applied to the output gradients.
pub fn collaborative_backward(
    graph: &CollabGraph,
    grad_zu: ArrayView2<f64>,
    grad_zi: ArrayView2<f64>,
    depth: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    collaborative_encode(graph, grad_zu, grad_zi, depth)
}

/// `L` rounds of `e <- S e` over an item-item adjacency, then the layerwise sum.
pub fn semantic_encode(adj: &SparseAdjacency, items: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
    check_dims("semantic items", items.nrows(), adj.n_cols())?;
    check_dims("semantic square", adj.n_rows(), adj.n_cols())?;
    let mut z = items.to_owned();
    let mut e = items.to_owned();
    for _ in 0..depth {
        e = adj.propagate(e.view());
        z += &e;
    }
    Ok(z)
}

/// Backward of [`semantic_encode`]; takes the transposed adjacency.
pub fn semantic_backward(adj_t: &SparseAdjacency, grad_z: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
    semantic_encode(adj_t, grad_z, depth)
}

/// Bidirectional knowledge-graph neighborhoods over the unified node space.
///
/// Every triple `(h, r, t)` gives `h` the neighbor `(r, t)` and `t` the
/// neighbor `(r, h)`.
#[derive(Debug, Clone)]
pub struct KgNeighbors {
    offsets: Vec<usize>,
    relations: Vec<usize>,
    neighbors: Vec<usize>,
    n_relations: usize,
}

impl KgNeighbors {
    pub fn new(kg: &KnowledgeGraph, n_nodes: usize) -> Result<Self> {
        let mut edges: Vec<(usize, usize, usize)> = Vec::with_capacity(2 * kg.triples.len());
        for &(h, r, t) in &kg.triples {
            if h >= n_nodes || t >= n_nodes {
                return Err(Error::IndexOutOfBounds {
                    row: h,
                    col: t,
                    n_rows: n_nodes,
                    n_cols: n_nodes,
                });
            }
            edges.push((h, t, r));
            edges.push((t, h, r));
        }
        edges.sort_unstable();
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(n, _, _) in &edges {
            offsets[n + 1] += 1;
        }
        for n in 0..n_nodes {
            offsets[n + 1] += offsets[n];
        }
        Ok(KgNeighbors {
            offsets,
            relations: edges.iter().map(|e| e.2).collect(),
            neighbors: edges.iter().map(|e| e.1).collect(),
            n_relations: kg.n_relations,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Raises the relation count to `n` (relation ids unused by any triple).
    pub fn widen_relations(&mut self, n: usize) {
        self.n_relations = self.n_relations.max(n);
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// `(relation, neighbor)` of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.relations[e], self.neighbors[e])
    }
}

/// Mean aggregation of a user's training items, weight `1/|N_u|`.
#[derive(Debug, Clone)]
pub struct UserItemMean {
    adj: SparseAdjacency,
    adj_t: SparseAdjacency,
}

impl UserItemMean {
    pub fn new(n_users: usize, n_items: usize, positives: &[(usize, usize)]) -> Result<Self> {
        let mut deg = vec![0usize; n_users];
        for &(u, _) in positives {
            if u < n_users {
                deg[u] += 1;
            }
        }
        let edges: Vec<_> = positives
            .iter()
            .map(|&(u, i)| (u, i, 1.0 / deg[u] as f64))
            .collect();
        let adj = SparseAdjacency::build_csr(&edges, n_users, n_items)?;
        let adj_t = adj.transpose();
        Ok(UserItemMean { adj, adj_t })
    }
}

/// Softmax attention over logits `(e_x || e_r)^T (e_v || e_r)`.
///
/// `neighbors` holds `(e_r, e_v)` pairs; include the query itself (with its
/// own relation vector, e.g. zeros) when the neighborhood should contain it.
pub fn relation_attention(
    query: ArrayView1<f64>,
    neighbors: &[(ArrayView1<f64>, ArrayView1<f64>)],
) -> Result<Vec<f64>> {
    if neighbors.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let mut logits = Vec::with_capacity(neighbors.len());
    for (rel, nbr) in neighbors {
        check_dims("attention query/neighbor", query.len(), nbr.len())?;
        logits.push(query.dot(nbr) + rel.dot(rel));
    }
    softmax_in_place(&mut logits);
    Ok(logits)
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// Attention weights of every KG edge plus the self term of each node,
/// computed once from layer-0 embeddings. The self term uses a zero relation
/// vector and carries no message.
#[derive(Debug, Clone)]
pub struct Attention {
    pub edge: Vec<f64>,
    pub self_weight: Vec<f64>,
}

pub fn structural_attention(kg: &KgNeighbors, nodes: ArrayView2<f64>, relations: ArrayView2<f64>) -> Attention {
    let mut edge = vec![0.0; kg.n_edges()];
    let mut self_weight = vec![1.0; kg.n_nodes()];
    let rel_sq: Vec<f64> = relations.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut logits = Vec::new();
    for n in 0..kg.n_nodes() {
        let range = kg.edge_range(n);
        if range.is_empty() {
            continue;
        }
        let x = nodes.row(n);
        logits.clear();
        for e in range.clone() {
            let (r, m) = kg.edge(e);
            logits.push(x.dot(&nodes.row(m)) + rel_sq[r]);
        }
        logits.push(x.dot(&x));
        softmax_in_place(&mut logits);
        edge[range].copy_from_slice(&logits[..logits.len() - 1]);
        self_weight[n] = logits[logits.len() - 1];
    }
    Attention { edge, self_weight }
}

/// Intermediate values kept for [`structural_backward`].
#[derive(Debug, Clone)]
pub struct StructuralCache {
    pub layers: Vec<Array2<f64>>,
    pub attention: Attention,
}

/// One relational message-passing layer over all nodes.
fn structural_layer(
    kg: &KgNeighbors,
    attention: &[f64],
    nodes: ArrayView2<f64>,
    relations: ArrayView2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros(nodes.raw_dim());
    for n in 0..kg.n_nodes() {
        let deg = kg.degree(n);
        if deg == 0 {
            continue;
        }
        let inv = 1.0 / deg as f64;
        let mut row = out.row_mut(n);
        for e in kg.edge_range(n) {
            let (r, m) = kg.edge(e);
            let c = attention[e] * inv;
            Zip::from(&mut row)
                .and(relations.row(r))
                .and(nodes.row(m))
                .for_each(|o, &rv, &mv| *o += c * rv * mv);
        }
    }
    out
}

/// Path-aware encoder: users average their items, nodes aggregate
/// attention-weighted relational messages; outputs are layerwise sums.
pub fn structural_encode(
    user_items: &UserItemMean,
    kg: &KgNeighbors,
    users: ArrayView2<f64>,
    nodes: ArrayView2<f64>,
    relations: ArrayView2<f64>,
    depth: usize,
) -> Result<(Array2<f64>, Array2<f64>, StructuralCache)> {
    check_dims("structural users", users.nrows(), user_items.adj.n_rows())?;
    check_dims("structural nodes", nodes.nrows(), kg.n_nodes())?;
    check_dims("structural relations", relations.nrows(), kg.n_relations())?;
    check_dims("structural d", users.ncols(), nodes.ncols())?;
    check_dims("structural d", relations.ncols(), nodes.ncols())?;
    if user_items.adj.n_cols() > nodes.nrows() {
        return Err(Error::DimensionMismatch("more items than nodes".into()));
    }
    let n_items = user_items.adj.n_cols();

    let attention = structural_attention(kg, nodes, relations);
    let mut z_u = users.to_owned();
    let mut z_n = nodes.to_owned();
    let mut layers = vec![nodes.to_owned()];
    for _ in 0..depth {
        let prev = layers.last().unwrap();
        let next_u = user_items.adj.propagate(prev.slice(ndarray::s![..n_items, ..]));
        let next_n = structural_layer(kg, &attention.edge, prev.view(), relations);
        z_u += &next_u;
        z_n += &next_n;
        layers.push(next_n);
    }
    Ok((z_u, z_n, StructuralCache { layers, attention }))
}

/// Gradients of the structural outputs with respect to the user, node and
/// relation tables, including the path through the attention logits.
pub fn structural_backward(
    user_items: &UserItemMean,
    kg: &KgNeighbors,
    relations: ArrayView2<f64>,
    cache: &StructuralCache,
    grad_zu: ArrayView2<f64>,
    grad_zn: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let depth = cache.layers.len() - 1;
    let n_items = user_items.adj.n_cols();
    let mut grad_rel = Array2::<f64>::zeros(relations.raw_dim());
    let mut grad_attn = vec![0.0; kg.n_edges()];

    // Every user layer feeds only z_u, so its gradient is grad_zu; the item
    // rows of every node layer below the top receive the user-mean transpose.
    let from_users = user_items.adj_t.propagate(grad_zu);

    let mut grad_next = grad_zn.to_owned();
    for l in (0..depth).rev() {
        let x = &cache.layers[l];
        let mut grad_cur = grad_zn.to_owned();
        {
            let mut items = grad_cur.slice_mut(ndarray::s![..n_items, ..]);
            items += &from_users;
        }
        for n in 0..kg.n_nodes() {
            let deg = kg.degree(n);
            if deg == 0 {
                continue;
            }
            let inv = 1.0 / deg as f64;
            let g_out = grad_next.row(n);
            for e in kg.edge_range(n) {
                let (r, m) = kg.edge(e);
                let c = cache.attention.edge[e] * inv;
                let rel = relations.row(r);
                let xm = x.row(m);
                let mut dot = 0.0;
                for k in 0..g_out.len() {
                    let msg = rel[k] * xm[k];
                    dot += msg * g_out[k];
                    grad_cur[[m, k]] += c * rel[k] * g_out[k];
                    grad_rel[[r, k]] += c * xm[k] * g_out[k];
                }
                grad_attn[e] += inv * dot;
            }
        }
        grad_next = grad_cur;
    }
    let mut grad_nodes = grad_next;

    // Softmax and logit backward. Logits use layer-0 embeddings:
    // edge logit x_n . x_m + |r|^2, self logit x_n . x_n.
    let x0 = &cache.layers[0];
    for n in 0..kg.n_nodes() {
        let range = kg.edge_range(n);
        if range.is_empty() {
            continue;
        }
        let weighted: f64 = range.clone().map(|e| cache.attention.edge[e] * grad_attn[e]).sum();
        for e in range.clone() {
            let (r, m) = kg.edge(e);
            let g_logit = cache.attention.edge[e] * (grad_attn[e] - weighted);
            if g_logit == 0.0 {
                continue;
            }
            for k in 0..x0.ncols() {
                grad_nodes[[n, k]] += g_logit * x0[[m, k]];
                grad_nodes[[m, k]] += g_logit * x0[[n, k]];
                grad_rel[[r, k]] += 2.0 * g_logit * relations[[r, k]];
            }
        }
        let g_self = cache.attention.self_weight[n] * (0.0 - weighted);
        for k in 0..x0.ncols() {
            grad_nodes[[n, k]] += 2.0 * g_self * x0[[n, k]];
        }
    }

    (grad_zu.to_owned(), grad_nodes, grad_rel)
}
