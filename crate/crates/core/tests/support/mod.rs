//! Dense and brute-force references plus the oracle and invariant checks
//! shared by the integration tests and the acceptance suite. Each check
//! panics on the first violation.

#![allow(dead_code)]

use mcclk::contrastive::{global_contrastive_loss, local_contrastive_loss};
use mcclk::encoders::{collaborative_encode, relation_attention, structural_attention, CollabGraph, KgNeighbors};
use mcclk::eval::{auc, recall_at_k};
use mcclk::graph::SparseAdjacency;
use mcclk::ingest::KnowledgeGraph;
use mcclk::rng::Rng;
use mcclk::semantic::build_semantic_graph;
use ndarray::{Array1, Array2};
use rand::Rng as _;

pub fn random_table(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Dense relation-aware propagation: each node averages `r ⊙ v` over its
/// neighbors in both triple directions; isolated nodes keep their value.
fn dense_propagate(triples: &[(usize, usize, usize)], nodes: &Array2<f64>, rels: &Array2<f64>, depth: usize) -> Array2<f64> {
    let (n, d) = nodes.dim();
    let mut nbrs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &(h, r, t) in triples {
        nbrs[h].push((t, r));
        nbrs[t].push((h, r));
    }
    for list in nbrs.iter_mut() {
        list.sort_unstable();
    }
    let mut cur = nodes.clone();
    for _ in 0..depth {
        let mut next = cur.clone();
        for v in 0..n {
            if nbrs[v].is_empty() {
                continue;
            }
            for c in 0..d {
                let mut s = 0.0;
                for &(m, r) in &nbrs[v] {
                    s += rels[[r, c]] * cur[[m, c]];
                }
                next[[v, c]] = s / nbrs[v].len() as f64;
            }
        }
        cur = next;
    }
    cur
}

/// Dense cosine, exhaustive top-k over all other items, positive entries
/// only, then `D^-1/2 S D^-1/2` with row-sum degrees.
fn dense_semantic(reps: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = reps.nrows();
    let norm: Vec<f64> = reps.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut cos = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if norm[i] > 0.0 && norm[j] > 0.0 {
                cos[[i, j]] = reps.row(i).dot(&reps.row(j)) / (norm[i] * norm[j]);
            }
        }
    }
    let mut s = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| cos[[i, b]].total_cmp(&cos[[i, a]]).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            if cos[[i, j]] > 0.0 {
                s[[i, j]] = cos[[i, j]];
            }
        }
    }
    let deg: Vec<f64> = s.rows().into_iter().map(|r| r.sum()).collect();
    let inv: Vec<f64> = deg.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 }).collect();
    Array2::from_shape_fn((n, n), |(i, j)| inv[i] * s[[i, j]] * inv[j])
}

pub fn semantic_graph_matches_brute_force_on_five_items() {
    let n_items = 5;
    let n_extra = 4;
    let n_rel = 3;
    let d = 6;
    let triples = vec![
        (0, 0, 5),
        (1, 0, 5),
        (1, 1, 6),
        (2, 1, 6),
        (2, 2, 7),
        (3, 2, 7),
        (3, 0, 8),
        (4, 1, 8),
        (0, 2, 1),
        (5, 1, 6),
    ];
    let kg = KnowledgeGraph::new(triples.clone());
    let n_nodes = n_items + n_extra;
    let nbrs = KgNeighbors::new(&kg, n_nodes).unwrap();
    for seed in 0..20u64 {
        let mut rng = Rng::new(seed);
        let nodes = random_table(n_nodes, d, &mut rng);
        let rels = random_table(n_rel, d, &mut rng);
        for depth in 0..=3 {
            for k in 1..=4 {
                let items = nodes.slice(ndarray::s![..n_items, ..]);
                let extra = nodes.slice(ndarray::s![n_items.., ..]);
                let got = build_semantic_graph(&nbrs, items, extra, rels.view(), k, depth, 2)
                    .unwrap()
                    .adjacency
                    .to_dense();
                let reps = dense_propagate(&triples, &nodes, &rels, depth);
                let want = dense_semantic(&reps.slice(ndarray::s![..n_items, ..]).to_owned(), k);
                for i in 0..n_items {
                    for j in 0..n_items {
                        assert_eq!(got[[i, j]] != 0.0, want[[i, j]] != 0.0, "pattern seed {seed} depth {depth} k {k} ({i},{j})");
                        assert!(
                            (got[[i, j]] - want[[i, j]]).abs() <= 1e-12,
                            "seed {seed} depth {depth} k {k} ({i},{j}): {} vs {}",
                            got[[i, j]],
                            want[[i, j]]
                        );
                    }
                }
            }
        }
    }
}

/// Layer sum of `Â^l E` over the full `(M+N)` square graph with
/// `Â = D^-1/2 A D^-1/2`.
fn dense_collaborative(n_users: usize, n_items: usize, positives: &[(usize, usize)], emb: &Array2<f64>, depth: usize) -> Array2<f64> {
    let n = n_users + n_items;
    let mut a = Array2::<f64>::zeros((n, n));
    for &(u, i) in positives {
        a[[u, n_users + i]] = 1.0;
        a[[n_users + i, u]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    let norm = Array2::from_shape_fn((n, n), |(x, y)| {
        if a[[x, y]] == 0.0 {
            0.0
        } else {
            a[[x, y]] / (deg[x] * deg[y]).sqrt()
        }
    });
    let mut layer = emb.clone();
    let mut sum = emb.clone();
    for _ in 0..depth {
        layer = norm.dot(&layer);
        sum += &layer;
    }
    sum
}

pub fn collaborative_encoder_matches_dense_reference() {
    for seed in 0..30u64 {
        let mut rng = Rng::new(100 + seed);
        let n_users = rng.gen_range(1..=8);
        let n_items = rng.gen_range(1..=(20 - n_users).min(12));
        let mut positives = Vec::new();
        for u in 0..n_users {
            for i in 0..n_items {
                if rng.gen_bool(0.35) {
                    positives.push((u, i));
                }
            }
        }
        let d = rng.gen_range(1..=5);
        let emb = random_table(n_users + n_items, d, &mut rng);
        let graph = CollabGraph::new(n_users, n_items, &positives).unwrap();
        for depth in 0..=4 {
            let (zu, zi) = collaborative_encode(
                &graph,
                emb.slice(ndarray::s![..n_users, ..]),
                emb.slice(ndarray::s![n_users.., ..]),
                depth,
            )
            .unwrap();
            let want = dense_collaborative(n_users, n_items, &positives, &emb, depth);
            for r in 0..n_users + n_items {
                for c in 0..d {
                    let got = if r < n_users { zu[[r, c]] } else { zi[[r - n_users, c]] };
                    assert!((got - want[[r, c]]).abs() <= 1e-10, "seed {seed} depth {depth} row {r}: {got} vs {}", want[[r, c]]);
                }
            }
        }
    }
}

fn pair_count_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn auc_matches_pair_counting_on_random_sets() {
    let mut rng = Rng::new(9);
    for _ in 0..200 {
        let n = rng.gen_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores so that ties are common.
        let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..8) as f64) * 0.25).collect();
        let got = auc(&labels, &scores).unwrap();
        assert!((got - pair_count_auc(&labels, &scores)).abs() < 1e-12);
    }
}

fn random_kg(n_nodes: usize, n_rel: usize, n_triples: usize, rng: &mut Rng) -> KnowledgeGraph {
    let triples: Vec<_> = (0..n_triples)
        .map(|_| (rng.gen_range(0..n_nodes), rng.gen_range(0..n_rel), rng.gen_range(0..n_nodes)))
        .filter(|&(h, _, t)| h != t)
        .collect();
    let mut kg = KnowledgeGraph::new(triples);
    kg.n_entities = n_nodes;
    kg.n_relations = n_rel;
    kg
}

pub fn attention_weights_sum_to_one() {
    for seed in 0..25u64 {
        let mut rng = Rng::new(seed);
        let n = rng.gen_range(2..30);
        let kg = random_kg(n, 4, 3 * n, &mut rng);
        let nbrs = KgNeighbors::new(&kg, n).unwrap();
        // Large magnitudes push the softmax toward saturation.
        let scale = [0.1, 1.0, 10.0][seed as usize % 3];
        let nodes = random_table(n, 8, &mut rng) * scale;
        let rels = random_table(4, 8, &mut rng) * scale;
        let att = structural_attention(&nbrs, nodes.view(), rels.view());
        for v in 0..n {
            let total: f64 = nbrs.edge_range(v).map(|e| att.edge[e]).sum::<f64>() + att.self_weight[v];
            assert!((total - 1.0).abs() <= 1e-12, "node {v}: {total}");
            assert!(nbrs.edge_range(v).all(|e| att.edge[e] >= 0.0));
        }

        let query = nodes.row(0);
        let pairs: Vec<_> = (0..n).map(|m| (rels.row(m % 4), nodes.row(m))).collect();
        let w = relation_attention(query, &pairs).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

pub fn contrastive_losses_strictly_positive() {
    for seed in 0..50u64 {
        let mut rng = Rng::new(seed);
        let n = rng.gen_range(2..20);
        let d = rng.gen_range(2..10);
        let tau = rng.gen_range(0.05..2.0);
        let a = random_table(n, d, &mut rng);
        let b = random_table(n, d, &mut rng);
        let c = random_table(n + 1, d, &mut rng);
        let e = random_table(n + 1, d, &mut rng);
        assert!(local_contrastive_loss(a.view(), b.view(), tau).unwrap() > 0.0);
        // Partners equal to anchors is the most favorable pairing.
        assert!(local_contrastive_loss(a.view(), a.view(), tau).unwrap() > 0.0);
        assert!(global_contrastive_loss(a.view(), b.view(), c.view(), e.view(), tau).unwrap() > 0.0);
    }
}

pub fn identical_embeddings_give_log_two_n_minus_one() {
    for n in [2usize, 3, 7, 16, 50] {
        for tau in [0.1, 0.8, 3.0] {
            let row = Array1::from(vec![0.3, -1.2, 0.5, 2.0]);
            let z = Array2::from_shape_fn((n, 4), |(_, c)| row[c]);
            let closed = ((2 * n - 1) as f64).ln();
            let local = local_contrastive_loss(z.view(), z.view(), tau).unwrap();
            assert!((local - closed).abs() <= 1e-10, "n={n} tau={tau}: {local} vs {closed}");
            // Item and user halves each average both anchorings.
            let global = global_contrastive_loss(z.view(), z.view(), z.view(), z.view(), tau).unwrap();
            assert!((global - 2.0 * closed).abs() <= 1e-10, "n={n} tau={tau}: {global}");
        }
    }
}

pub fn recall_monotone_in_k() {
    for seed in 0..20u64 {
        let mut rng = Rng::new(seed);
        let n_users = 15;
        let n_items = 30;
        let mut train = vec![Vec::new(); n_users];
        let mut test = vec![Vec::new(); n_users];
        for u in 0..n_users {
            for i in 0..n_items {
                match rng.gen_range(0..10) {
                    0 | 1 => train[u].push(i),
                    2 => test[u].push(i),
                    _ => {}
                }
            }
        }
        let scores = random_table(n_users, n_items, &mut rng).mapv(|x| (x * 4.0).round());
        let mut last = 0.0;
        for k in 1..=n_items {
            let r = recall_at_k(n_items, &train, &test, k, |u| scores.row(u).to_vec()).recall;
            assert!(r >= last, "k={k}: {r} < {last}");
            last = r;
        }
        let all_users = test.iter().filter(|t| !t.is_empty()).count();
        if all_users > 0 {
            assert!((last - 1.0).abs() < 1e-12);
        }
    }
}

pub fn normalized_adjacency_finite_with_isolated_nodes() {
    // Nodes 2 and 4 have no edges at all; node 3 only receives one.
    let edges = vec![(0, 1, 1.0), (1, 0, 1.0), (0, 3, 0.5), (5, 1, 2.0)];
    let adj = SparseAdjacency::build_csr(&edges, 6, 6).unwrap();
    let norm = adj.sym_degree_normalize().unwrap();
    assert!(norm.values().iter().all(|v| v.is_finite()));
    let out = norm.propagate(Array2::<f64>::ones((6, 3)).view());
    assert!(out.iter().all(|v| v.is_finite()));
    for r in [2, 3, 4] {
        assert!(out.row(r).iter().all(|&v| v == 0.0));
    }

    // Users and items without any interaction.
    let graph = CollabGraph::new(4, 5, &[(0, 0), (0, 2), (1, 2)]).unwrap();
    let mut rng = Rng::new(3);
    let (zu, zi) = collaborative_encode(&graph, random_table(4, 3, &mut rng).view(), random_table(5, 3, &mut rng).view(), 3).unwrap();
    assert!(zu.iter().chain(zi.iter()).all(|v| v.is_finite()));

    // An item with a zero embedding and no graph neighbors.
    let kg = KnowledgeGraph::new(vec![(0, 0, 4), (1, 0, 4), (2, 1, 5)]);
    let nbrs = KgNeighbors::new(&kg, 6).unwrap();
    let mut items = random_table(4, 3, &mut rng);
    items.row_mut(3).fill(0.0);
    let extra = random_table(2, 3, &mut rng);
    let rels = random_table(2, 3, &mut rng);
    let g = build_semantic_graph(&nbrs, items.view(), extra.view(), rels.view(), 2, 2, 8).unwrap();
    assert!(g.adjacency.values().iter().all(|v| v.is_finite()));
    assert_eq!(g.adjacency.row_len(3), 0);
}
