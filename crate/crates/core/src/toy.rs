//! Small built-in instances: the gradient-check graph and a seeded synthetic
//! dataset generator with planted group structure.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::config::ModelConfig;
use crate::dataset::{Dataset, INTERACTIONS_FILE, KG_FILE};
use crate::error::{Error, Result};
use crate::ingest::{Interaction, InteractionGraph, KnowledgeGraph};
use crate::objective::{grad_check, GradientReport, Graphs, LossWeights, Triple};
use crate::params::{Params, Shape};
use crate::rng::Rng;

/// The gradient-check instance: 4 users, 5 items, 6 further entities,
/// 3 relations, d = 8.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub shape: Shape,
    pub positives: Vec<(usize, usize)>,
    pub kg: KnowledgeGraph,
    pub batch: Vec<Triple>,
    pub config: ModelConfig,
}

pub fn gradcheck_instance() -> ToyInstance {
    let shape = Shape {
        dim: 8,
        n_users: 4,
        n_items: 5,
        n_extra_entities: 6,
        n_relations: 3,
    };
    let positives = vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 0), (3, 3), (3, 4)];
    // Items are nodes 0..5, entities 5..11.
    let kg = KnowledgeGraph::new(vec![
        (0, 0, 5),
        (1, 0, 5),
        (1, 1, 6),
        (2, 1, 6),
        (2, 2, 7),
        (3, 2, 7),
        (3, 0, 8),
        (4, 2, 8),
        (8, 1, 9),
        (9, 2, 10),
        (5, 1, 10),
        (4, 1, 9),
    ]);
    let batch = vec![(0, 0, 2), (0, 1, 3), (1, 2, 4), (2, 3, 0), (3, 4, 1), (3, 0, 2)];
    let config = ModelConfig {
        dim: 8,
        collab_depth: 2,
        kg_depth: 2,
        semantic_depth: 2,
        structural_depth: 2,
        knn_k: 2,
        tau: 0.7,
        l2: 1e-2,
        seed: 7,
        ..ModelConfig::default()
    };
    ToyInstance {
        shape,
        positives,
        kg,
        batch,
        config,
    }
}

impl ToyInstance {
    /// Graphs with the semantic graph built from `params`.
    pub fn graphs(&self, params: &Params) -> Result<Graphs> {
        let mut g = Graphs::new(self.shape, &self.positives, &self.kg)?;
        g.rebuild_semantic(params, &self.config, 0)?;
        Ok(g)
    }

    pub fn params(&self) -> Params {
        Params::init(self.shape, &mut Rng::new(self.config.seed))
    }

    /// BPR only, local only, global only, and the full weighted objective.
    pub fn components(&self) -> Vec<(&'static str, LossWeights)> {
        let zero = LossWeights {
            bpr: 0.0,
            local: 0.0,
            global: 0.0,
            l2: 0.0,
        };
        vec![
            ("bpr", LossWeights { bpr: 1.0, ..zero }),
            ("local", LossWeights { local: 1.0, ..zero }),
            ("global", LossWeights { global: 1.0, ..zero }),
            ("combined", LossWeights::from_config(&self.config)),
        ]
    }
}

/// Runs every loss component of the built-in instance through the
/// central-difference check.
pub fn check_toy_gradients(eps: f64, tolerance: f64) -> Result<GradientReport> {
    let toy = gradcheck_instance();
    let params = toy.params();
    let graphs = toy.graphs(&params)?;
    grad_check(&graphs, &params, &toy.batch, &toy.config, &toy.components(), eps, tolerance)
}

/// Generator settings for [`synthetic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub n_extra_entities: usize,
    pub n_relations: usize,
    pub positives_per_user: usize,
    /// Random attribute triples per item on top of the group triple.
    pub noise_triples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 60,
            n_items: 40,
            n_groups: 4,
            n_extra_entities: 12,
            n_relations: 3,
            positives_per_user: 5,
            noise_triples: 1,
            seed: 1,
        }
    }
}

/// Users and items fall into `n_groups` groups (id modulo the group count).
/// Positives come from the user's own group and negatives from other groups,
/// so the labels are separable. Item `i` is linked by relation 0 to entity
/// `N + group(i)`; noise triples use the remaining relations and entities.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub graph: InteractionGraph,
    pub kg: KnowledgeGraph,
}

pub fn synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    let g = spec.n_groups;
    if g < 2 || spec.n_extra_entities < g || spec.n_relations < 1 || spec.n_items < 2 * g {
        return Err(Error::Config(format!("synthetic spec too small: {spec:?}")));
    }
    let mut rng = Rng::new(spec.seed);
    let n = spec.n_items;
    let mut records = Vec::new();
    for u in 0..spec.n_users {
        let own: Vec<usize> = (0..n).filter(|i| i % g == u % g).collect();
        let other: Vec<usize> = (0..n).filter(|i| i % g != u % g).collect();
        let k = spec.positives_per_user.min(own.len()).min(other.len());
        for &i in own.choose_multiple(&mut rng, k) {
            records.push(Interaction { user: u, item: i, label: true });
        }
        for &i in other.choose_multiple(&mut rng, k) {
            records.push(Interaction { user: u, item: i, label: false });
        }
    }
    let graph = InteractionGraph::from_labeled(&records, spec.n_users, n)?;

    let mut triples: Vec<(usize, usize, usize)> = (0..n).map(|i| (i, 0, n + i % g)).collect();
    let spare = spec.n_extra_entities - g;
    if spec.n_relations > 1 && spare > 0 {
        for i in 0..n {
            for _ in 0..spec.noise_triples {
                let r = rng.gen_range(1..spec.n_relations);
                let e = n + g + rng.gen_range(0..spare);
                triples.push((i, r, e));
            }
        }
    }
    // Pin the vocabulary sizes with the last ids if the noise missed them.
    let mut kg = KnowledgeGraph::new(triples);
    kg.n_entities = n + spec.n_extra_entities;
    kg.n_relations = spec.n_relations;
    Ok(Synthetic { graph, kg })
}

impl Synthetic {
    /// Writes a canonical data directory (interactions and graph only).
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::dataset::write_atomic(&dir.join(INTERACTIONS_FILE), self.graph.to_text().as_bytes())?;
        crate::dataset::write_atomic(&dir.join(KG_FILE), self.kg.to_text().as_bytes())
    }

    pub fn dataset(&self, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
        Dataset::from_parts(self.graph.clone(), self.kg.clone(), None, ratios, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_instance_is_small() {
        let t = gradcheck_instance();
        let p = t.params();
        assert!(p.n_params() <= 1000, "{}", p.n_params());
        assert_eq!(t.kg.n_entities, 11);
        assert_eq!(t.kg.n_relations, 3);
        for &(u, _, j) in &t.batch {
            assert!(!t.positives.contains(&(u, j)));
        }
    }

    #[test]
    fn synthetic_is_balanced_and_separable() {
        let s = synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(s.graph.positives.len(), s.graph.negatives.len());
        assert!(s.graph.positives.iter().all(|&(u, i)| u % 4 == i % 4));
        assert!(s.graph.negatives.iter().all(|&(u, i)| u % 4 != i % 4));
        assert_eq!(s.kg.n_entities, 52);
        let again = synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(s.graph, again.graph);
        assert_eq!(s.kg, again.kg);
    }
}
