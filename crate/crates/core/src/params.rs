//! Trainable parameters: embedding tables and the two projection heads.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};

use crate::rng::Rng;

/// One-hidden-layer MLP `W2 · elu(W1 · z + b1) + b2` with square weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ProjectionHead {
    pub fn zeros(d: usize) -> Self {
        ProjectionHead {
            w1: Array2::zeros((d, d)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
        }
    }

    pub fn identity(d: usize) -> Self {
        ProjectionHead {
            w1: Array2::eye(d),
            b1: Array1::zeros(d),
            w2: Array2::eye(d),
            b2: Array1::zeros(d),
        }
    }

    /// Xavier-initialized weights, zero biases.
    pub fn init(d: usize, rng: &mut Rng) -> Self {
        ProjectionHead {
            w1: xavier_init(d, d, rng),
            b1: Array1::zeros(d),
            w2: xavier_init(d, d, rng),
            b2: Array1::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.b1.len()
    }
}

/// Embedding tables.
///
/// Items and knowledge-graph entities share one node id space: node `n < N`
/// is item `n`, node `n >= N` is row `n - N` of `entities`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
}

impl EmbeddingState {
    pub fn dim(&self) -> usize {
        self.users.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.users.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.items.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.items.nrows() + self.entities.nrows()
    }

    /// Items stacked on top of entities.
    pub fn node_table(&self) -> Array2<f64> {
        ndarray::concatenate(ndarray::Axis(0), &[self.items.view(), self.entities.view()])
            .expect("item and entity tables share d")
    }
}

/// The full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub emb: EmbeddingState,
    pub local_head: ProjectionHead,
    pub global_head: ProjectionHead,
}

/// Table sizes of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub dim: usize,
    pub n_users: usize,
    pub n_items: usize,
    /// Entities without an aligned item.
    pub n_extra_entities: usize,
    pub n_relations: usize,
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "d={} users={} items={} entities={} relations={}",
            self.dim, self.n_users, self.n_items, self.n_extra_entities, self.n_relations
        )
    }
}

pub const BLOCK_NAMES: [&str; 6] = ["user", "item", "entity", "relation", "local_head", "global_head"];

impl Params {
    pub fn zeros(shape: Shape) -> Self {
        let d = shape.dim;
        Params {
            emb: EmbeddingState {
                users: Array2::zeros((shape.n_users, d)),
                items: Array2::zeros((shape.n_items, d)),
                entities: Array2::zeros((shape.n_extra_entities, d)),
                relations: Array2::zeros((shape.n_relations, d)),
            },
            local_head: ProjectionHead::zeros(d),
            global_head: ProjectionHead::zeros(d),
        }
    }

    /// Xavier initialization of every table, in a fixed draw order.
    pub fn init(shape: Shape, rng: &mut Rng) -> Self {
        let d = shape.dim;
        let emb = EmbeddingState {
            users: xavier_init(shape.n_users, d, rng),
            items: xavier_init(shape.n_items, d, rng),
            entities: xavier_init(shape.n_extra_entities, d, rng),
            relations: xavier_init(shape.n_relations, d, rng),
        };
        let local_head = ProjectionHead::init(d, rng);
        let global_head = ProjectionHead::init(d, rng);
        Params {
            emb,
            local_head,
            global_head,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            dim: self.emb.dim(),
            n_users: self.emb.users.nrows(),
            n_items: self.emb.items.nrows(),
            n_extra_entities: self.emb.entities.nrows(),
            n_relations: self.emb.relations.nrows(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params::zeros(self.shape())
    }

    /// Every tensor as a flat slice, in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.emb.users.as_slice().unwrap(),
            self.emb.items.as_slice().unwrap(),
            self.emb.entities.as_slice().unwrap(),
            self.emb.relations.as_slice().unwrap(),
        ];
        for h in [&self.local_head, &self.global_head] {
            out.push(h.w1.as_slice().unwrap());
            out.push(h.b1.as_slice().unwrap());
            out.push(h.w2.as_slice().unwrap());
            out.push(h.b2.as_slice().unwrap());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let Params {
            emb,
            local_head,
            global_head,
        } = self;
        let mut out = vec![
            emb.users.as_slice_mut().unwrap(),
            emb.items.as_slice_mut().unwrap(),
            emb.entities.as_slice_mut().unwrap(),
            emb.relations.as_slice_mut().unwrap(),
        ];
        for h in [local_head, global_head] {
            out.push(h.w1.as_slice_mut().unwrap());
            out.push(h.b1.as_slice_mut().unwrap());
            out.push(h.w2.as_slice_mut().unwrap());
            out.push(h.b2.as_slice_mut().unwrap());
        }
        out
    }

    /// Tensors grouped into the six named blocks of [`BLOCK_NAMES`].
    pub fn blocks(&self) -> Vec<(&'static str, Vec<&[f64]>)> {
        let t = self.tensors();
        vec![
            (BLOCK_NAMES[0], vec![t[0]]),
            (BLOCK_NAMES[1], vec![t[1]]),
            (BLOCK_NAMES[2], vec![t[2]]),
            (BLOCK_NAMES[3], vec![t[3]]),
            (BLOCK_NAMES[4], t[4..8].to_vec()),
            (BLOCK_NAMES[5], t[8..12].to_vec()),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Adds `scale * other` into `self`.
    pub fn add_scaled(&mut self, scale: f64, other: &Params) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Uniform table on `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    if rows == 0 || cols == 0 {
        return Array2::zeros((rows, cols));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}
