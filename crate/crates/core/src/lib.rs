pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod dataset;
pub mod encoders;
pub mod eval;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod objective;
pub mod optim;
pub mod params;
pub mod rng;
pub mod semantic;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
