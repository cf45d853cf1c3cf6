//! Binary checkpoints.
//!
//! Layout, all integers u64 and all reals f64, little-endian:
//!
//! ```text
//! magic "KGCLCKPT" | version u32 | d | users | items | extra entities | relations
//! config sha-256 (32 bytes)
//! tables: users, items, entities, relations, local head (w1 b1 w2 b2), global head
//! semantic graph: present flag, k, epoch, rows, nnz, row offsets, columns, values
//! config TOML: length, bytes
//! ```

use std::io::{Cursor, Read};
use std::path::Path;

use crate::config::{hex, ModelConfig};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::params::{Params, Shape};
use crate::semantic::SemanticGraph;

const MAGIC: &[u8; 8] = b"KGCLCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params,
    pub semantic: Option<SemanticGraph>,
    pub config: ModelConfig,
}

impl Checkpoint {
    pub fn shape(&self) -> Shape {
        self.params.shape()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.params.shape();
        let mut out = Vec::with_capacity(64 + 8 * self.params.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [shape.dim, shape.n_users, shape.n_items, shape.n_extra_entities, shape.n_relations] {
            put_u64(&mut out, v as u64);
        }
        let config_text = self.config.to_toml();
        out.extend_from_slice(&sha256(config_text.as_bytes()));
        for t in self.params.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.semantic {
            None => put_u64(&mut out, 0),
            Some(g) => {
                put_u64(&mut out, 1);
                let a = &g.adjacency;
                for v in [g.k, g.built_from_epoch, a.n_rows(), a.nnz()] {
                    put_u64(&mut out, v as u64);
                }
                for &o in a.row_offsets() {
                    put_u64(&mut out, o as u64);
                }
                for &c in a.col_indices() {
                    put_u64(&mut out, c as u64);
                }
                for v in a.values() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        put_u64(&mut out, config_text.len() as u64);
        out.extend_from_slice(config_text.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadCheckpoint("not a checkpoint file".into()));
        }
        let mut ver = [0u8; 4];
        read_exact(&mut r, &mut ver)?;
        let version = u32::from_le_bytes(ver);
        if version != FORMAT_VERSION {
            return Err(Error::BadCheckpoint(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let shape = Shape {
            dim: get_usize(&mut r)?,
            n_users: get_usize(&mut r)?,
            n_items: get_usize(&mut r)?,
            n_extra_entities: get_usize(&mut r)?,
            n_relations: get_usize(&mut r)?,
        };
        let n_params = Params::zeros(Shape {
            n_users: 0,
            n_items: 0,
            n_extra_entities: 0,
            n_relations: 0,
            ..shape
        })
        .n_params()
        .checked_add(shape.dim.saturating_mul(shape.n_users + shape.n_items + shape.n_extra_entities + shape.n_relations))
        .unwrap_or(usize::MAX);
        if n_params.saturating_mul(8) > bytes.len() {
            return Err(Error::BadCheckpoint(format!("file too short for {shape}")));
        }
        let mut hash = [0u8; 32];
        read_exact(&mut r, &mut hash)?;
        let mut params = Params::zeros(shape);
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = get_f64(&mut r)?;
            }
        }
        let semantic = match get_u64(&mut r)? {
            0 => None,
            1 => {
                let k = get_usize(&mut r)?;
                let epoch = get_usize(&mut r)?;
                let n = get_usize(&mut r)?;
                let nnz = get_usize(&mut r)?;
                if n != shape.n_items || nnz > bytes.len() {
                    return Err(Error::BadCheckpoint(format!("semantic graph of {n} rows, {nnz} entries")));
                }
                let offsets = (0..=n).map(|_| get_usize(&mut r)).collect::<Result<Vec<_>>>()?;
                let cols = (0..nnz).map(|_| get_usize(&mut r)).collect::<Result<Vec<_>>>()?;
                let vals = (0..nnz).map(|_| get_f64(&mut r)).collect::<Result<Vec<_>>>()?;
                let mut edges = Vec::with_capacity(nnz);
                for row in 0..n {
                    let (a, b) = (offsets[row], offsets[row + 1]);
                    if a > b || b > nnz {
                        return Err(Error::BadCheckpoint("semantic graph offsets".into()));
                    }
                    edges.extend((a..b).map(|e| (row, cols[e], vals[e])));
                }
                Some(SemanticGraph {
                    adjacency: SparseAdjacency::build_csr(&edges, n, n)?,
                    k,
                    built_from_epoch: epoch,
                })
            }
            f => return Err(Error::BadCheckpoint(format!("semantic flag {f}"))),
        };
        let len = get_usize(&mut r)?;
        if len > bytes.len() {
            return Err(Error::BadCheckpoint("config length".into()));
        }
        let mut text = vec![0u8; len];
        read_exact(&mut r, &mut text)?;
        if sha256(&text) != hash {
            return Err(Error::BadCheckpoint("config hash does not match".into()));
        }
        let text = String::from_utf8(text).map_err(|_| Error::BadCheckpoint("config is not UTF-8".into()))?;
        let config = ModelConfig::from_toml(&text)?;
        if r.position() as usize != bytes.len() {
            return Err(Error::BadCheckpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            params,
            semantic,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// `CheckpointMismatch` unless the tables fit `dataset`.
    pub fn check_shape(&self, dataset: Shape) -> Result<()> {
        let own = self.shape();
        if own != dataset {
            return Err(Error::CheckpointMismatch {
                checkpoint: own.to_string(),
                dataset: dataset.to_string(),
            });
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        hex(&sha256(&self.to_bytes()))
    }
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).into()
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::BadCheckpoint("unexpected end of file".into()))
}

fn get_u64(r: &mut Cursor<&[u8]>) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize(r: &mut Cursor<&[u8]>) -> Result<usize> {
    usize::try_from(get_u64(r)?).map_err(|_| Error::BadCheckpoint("count overflows".into()))
}

fn get_f64(r: &mut Cursor<&[u8]>) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{encode, final_representations};
    use crate::toy::gradcheck_instance;

    fn sample() -> (Checkpoint, crate::objective::Graphs) {
        let toy = gradcheck_instance();
        let params = toy.params();
        let graphs = toy.graphs(&params).unwrap();
        (
            Checkpoint {
                params,
                semantic: Some(graphs.semantic().clone()),
                config: toy.config.clone(),
            },
            graphs,
        )
    }

    #[test]
    fn round_trip_bit_exact() {
        let (ck, graphs) = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());
        let a = final_representations(&encode(&graphs, &ck.params, &ck.config).unwrap()).unwrap();
        let b = final_representations(&encode(&graphs, &back.params, &back.config).unwrap()).unwrap();
        for (u, i) in [(0, 0), (1, 3), (3, 4)] {
            assert_eq!(a.score(u, i).to_bits(), b.score(u, i).to_bits());
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let (ck, _) = sample();
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Checkpoint::from_bytes(b"nonsense").is_err());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 2;
        flipped[last] ^= 0x20;
        assert!(Checkpoint::from_bytes(&flipped).is_err());
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let (ck, _) = sample();
        let mut other = ck.shape();
        other.n_items += 1;
        let err = ck.check_shape(other).unwrap_err().to_string();
        assert!(err.contains("items=5") && err.contains("items=6"), "{err}");
    }
}
