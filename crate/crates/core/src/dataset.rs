//! Canonical data directories: preprocessing raw files into them and loading
//! them for training.
//!
//! A canonical directory holds
//!
//! ```text
//! interactions.txt   user item label      (dense ids)
//! kg.txt             head relation tail   (item i is node i, other entities follow)
//! split.toml         split seed, ratios and set sizes
//! user_remap.txt     raw id of every dense user
//! item_remap.txt     raw id of every dense item
//! stats.toml         dataset counts
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    identity_alignment, implicitize, labeled_records, load_alignment, load_interactions, load_kg, split,
    split_from_manifest, DataSplit, InteractionGraph, KnowledgeGraph, LoadedInteractions, SplitManifest,
};
use crate::params::Shape;
use crate::rng::Rng;

pub const INTERACTIONS_FILE: &str = "interactions.txt";
pub const KG_FILE: &str = "kg.txt";
pub const SPLIT_FILE: &str = "split.toml";
pub const STATS_FILE: &str = "stats.toml";
pub const USER_REMAP_FILE: &str = "user_remap.txt";
pub const ITEM_REMAP_FILE: &str = "item_remap.txt";

/// How the third column of a raw interaction file is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// 0/1 labels with negatives already sampled.
    Labeled,
    /// Explicit ratings, converted to implicit feedback.
    Ratings,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labeled" => Ok(DatasetKind::Labeled),
            "ratings" => Ok(DatasetKind::Ratings),
            _ => Err(Error::Config(format!("unknown dataset kind {s:?} (labeled, ratings)"))),
        }
    }
}

/// Counts reported after preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Size of the entity id space of the raw graph.
    pub entities: usize,
    pub distinct_entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub duplicate_triples: usize,
    /// Users that received fewer negatives than positives.
    pub short_users: usize,
}

impl DatasetStats {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stats serialize")
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessInput<'a> {
    pub interactions: &'a Path,
    pub kg: &'a Path,
    /// `raw_item entity` lines; item ids are entity ids when absent.
    pub alignment: Option<&'a Path>,
    pub kind: DatasetKind,
    pub threshold: Option<f64>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub loaded: LoadedInteractions,
    pub graph: InteractionGraph,
    pub kg: KnowledgeGraph,
    pub split: DataSplit,
    pub stats: DatasetStats,
}

pub fn preprocess(input: &PreprocessInput) -> Result<Preprocessed> {
    let loaded = load_interactions(input.interactions)?;
    let (n_users, n_items) = (loaded.n_users(), loaded.n_items());
    let mut short_users = 0;
    let graph = match input.kind {
        DatasetKind::Labeled => InteractionGraph::from_labeled(&labeled_records(&loaded)?, n_users, n_items)?,
        DatasetKind::Ratings => {
            let mut rng = Rng::new(input.seed).fork(1);
            let (g, report) = implicitize(&loaded.records, n_users, n_items, input.threshold, &mut rng);
            short_users = report.short_users.len();
            g
        }
    };
    let raw_kg = load_kg(input.kg)?;
    let alignment = match input.alignment {
        Some(p) => load_alignment(p, &loaded.item_ids)?,
        None => identity_alignment(&loaded.item_ids),
    };
    let kg = raw_kg.align(&alignment)?;
    let split = split(&graph, input.ratios, input.seed)?;
    let stats = DatasetStats {
        users: n_users,
        items: n_items,
        interactions: graph.n_records(),
        positives: graph.positives.len(),
        negatives: graph.negatives.len(),
        entities: raw_kg.n_entities,
        distinct_entities: raw_kg.distinct_entities(),
        relations: raw_kg.n_relations,
        triples: raw_kg.triples.len(),
        duplicate_triples: raw_kg.duplicates_dropped,
        short_users,
    };
    Ok(Preprocessed {
        loaded,
        graph,
        kg,
        split,
        stats,
    })
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Preprocessed {
    /// Writes the canonical directory; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            (INTERACTIONS_FILE, self.graph.to_text()),
            (KG_FILE, self.kg.to_text()),
            (SPLIT_FILE, self.split.manifest().to_text()),
            (STATS_FILE, self.stats.to_toml()),
            (USER_REMAP_FILE, LoadedInteractions::remap_text(&self.loaded.user_ids)),
            (ITEM_REMAP_FILE, LoadedInteractions::remap_text(&self.loaded.item_ids)),
        ];
        let mut written = Vec::new();
        for (name, text) in files {
            let p = dir.join(name);
            write_atomic(&p, text.as_bytes())?;
            written.push(p);
        }
        Ok(written)
    }
}

fn count_lines(path: &Path) -> Result<usize> {
    if !path.is_file() {
        return Ok(0);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

/// A loaded canonical directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: InteractionGraph,
    pub kg: KnowledgeGraph,
    pub split: DataSplit,
    pub n_extra_entities: usize,
    pub n_relations: usize,
}

impl Dataset {
    /// Reads a canonical directory. Without a split manifest the records are
    /// split with `ratios` and `seed`.
    pub fn load(dir: &Path, ratios: [f64; 3], seed: u64) -> Result<Self> {
        let missing: Vec<String> = [INTERACTIONS_FILE, KG_FILE]
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "data directory {} is missing {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        let loaded = load_interactions(&dir.join(INTERACTIONS_FILE))?;
        // Canonical ids are already dense; undo the loader's compaction so that
        // users or items without records keep their slots.
        let records: Vec<_> = labeled_records(&loaded)?
            .into_iter()
            .map(|mut r| {
                r.user = loaded.user_ids[r.user] as usize;
                r.item = loaded.item_ids[r.item] as usize;
                r
            })
            .collect();
        let n_users = count_lines(&dir.join(USER_REMAP_FILE))?.max(loaded.user_ids.last().map_or(0, |&u| u as usize + 1));
        let n_items = count_lines(&dir.join(ITEM_REMAP_FILE))?.max(loaded.item_ids.last().map_or(0, |&i| i as usize + 1));
        let graph = InteractionGraph::from_labeled(&records, n_users, n_items)?;
        let kg = load_kg(&dir.join(KG_FILE))?;
        Self::from_parts(graph, kg, Some(dir.join(SPLIT_FILE)).filter(|p| p.is_file()).as_deref(), ratios, seed)
    }

    pub fn from_parts(
        graph: InteractionGraph,
        kg: KnowledgeGraph,
        manifest: Option<&Path>,
        ratios: [f64; 3],
        seed: u64,
    ) -> Result<Self> {
        let split = match manifest {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                split_from_manifest(&graph, &SplitManifest::parse(&text)?)?
            }
            None => split(&graph, ratios, seed)?,
        };
        let n_extra_entities = kg.n_entities.saturating_sub(graph.n_items);
        let n_relations = kg.n_relations;
        Ok(Dataset {
            graph,
            kg,
            split,
            n_extra_entities,
            n_relations,
        })
    }

    pub fn shape(&self, dim: usize) -> Shape {
        Shape {
            dim,
            n_users: self.graph.n_users,
            n_items: self.graph.n_items,
            n_extra_entities: self.n_extra_entities,
            n_relations: self.n_relations,
        }
    }

    /// SHA-256 of the canonical interaction and graph text.
    pub fn hash(&self) -> String {
        let mut text = self.graph.to_text();
        text.push_str("--\n");
        text.push_str(&self.kg.to_text());
        crate::config::sha256_hex(text.as_bytes())
    }
}
