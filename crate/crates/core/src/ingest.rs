//! Interaction and knowledge-graph loading, implicit-feedback conversion and
//! train/eval/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One explicit-feedback record with dense ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// A loaded interaction file. `user_ids[dense] = raw` and likewise for items.
#[derive(Debug, Clone)]
pub struct LoadedInteractions {
    pub records: Vec<Rating>,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

impl LoadedInteractions {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// `dense raw` lines for either id space.
    pub fn remap_text(ids: &[u64]) -> String {
        let mut out = String::new();
        for (dense, raw) in ids.iter().enumerate() {
            let _ = writeln!(out, "{dense} {raw}");
        }
        out
    }
}

/// A labeled `(user, item)` pair: observed (`label == true`) or sampled unobserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub label: bool,
}

/// Bipartite implicit-feedback structure.
///
/// `positives` and `negatives` are sorted by `(user, item)` and disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub n_users: usize,
    pub n_items: usize,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

impl InteractionGraph {
    /// Builds the graph from already-labeled records, dropping exact duplicates.
    pub fn from_labeled(records: &[Interaction], n_users: usize, n_items: usize) -> Result<Self> {
        let pos: BTreeSet<(usize, usize)> = records
            .iter()
            .filter(|r| r.label)
            .map(|r| (r.user, r.item))
            .collect();
        let neg: BTreeSet<(usize, usize)> = records
            .iter()
            .filter(|r| !r.label)
            .map(|r| (r.user, r.item))
            .collect();
        if let Some(&(u, i)) = pos.intersection(&neg).next() {
            return Err(Error::Config(format!(
                "pair ({u}, {i}) is labeled both positive and negative"
            )));
        }
        for &(u, i) in pos.iter().chain(neg.iter()) {
            if u >= n_users || i >= n_items {
                return Err(Error::IndexOutOfBounds {
                    row: u,
                    col: i,
                    n_rows: n_users,
                    n_cols: n_items,
                });
            }
        }
        Ok(InteractionGraph {
            n_users,
            n_items,
            positives: pos.into_iter().collect(),
            negatives: neg.into_iter().collect(),
        })
    }

    /// All labeled records sorted by `(user, item)`.
    pub fn records(&self) -> Vec<Interaction> {
        let mut out: Vec<Interaction> = self
            .positives
            .iter()
            .map(|&(user, item)| Interaction { user, item, label: true })
            .chain(
                self.negatives
                    .iter()
                    .map(|&(user, item)| Interaction { user, item, label: false }),
            )
            .collect();
        out.sort_unstable();
        out
    }

    pub fn n_records(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    /// Number of distinct users and items that appear in at least one record.
    pub fn active_counts(&self) -> (usize, usize) {
        let all = self.positives.iter().chain(self.negatives.iter());
        let users: BTreeSet<usize> = all.clone().map(|p| p.0).collect();
        let items: BTreeSet<usize> = all.map(|p| p.1).collect();
        (users.len(), items.len())
    }

    /// `user item label` lines in canonical order.
    pub fn to_text(&self) -> String {
        interactions_text(&self.records())
    }
}

/// Users whose unrated pool was too small for a balanced negative sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImplicitizeReport {
    pub short_users: Vec<ShortUser>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortUser {
    pub user: usize,
    pub wanted: usize,
    pub sampled: usize,
}

/// Triple store with the item to entity alignment.
///
/// After [`KnowledgeGraph::align`] item `i` is entity `i` and unaligned
/// entities have ids `>= n_items`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    pub n_entities: usize,
    pub n_relations: usize,
    pub triples: Vec<(usize, usize, usize)>,
    pub duplicates_dropped: usize,
}

impl KnowledgeGraph {
    pub fn new(triples: Vec<(usize, usize, usize)>) -> Self {
        let mut seen = HashSet::with_capacity(triples.len());
        let mut kept = Vec::with_capacity(triples.len());
        let mut dropped = 0;
        for t in triples {
            if seen.insert(t) {
                kept.push(t);
            } else {
                dropped += 1;
            }
        }
        let n_entities = kept.iter().map(|&(h, _, t)| h.max(t) + 1).max().unwrap_or(0);
        let n_relations = kept.iter().map(|&(_, r, _)| r + 1).max().unwrap_or(0);
        KnowledgeGraph {
            n_entities,
            n_relations,
            triples: kept,
            duplicates_dropped: dropped,
        }
    }

    /// Distinct entity ids mentioned by at least one triple.
    pub fn distinct_entities(&self) -> usize {
        let ids: BTreeSet<usize> = self.triples.iter().flat_map(|&(h, _, t)| [h, t]).collect();
        ids.len()
    }

    pub fn distinct_relations(&self) -> usize {
        let ids: BTreeSet<usize> = self.triples.iter().map(|&(_, r, _)| r).collect();
        ids.len()
    }

    /// Grows the entity vocabulary so every item has an entity row.
    pub fn cover_items(mut self, n_items: usize) -> Self {
        self.n_entities = self.n_entities.max(n_items);
        self
    }

    /// Relabels entities so that `alignment[i]` becomes entity `i`. The
    /// remaining entities keep their relative order starting at `alignment.len()`.
    pub fn align(&self, alignment: &[usize]) -> Result<KnowledgeGraph> {
        let n_items = alignment.len();
        let n_total = self.n_entities.max(alignment.iter().map(|&e| e + 1).max().unwrap_or(0));
        let mut new_id = vec![usize::MAX; n_total];
        for (item, &entity) in alignment.iter().enumerate() {
            if new_id[entity] != usize::MAX {
                return Err(Error::Config(format!("entity {entity} aligned to two items")));
            }
            new_id[entity] = item;
        }
        let mut next = n_items;
        for slot in new_id.iter_mut() {
            if *slot == usize::MAX {
                *slot = next;
                next += 1;
            }
        }
        let triples = self
            .triples
            .iter()
            .map(|&(h, r, t)| (new_id[h], r, new_id[t]))
            .collect();
        Ok(KnowledgeGraph {
            n_entities: n_total,
            n_relations: self.n_relations,
            triples,
            duplicates_dropped: self.duplicates_dropped,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &(h, r, t) in &self.triples {
            let _ = writeln!(out, "{h} {r} {t}");
        }
        out
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((idx + 1, line));
        }
    }
    Ok(out)
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn three_fields<'a>(path: &Path, line_no: usize, line: &'a str) -> Result<[&'a str; 3]> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.as_slice() {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(parse_error(
            path,
            line_no,
            format!("expected 3 fields, found {}", fields.len()),
        )),
    }
}

fn parse_id(path: &Path, line_no: usize, tok: &str) -> Result<u64> {
    tok.parse::<u64>()
        .map_err(|_| parse_error(path, line_no, format!("invalid id {tok:?}")))
}

/// Parses `user item rating` lines and compacts both id spaces to dense
/// ranges, preserving raw-id order.
pub fn load_interactions(path: &Path) -> Result<LoadedInteractions> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut raw = Vec::with_capacity(lines.len());
    for (line_no, line) in &lines {
        let [u, i, v] = three_fields(path, *line_no, line)?;
        let user = parse_id(path, *line_no, u)?;
        let item = parse_id(path, *line_no, i)?;
        let value: f64 = v
            .parse()
            .map_err(|_| parse_error(path, *line_no, format!("invalid rating {v:?}")))?;
        if !value.is_finite() {
            return Err(parse_error(path, *line_no, "non-finite rating"));
        }
        raw.push((user, item, value));
    }
    let user_ids: Vec<u64> = raw.iter().map(|r| r.0).collect::<BTreeSet<_>>().into_iter().collect();
    let item_ids: Vec<u64> = raw.iter().map(|r| r.1).collect::<BTreeSet<_>>().into_iter().collect();
    let user_index: BTreeMap<u64, usize> = user_ids.iter().enumerate().map(|(d, &r)| (r, d)).collect();
    let item_index: BTreeMap<u64, usize> = item_ids.iter().enumerate().map(|(d, &r)| (r, d)).collect();
    let records = raw
        .into_iter()
        .map(|(u, i, value)| Rating {
            user: user_index[&u],
            item: item_index[&i],
            value,
        })
        .collect();
    Ok(LoadedInteractions {
        records,
        user_ids,
        item_ids,
    })
}

/// Interprets the rating column as a 0/1 label.
pub fn labeled_records(loaded: &LoadedInteractions) -> Result<Vec<Interaction>> {
    loaded
        .records
        .iter()
        .map(|r| {
            let label = if r.value == 1.0 {
                true
            } else if r.value == 0.0 {
                false
            } else {
                return Err(Error::Config(format!(
                    "label must be 0 or 1, found {} for user {} item {}",
                    r.value, r.user, r.item
                )));
            };
            Ok(Interaction {
                user: r.user,
                item: r.item,
                label,
            })
        })
        .collect()
}

/// Converts explicit ratings to implicit feedback.
///
/// Ratings at or above `threshold` (every rating when `threshold` is `None`)
/// become positives; the rest are discarded. For each user an equal number of
/// negatives is drawn without replacement from items the user never rated.
pub fn implicitize(
    ratings: &[Rating],
    n_users: usize,
    n_items: usize,
    threshold: Option<f64>,
    rng: &mut Rng,
) -> (InteractionGraph, ImplicitizeReport) {
    let mut rated: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_users];
    let mut liked: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_users];
    for r in ratings {
        rated[r.user].insert(r.item);
        if threshold.is_none_or(|t| r.value >= t) {
            liked[r.user].insert(r.item);
        }
    }

    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    let mut report = ImplicitizeReport::default();
    for user in 0..n_users {
        let wanted = liked[user].len();
        if wanted == 0 {
            continue;
        }
        positives.extend(liked[user].iter().map(|&i| (user, i)));
        let pool: Vec<usize> = (0..n_items).filter(|i| !rated[user].contains(i)).collect();
        let take = wanted.min(pool.len());
        if take < wanted {
            log::warn!("user {user}: only {take} unrated items for {wanted} negatives");
            report.short_users.push(ShortUser {
                user,
                wanted,
                sampled: take,
            });
        }
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), take)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        picked.sort_unstable();
        negatives.extend(picked.into_iter().map(|i| (user, i)));
    }
    (
        InteractionGraph {
            n_users,
            n_items,
            positives,
            negatives,
        },
        report,
    )
}

/// Parses `head relation tail` lines. Repeated triples are dropped and counted.
pub fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    let lines = read_lines(path)?;
    let mut triples = Vec::with_capacity(lines.len());
    for (line_no, line) in &lines {
        let [h, r, t] = three_fields(path, *line_no, line)?;
        let h = parse_id(path, *line_no, h)? as usize;
        let r = parse_id(path, *line_no, r)? as usize;
        let t = parse_id(path, *line_no, t)? as usize;
        triples.push((h, r, t));
    }
    let kg = KnowledgeGraph::new(triples);
    if kg.duplicates_dropped > 0 {
        log::warn!("{}: dropped {} duplicate triples", path.display(), kg.duplicates_dropped);
    }
    Ok(kg)
}

/// Reads `raw_item entity` alignment lines and returns the entity of every
/// compacted item; `item_ids` is the raw id of each compacted item.
pub fn load_alignment(path: &Path, item_ids: &[u64]) -> Result<Vec<usize>> {
    let index: BTreeMap<u64, usize> = item_ids.iter().enumerate().map(|(d, &r)| (r, d)).collect();
    let mut alignment = vec![usize::MAX; item_ids.len()];
    for (line_no, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [item, entity] = fields.as_slice() else {
            return Err(parse_error(path, line_no, "expected `item entity`"));
        };
        let raw = parse_id(path, line_no, item)?;
        let entity = parse_id(path, line_no, entity)? as usize;
        // Items absent from the interaction file are not part of the catalog.
        if let Some(&item) = index.get(&raw) {
            alignment[item] = entity;
        }
    }
    if let Some(missing) = alignment.iter().position(|&e| e == usize::MAX) {
        return Err(Error::Config(format!(
            "{}: item {} has no entity",
            path.display(),
            item_ids[missing]
        )));
    }
    Ok(alignment)
}

/// The alignment of files whose item ids are entity ids.
pub fn identity_alignment(item_ids: &[u64]) -> Vec<usize> {
    item_ids.iter().map(|&r| r as usize).collect()
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Disjoint train / eval / test record sets, each sorted by `(user, item)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Vec<Interaction>,
    pub eval: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl DataSplit {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            ratios: self.ratios,
            train: self.train.len(),
            eval: self.eval.len(),
            test: self.test.len(),
        }
    }

    /// Training positives as `(user, item)` pairs.
    pub fn train_positives(&self) -> Vec<(usize, usize)> {
        self.train
            .iter()
            .filter(|r| r.label)
            .map(|r| (r.user, r.item))
            .collect()
    }

    /// Full serialization: manifest followed by the three record sets.
    pub fn to_text(&self) -> String {
        let mut out = self.manifest().to_text();
        for (name, set) in [("train", &self.train), ("eval", &self.eval), ("test", &self.test)] {
            let _ = writeln!(out, "# {name}");
            out.push_str(&interactions_text(set));
        }
        out
    }
}

/// Seed, ratios and per-set sizes of a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: usize,
    pub eval: usize,
    pub test: usize,
}

impl SplitManifest {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("split manifest: {e}")))
    }
}

fn interactions_text(records: &[Interaction]) -> String {
    let mut out = String::with_capacity(records.len() * 12);
    for r in records {
        let _ = writeln!(out, "{} {} {}", r.user, r.item, r.label as u8);
    }
    out
}

fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|&r| !(r > 0.0) || !r.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios(ratios));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` records: every share is within one
/// record of `ratio * n` and the shares sum to `n`.
fn apportion(ratios: [f64; 3], n: usize) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| q.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = n.saturating_sub(sizes.iter().sum());
    for &b in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[b] += 1;
        left -= 1;
    }
    sizes
}

/// Splits all labeled records of `graph` into train / eval / test.
///
/// Records are shuffled within each user and dealt to the set with the
/// largest running shortfall, so totals match the apportioned sizes and every
/// user's records are spread close to the requested proportions.
pub fn split(graph: &InteractionGraph, ratios: [f64; 3], seed: u64) -> Result<DataSplit> {
    validate_ratios(ratios)?;
    let records = graph.records();
    let n = records.len();
    let targets = apportion(ratios, n);

    let mut rng = Rng::new(seed);
    let mut ordered = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let user = records[start].user;
        let end = start + records[start..].iter().take_while(|r| r.user == user).count();
        let mut block = records[start..end].to_vec();
        block.shuffle(&mut rng);
        ordered.extend(block);
        start = end;
    }

    let mut sets: [Vec<Interaction>; 3] = Default::default();
    for (p, rec) in ordered.into_iter().enumerate() {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (b, set) in sets.iter().enumerate() {
            if set.len() >= targets[b] {
                continue;
            }
            let deficit = targets[b] as f64 * (p + 1) as f64 / n as f64 - set.len() as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = b;
            }
        }
        sets[best].push(rec);
    }
    for set in sets.iter_mut() {
        set.sort_unstable();
    }
    let [train, eval, test] = sets;
    Ok(DataSplit {
        train,
        eval,
        test,
        seed,
        ratios,
    })
}

/// Rebuilds a split from its manifest and checks the recorded sizes.
pub fn split_from_manifest(graph: &InteractionGraph, manifest: &SplitManifest) -> Result<DataSplit> {
    let s = split(graph, manifest.ratios, manifest.seed)?;
    let got = s.manifest();
    if got != *manifest {
        return Err(Error::Config(format!(
            "split manifest does not match data: recorded {manifest:?}, recomputed {got:?}"
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_single_line() {
        let f = write_tmp("0 5 1\n");
        let loaded = load_interactions(f.path()).unwrap();
        assert_eq!(loaded.records, vec![Rating { user: 0, item: 0, value: 1.0 }]);
        assert_eq!(loaded.item_ids, vec![5]);
    }

    #[test]
    fn malformed_token_reports_line() {
        let f = write_tmp("0 x 1\n");
        match load_interactions(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_interaction_file() {
        let f = write_tmp("");
        assert!(matches!(load_interactions(f.path()), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn compaction_preserves_order() {
        let f = write_tmp("10 7 1\n3 9 1\n10 2 0\n");
        let loaded = load_interactions(f.path()).unwrap();
        assert_eq!(loaded.user_ids, vec![3, 10]);
        assert_eq!(loaded.item_ids, vec![2, 7, 9]);
        assert_eq!(loaded.records[0], Rating { user: 1, item: 1, value: 1.0 });
    }

    #[test]
    fn kg_line_and_empty_file() {
        let f = write_tmp("0 3 42\n");
        let kg = load_kg(f.path()).unwrap();
        assert_eq!(kg.triples, vec![(0, 3, 42)]);
        assert_eq!(kg.n_entities, 43);
        assert_eq!(kg.n_relations, 4);

        let empty = write_tmp("");
        let kg = load_kg(empty.path()).unwrap();
        assert!(kg.triples.is_empty());
    }

    #[test]
    fn kg_duplicates_dropped_and_counted() {
        let f = write_tmp("0 1 2\n0 1 2\n2 0 1\n");
        let kg = load_kg(f.path()).unwrap();
        assert_eq!(kg.triples.len(), 2);
        assert_eq!(kg.duplicates_dropped, 1);
    }

    #[test]
    fn threshold_rule() {
        let ratings = [
            Rating { user: 0, item: 0, value: 4.0 },
            Rating { user: 0, item: 1, value: 3.0 },
        ];
        let (g, _) = implicitize(&ratings, 1, 5, Some(4.0), &mut Rng::new(0));
        assert_eq!(g.positives, vec![(0, 0)]);
        // item 1 was rated below threshold: never positive, never a negative.
        assert!(!g.negatives.contains(&(0, 1)));
        assert_eq!(g.negatives.len(), 1);
    }

    #[test]
    fn no_threshold_everything_positive() {
        let ratings = [
            Rating { user: 0, item: 0, value: 0.0 },
            Rating { user: 0, item: 1, value: 10.0 },
        ];
        let (g, _) = implicitize(&ratings, 1, 4, None, &mut Rng::new(0));
        assert_eq!(g.positives, vec![(0, 0), (0, 1)]);
        assert_eq!(g.negatives, vec![(0, 2), (0, 3)]);
    }

    #[test]
    fn insufficient_negatives_fallback() {
        let ratings = [
            Rating { user: 0, item: 0, value: 1.0 },
            Rating { user: 0, item: 1, value: 1.0 },
        ];
        let (g, report) = implicitize(&ratings, 1, 3, None, &mut Rng::new(0));
        assert_eq!(g.negatives, vec![(0, 2)]);
        assert_eq!(report.short_users, vec![ShortUser { user: 0, wanted: 2, sampled: 1 }]);
    }

    fn toy_graph(n_records: usize) -> InteractionGraph {
        let records: Vec<Interaction> = (0..n_records)
            .map(|k| Interaction {
                user: k % 3,
                item: k,
                label: k % 2 == 0,
            })
            .collect();
        InteractionGraph::from_labeled(&records, 3, n_records).unwrap()
    }

    #[test]
    fn split_exact_division() {
        let s = split(&toy_graph(10), [0.6, 0.2, 0.2], 1).unwrap();
        assert_eq!((s.train.len(), s.eval.len(), s.test.len()), (6, 2, 2));
    }

    #[test]
    fn split_deterministic() {
        let g = toy_graph(40);
        let a = split(&g, DEFAULT_RATIOS, 9).unwrap();
        let b = split(&g, DEFAULT_RATIOS, 9).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = split(&g, DEFAULT_RATIOS, 10).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn split_bad_ratios() {
        assert!(matches!(
            split(&toy_graph(10), [0.5, 0.5, 0.5], 1),
            Err(Error::BadRatios(_))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let s = split(&toy_graph(25), DEFAULT_RATIOS, 3).unwrap();
        let text = s.manifest().to_text();
        let back = SplitManifest::parse(&text).unwrap();
        assert_eq!(back, s.manifest());
        assert_eq!(split_from_manifest(&toy_graph(25), &back).unwrap(), s);
    }

    #[test]
    fn alignment_relabels_entities() {
        let kg = KnowledgeGraph::new(vec![(5, 0, 1), (1, 1, 3)]);
        // items 0 and 1 are entities 5 and 3
        let aligned = kg.align(&[5, 3]).unwrap();
        assert_eq!(aligned.triples, vec![(0, 0, 3), (3, 1, 1)]);
        assert_eq!(aligned.n_entities, 6);
    }

    proptest! {
        #[test]
        fn implicitize_balanced_and_disjoint(seed in any::<u64>(), n in 1usize..60) {
            use rand::Rng as _;
            let mut rng = crate::rng::Rng::new(seed);
            let ratings: Vec<Rating> = (0..n)
                .map(|_| Rating {
                    user: rng.gen_range(0..5),
                    item: rng.gen_range(0..20),
                    value: rng.gen_range(1..=5) as f64,
                })
                .collect();
            let (g, report) = implicitize(&ratings, 5, 20, Some(3.0), &mut rng);
            let pos: HashSet<_> = g.positives.iter().collect();
            prop_assert!(g.negatives.iter().all(|p| !pos.contains(p)));
            let shortfall: usize = report.short_users.iter().map(|s| s.wanted - s.sampled).sum();
            prop_assert_eq!(g.positives.len(), g.negatives.len() + shortfall);
            for u in 0..5 {
                let rated: HashSet<usize> =
                    ratings.iter().filter(|r| r.user == u).map(|r| r.item).collect();
                prop_assert!(g.negatives.iter().filter(|p| p.0 == u).all(|p| !rated.contains(&p.1)));
            }
        }

        #[test]
        fn split_sizes_within_one(n in 1usize..300, seed in any::<u64>(), a in 1u32..8, b in 1u32..8, c in 1u32..8) {
            let total = (a + b + c) as f64;
            let ratios = [a as f64 / total, b as f64 / total, 1.0 - a as f64 / total - b as f64 / total];
            let g = toy_graph(n);
            let s = split(&g, ratios, seed).unwrap();
            let sizes = [s.train.len(), s.eval.len(), s.test.len()];
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            for (size, r) in sizes.iter().zip(ratios) {
                prop_assert!((*size as f64 - r * n as f64).abs() <= 1.0);
            }
            let mut all: Vec<_> = s.train.iter().chain(&s.eval).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, g.records());
        }
    }
}
