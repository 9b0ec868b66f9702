//! Turning external edge lists into a dense-id split directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use gdnn_core::graph::{canonical, load_edge_list_file, SPLIT_FILES};
use gdnn_core::{EdgeSplit, GdnnError, Graph, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::dataset::{write_split, ID_MAP_FILE};
use crate::error::{CliError, Result};

/// Node pairs up to which negatives are drawn by enumeration rather than
/// rejection sampling.
const ENUMERATION_LIMIT: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ImportOptions {
    pub seed: u64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    /// Lower bound on negatives per held-out split.
    pub min_negatives: usize,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            min_negatives: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImportSummary {
    pub num_nodes: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub negatives: usize,
    pub self_loops_dropped: usize,
}

/// Sorted external ids and their dense positions.
#[derive(Clone, Debug, Default)]
pub struct IdMap {
    dense: BTreeMap<u64, NodeId>,
}

impl IdMap {
    pub fn from_ids(ids: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut dense: BTreeMap<u64, NodeId> = ids.into_iter().map(|id| (id, 0)).collect();
        if dense.len() > NodeId::MAX as usize {
            return Err(GdnnError::InvalidData(format!("{} distinct node ids exceed the u32 range", dense.len())).into());
        }
        for (i, v) in dense.values_mut().enumerate() {
            *v = i as NodeId;
        }
        Ok(Self { dense })
    }

    pub fn len(&self) -> usize {
        self.dense.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dense.is_empty()
    }

    pub fn get(&self, external: u64) -> Option<NodeId> {
        self.dense.get(&external).copied()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = b"# external_id\tdense_id\n".to_vec();
        for (ext, d) in &self.dense {
            writeln!(out, "{ext}\t{d}").unwrap();
        }
        fs::write(path, out).map_err(CliError::io(path))
    }
}

/// Reads one raw edge file, densifies ids over every node it mentions,
/// drops self-loops and duplicates, and writes a shuffled split with
/// sampled non-edge negatives.
pub fn import_raw(edges: &Path, dest: &Path, options: &ImportOptions) -> Result<ImportSummary> {
    let raw = load_edge_list_file(edges)?;
    let map = IdMap::from_ids(raw.iter().flat_map(|&(u, v)| [u, v]))?;
    let n = map.len();
    let mut self_loops = 0;
    let mut pairs = Vec::with_capacity(raw.len());
    for &(u, v) in &raw {
        if u == v {
            self_loops += 1;
            continue;
        }
        pairs.push(canonical((map.get(u).unwrap(), map.get(v).unwrap())));
    }
    if self_loops > 0 {
        eprintln!("warning: {}: dropped {self_loops} self-loop(s)", edges.display());
    }
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.is_empty() {
        return Err(GdnnError::EmptyInput("import (no edges)").into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    pairs.shuffle(&mut rng);
    let m = pairs.len();
    let num_valid = (m as f64 * options.valid_fraction).round() as usize;
    let num_test = (m as f64 * options.test_fraction).round() as usize;
    if num_valid + num_test >= m {
        return Err(GdnnError::InvalidData(format!("{m} edges are too few to hold out {num_valid} + {num_test}")).into());
    }
    let test_pos = pairs[..num_test].to_vec();
    let valid_pos = pairs[num_test..num_test + num_valid].to_vec();
    let train_pos = pairs[num_test + num_valid..].to_vec();

    let full = Graph::build(&pairs, n)?;
    let wanted = num_valid.max(options.min_negatives) + num_test.max(options.min_negatives);
    let mut negatives = sample_non_edges(&full, wanted, &mut rng);
    let split_at = negatives.len() * num_valid.max(options.min_negatives) / wanted.max(1);
    let test_neg = negatives.split_off(split_at);
    let split = EdgeSplit {
        train_pos,
        valid_pos,
        valid_neg: negatives,
        test_pos,
        test_neg,
    };
    split.validate()?;
    write_split(dest, &split, n)?;
    map.write(&dest.join(ID_MAP_FILE))?;
    Ok(ImportSummary {
        num_nodes: n,
        train: split.train_pos.len(),
        valid: split.valid_pos.len(),
        test: split.test_pos.len(),
        negatives: split.valid_neg.len() + split.test_neg.len(),
        self_loops_dropped: self_loops,
    })
}

/// Up to `count` distinct canonical non-edges, in random order.
fn sample_non_edges<R: Rng>(g: &Graph, count: usize, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    let n = g.num_nodes();
    let total = n * n.saturating_sub(1) / 2;
    let available = total - g.num_edges();
    if total <= ENUMERATION_LIMIT || count * 2 > available {
        let mut all = Vec::with_capacity(available);
        for u in 0..n as NodeId {
            for v in u + 1..n as NodeId {
                if !g.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        let (picked, _) = all.partial_shuffle(rng, count.min(available));
        return picked.to_vec();
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.gen_range(0..n as NodeId);
        let v = rng.gen_range(0..n as NodeId);
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let pair = canonical((u, v));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    out
}

/// Re-labels an existing five-file split. Dense ids are assigned over the
/// nodes of the training edges; any other file naming a node outside that
/// set is rejected.
pub fn import_split(source: &Path, dest: &Path) -> Result<ImportSummary> {
    let mut raw = Vec::with_capacity(5);
    for name in SPLIT_FILES {
        let path = source.join(name);
        if !path.is_file() {
            return Err(GdnnError::MissingFile(path).into());
        }
        raw.push(load_edge_list_file(&path)?);
    }
    let map = IdMap::from_ids(raw[0].iter().flat_map(|&(u, v)| [u, v]))?;
    let mut parts = Vec::with_capacity(5);
    for (name, pairs) in SPLIT_FILES.iter().zip(&raw) {
        let mut mapped = Vec::with_capacity(pairs.len());
        for &(u, v) in pairs {
            let look = |x: u64| {
                map.get(x).ok_or_else(|| {
                    CliError::from(GdnnError::InvalidSplit(format!("{name} references node {x}, which has no training edge")))
                })
            };
            mapped.push((look(u)?, look(v)?));
        }
        parts.push(mapped);
    }
    let mut it = parts.into_iter();
    let split = EdgeSplit {
        train_pos: it.next().unwrap(),
        valid_pos: it.next().unwrap(),
        valid_neg: it.next().unwrap(),
        test_pos: it.next().unwrap(),
        test_neg: it.next().unwrap(),
    };
    split.validate()?;
    write_split(dest, &split, map.len())?;
    map.write(&dest.join(ID_MAP_FILE))?;
    Ok(ImportSummary {
        num_nodes: map.len(),
        train: split.train_pos.len(),
        valid: split.valid_pos.len(),
        test: split.test_pos.len(),
        negatives: split.valid_neg.len() + split.test_neg.len(),
        self_loops_dropped: 0,
    })
}
