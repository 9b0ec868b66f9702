//! Immutable undirected graph in CSR form, edge-list parsing and the
//! labeled/held-out edge split.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{GdnnError, Result};

pub type NodeId = u32;
pub type EdgeId = u32;

/// Column separator of an edge-list file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeListFormat {
    Tsv,
    Csv,
}

impl EdgeListFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EdgeListFormat::Csv,
            _ => EdgeListFormat::Tsv,
        }
    }

    fn separator(self) -> char {
        match self {
            EdgeListFormat::Tsv => '\t',
            EdgeListFormat::Csv => ',',
        }
    }
}

/// Parses `u<sep>v` records in file order. Blank lines and `#` comments are
/// skipped; nothing is deduplicated or symmetrized.
pub fn load_edge_list<R: BufRead>(source: R, format: EdgeListFormat) -> Result<Vec<(u64, u64)>> {
    let sep = format.separator();
    let mut pairs = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split(sep);
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(GdnnError::Parse {
                line: lineno,
                message: format!("expected two {format:?} fields, got `{trimmed}`"),
            });
        };
        let parse = |s: &str| {
            s.trim().parse::<u64>().map_err(|_| GdnnError::Parse {
                line: lineno,
                message: format!("`{}` is not an unsigned integer node id", s.trim()),
            })
        };
        pairs.push((parse(a)?, parse(b)?));
    }
    Ok(pairs)
}

pub fn load_edge_list_file(path: &Path) -> Result<Vec<(u64, u64)>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            GdnnError::MissingFile(path.to_path_buf())
        } else {
            GdnnError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    load_edge_list(BufReader::new(file), EdgeListFormat::from_path(path)).map_err(|e| match e {
        GdnnError::Parse { line, message } => GdnnError::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Anything usable as an undirected node pair.
pub trait Endpoints: Copy {
    fn endpoints(self) -> (u64, u64);
}

macro_rules! endpoints {
    ($($t:ty),*) => {$(
        impl Endpoints for ($t, $t) {
            fn endpoints(self) -> (u64, u64) {
                (self.0 as u64, self.1 as u64)
            }
        }
    )*};
}
endpoints!(u32, u64, usize);

/// Undirected, unweighted, simple graph in compressed sparse row form.
///
/// Every undirected edge appears twice in `col_indices` (once per endpoint)
/// and both halves carry the same edge id. Neighbor lists are sorted, and
/// edge ids follow the lexicographic order of `(min, max)` endpoint pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<NodeId>,
    edge_ids: Vec<EdgeId>,
    edges: Vec<(NodeId, NodeId)>,
}

impl Graph {
    /// Self-loops and out-of-range ids are errors; duplicate undirected
    /// pairs collapse into one edge.
    pub fn build<P: Endpoints>(pairs: &[P], num_nodes: usize) -> Result<Self> {
        if num_nodes > NodeId::MAX as usize {
            return Err(GdnnError::InvalidData(format!("{num_nodes} nodes exceed the u32 id space")));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &p in pairs {
            let (u, v) = p.endpoints();
            for id in [u, v] {
                if id >= num_nodes as u64 {
                    return Err(GdnnError::NodeOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                return Err(GdnnError::SelfLoop(u));
            }
            edges.push((u.min(v) as NodeId, u.max(v) as NodeId));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        for d in &degree {
            row_offsets.push(row_offsets.last().unwrap() + d);
        }
        let mut cursor = row_offsets[..num_nodes].to_vec();
        let mut col_indices = vec![0; 2 * edges.len()];
        let mut edge_ids = vec![0; 2 * edges.len()];
        for (eid, &(u, v)) in edges.iter().enumerate() {
            for (a, b) in [(u, v), (v, u)] {
                let slot = &mut cursor[a as usize];
                col_indices[*slot] = b;
                edge_ids[*slot] = eid as EdgeId;
                *slot += 1;
            }
        }
        // Edges are visited in (min, max) order, so a node's row receives its
        // lower neighbors (as the max endpoint) in ascending order but
        // interleaved with its higher neighbors; sort each row.
        for v in 0..num_nodes {
            let (lo, hi) = (row_offsets[v], row_offsets[v + 1]);
            let mut row: Vec<(NodeId, EdgeId)> = col_indices[lo..hi]
                .iter()
                .copied()
                .zip(edge_ids[lo..hi].iter().copied())
                .collect();
            row.sort_unstable();
            for (k, (c, e)) in row.into_iter().enumerate() {
                col_indices[lo + k] = c;
                edge_ids[lo + k] = e;
            }
        }

        Ok(Self {
            num_nodes,
            row_offsets,
            col_indices,
            edge_ids,
            edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[NodeId] {
        &self.col_indices
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    /// Canonical `(min, max)` endpoint list; index is the edge id.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.row_offsets[v as usize + 1] - self.row_offsets[v as usize]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes as NodeId).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.col_indices[self.row_offsets[v as usize]..self.row_offsets[v as usize + 1]]
    }

    #[inline]
    pub fn neighbor_edge_ids(&self, v: NodeId) -> &[EdgeId] {
        &self.edge_ids[self.row_offsets[v as usize]..self.row_offsets[v as usize + 1]]
    }

    pub fn neighbor_edges(&self, v: NodeId) -> impl Iterator<Item = (NodeId, EdgeId)> + '_ {
        self.neighbors(v)
            .iter()
            .copied()
            .zip(self.neighbor_edge_ids(v).iter().copied())
    }

    /// Id of the undirected edge `{u, v}`, if present.
    pub fn edge_id(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        if u as usize >= self.num_nodes || v as usize >= self.num_nodes {
            return None;
        }
        let nbrs = self.neighbors(u);
        nbrs.binary_search(&v)
            .ok()
            .map(|k| self.neighbor_edge_ids(u)[k])
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_id(u, v).is_some()
    }

    /// GraphSAGE-style neighbor sampling.
    ///
    /// Nodes with at most `fanout` neighbors return all of them in CSR order.
    /// Otherwise `fanout` distinct neighbors are drawn uniformly without
    /// replacement and returned in CSR order.
    pub fn sample_neighbors<R: Rng + ?Sized>(
        &self,
        v: NodeId,
        fanout: usize,
        rng: &mut R,
    ) -> Vec<(NodeId, EdgeId)> {
        let deg = self.degree(v);
        if deg <= fanout {
            return self.neighbor_edges(v).collect();
        }
        let nbrs = self.neighbors(v);
        let eids = self.neighbor_edge_ids(v);
        let mut picks = index::sample(rng, deg, fanout).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|k| (nbrs[k], eids[k])).collect()
    }
}

/// `(min, max)` form of an undirected pair.
pub fn canonical((u, v): (NodeId, NodeId)) -> (NodeId, NodeId) {
    (u.min(v), u.max(v))
}

/// Training edges plus held-out positive and negative evaluation pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train_pos: Vec<(NodeId, NodeId)>,
    pub valid_pos: Vec<(NodeId, NodeId)>,
    pub valid_neg: Vec<(NodeId, NodeId)>,
    pub test_pos: Vec<(NodeId, NodeId)>,
    pub test_neg: Vec<(NodeId, NodeId)>,
}

pub const SPLIT_FILES: [&str; 5] = [
    "train_pos.tsv",
    "valid_pos.tsv",
    "valid_neg.tsv",
    "test_pos.tsv",
    "test_neg.tsv",
];

impl EdgeSplit {
    pub fn parts(&self) -> [(&'static str, &[(NodeId, NodeId)]); 5] {
        [
            (SPLIT_FILES[0], &self.train_pos),
            (SPLIT_FILES[1], &self.valid_pos),
            (SPLIT_FILES[2], &self.valid_neg),
            (SPLIT_FILES[3], &self.test_pos),
            (SPLIT_FILES[4], &self.test_neg),
        ]
    }

    /// Largest node id mentioned anywhere, if any.
    pub fn max_node_id(&self) -> Option<NodeId> {
        self.parts()
            .iter()
            .flat_map(|(_, pairs)| pairs.iter())
            .map(|&(u, v)| u.max(v))
            .max()
    }

    /// Checks disjointness and the absence of self-loops.
    pub fn validate(&self) -> Result<()> {
        for (name, pairs) in self.parts() {
            if let Some(&(u, _)) = pairs.iter().find(|(u, v)| u == v) {
                return Err(GdnnError::InvalidSplit(format!("self-loop ({u},{u}) in {name}")));
            }
        }
        let train: HashSet<_> = self.train_pos.iter().copied().map(canonical).collect();
        for (name, pairs) in [("valid_pos", &self.valid_pos), ("test_pos", &self.test_pos)] {
            if let Some(&(u, v)) = pairs.iter().find(|&&p| train.contains(&canonical(p))) {
                return Err(GdnnError::InvalidSplit(format!(
                    "held-out positive ({u},{v}) in {name} is also a training edge"
                )));
            }
        }
        let mut positives = train;
        positives.extend(self.valid_pos.iter().copied().map(canonical));
        positives.extend(self.test_pos.iter().copied().map(canonical));
        for (name, pairs) in [("valid_neg", &self.valid_neg), ("test_neg", &self.test_neg)] {
            if let Some(&(u, v)) = pairs.iter().find(|&&p| positives.contains(&canonical(p))) {
                return Err(GdnnError::InvalidSplit(format!(
                    "negative overlaps positive: ({u},{v}) in {name}"
                )));
            }
        }
        Ok(())
    }
}

fn to_node_pairs(raw: Vec<(u64, u64)>, file: &str) -> Result<Vec<(NodeId, NodeId)>> {
    raw.into_iter()
        .map(|(u, v)| {
            let conv = |x: u64| {
                NodeId::try_from(x).map_err(|_| {
                    GdnnError::InvalidData(format!("{file}: node id {x} exceeds u32; run import to densify"))
                })
            };
            Ok((conv(u)?, conv(v)?))
        })
        .collect()
}

/// Reads the five split files from `dir` and validates them.
pub fn load_split(dir: &Path) -> Result<EdgeSplit> {
    let mut parts = Vec::with_capacity(5);
    for name in SPLIT_FILES {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(GdnnError::MissingFile(path));
        }
        parts.push(to_node_pairs(load_edge_list_file(&path)?, name)?);
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
    Ok(split)
}
