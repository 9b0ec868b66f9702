//! A split directory on disk: the five split files, an optional
//! `num_nodes.txt`, and the edge attribute table format.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use gdnn_core::graph::canonical;
use gdnn_core::{load_split, EdgeSplit, Graph, GdnnError, Matrix64, NodeId};

use crate::error::{CliError, Result};

pub const NUM_NODES_FILE: &str = "num_nodes.txt";
pub const ID_MAP_FILE: &str = "id_map.tsv";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub split: EdgeSplit,
    /// Message-passing graph over the training edges.
    pub graph: Graph,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }
}

/// Loads and validates a split directory. The node count comes from
/// `num_nodes.txt` when present, otherwise from the largest id + 1.
pub fn load(dir: &Path) -> Result<Dataset> {
    let split = load_split(dir)?;
    let max_id = split.max_node_id();
    let count_path = dir.join(NUM_NODES_FILE);
    let num_nodes = if count_path.is_file() {
        let text = fs::read_to_string(&count_path).map_err(CliError::io(&count_path))?;
        let n: usize = text
            .trim()
            .parse()
            .map_err(|_| CliError::format(&count_path, format!("`{}` is not a node count", text.trim())))?;
        if let Some(m) = max_id.filter(|&m| m as usize >= n) {
            return Err(GdnnError::NodeOutOfRange {
                id: m as u64,
                num_nodes: n,
            }
            .into());
        }
        n
    } else {
        max_id.map_or(0, |m| m as usize + 1)
    };
    let graph = Graph::build(&split.train_pos, num_nodes)?;
    Ok(Dataset { split, graph })
}

pub fn write_pairs(path: &Path, pairs: &[(NodeId, NodeId)]) -> Result<()> {
    let mut out = Vec::with_capacity(pairs.len() * 12);
    for (u, v) in pairs {
        writeln!(out, "{u}\t{v}").unwrap();
    }
    fs::write(path, out).map_err(CliError::io(path))
}

pub fn write_split(dir: &Path, split: &EdgeSplit, num_nodes: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for (name, pairs) in split.parts() {
        write_pairs(&dir.join(name), pairs)?;
    }
    let count = dir.join(NUM_NODES_FILE);
    fs::write(&count, format!("{num_nodes}\n")).map_err(CliError::io(&count))
}

/// Reads an edge attribute table: one `u v a_1 … a_d` line per edge,
/// whitespace separated, `#` comments allowed. Returns a
/// `num_edges × dim` matrix indexed by edge id. Every training edge must be
/// listed; pairs that are not training edges are ignored.
pub fn load_edge_attrs(path: &Path, graph: &Graph, dim: usize) -> Result<Matrix64> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut rows: HashMap<(NodeId, NodeId), Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| CliError::format(path, format!("line {}: {m}", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 2 {
            return Err(bad(format!("expected 2 ids and {dim} attributes, got {} fields", fields.len())));
        }
        let id = |s: &str| s.parse::<NodeId>().map_err(|_| bad(format!("bad node id `{s}`")));
        let (u, v) = (id(fields[0])?, id(fields[1])?);
        let values = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad attribute `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(canonical((u, v)), values).is_some() {
            return Err(bad(format!("edge ({u},{v}) listed twice")));
        }
    }
    let mut table = Matrix64::zeros(graph.num_edges(), dim);
    for (e, pair) in graph.edges().iter().enumerate() {
        let values = rows
            .get(pair)
            .ok_or_else(|| CliError::format(path, format!("no attributes for training edge ({},{})", pair.0, pair.1)))?;
        table.row_mut(e).copy_from_slice(values);
    }
    table.ensure_finite("edge attributes")?;
    Ok(table)
}
