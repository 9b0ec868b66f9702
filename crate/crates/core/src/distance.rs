//! Anchor-distance node features: hop distances from every node to `k`
//! selected target nodes.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GdnnError, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::Matrix;
use crate::scalar::Scalar;

/// Marker for "no path" in [`bfs_distances`] output.
pub const UNREACHABLE: u32 = u32::MAX;

/// Default number of targets.
pub const DEFAULT_K: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Random,
    MinDegree,
    MaxDegree,
}

impl TargetKind {
    pub const ALL: [TargetKind; 3] = [TargetKind::Random, TargetKind::MinDegree, TargetKind::MaxDegree];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Random => "random",
            TargetKind::MinDegree => "min_degree",
            TargetKind::MaxDegree => "max_degree",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = GdnnError;

    fn from_str(s: &str) -> Result<Self> {
        TargetKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GdnnError::Config(format!("unknown target strategy `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TargetStrategy {
    pub kind: TargetKind,
    pub k: usize,
}

impl Default for TargetStrategy {
    fn default() -> Self {
        Self {
            kind: TargetKind::Random,
            k: DEFAULT_K,
        }
    }
}

/// Picks `k` distinct target nodes, returned sorted ascending.
///
/// Degree-based strategies break ties by ascending node id.
pub fn select_targets<R: Rng + ?Sized>(
    g: &Graph,
    strategy: TargetStrategy,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let n = g.num_nodes();
    let k = strategy.k;
    if k == 0 || k > n {
        return Err(GdnnError::Config(format!(
            "target count k={k} must be in 1..={n}"
        )));
    }
    let mut targets: Vec<NodeId> = match strategy.kind {
        TargetKind::Random => index::sample(rng, n, k)
            .into_iter()
            .map(|i| i as NodeId)
            .collect(),
        TargetKind::MinDegree | TargetKind::MaxDegree => {
            let mut order: Vec<NodeId> = (0..n as NodeId).collect();
            if strategy.kind == TargetKind::MinDegree {
                order.sort_by_key(|&v| (g.degree(v), v));
            } else {
                order.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
            }
            order.truncate(k);
            order
        }
    };
    targets.sort_unstable();
    Ok(targets)
}

/// Hop distances from `source`; unreachable nodes get [`UNREACHABLE`].
pub fn bfs_distances(g: &Graph, source: NodeId) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; g.num_nodes()];
    let mut queue = VecDeque::new();
    dist[source as usize] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u as usize] + 1;
        for &w in g.neighbors(u) {
            if dist[w as usize] == UNREACHABLE {
                dist[w as usize] = next;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// `N × k` matrix of distances to the targets, column `j` for `targets[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix<T> {
    pub data: Matrix<T>,
    pub targets: Vec<NodeId>,
    pub unreachable_sentinel: T,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn num_nodes(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// Rescales every column to zero mean and unit variance (population
    /// statistics); constant columns are only centered.
    pub fn standardize(&mut self) {
        let (n, k) = self.data.shape();
        if n == 0 {
            return;
        }
        let nn = T::from_usize(n).unwrap();
        for j in 0..k {
            let mean = (0..n).map(|i| self.data.get(i, j)).sum::<T>() / nn;
            let var = (0..n)
                .map(|i| {
                    let d = self.data.get(i, j) - mean;
                    d * d
                })
                .sum::<T>()
                / nn;
            let sd = var.sqrt();
            for i in 0..n {
                let centered = self.data.get(i, j) - mean;
                let v = if sd > T::zero() { centered / sd } else { centered };
                self.data.set(i, j, v);
            }
        }
    }
}

/// Runs one BFS per target (in parallel) and assembles the feature matrix,
/// replacing unreachable entries with `N`.
pub fn encode_features<T: Scalar>(g: &Graph, targets: &[NodeId]) -> Result<FeatureMatrix<T>> {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    for &t in targets {
        if t as usize >= n {
            return Err(GdnnError::NodeOutOfRange {
                id: t as u64,
                num_nodes: n,
            });
        }
        if std::mem::replace(&mut seen[t as usize], true) {
            return Err(GdnnError::Config(format!("duplicate target {t}")));
        }
    }
    let sentinel = T::from_usize(n).unwrap();
    let columns: Vec<Vec<u32>> = targets.par_iter().map(|&t| bfs_distances(g, t)).collect();
    let k = targets.len();
    let mut data = Matrix::zeros(n, k);
    for (j, col) in columns.iter().enumerate() {
        for (i, &d) in col.iter().enumerate() {
            let v = if d == UNREACHABLE {
                sentinel
            } else {
                T::from_u32(d).unwrap()
            };
            data.set(i, j, v);
        }
    }
    Ok(FeatureMatrix {
        data,
        targets: targets.to_vec(),
        unreachable_sentinel: sentinel,
    })
}
