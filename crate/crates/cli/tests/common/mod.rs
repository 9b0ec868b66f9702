#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gdnn_core::graph::canonical;
use gdnn_core::{EdgeSplit, Graph, NodeId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gdnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdnn"))
        .current_dir(dir)
        .env("GDNN_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn describe(o: &Output) -> String {
    format!(
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

/// G(n, p) edge list in canonical order.
pub fn erdos_renyi(n: u32, p: f64, seed: u64) -> Vec<(NodeId, NodeId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

pub fn write_pairs(path: &Path, pairs: &[(NodeId, NodeId)]) {
    let text: String = pairs.iter().map(|(u, v)| format!("{u}\t{v}\n")).collect();
    fs::write(path, text).unwrap();
}

pub fn write_split(dir: &Path, split: &EdgeSplit) {
    fs::create_dir_all(dir).unwrap();
    for (name, pairs) in split.parts() {
        write_pairs(&dir.join(name), pairs);
    }
}

/// `count` distinct canonical pairs that are not edges of `g` and not in
/// `exclude`.
pub fn non_edges<R: Rng>(g: &Graph, count: usize, exclude: &HashSet<(NodeId, NodeId)>, rng: &mut R) -> Vec<(NodeId, NodeId)> {
    let n = g.num_nodes() as NodeId;
    let mut all: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|&(u, v)| !g.has_edge(u, v) && !exclude.contains(&(u, v)))
        .collect();
    assert!(all.len() >= count, "only {} non-edges available", all.len());
    all.shuffle(rng);
    all.truncate(count);
    all
}

/// Holds out `fraction` of `edges` into both validation and test positives,
/// with `negatives` shared random non-edges of the full graph.
pub fn holdout_split(n: usize, edges: &[(NodeId, NodeId)], fraction: f64, negatives: usize, seed: u64) -> (Graph, EdgeSplit) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<_> = edges.iter().copied().map(canonical).collect();
    shuffled.shuffle(&mut rng);
    let held = ((edges.len() as f64) * fraction).round().max(1.0) as usize;
    let (held_out, train) = shuffled.split_at(held);
    let full = Graph::build(edges, n).unwrap();
    let neg = non_edges(&full, negatives, &HashSet::new(), &mut rng);
    let split = EdgeSplit {
        train_pos: train.to_vec(),
        valid_pos: held_out.to_vec(),
        valid_neg: neg.clone(),
        test_pos: held_out.to_vec(),
        test_neg: neg,
    };
    split.validate().unwrap();
    (Graph::build(&split.train_pos, n).unwrap(), split)
}
