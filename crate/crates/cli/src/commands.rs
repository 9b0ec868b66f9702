//! The subcommands, as library functions returning their results.

use std::fs::{self, File};
use std::io::{LineWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use gdnn_core::diagnostics::{standard_suite, GradCheckCase};
use gdnn_core::graph::load_edge_list_file;
use gdnn_core::train::{evaluate, run_experiment, score_pairs, train_seed, EvalMetrics, ExperimentReport, TrainData};
use gdnn_core::{
    encode_features, select_targets, EdgeMode, FeatureMatrix64, GdnnError, Graph, Matrix64, NodeId, TargetStrategy,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{EncodeConfig, LoadedConfig, RunConfig};
use crate::dataset::{self, Dataset};
use crate::error::{CliError, Result};
use crate::features;

pub const METRICS_FILE: &str = "metrics.jsonl";

pub fn checkpoint_name(seed: u64) -> String {
    format!("seed_{seed}.ckpt")
}

/// Selects targets as configured and computes raw distance features.
pub fn encode(graph: &Graph, config: &EncodeConfig) -> Result<FeatureMatrix64> {
    let n = graph.num_nodes();
    if config.k > n {
        return Err(CliError::Config {
            path: PathBuf::from("[encode] k"),
            message: format!("k = {} exceeds the node count {n}", config.k),
        });
    }
    let strategy = TargetStrategy {
        kind: config.strategy,
        k: config.k,
    };
    let targets = select_targets(graph, strategy, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    Ok(encode_features(graph, &targets)?)
}

/// Features as the model sees them.
pub fn model_input(raw: &FeatureMatrix64, config: &EncodeConfig) -> FeatureMatrix64 {
    let mut f = raw.clone();
    if config.standardize {
        f.standardize();
    }
    f
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn cmd_encode(loaded: &LoadedConfig) -> Result<(PathBuf, FeatureMatrix64)> {
    let data = dataset::load(&loaded.split_dir())?;
    let f = encode(&data.graph, &loaded.config.encode)?;
    let path = loaded.features_path();
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    features::write(&path, &f)?;
    Ok((path, f))
}

/// Raw features for training: the feature file when it exists (checked
/// against a fresh encoding of its own targets), otherwise a fresh encoding.
pub fn training_features(loaded: &LoadedConfig, graph: &Graph) -> Result<FeatureMatrix64> {
    let path = loaded.features_path();
    if !path.exists() {
        return encode(graph, &loaded.config.encode);
    }
    let stored = features::read(&path)?;
    let stale = |m: String| CliError::format(&path, format!("{m}; rerun `gdnn encode`"));
    if stored.num_nodes() != graph.num_nodes() {
        return Err(stale(format!("{} rows for a {}-node graph", stored.num_nodes(), graph.num_nodes())));
    }
    if stored.dim() != loaded.config.encode.k {
        return Err(stale(format!("{} columns but encode.k = {}", stored.dim(), loaded.config.encode.k)));
    }
    if encode_features::<f64>(graph, &stored.targets)? != stored {
        return Err(stale("contents do not match the graph".into()));
    }
    Ok(stored)
}

pub fn provided_edges(loaded: &LoadedConfig, graph: &Graph) -> Result<Option<Matrix64>> {
    let model = &loaded.config.model;
    if model.edge_mode != EdgeMode::Provided {
        return Ok(None);
    }
    let path = loaded.edge_attr_path().ok_or_else(|| CliError::Config {
        path: loaded.path.clone(),
        message: "model.edge_mode = \"provided\" needs data.edge_attr".into(),
    })?;
    Ok(Some(dataset::load_edge_attrs(&path, graph, model.edge_dim)?))
}

fn to_core(e: CliError) -> GdnnError {
    match e {
        CliError::Core(e) => e,
        CliError::Io { path, source } => GdnnError::Io { path, source },
        other => GdnnError::InvalidData(other.to_string()),
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    num_seeds: usize,
    hits_k: usize,
    valid_hits_at_k_mean: f64,
    valid_hits_at_k_std: f64,
    test_hits_at_k_mean: f64,
    test_hits_at_k_std: f64,
    seeds: &'a [gdnn_core::train::SeedOutcome],
}

#[derive(Serialize)]
struct Aborted<'a> {
    seed: u64,
    error: &'a str,
}

/// Everything one training run needs besides the config.
pub struct TrainInputs<'a> {
    pub dataset: &'a Dataset,
    /// Raw features; the targets are saved in checkpoints.
    pub features: &'a FeatureMatrix64,
    pub provided: Option<Matrix64>,
}

/// Trains every configured seed in order, streaming records to
/// `{out}/metrics.jsonl` and optionally saving `{out}/seed_<s>.ckpt`.
pub fn run_training(config: &RunConfig, inputs: &TrainInputs<'_>, out: &Path, checkpoints: bool) -> Result<ExperimentReport> {
    create_dir(out)?;
    let metrics_path = out.join(METRICS_FILE);
    let mut log = LineWriter::new(File::create(&metrics_path).map_err(CliError::io(&metrics_path))?);
    let io_err = |source| GdnnError::Io {
        path: metrics_path.clone(),
        source,
    };

    let input = model_input(inputs.features, &config.encode);
    let data = TrainData {
        graph: &inputs.dataset.graph,
        features: &input,
        split: &inputs.dataset.split,
    };
    let mut model_config = config.model.clone();
    model_config.input_dim = input.dim();
    let wall = config.output.record_wall_time;

    let result = run_experiment(&config.train.seeds, |seed| {
        let (model, records) = train_seed(&data, &model_config, inputs.provided.clone(), &config.train, seed, wall, |r| {
            serde_json::to_writer(&mut log, r).map_err(|e| io_err(e.into()))?;
            log.write_all(b"\n").map_err(io_err)?;
            Ok(ControlFlow::Continue(()))
        })?;
        if checkpoints {
            let epoch = records.last().map_or(0, |r| r.epoch);
            Checkpoint::new(config, data.graph, seed, epoch, &inputs.features.targets, &model)
                .save(&out.join(checkpoint_name(seed)))
                .map_err(to_core)?;
        }
        Ok(records)
    });

    let line = match &result {
        Ok(report) => serde_json::json!({ "summary": Summary {
            num_seeds: report.aggregate.num_seeds,
            hits_k: config.train.hits_k,
            valid_hits_at_k_mean: report.aggregate.valid_hits_mean,
            valid_hits_at_k_std: report.aggregate.valid_hits_std,
            test_hits_at_k_mean: report.aggregate.test_hits_mean,
            test_hits_at_k_std: report.aggregate.test_hits_std,
            seeds: &report.seeds,
        }}),
        Err(a) => serde_json::json!({ "aborted": Aborted { seed: a.seed, error: &a.source.to_string() } }),
    };
    writeln!(log, "{line}").map_err(CliError::io(&metrics_path))?;
    log.flush().map_err(CliError::io(&metrics_path))?;
    result.map_err(|a| CliError::Core(a.source))
}

pub fn cmd_train(loaded: &LoadedConfig) -> Result<ExperimentReport> {
    let dataset = dataset::load(&loaded.split_dir())?;
    let features = training_features(loaded, &dataset.graph)?;
    let inputs = TrainInputs {
        provided: provided_edges(loaded, &dataset.graph)?,
        dataset: &dataset,
        features: &features,
    };
    run_training(&loaded.config, &inputs, &loaded.output_dir(), true)
}

/// Metrics of a saved model, in the same shape as a training record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalLine {
    pub seed: u64,
    pub epoch: usize,
    pub valid_hits_at_k: f64,
    pub test_hits_at_k: f64,
}

fn default_checkpoint(loaded: &LoadedConfig) -> PathBuf {
    loaded.output_dir().join(checkpoint_name(loaded.config.train.seeds[0]))
}

/// Loads a checkpoint with the dataset it was trained on and rebuilds its
/// model input features.
fn restore(loaded: &LoadedConfig, checkpoint: Option<&Path>, split: Option<&Path>) -> Result<(Checkpoint, Dataset, FeatureMatrix64)> {
    let path = checkpoint.map_or_else(|| default_checkpoint(loaded), Path::to_path_buf);
    let ck = Checkpoint::load(&path)?;
    let dir = split.map_or_else(|| loaded.split_dir(), Path::to_path_buf);
    let dataset = dataset::load(&dir)?;
    ck.verify(&dataset.graph)?;
    let raw = encode_features(&dataset.graph, &ck.targets)?;
    let input = model_input(&raw, &ck.config.encode);
    Ok((ck, dataset, input))
}

pub fn cmd_eval(loaded: &LoadedConfig, checkpoint: Option<&Path>, split: Option<&Path>) -> Result<EvalLine> {
    let (ck, dataset, input) = restore(loaded, checkpoint, split)?;
    let model = ck.model(&dataset.graph)?;
    let data = TrainData {
        graph: &dataset.graph,
        features: &input,
        split: &dataset.split,
    };
    let EvalMetrics {
        valid_hits_at_k,
        test_hits_at_k,
    } = evaluate(&data, &model, &ck.config.train)?;
    Ok(EvalLine {
        seed: ck.seed,
        epoch: ck.epoch,
        valid_hits_at_k,
        test_hits_at_k,
    })
}

/// Link probabilities for the pairs in `pairs_file`, in file order.
pub fn cmd_predict(loaded: &LoadedConfig, checkpoint: Option<&Path>, pairs_file: &Path) -> Result<Vec<(NodeId, NodeId, f64)>> {
    let (ck, dataset, input) = restore(loaded, checkpoint, None)?;
    let model = ck.model(&dataset.graph)?;
    let n = dataset.num_nodes();
    let pairs = load_edge_list_file(pairs_file)?
        .into_iter()
        .map(|(u, v)| {
            let id = |x: u64| {
                NodeId::try_from(x)
                    .ok()
                    .filter(|&i| (i as usize) < n)
                    .ok_or(GdnnError::NodeOutOfRange { id: x, num_nodes: n })
            };
            Ok((id(u)?, id(v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let logits = score_pairs(&model, &dataset.graph, None, &input, &pairs)?;
    Ok(pairs
        .into_iter()
        .zip(logits)
        .map(|((u, v), z)| (u, v, 1.0 / (1.0 + (-z).exp())))
        .collect())
}

/// Runs the finite-difference suite; fails with a numeric error when any
/// case exceeds the tolerance.
pub fn cmd_gradcheck() -> Result<Vec<GradCheckCase>> {
    Ok(standard_suite()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdnn_core::TargetKind;

    #[test]
    fn triangle_max_degree_single_target() {
        let g = Graph::build(&[(0u32, 1u32), (1, 2), (0, 2)], 3).unwrap();
        let config = EncodeConfig {
            k: 1,
            strategy: TargetKind::MaxDegree,
            ..EncodeConfig::default()
        };
        let f = encode(&g, &config).unwrap();
        assert_eq!(f.targets, vec![0]);
        assert_eq!(f.data.data(), &[0.0, 1.0, 1.0]);
        let too_many = EncodeConfig { k: 4, ..config };
        assert_eq!(encode(&g, &too_many).unwrap_err().exit_code(), 1);
    }
}
