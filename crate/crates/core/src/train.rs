//! Negative-sampled training, Hits@K evaluation and the multi-seed
//! experiment runner.

use std::ops::ControlFlow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::FeatureMatrix;
use crate::error::{GdnnError, Result};
use crate::graph::{EdgeSplit, Graph, NodeId};
use crate::model::{DropoutMasks, GdnnModel};
use crate::nn::{AdamConfig, AdamState};
use crate::scalar::Scalar;

/// Default `K` for Hits@K.
pub const DEFAULT_HITS_K: usize = 20;

/// Rejection attempts allowed per requested negative.
const ATTEMPTS_PER_SAMPLE: usize = 1000;

/// Deterministic per-purpose generator: stream `stream` of the ChaCha8
/// generator seeded with `seed`.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by [`train_seed`].
pub mod streams {
    pub const INIT: u64 = 0;
    pub const TRAIN: u64 = 1;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Positive edges per optimizer step.
    pub batch_size: usize,
    pub neg_per_pos: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub hits_k: usize,
    /// Add validation positives to the message-passing graph when scoring
    /// the test split.
    pub valid_edges_for_test: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 200,
            batch_size: 64 * 1024,
            neg_per_pos: 1,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seeds: (0..10).collect(),
            eval_every: 1,
            hits_k: DEFAULT_HITS_K,
            valid_edges_for_test: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GdnnError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.neg_per_pos == 0 {
            return bad("neg_per_pos must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.hits_k == 0 {
            return bad("hits_k must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if !(self.lr >= 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return bad("optimizer hyperparameters out of range");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One line of the metrics log. Hits values are absent on epochs that were
/// not evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_hits_at_k: Option<f64>,
    pub test_hits_at_k: Option<f64>,
    pub wall_time: f64,
}

/// `count` uniformly drawn non-edges `(u, v)`, `u ≠ v`. Duplicates within the
/// result are allowed.
pub fn sample_negatives<R: Rng + ?Sized>(g: &Graph, count: usize, rng: &mut R) -> Result<Vec<(NodeId, NodeId)>> {
    let n = g.num_nodes();
    let possible = n * n.saturating_sub(1) / 2;
    if count > 0 && g.num_edges() >= possible {
        return Err(GdnnError::RejectionExhausted { attempts: 0 });
    }
    let budget = count.saturating_mul(ATTEMPTS_PER_SAMPLE).max(ATTEMPTS_PER_SAMPLE);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        if attempts == budget {
            return Err(GdnnError::RejectionExhausted { attempts });
        }
        attempts += 1;
        let u = rng.gen_range(0..n) as NodeId;
        let v = rng.gen_range(0..n) as NodeId;
        if u != v && !g.has_edge(u, v) {
            out.push((u, v));
        }
    }
    Ok(out)
}

/// Fraction of positives scored strictly above the `k`-th largest negative.
pub fn hits_at_k<T: Scalar>(pos_scores: &[T], neg_scores: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(GdnnError::Config("hits@k needs k >= 1".into()));
    }
    if neg_scores.len() < k {
        return Err(GdnnError::InvalidData(format!(
            "hits@{k} needs at least {k} negative scores, got {}",
            neg_scores.len()
        )));
    }
    if pos_scores.iter().chain(neg_scores).any(|s| s.is_nan()) {
        return Err(GdnnError::NonFinite("hits@k scores".into()));
    }
    if pos_scores.is_empty() {
        return Ok(0.0);
    }
    let mut neg = neg_scores.to_vec();
    let idx = k - 1;
    neg.select_nth_unstable_by(idx, |a, b| b.partial_cmp(a).unwrap());
    let threshold = neg[idx];
    let hits = pos_scores.iter().filter(|&&s| s > threshold).count();
    Ok(hits as f64 / pos_scores.len() as f64)
}

/// Everything a training run reads but never mutates.
pub struct TrainData<'a, T> {
    /// Message-passing graph (the training edges).
    pub graph: &'a Graph,
    pub features: &'a FeatureMatrix<T>,
    pub split: &'a EdgeSplit,
}

/// Runs one epoch: shuffles the training edges, resamples neighborhoods,
/// then for each batch draws `neg_per_pos` negatives per positive and takes
/// one Adam step. Returns the mean batch loss.
pub fn train_epoch<T: Scalar, R: Rng + ?Sized>(
    data: &TrainData<'_, T>,
    model: &mut GdnnModel<T>,
    optimizer: &mut AdamState<T>,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut order = data.split.train_pos.clone();
    order.shuffle(rng);
    let neighborhoods = model.sample_neighborhoods(data.graph, rng, None);
    let n = data.features.num_nodes();
    let mut total = 0.0;
    let mut batches = 0usize;
    for batch in order.chunks(config.batch_size) {
        let negatives = sample_negatives(data.graph, batch.len() * config.neg_per_pos, rng)?;
        let mut pairs = Vec::with_capacity(batch.len() + negatives.len());
        pairs.extend_from_slice(batch);
        pairs.extend_from_slice(&negatives);
        let mut labels = vec![T::one(); batch.len()];
        labels.resize(pairs.len(), T::zero());
        let masks = DropoutMasks::sample(model.config(), n, rng);
        let loss = model.forward_backward(&data.features.data, &neighborhoods, &masks, &pairs, &labels)?;
        if !loss.is_finite() {
            return Err(GdnnError::NonFinite(format!("training loss at batch {batches}")));
        }
        optimizer.step(&mut model.params)?;
        total += loss.as_f64();
        batches += 1;
    }
    if batches == 0 {
        return Err(GdnnError::EmptyInput("train_epoch (no training edges)"));
    }
    Ok(total / batches as f64)
}

/// Logits for `pairs` with full neighborhoods and no dropout.
pub fn score_pairs<T: Scalar>(
    model: &GdnnModel<T>,
    graph: &Graph,
    edge_rows: Option<&[u32]>,
    features: &FeatureMatrix<T>,
    pairs: &[(NodeId, NodeId)],
) -> Result<Vec<T>> {
    let nb = model.full_neighborhoods(graph, edge_rows);
    let enc = model.encode(&features.data, &nb, &DropoutMasks::none())?;
    Ok(model.score(enc.embeddings.output(), pairs)?.logits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub valid_hits_at_k: f64,
    pub test_hits_at_k: f64,
}

/// Message graph with validation positives added, plus the map from its
/// edge ids to rows of the training graph's edge table.
pub fn graph_with_valid_edges(train: &Graph, split: &EdgeSplit) -> Result<(Graph, Vec<u32>)> {
    let mut pairs: Vec<(NodeId, NodeId)> = train.edges().to_vec();
    pairs.extend_from_slice(&split.valid_pos);
    let g = Graph::build(&pairs, train.num_nodes())?;
    let rows = g
        .edges()
        .iter()
        .map(|&(u, v)| train.edge_id(u, v).unwrap_or(crate::model::NO_EDGE_ROW))
        .collect();
    Ok((g, rows))
}

/// Hits@K on the validation and test splits in evaluation mode.
pub fn evaluate<T: Scalar>(data: &TrainData<'_, T>, model: &GdnnModel<T>, config: &TrainConfig) -> Result<EvalMetrics> {
    let k = config.hits_k;
    let split = data.split;
    let valid_pos = score_pairs(model, data.graph, None, data.features, &split.valid_pos)?;
    let valid_neg = score_pairs(model, data.graph, None, data.features, &split.valid_neg)?;
    let (test_pos, test_neg) = if config.valid_edges_for_test {
        let (g, rows) = graph_with_valid_edges(data.graph, split)?;
        (
            score_pairs(model, &g, Some(&rows), data.features, &split.test_pos)?,
            score_pairs(model, &g, Some(&rows), data.features, &split.test_neg)?,
        )
    } else {
        (
            score_pairs(model, data.graph, None, data.features, &split.test_pos)?,
            score_pairs(model, data.graph, None, data.features, &split.test_neg)?,
        )
    };
    Ok(EvalMetrics {
        valid_hits_at_k: hits_at_k(&valid_pos, &valid_neg, k)?,
        test_hits_at_k: hits_at_k(&test_pos, &test_neg, k)?,
    })
}

/// Trains one freshly initialized model for `seed`. `on_record` sees every
/// epoch's record as soon as it exists and may end training early by
/// returning `ControlFlow::Break`. The last scheduled epoch is always
/// evaluated.
#[allow(clippy::too_many_arguments)]
pub fn train_seed<T: Scalar>(
    data: &TrainData<'_, T>,
    model_config: &crate::model::GdnnConfig,
    provided_edges: Option<crate::nn::Matrix<T>>,
    config: &TrainConfig,
    seed: u64,
    record_wall_time: bool,
    mut on_record: impl FnMut(&MetricsRecord) -> Result<ControlFlow<()>>,
) -> Result<(GdnnModel<T>, Vec<MetricsRecord>)> {
    config.validate()?;
    let mut init_rng = derive_rng(seed, streams::INIT);
    let mut rng = derive_rng(seed, streams::TRAIN);
    let mut model = GdnnModel::new(model_config.clone(), data.graph.num_edges(), provided_edges, &mut init_rng)?;
    let mut optimizer = AdamState::new(config.adam(), &model.params);
    let start = Instant::now();
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let train_loss = train_epoch(data, &mut model, &mut optimizer, config, &mut rng)?;
        let evaluated = epoch % config.eval_every == 0 || epoch == config.epochs;
        let metrics = if evaluated {
            Some(evaluate(data, &model, config)?)
        } else {
            None
        };
        let record = MetricsRecord {
            seed,
            epoch,
            train_loss,
            valid_hits_at_k: metrics.map(|m| m.valid_hits_at_k),
            test_hits_at_k: metrics.map(|m| m.test_hits_at_k),
            wall_time: if record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        let flow = on_record(&record)?;
        records.push(record);
        if flow.is_break() {
            break;
        }
    }
    Ok((model, records))
}

/// Mean and sample (n−1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-seed result after model selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Epoch with the best validation Hits@K (earliest on ties).
    pub best_epoch: usize,
    pub valid_hits_at_k: f64,
    pub test_hits_at_k: f64,
    pub final_train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub num_seeds: usize,
    pub valid_hits_mean: f64,
    pub valid_hits_std: f64,
    pub test_hits_mean: f64,
    pub test_hits_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: Aggregate,
    pub records: Vec<MetricsRecord>,
}

/// A seed's training failed; results for the seeds before it are kept.
#[derive(Debug, thiserror::Error)]
#[error("seed {seed} failed: {source}")]
pub struct ExperimentAborted {
    pub seed: u64,
    #[source]
    pub source: GdnnError,
    pub completed: Vec<SeedOutcome>,
    pub records: Vec<MetricsRecord>,
}

/// Picks the best-validation epoch from one seed's records.
pub fn select_best(seed: u64, records: &[MetricsRecord]) -> Result<SeedOutcome> {
    let mut best: Option<&MetricsRecord> = None;
    for r in records {
        if let (Some(v), Some(_)) = (r.valid_hits_at_k, r.test_hits_at_k) {
            if best.is_none_or(|b| v > b.valid_hits_at_k.unwrap()) {
                best = Some(r);
            }
        }
    }
    let best = best.ok_or_else(|| GdnnError::InvalidData(format!("seed {seed} produced no evaluated epoch")))?;
    Ok(SeedOutcome {
        seed,
        best_epoch: best.epoch,
        valid_hits_at_k: best.valid_hits_at_k.unwrap(),
        test_hits_at_k: best.test_hits_at_k.unwrap(),
        final_train_loss: records.last().map_or(f64::NAN, |r| r.train_loss),
    })
}

pub fn aggregate(outcomes: &[SeedOutcome]) -> Aggregate {
    let valid: Vec<f64> = outcomes.iter().map(|o| o.valid_hits_at_k).collect();
    let test: Vec<f64> = outcomes.iter().map(|o| o.test_hits_at_k).collect();
    let (valid_hits_mean, valid_hits_std) = mean_and_std(&valid);
    let (test_hits_mean, test_hits_std) = mean_and_std(&test);
    Aggregate {
        num_seeds: outcomes.len(),
        valid_hits_mean,
        valid_hits_std,
        test_hits_mean,
        test_hits_std,
    }
}

/// Runs `run_seed` for every seed in order, selects each seed's
/// best-validation epoch and aggregates mean ± sample std.
pub fn run_experiment<F>(seeds: &[u64], mut run_seed: F) -> Result<ExperimentReport, ExperimentAborted>
where
    F: FnMut(u64) -> Result<Vec<MetricsRecord>>,
{
    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut all = Vec::new();
    for &seed in seeds {
        let result = run_seed(seed).and_then(|records| {
            let outcome = select_best(seed, &records)?;
            Ok((records, outcome))
        });
        match result {
            Ok((records, outcome)) => {
                all.extend(records);
                outcomes.push(outcome);
            }
            Err(source) => {
                return Err(ExperimentAborted {
                    seed,
                    source,
                    completed: outcomes,
                    records: all,
                })
            }
        }
    }
    if outcomes.is_empty() {
        return Err(ExperimentAborted {
            seed: 0,
            source: GdnnError::Config("at least one seed is required".into()),
            completed: Vec::new(),
            records: Vec::new(),
        });
    }
    Ok(ExperimentReport {
        aggregate: aggregate(&outcomes),
        seeds: outcomes,
        records: all,
    })
}
