//! Edge-aware message-passing encoder and Hadamard-MLP link decoder.
//!
//! Layer `t` maps node states `H` (`N × d`) to
//!
//! ```text
//! sampled_mean:  h_i' = W_selfᵀ h_i + W_neighᵀ · mean_{(j,e) ∈ S(i)} (W_edgeᵀ e + h_j)
//! gated_sum:     h_i' = W_selfᵀ h_i + W_neighᵀ · Σ_{(j,e) ∈ N(i)} f(e) ⊙ h_j,   f(e) = W_gateᵀ e + b_gate
//! ```
//!
//! followed by ReLU (and dropout while training) on every layer but the last.
//! `S(i)` is a uniform sample of at most `fanout` neighbors, `N(i)` the full
//! neighbor list. With `EdgeMode::None` the edge terms are not allocated at
//! all: the sampled-mean layer reduces to plain mean aggregation and the
//! gated sum to a plain neighbor sum.
//!
//! The decoder scores a pair as `MLP(h_u ⊙ h_v)`, which is symmetric in
//! `(u, v)` bit for bit.
//!
//! Gradients are composed by hand in [`GdnnModel::backward`]; the
//! finite-difference suite in `tests/gradients.rs` covers every parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GdnnError, Result};
use crate::graph::{EdgeId, Graph, NodeId};
use crate::nn::ops::{affine_backward, affine_forward, bce_with_logits, relu_backward, relu_forward};
use crate::nn::{Matrix, ParamStore};
use crate::scalar::Scalar;

/// Row index meaning "this neighbor entry has no edge vector".
pub const NO_EDGE_ROW: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// No edge term; the ablated model.
    None,
    /// Trainable `num_edges × edge_dim` table indexed by edge id.
    #[default]
    Learned,
    /// Frozen attribute table supplied with the dataset.
    Provided,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Sum over the full neighborhood, each neighbor gated by `f(e_ij)`.
    #[serde(alias = "eq5")]
    GatedSum,
    /// Mean over a sampled neighborhood of `W_edge e_ij + h_j`.
    #[default]
    #[serde(alias = "eq6")]
    SampledMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdnnConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Width of the input features; set from the feature matrix.
    #[serde(skip)]
    pub input_dim: usize,
    pub edge_mode: EdgeMode,
    pub edge_dim: usize,
    pub fanout: usize,
    pub predictor_hidden: Vec<usize>,
    pub update_rule: UpdateRule,
    /// Drop probability on hidden node states between layers (training only).
    pub dropout: f64,
}

impl Default for GdnnConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 256,
            input_dim: crate::distance::DEFAULT_K,
            edge_mode: EdgeMode::Learned,
            edge_dim: 16,
            fanout: 25,
            predictor_hidden: vec![256],
            update_rule: UpdateRule::SampledMean,
            dropout: 0.5,
        }
    }
}

impl GdnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GdnnError::Config(m.to_string()));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.hidden_dim == 0 || self.input_dim == 0 {
            return bad("hidden_dim and input_dim must be positive");
        }
        if self.fanout == 0 {
            return bad("fanout must be at least 1");
        }
        if self.edge_mode != EdgeMode::None && self.edge_dim == 0 {
            return bad("edge_dim must be at least 1 when edges are used");
        }
        if self.predictor_hidden.contains(&0) {
            return bad("predictor_hidden widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    fn uses_edges(&self) -> bool {
        self.edge_mode != EdgeMode::None
    }
}

/// Neighbor lists used by one layer: for node `i`, parallel slices of
/// neighbor ids and edge-table rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    offsets: Vec<usize>,
    nodes: Vec<NodeId>,
    edge_rows: Vec<u32>,
}

fn table_row(edge_rows: Option<&[u32]>, e: EdgeId) -> u32 {
    match edge_rows {
        Some(map) => map[e as usize],
        None => e,
    }
}

impl Neighborhood {
    /// Every neighbor of every node. `edge_rows` maps the graph's edge ids to
    /// rows of the edge table (`None`: identity).
    pub fn full(g: &Graph, edge_rows: Option<&[u32]>) -> Self {
        let nodes = g.col_indices().to_vec();
        let edge_rows = g.edge_ids().iter().map(|&e| table_row(edge_rows, e)).collect();
        Self {
            offsets: g.row_offsets().to_vec(),
            nodes,
            edge_rows,
        }
    }

    /// At most `fanout` neighbors per node, see [`Graph::sample_neighbors`].
    pub fn sampled<R: Rng + ?Sized>(g: &Graph, fanout: usize, rng: &mut R, edge_rows: Option<&[u32]>) -> Self {
        let mut offsets = Vec::with_capacity(g.num_nodes() + 1);
        let mut nodes = Vec::new();
        let mut rows = Vec::new();
        offsets.push(0);
        for v in 0..g.num_nodes() as NodeId {
            for (j, e) in g.sample_neighbors(v, fanout, rng) {
                nodes.push(j);
                rows.push(table_row(edge_rows, e));
            }
            offsets.push(nodes.len());
        }
        Self {
            offsets,
            nodes,
            edge_rows: rows,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Total neighbor entries.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn of(&self, i: usize) -> (&[NodeId], &[u32]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.nodes[r.clone()], &self.edge_rows[r])
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Inverted-dropout masks for the hidden states after each non-final layer;
/// entries are `0` or `1 / (1 − p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks<T> {
    masks: Vec<Matrix<T>>,
}

impl<T: Scalar> DropoutMasks<T> {
    pub fn sample<R: Rng + ?Sized>(config: &GdnnConfig, num_nodes: usize, rng: &mut R) -> Self {
        if config.dropout == 0.0 {
            return Self { masks: Vec::new() };
        }
        let keep = T::lit(1.0 / (1.0 - config.dropout));
        let masks = (0..config.num_layers - 1)
            .map(|_| {
                let data = (0..num_nodes * config.hidden_dim)
                    .map(|_| if rng.gen_bool(config.dropout) { T::zero() } else { keep })
                    .collect();
                Matrix::from_vec(num_nodes, config.hidden_dim, data).unwrap()
            })
            .collect();
        Self { masks }
    }

    pub fn none() -> Self {
        Self { masks: Vec::new() }
    }

    pub fn cast<U: Scalar>(&self) -> DropoutMasks<U> {
        DropoutMasks {
            masks: self.masks.iter().map(Matrix::cast).collect(),
        }
    }

    fn get(&self, layer: usize) -> Option<&Matrix<T>> {
        self.masks.get(layer)
    }
}

/// Node states `H^0 … H^L`; `H^0` is the projected input, `H^L` the
/// embedding the decoder consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings<T> {
    pub layers: Vec<Matrix<T>>,
}

impl<T: Scalar> NodeEmbeddings<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.layers.last().expect("at least the input projection")
    }
}

#[derive(Clone, Debug)]
struct LayerCache<T> {
    /// Aggregated message per node (input to `W_neigh`).
    message: Matrix<T>,
    /// Mean edge vector per node (sampled-mean with edges).
    edge_mean: Option<Matrix<T>>,
    /// Edge vectors and gates per neighbor entry (gated sum with edges).
    entry_edges: Option<Matrix<T>>,
    gates: Option<Matrix<T>>,
    pre_activation: Matrix<T>,
}

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderPass<T> {
    pub embeddings: NodeEmbeddings<T>,
    layers: Vec<LayerCache<T>>,
}

#[derive(Clone, Debug)]
pub struct PredictorPass<T> {
    pairs: Vec<(NodeId, NodeId)>,
    /// Input of each affine layer; `inputs[0]` is the Hadamard product.
    inputs: Vec<Matrix<T>>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix<T>>,
    pub logits: Vec<T>,
}

fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.gen_range(-limit..limit))).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn layer_param(layer: usize, what: &str) -> String {
    format!("layer{layer}.{what}")
}

pub fn predictor_param(index: usize, what: &str) -> String {
    format!("predictor.{index}.{what}")
}

pub const INPUT_WEIGHT: &str = "input.weight";
pub const INPUT_BIAS: &str = "input.bias";
pub const EDGE_TABLE: &str = "edge.table";

/// The full model: configuration, trainable parameters and (for
/// `EdgeMode::Provided`) the frozen edge attribute table.
#[derive(Clone, Debug)]
pub struct GdnnModel<T> {
    config: GdnnConfig,
    pub params: ParamStore<T>,
    provided_edges: Option<Matrix<T>>,
}

impl<T: Scalar> GdnnModel<T> {
    /// Randomly initialized model for a message graph with `num_edges` edges.
    ///
    /// `provided_edges` is required iff `edge_mode` is `Provided`.
    pub fn new<R: Rng + ?Sized>(
        config: GdnnConfig,
        num_edges: usize,
        provided_edges: Option<Matrix<T>>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        Self::check_provided(&config, num_edges, provided_edges.as_ref())?;
        let d = config.hidden_dim;
        let mut params = ParamStore::new();
        params.insert(INPUT_WEIGHT, glorot(config.input_dim, d, rng));
        params.insert(INPUT_BIAS, Matrix::zeros(1, d));
        if config.edge_mode == EdgeMode::Learned {
            let limit = 3f64.sqrt();
            let data = (0..num_edges * config.edge_dim)
                .map(|_| T::lit(rng.gen_range(-limit..limit)))
                .collect();
            params.insert(EDGE_TABLE, Matrix::from_vec(num_edges, config.edge_dim, data)?);
        }
        for l in 0..config.num_layers {
            params.insert(layer_param(l, "w_self"), glorot(d, d, rng));
            params.insert(layer_param(l, "w_neigh"), glorot(d, d, rng));
            if config.uses_edges() {
                match config.update_rule {
                    UpdateRule::SampledMean => {
                        params.insert(layer_param(l, "w_edge"), glorot(config.edge_dim, d, rng));
                    }
                    UpdateRule::GatedSum => {
                        params.insert(layer_param(l, "gate.weight"), glorot(config.edge_dim, d, rng));
                        params.insert(layer_param(l, "gate.bias"), Matrix::filled(1, d, T::one()));
                    }
                }
            }
        }
        let mut width = d;
        for (i, &h) in config.predictor_hidden.iter().enumerate() {
            params.insert(predictor_param(i, "weight"), glorot(width, h, rng));
            params.insert(predictor_param(i, "bias"), Matrix::zeros(1, h));
            width = h;
        }
        let last = config.predictor_hidden.len();
        params.insert(predictor_param(last, "weight"), glorot(width, 1, rng));
        params.insert(predictor_param(last, "bias"), Matrix::zeros(1, 1));
        Ok(Self {
            config,
            params,
            provided_edges,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes
    /// against what `config` requires.
    pub fn from_params(
        config: GdnnConfig,
        num_edges: usize,
        provided_edges: Option<Matrix<T>>,
        params: ParamStore<T>,
    ) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let template = Self::new(config, num_edges, provided_edges, &mut rng)?;
        let expected: Vec<_> = template.params.iter().map(|(n, m)| (n.to_string(), m.shape())).collect();
        let got: Vec<_> = params.iter().map(|(n, m)| (n.to_string(), m.shape())).collect();
        if expected != got {
            return Err(GdnnError::InvalidData(format!(
                "stored parameters do not match the model configuration (expected {expected:?}, got {got:?})"
            )));
        }
        Ok(Self { params, ..template })
    }

    fn check_provided(config: &GdnnConfig, num_edges: usize, provided: Option<&Matrix<T>>) -> Result<()> {
        match (config.edge_mode, provided) {
            (EdgeMode::Provided, Some(t)) => {
                if t.shape() != (num_edges, config.edge_dim) {
                    return Err(GdnnError::shape(
                        "provided edge features",
                        format!("{:?}, expected ({num_edges}, {})", t.shape(), config.edge_dim),
                    ));
                }
                t.ensure_finite("provided edge features")
            }
            (EdgeMode::Provided, None) => Err(GdnnError::Config(
                "edge_mode = provided needs an edge attribute table".into(),
            )),
            (_, Some(_)) => Err(GdnnError::Config(
                "edge attribute table given but edge_mode is not provided".into(),
            )),
            (_, None) => Ok(()),
        }
    }

    pub fn config(&self) -> &GdnnConfig {
        &self.config
    }

    pub fn provided_edges(&self) -> Option<&Matrix<T>> {
        self.provided_edges.as_ref()
    }

    fn edge_table<'a>(&'a self, params: &'a ParamStore<T>) -> Result<Option<&'a Matrix<T>>> {
        match self.config.edge_mode {
            EdgeMode::None => Ok(None),
            EdgeMode::Learned => params.value(EDGE_TABLE).map(Some),
            EdgeMode::Provided => Ok(self.provided_edges.as_ref()),
        }
    }

    /// Neighborhoods for one training pass: sampled for the sampled-mean
    /// rule, full for the gated sum. Each layer samples independently.
    pub fn sample_neighborhoods<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        rng: &mut R,
        edge_rows: Option<&[u32]>,
    ) -> Vec<Neighborhood> {
        match self.config.update_rule {
            UpdateRule::SampledMean => (0..self.config.num_layers)
                .map(|_| Neighborhood::sampled(g, self.config.fanout, rng, edge_rows))
                .collect(),
            UpdateRule::GatedSum => self.full_neighborhoods(g, edge_rows),
        }
    }

    /// Full neighborhoods for every layer (evaluation).
    pub fn full_neighborhoods(&self, g: &Graph, edge_rows: Option<&[u32]>) -> Vec<Neighborhood> {
        let full = Neighborhood::full(g, edge_rows);
        vec![full; self.config.num_layers]
    }

    pub fn encode(
        &self,
        features: &Matrix<T>,
        neighborhoods: &[Neighborhood],
        dropout: &DropoutMasks<T>,
    ) -> Result<EncoderPass<T>> {
        self.encode_with(&self.params, features, neighborhoods, dropout)
    }

    /// Encoder forward pass with explicit parameters (used by the gradient
    /// checker).
    pub fn encode_with(
        &self,
        params: &ParamStore<T>,
        features: &Matrix<T>,
        neighborhoods: &[Neighborhood],
        dropout: &DropoutMasks<T>,
    ) -> Result<EncoderPass<T>> {
        let cfg = &self.config;
        if features.cols() != cfg.input_dim {
            return Err(GdnnError::shape(
                "encoder input",
                format!("{} feature columns, model expects {}", features.cols(), cfg.input_dim),
            ));
        }
        if neighborhoods.len() != cfg.num_layers {
            return Err(GdnnError::shape(
                "encoder neighborhoods",
                format!("{} given for {} layers", neighborhoods.len(), cfg.num_layers),
            ));
        }
        let n = features.rows();
        if let Some(bad) = neighborhoods.iter().find(|nb| nb.num_nodes() != n) {
            return Err(GdnnError::shape(
                "encoder neighborhoods",
                format!("neighborhood over {} nodes, features for {n}", bad.num_nodes()),
            ));
        }
        let table = self.edge_table(params)?;
        let h0 = affine_forward(features, params.value(INPUT_WEIGHT)?, params.value(INPUT_BIAS)?)?;
        let mut states = vec![h0];
        let mut caches = Vec::with_capacity(cfg.num_layers);

        for (l, nb) in neighborhoods.iter().enumerate() {
            let h = states.last().unwrap();
            let d = h.cols();
            let mut message = Matrix::zeros(n, d);
            let mut edge_mean = None;
            let mut entry_edges = None;
            let mut gates = None;

            match cfg.update_rule {
                UpdateRule::SampledMean => {
                    let mut ebar = table.map(|t| Matrix::zeros(n, t.cols()));
                    for i in 0..n {
                        let (nbrs, rows) = nb.of(i);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let count = T::from_usize(nbrs.len()).unwrap();
                        let acc = message.row_mut(i);
                        for &j in nbrs {
                            for (a, &v) in acc.iter_mut().zip(h.row(j as usize)) {
                                *a += v;
                            }
                        }
                        acc.iter_mut().for_each(|a| *a /= count);
                        if let (Some(t), Some(eb)) = (table, ebar.as_mut()) {
                            let acc = eb.row_mut(i);
                            for &r in rows {
                                if r != NO_EDGE_ROW {
                                    for (a, &v) in acc.iter_mut().zip(t.row(r as usize)) {
                                        *a += v;
                                    }
                                }
                            }
                            acc.iter_mut().for_each(|a| *a /= count);
                        }
                    }
                    if let Some(eb) = ebar {
                        let projected = eb.matmul(params.value(&layer_param(l, "w_edge"))?)?;
                        message.add_assign(&projected)?;
                        edge_mean = Some(eb);
                    }
                }
                UpdateRule::GatedSum => {
                    let g = match table {
                        Some(t) => {
                            let mut e = Matrix::zeros(nb.len(), t.cols());
                            for (k, &r) in nb.edge_rows.iter().enumerate() {
                                if r != NO_EDGE_ROW {
                                    e.row_mut(k).copy_from_slice(t.row(r as usize));
                                }
                            }
                            let g = affine_forward(
                                &e,
                                params.value(&layer_param(l, "gate.weight"))?,
                                params.value(&layer_param(l, "gate.bias"))?,
                            )?;
                            entry_edges = Some(e);
                            Some(g)
                        }
                        None => None,
                    };
                    for i in 0..n {
                        let range = nb.range(i);
                        let acc = message.row_mut(i);
                        for k in range {
                            let hj = h.row(nb.nodes[k] as usize);
                            match &g {
                                Some(g) => {
                                    for ((a, &v), &gate) in acc.iter_mut().zip(hj).zip(g.row(k)) {
                                        *a += gate * v;
                                    }
                                }
                                None => {
                                    for (a, &v) in acc.iter_mut().zip(hj) {
                                        *a += v;
                                    }
                                }
                            }
                        }
                    }
                    gates = g;
                }
            }

            let mut pre = h.matmul(params.value(&layer_param(l, "w_self"))?)?;
            pre.add_assign(&message.matmul(params.value(&layer_param(l, "w_neigh"))?)?)?;
            pre.ensure_finite("encoder layer")?;

            let last = l + 1 == cfg.num_layers;
            let out = if last {
                pre.clone()
            } else {
                let mut a = relu_forward(&pre);
                if let Some(mask) = dropout.get(l) {
                    if mask.shape() != a.shape() {
                        return Err(GdnnError::shape("dropout mask", format!("{:?} vs {:?}", mask.shape(), a.shape())));
                    }
                    for (v, &m) in a.data_mut().iter_mut().zip(mask.data()) {
                        *v *= m;
                    }
                }
                a
            };
            states.push(out);
            caches.push(LayerCache {
                message,
                edge_mean,
                entry_edges,
                gates,
                pre_activation: pre,
            });
        }

        Ok(EncoderPass {
            embeddings: NodeEmbeddings { layers: states },
            layers: caches,
        })
    }

    pub fn score(&self, embeddings: &Matrix<T>, pairs: &[(NodeId, NodeId)]) -> Result<PredictorPass<T>> {
        self.score_with(&self.params, embeddings, pairs)
    }

    /// Decoder forward pass over `pairs` of rows of `embeddings`.
    pub fn score_with(
        &self,
        params: &ParamStore<T>,
        embeddings: &Matrix<T>,
        pairs: &[(NodeId, NodeId)],
    ) -> Result<PredictorPass<T>> {
        let n = embeddings.rows();
        let d = embeddings.cols();
        let mut input = Matrix::zeros(pairs.len(), d);
        for (b, &(u, v)) in pairs.iter().enumerate() {
            if u as usize >= n || v as usize >= n {
                return Err(GdnnError::NodeOutOfRange {
                    id: u.max(v) as u64,
                    num_nodes: n,
                });
            }
            let (hu, hv) = (embeddings.row(u as usize), embeddings.row(v as usize));
            for ((o, &a), &c) in input.row_mut(b).iter_mut().zip(hu).zip(hv) {
                *o = a * c;
            }
        }
        let hidden = self.config.predictor_hidden.len();
        let mut inputs = vec![input];
        let mut pres = Vec::with_capacity(hidden);
        for i in 0..hidden {
            let z = affine_forward(
                inputs.last().unwrap(),
                params.value(&predictor_param(i, "weight"))?,
                params.value(&predictor_param(i, "bias"))?,
            )?;
            inputs.push(relu_forward(&z));
            pres.push(z);
        }
        let out = affine_forward(
            inputs.last().unwrap(),
            params.value(&predictor_param(hidden, "weight"))?,
            params.value(&predictor_param(hidden, "bias"))?,
        )?;
        Ok(PredictorPass {
            pairs: pairs.to_vec(),
            inputs,
            pre_activations: pres,
            logits: out.into_vec(),
        })
    }

    /// Logit for a single pair of embeddings.
    pub fn predict_edge(&self, h_u: &[T], h_v: &[T]) -> Result<T> {
        if h_u.len() != h_v.len() {
            return Err(GdnnError::shape("predict_edge", format!("{} vs {}", h_u.len(), h_v.len())));
        }
        let emb = Matrix::from_vec(2, h_u.len(), h_u.iter().chain(h_v).copied().collect())?;
        Ok(self.score(&emb, &[(0, 1)])?.logits[0])
    }

    /// Mean BCE of `labels` against the model's logits for `pairs`, with
    /// explicit parameters and fixed sampling/dropout.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_with(
        &self,
        params: &ParamStore<T>,
        features: &Matrix<T>,
        neighborhoods: &[Neighborhood],
        dropout: &DropoutMasks<T>,
        pairs: &[(NodeId, NodeId)],
        labels: &[T],
    ) -> Result<T> {
        let enc = self.encode_with(params, features, neighborhoods, dropout)?;
        let pred = self.score_with(params, enc.embeddings.output(), pairs)?;
        Ok(bce_with_logits(&pred.logits, labels)?.0)
    }

    /// Forward, loss and backward for one batch. Gradients are added to
    /// `self.params`' accumulators; returns the loss.
    pub fn forward_backward(
        &mut self,
        features: &Matrix<T>,
        neighborhoods: &[Neighborhood],
        dropout: &DropoutMasks<T>,
        pairs: &[(NodeId, NodeId)],
        labels: &[T],
    ) -> Result<T> {
        let enc = self.encode(features, neighborhoods, dropout)?;
        let pred = self.score(enc.embeddings.output(), pairs)?;
        let (loss, dlogits) = bce_with_logits(&pred.logits, labels)?;
        self.backward(features, neighborhoods, dropout, &enc, &pred, &dlogits)?;
        Ok(loss)
    }

    /// Reverse pass through decoder and encoder for upstream `dL/dlogits`.
    ///
    /// Requires the caches from `encode`/`score` run with the same
    /// neighborhoods, dropout masks and current parameters. With
    /// `EdgeMode::Learned`, only edge-table rows reached by the
    /// neighborhoods receive gradient.
    pub fn backward(
        &mut self,
        features: &Matrix<T>,
        neighborhoods: &[Neighborhood],
        dropout: &DropoutMasks<T>,
        enc: &EncoderPass<T>,
        pred: &PredictorPass<T>,
        dlogits: &[T],
    ) -> Result<()> {
        let cfg = self.config.clone();
        if dlogits.len() != pred.logits.len() {
            return Err(GdnnError::shape(
                "backward",
                format!("{} upstream values for {} logits", dlogits.len(), pred.logits.len()),
            ));
        }
        if enc.layers.len() != cfg.num_layers || neighborhoods.len() != cfg.num_layers {
            return Err(GdnnError::shape("backward", "encoder cache does not match the model"));
        }

        // Decoder.
        let hidden = cfg.predictor_hidden.len();
        let mut upstream = Matrix::from_vec(dlogits.len(), 1, dlogits.to_vec())?;
        for i in (0..=hidden).rev() {
            let w_name = predictor_param(i, "weight");
            let grads = affine_backward(&pred.inputs[i], self.params.value(&w_name)?, &upstream)?;
            self.params.accumulate(&w_name, &grads.weight)?;
            self.params.accumulate(&predictor_param(i, "bias"), &grads.bias)?;
            upstream = if i > 0 {
                relu_backward(&pred.pre_activations[i - 1], &grads.input)?
            } else {
                grads.input
            };
        }
        let emb = enc.embeddings.output();
        let mut d_state = Matrix::zeros(emb.rows(), emb.cols());
        for (b, &(u, v)) in pred.pairs.iter().enumerate() {
            let g = upstream.row(b);
            let (hu, hv) = (emb.row(u as usize).to_vec(), emb.row(v as usize).to_vec());
            for ((acc, &gi), &x) in d_state.row_mut(u as usize).iter_mut().zip(g).zip(&hv) {
                *acc += gi * x;
            }
            for ((acc, &gi), &x) in d_state.row_mut(v as usize).iter_mut().zip(g).zip(&hu) {
                *acc += gi * x;
            }
        }

        // Encoder, last layer first.
        let table = self.edge_table(&self.params)?.cloned();
        let mut d_table = match cfg.edge_mode {
            EdgeMode::Learned => table.as_ref().map(|t| Matrix::zeros(t.rows(), t.cols())),
            _ => None,
        };
        for l in (0..cfg.num_layers).rev() {
            let cache = &enc.layers[l];
            let h_in = &enc.embeddings.layers[l];
            let nb = &neighborhoods[l];
            let d_pre = if l + 1 == cfg.num_layers {
                d_state
            } else {
                if let Some(mask) = dropout.get(l) {
                    for (g, &m) in d_state.data_mut().iter_mut().zip(mask.data()) {
                        *g *= m;
                    }
                }
                relu_backward(&cache.pre_activation, &d_state)?
            };
            let w_self_name = layer_param(l, "w_self");
            let w_neigh_name = layer_param(l, "w_neigh");
            self.params.accumulate(&w_self_name, &h_in.t_matmul(&d_pre)?)?;
            self.params.accumulate(&w_neigh_name, &cache.message.t_matmul(&d_pre)?)?;
            let mut d_h = d_pre.matmul_t(self.params.value(&w_self_name)?)?;
            let d_msg = d_pre.matmul_t(self.params.value(&w_neigh_name)?)?;

            match cfg.update_rule {
                UpdateRule::SampledMean => {
                    let d_ebar = match &cache.edge_mean {
                        Some(eb) => {
                            let w_edge_name = layer_param(l, "w_edge");
                            self.params.accumulate(&w_edge_name, &eb.t_matmul(&d_msg)?)?;
                            Some(d_msg.matmul_t(self.params.value(&w_edge_name)?)?)
                        }
                        None => None,
                    };
                    for i in 0..nb.num_nodes() {
                        let (nbrs, rows) = nb.of(i);
                        if nbrs.is_empty() {
                            continue;
                        }
                        let count = T::from_usize(nbrs.len()).unwrap();
                        let g: Vec<T> = d_msg.row(i).iter().map(|&x| x / count).collect();
                        for &j in nbrs {
                            for (acc, &gi) in d_h.row_mut(j as usize).iter_mut().zip(&g) {
                                *acc += gi;
                            }
                        }
                        if let (Some(de), Some(dt)) = (&d_ebar, d_table.as_mut()) {
                            let ge: Vec<T> = de.row(i).iter().map(|&x| x / count).collect();
                            for &r in rows {
                                if r != NO_EDGE_ROW {
                                    for (acc, &gi) in dt.row_mut(r as usize).iter_mut().zip(&ge) {
                                        *acc += gi;
                                    }
                                }
                            }
                        }
                    }
                }
                UpdateRule::GatedSum => {
                    let mut d_gates = cache.gates.as_ref().map(|g| Matrix::zeros(g.rows(), g.cols()));
                    for i in 0..nb.num_nodes() {
                        let g_i = d_msg.row(i);
                        for k in nb.range(i) {
                            let j = nb.nodes[k] as usize;
                            match (&cache.gates, d_gates.as_mut()) {
                                (Some(gates), Some(dg)) => {
                                    let hj = h_in.row(j);
                                    for ((out, &gi), &x) in dg.row_mut(k).iter_mut().zip(g_i).zip(hj) {
                                        *out = gi * x;
                                    }
                                    for ((acc, &gi), &gate) in d_h.row_mut(j).iter_mut().zip(g_i).zip(gates.row(k)) {
                                        *acc += gi * gate;
                                    }
                                }
                                _ => {
                                    for (acc, &gi) in d_h.row_mut(j).iter_mut().zip(g_i) {
                                        *acc += gi;
                                    }
                                }
                            }
                        }
                    }
                    if let (Some(dg), Some(e)) = (d_gates, &cache.entry_edges) {
                        let w_name = layer_param(l, "gate.weight");
                        let grads = affine_backward(e, self.params.value(&w_name)?, &dg)?;
                        self.params.accumulate(&w_name, &grads.weight)?;
                        self.params.accumulate(&layer_param(l, "gate.bias"), &grads.bias)?;
                        if let Some(dt) = d_table.as_mut() {
                            for (k, &r) in nb.edge_rows.iter().enumerate() {
                                if r != NO_EDGE_ROW {
                                    for (acc, &gi) in dt.row_mut(r as usize).iter_mut().zip(grads.input.row(k)) {
                                        *acc += gi;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            d_state = d_h;
        }

        let grads = affine_backward(features, self.params.value(INPUT_WEIGHT)?, &d_state)?;
        self.params.accumulate(INPUT_WEIGHT, &grads.weight)?;
        self.params.accumulate(INPUT_BIAS, &grads.bias)?;
        if let Some(dt) = d_table {
            self.params.accumulate(EDGE_TABLE, &dt)?;
        }
        for (name, _, g) in self.params.iter_grads() {
            if !g.is_finite() {
                return Err(GdnnError::NonFinite(format!("gradient of `{name}`")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config(edge_mode: EdgeMode, update_rule: UpdateRule) -> GdnnConfig {
        GdnnConfig {
            num_layers: 1,
            hidden_dim: 2,
            input_dim: 2,
            edge_mode,
            edge_dim: 1,
            fanout: 10,
            predictor_hidden: vec![1],
            update_rule,
            dropout: 0.0,
        }
    }

    /// Model whose input projection is the identity, so `H^0 = X`.
    fn identity_input(cfg: GdnnConfig, num_edges: usize, provided: Option<Matrix<f64>>) -> GdnnModel<f64> {
        let mut m = GdnnModel::new(cfg, num_edges, provided, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        m.params.insert(INPUT_WEIGHT, Matrix::identity(2));
        m.params.insert(INPUT_BIAS, Matrix::zeros(1, 2));
        m
    }

    fn full(m: &GdnnModel<f64>, g: &Graph) -> Vec<Neighborhood> {
        m.full_neighborhoods(g, None)
    }

    #[test]
    fn config_validation() {
        let mut c = GdnnConfig::default();
        c.validate().unwrap();
        c.num_layers = 0;
        assert!(c.validate().is_err());
        let mut c = GdnnConfig::default();
        c.fanout = 0;
        assert!(c.validate().is_err());
        let mut c = GdnnConfig::default();
        c.edge_dim = 0;
        assert!(c.validate().is_err());
        c.edge_mode = EdgeMode::None;
        c.validate().unwrap();
    }

    #[test]
    fn self_term_only() {
        let g = Graph::build(&[(0u32, 1u32), (1, 2)], 3).unwrap();
        let mut cfg = tiny_config(EdgeMode::None, UpdateRule::SampledMean);
        cfg.num_layers = 2;
        let mut m = identity_input(cfg, g.num_edges(), None);
        m.params.insert(layer_param(0, "w_self"), Matrix::identity(2));
        m.params.insert(layer_param(0, "w_neigh"), Matrix::zeros(2, 2));
        let x = Matrix::from_rows(&[[1.0, -2.0], [-0.5, 3.0], [0.0, 4.0]]);
        let pass = m.encode(&x, &full(&m, &g), &DropoutMasks::none()).unwrap();
        assert_eq!(pass.embeddings.layers[1], relu_forward(&x));
    }

    #[test]
    fn single_neighbor_copy() {
        let g = Graph::build(&[(0u32, 1u32)], 2).unwrap();
        let mut cfg = tiny_config(EdgeMode::None, UpdateRule::SampledMean);
        cfg.num_layers = 2;
        let mut m = identity_input(cfg, 1, None);
        m.params.insert(layer_param(0, "w_self"), Matrix::zeros(2, 2));
        m.params.insert(layer_param(0, "w_neigh"), Matrix::identity(2));
        let x = Matrix::from_rows(&[[1.0, -2.0], [-0.5, 3.0]]);
        let pass = m.encode(&x, &full(&m, &g), &DropoutMasks::none()).unwrap();
        assert_eq!(pass.embeddings.layers[1], Matrix::from_rows(&[[0.0, 3.0], [1.0, 0.0]]));
    }

    #[test]
    fn sampled_mean_on_path_matches_desk_calculation() {
        // Path 0-1-2, edge ids (0,1)->0, (1,2)->1, provided scalar edge
        // attributes e0 = 2, e1 = -1.
        let g = Graph::build(&[(0u32, 1u32), (1, 2)], 3).unwrap();
        let table = Matrix::from_rows(&[[2.0], [-1.0]]);
        let mut m = identity_input(tiny_config(EdgeMode::Provided, UpdateRule::SampledMean), 2, Some(table));
        m.params.insert(layer_param(0, "w_self"), Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]));
        m.params.insert(layer_param(0, "w_neigh"), Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]));
        m.params.insert(layer_param(0, "w_edge"), Matrix::from_rows(&[[0.1, -0.2]]));
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.0, 1.0]]);
        let pass = m.encode(&x, &full(&m, &g), &DropoutMasks::none()).unwrap();

        // node 0: msg = h1 + 0.1*2, -0.2*2 = (3.2, -1.4); out = 0.5*(1,2) + (3.2-1.4, -1.4) = (2.3, -0.4)
        // node 1: msg = mean(h0 + (0.2,-0.4), h2 + (-0.1,0.2)) = mean((1.2,1.6),(-0.1,1.2)) = (0.55, 1.4)
        //         out = (1.5, -0.5) + (0.55+1.4, 1.4) = (3.45, 0.9)
        // node 2: msg = h1 + (-0.1, 0.2) = (2.9, -0.8); out = (0, 0.5) + (2.1, -0.8) = (2.1, -0.3)
        let expect = [[2.3, -0.4], [3.45, 0.9], [2.1, -0.3]];
        let out = pass.embeddings.output();
        for i in 0..3 {
            for c in 0..2 {
                assert!((out.get(i, c) - expect[i][c]).abs() < 1e-12, "{out:?}");
            }
        }
    }

    #[test]
    fn gated_sum_with_unit_gates_sums_neighbors() {
        let g = Graph::build(&[(0u32, 1u32), (0, 2), (0, 3)], 5).unwrap();
        let table = Matrix::from_rows(&[[0.3], [-2.0], [5.0]]);
        let mut cfg = tiny_config(EdgeMode::Provided, UpdateRule::GatedSum);
        cfg.num_layers = 2;
        let mut m = identity_input(cfg, 3, Some(table));
        m.params.insert(layer_param(0, "w_self"), Matrix::zeros(2, 2));
        m.params.insert(layer_param(0, "w_neigh"), Matrix::identity(2));
        m.params.insert(layer_param(0, "gate.weight"), Matrix::zeros(1, 2));
        m.params.insert(layer_param(0, "gate.bias"), Matrix::filled(1, 2, 1.0));
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, -2.0], [2.0, 0.5], [-4.0, 1.0], [7.0, 7.0]]);
        let pass = m.encode(&x, &full(&m, &g), &DropoutMasks::none()).unwrap();
        let h1 = &pass.embeddings.layers[1];
        assert_eq!(h1.row(0), &[0.0, 0.0]); // relu(1+2-4, -2+0.5+1)
        assert_eq!(h1.row(1), &[1.0, 1.0]);
        assert_eq!(h1.row(4), &[0.0, 0.0]); // isolated, W_self = 0
    }

    #[test]
    fn gated_sum_star_matches_hand_expansion() {
        let g = Graph::build(&[(0u32, 1u32), (0, 2), (0, 3)], 4).unwrap();
        let table = Matrix::from_rows(&[[1.0], [-1.0], [0.5]]);
        let mut m = identity_input(tiny_config(EdgeMode::Provided, UpdateRule::GatedSum), 3, Some(table.clone()));
        let w_self = Matrix::from_rows(&[[0.2, -0.1], [0.3, 0.4]]);
        let w_neigh = Matrix::from_rows(&[[-0.5, 0.1], [0.25, 0.6]]);
        let gw = Matrix::from_rows(&[[0.7, -0.3]]);
        let gb = Matrix::row_vector(&[0.1, 0.9]);
        m.params.insert(layer_param(0, "w_self"), w_self.clone());
        m.params.insert(layer_param(0, "w_neigh"), w_neigh.clone());
        m.params.insert(layer_param(0, "gate.weight"), gw.clone());
        m.params.insert(layer_param(0, "gate.bias"), gb.clone());
        let x = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5], [0.25, -2.0], [3.0, 1.0]]);
        let out = m.encode(&x, &full(&m, &g), &DropoutMasks::none()).unwrap();
        let out = out.embeddings.output();

        let lin = |v: [f64; 2], w: &Matrix<f64>| {
            [v[0] * w.get(0, 0) + v[1] * w.get(1, 0), v[0] * w.get(0, 1) + v[1] * w.get(1, 1)]
        };
        let xr = |i: usize| [x.get(i, 0), x.get(i, 1)];
        // Center: Σ_j f(e_0j) ⊙ h_j.
        let mut msg = [0.0; 2];
        for (j, e) in [(1, 0), (2, 1), (3, 2)] {
            let ev = table.get(e, 0);
            for c in 0..2 {
                msg[c] += (ev * gw.get(0, c) + gb.get(0, c)) * x.get(j, c);
            }
        }
        let a = lin(xr(0), &w_self);
        let b = lin(msg, &w_neigh);
        assert!((out.get(0, 0) - (a[0] + b[0])).abs() < 1e-12);
        assert!((out.get(0, 1) - (a[1] + b[1])).abs() < 1e-12);
        // Leaf 2: single neighbor 0 through edge 1.
        let ev = table.get(1, 0);
        let msg = [
            (ev * gw.get(0, 0) + gb.get(0, 0)) * x.get(0, 0),
            (ev * gw.get(0, 1) + gb.get(0, 1)) * x.get(0, 1),
        ];
        let a = lin(xr(2), &w_self);
        let b = lin(msg, &w_neigh);
        assert!((out.get(2, 0) - (a[0] + b[0])).abs() < 1e-12);
        assert!((out.get(2, 1) - (a[1] + b[1])).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero_embeddings() {
        let g = Graph::build(&[(0u32, 1u32), (1, 2), (2, 3)], 4).unwrap();
        let cfg = GdnnConfig {
            input_dim: 3,
            hidden_dim: 8,
            edge_mode: EdgeMode::None,
            ..GdnnConfig::default()
        };
        let m = GdnnModel::<f64>::new(cfg, g.num_edges(), None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let pass = m.encode(&Matrix::zeros(4, 3), &full(&m, &g), &DropoutMasks::none()).unwrap();
        assert!(pass.embeddings.layers.iter().all(|h| h.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn predictor_is_symmetric_and_constant_on_zero() {
        let cfg = GdnnConfig {
            input_dim: 4,
            hidden_dim: 6,
            predictor_hidden: vec![5, 3],
            ..GdnnConfig::default()
        };
        let m = GdnnModel::<f64>::new(cfg, 3, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = [0.3, -1.2, 2.0, 0.7, 0.1, -0.4];
        let b = [1.1, 0.5, -0.3, 0.9, -2.0, 0.25];
        assert_eq!(
            m.predict_edge(&a, &b).unwrap().to_bits(),
            m.predict_edge(&b, &a).unwrap().to_bits()
        );
        let zero = [0.0; 6];
        assert_eq!(m.predict_edge(&zero, &a).unwrap(), m.predict_edge(&zero, &b).unwrap());
        assert!(m.predict_edge(&a, &b[..5]).is_err());
    }

    #[test]
    fn predictor_desk_calculation() {
        let cfg = GdnnConfig {
            input_dim: 2,
            hidden_dim: 2,
            predictor_hidden: vec![1],
            ..GdnnConfig::default()
        };
        let mut m = GdnnModel::<f64>::new(cfg, 0, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        m.params.insert(predictor_param(0, "weight"), Matrix::from_rows(&[[2.0], [-1.0]]));
        m.params.insert(predictor_param(0, "bias"), Matrix::row_vector(&[0.5]));
        m.params.insert(predictor_param(1, "weight"), Matrix::from_rows(&[[3.0]]));
        m.params.insert(predictor_param(1, "bias"), Matrix::row_vector(&[-1.0]));
        // h_u ⊙ h_v = (1.5, 2); hidden = relu(3 - 2 + 0.5) = 1.5; logit = 4.5 - 1 = 3.5
        assert_eq!(m.predict_edge(&[1.0, 4.0], &[1.5, 0.5]).unwrap(), 3.5);
        // hidden pre-activation negative: relu gives 0, logit = bias only.
        assert_eq!(m.predict_edge(&[0.0, 4.0], &[1.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn ablation_allocates_no_edge_parameters() {
        for rule in [UpdateRule::SampledMean, UpdateRule::GatedSum] {
            let cfg = GdnnConfig {
                input_dim: 3,
                edge_mode: EdgeMode::None,
                update_rule: rule,
                ..GdnnConfig::default()
            };
            let m = GdnnModel::<f64>::new(cfg, 10, None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert!(m.params.names().all(|n| !n.contains("edge") && !n.contains("gate")));
        }
    }

    #[test]
    fn provided_table_is_checked() {
        let cfg = GdnnConfig {
            input_dim: 3,
            edge_mode: EdgeMode::Provided,
            edge_dim: 2,
            ..GdnnConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(GdnnModel::<f64>::new(cfg.clone(), 4, None, &mut rng).is_err());
        assert!(GdnnModel::new(cfg.clone(), 4, Some(Matrix::<f64>::zeros(3, 2)), &mut rng).is_err());
        assert!(GdnnModel::new(cfg, 4, Some(Matrix::<f64>::zeros(4, 2)), &mut rng).is_ok());
    }

    #[test]
    fn from_params_rejects_mismatched_store() {
        let cfg = GdnnConfig {
            input_dim: 3,
            hidden_dim: 4,
            ..GdnnConfig::default()
        };
        let m = GdnnModel::<f64>::new(cfg.clone(), 5, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let again = GdnnModel::from_params(cfg.clone(), 5, None, m.params.clone()).unwrap();
        assert_eq!(again.params.checksum(), m.params.checksum());
        assert!(GdnnModel::from_params(cfg, 6, None, m.params).is_err());
    }
}
