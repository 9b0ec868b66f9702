//! Trained-model checkpoints on top of the `GDNN1` container.
//!
//! Manifest keys: `kind checkpoint`, `fingerprint`, `seed`, `epoch`,
//! `num_nodes`, `targets`. The blob is the run configuration in canonical
//! text form. Arrays are the parameters in store order, named
//! `param.<name>`, followed by `frozen.edge_attr` for models with provided
//! edge attributes.

use std::path::Path;

use gdnn_core::{GdnnModel, Graph, Matrix64, Model64, NodeId, ParamStore64};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::container::Container;
use crate::error::{CliError, Result};
use crate::features::{format_targets, parse_targets};

const PARAM_PREFIX: &str = "param.";
const FROZEN_EDGES: &str = "frozen.edge_attr";

/// SHA-256 over the node count and the canonical edge list, in edge-id
/// order.
pub fn fingerprint(g: &Graph) -> String {
    let mut h = Sha256::new();
    h.update(format!("N {}\n", g.num_nodes()));
    for (u, v) in g.edges() {
        h.update(format!("{u} {v}\n"));
    }
    hex::encode(h.finalize())
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub fingerprint: String,
    pub seed: u64,
    pub epoch: usize,
    pub num_nodes: usize,
    pub targets: Vec<NodeId>,
    pub params: ParamStore64,
    pub provided_edges: Option<Matrix64>,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, graph: &Graph, seed: u64, epoch: usize, targets: &[NodeId], model: &Model64) -> Self {
        Self {
            config: config.clone(),
            fingerprint: fingerprint(graph),
            seed,
            epoch,
            num_nodes: graph.num_nodes(),
            targets: targets.to_vec(),
            params: model.params.clone(),
            provided_edges: model.provided_edges().cloned(),
        }
    }

    pub fn to_container(&self) -> Container {
        let mut arrays: Vec<(String, Matrix64)> = self
            .params
            .iter()
            .map(|(name, m)| (format!("{PARAM_PREFIX}{name}"), m.clone()))
            .collect();
        if let Some(t) = &self.provided_edges {
            arrays.push((FROZEN_EDGES.into(), t.clone()));
        }
        Container {
            meta: vec![
                ("kind".into(), "checkpoint".into()),
                ("fingerprint".into(), self.fingerprint.clone()),
                ("seed".into(), self.seed.to_string()),
                ("epoch".into(), self.epoch.to_string()),
                ("num_nodes".into(), self.num_nodes.to_string()),
                ("targets".into(), format_targets(&self.targets)),
            ],
            blob: self.config.to_text(),
            arrays,
        }
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        let bad = |m: &str| CliError::format(origin, m);
        if c.meta("kind") != Some("checkpoint") {
            return Err(bad("container is not a checkpoint"));
        }
        let field = |key: &str| c.meta(key).ok_or_else(|| bad(&format!("missing `{key}`")));
        let number = |key: &str| -> Result<u64> { field(key)?.parse().map_err(|_| bad(&format!("bad `{key}`"))) };
        let config = RunConfig::parse(&c.blob, origin)?;
        let mut params = ParamStore64::new();
        let mut provided_edges = None;
        for (name, m) in &c.arrays {
            if let Some(p) = name.strip_prefix(PARAM_PREFIX) {
                params.insert(p, m.clone());
            } else if name == FROZEN_EDGES {
                provided_edges = Some(m.clone());
            } else {
                return Err(bad(&format!("unexpected array `{name}`")));
            }
        }
        Ok(Self {
            config,
            fingerprint: field("fingerprint")?.to_string(),
            seed: number("seed")?,
            epoch: number("epoch")? as usize,
            num_nodes: number("num_nodes")? as usize,
            targets: parse_targets(field("targets")?).ok_or_else(|| bad("bad `targets`"))?,
            params,
            provided_edges,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?, path)
    }

    /// Errors unless `g` is the graph this checkpoint was trained on.
    pub fn verify(&self, g: &Graph) -> Result<()> {
        let actual = fingerprint(g);
        if actual != self.fingerprint {
            return Err(CliError::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Rebuilds the model for the verified graph `g`.
    pub fn model(&self, g: &Graph) -> Result<Model64> {
        self.verify(g)?;
        let mut config = self.config.model.clone();
        config.input_dim = self.targets.len();
        Ok(GdnnModel::from_params(config, g.num_edges(), self.provided_edges.clone(), self.params.clone())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdnn_core::diagnostics::fixture_graph;
    use gdnn_core::{EdgeMode, GdnnConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(mode: EdgeMode) -> (Graph, Checkpoint) {
        let g = fixture_graph();
        let mut config = RunConfig::default();
        config.model = GdnnConfig {
            hidden_dim: 4,
            edge_dim: 2,
            predictor_hidden: vec![3],
            edge_mode: mode,
            ..GdnnConfig::default()
        };
        let mut mc = config.model.clone();
        mc.input_dim = 3;
        let provided = (mode == EdgeMode::Provided).then(|| Matrix64::filled(g.num_edges(), 2, 0.25));
        let model = GdnnModel::new(mc, g.num_edges(), provided, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ck = Checkpoint::new(&config, &g, 3, 17, &[1, 4, 9], &model);
        (g, ck)
    }

    #[test]
    fn reload_then_save_is_byte_identical() {
        for mode in [EdgeMode::Learned, EdgeMode::Provided, EdgeMode::None] {
            let (g, ck) = sample(mode);
            let bytes = ck.to_container().to_bytes();
            let back = Checkpoint::from_container(&Container::from_bytes(&bytes, Path::new("c")).unwrap(), Path::new("c")).unwrap();
            assert_eq!(back.to_container().to_bytes(), bytes);
            assert_eq!(back.model(&g).unwrap().params.checksum(), ck.params.checksum());
        }
    }

    #[test]
    fn other_graph_is_rejected() {
        let (_, ck) = sample(EdgeMode::Learned);
        let other = Graph::build(&[(0u32, 1u32)], 10).unwrap();
        let err = ck.model(&other).unwrap_err();
        assert!(matches!(err, CliError::FingerprintMismatch { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn fingerprint_depends_on_node_count_and_edges() {
        let a = Graph::build(&[(0u32, 1u32)], 2).unwrap();
        let b = Graph::build(&[(1u32, 0u32), (0, 1)], 2).unwrap();
        let c = Graph::build(&[(0u32, 1u32)], 3).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_ne!(fingerprint(&a), fingerprint(&c));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
