//! Built-in 10-node fixture and the full-model finite-difference suite.

use crate::distance::{encode_features, select_targets, TargetKind, TargetStrategy};
use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::model::{DropoutMasks, EdgeMode, GdnnConfig, GdnnModel, UpdateRule};
use crate::dd::DoubleDouble;
use crate::nn::{grad_check, GradCheckReport, Matrix, ParamStore};
use crate::train::{derive_rng, sample_negatives};

/// Step for the central differences.
pub const GRADCHECK_EPS: f64 = 1e-6;
/// Maximum accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// A 9-node ring with three chords plus one isolated node (id 9).
pub fn fixture_graph() -> Graph {
    let mut pairs: Vec<(u32, u32)> = (0..9).map(|i| (i, (i + 1) % 9)).collect();
    pairs.extend([(0, 4), (2, 6), (1, 7)]);
    Graph::build(&pairs, 10).expect("fixture is a simple graph")
}

#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.passed(GRADCHECK_TOLERANCE)
    }
}

/// Analytic vs numeric gradients of the batch loss for one model variant on
/// the fixture. Neighborhoods, dropout masks and negatives are drawn once
/// from `seed` and held fixed across all evaluations.
///
/// The analytic gradients come from the `f64` backward pass. The central
/// differences evaluate the same loss in [`DoubleDouble`], so that rounding
/// in the two loss values stays far below the tolerance even for
/// coordinates whose derivative is tiny.
pub fn model_grad_check(edge_mode: EdgeMode, update_rule: UpdateRule, dropout: f64, seed: u64) -> Result<GradCheckReport> {
    let g = fixture_graph();
    let mut rng = derive_rng(seed, 0);
    let targets = select_targets(
        &g,
        TargetStrategy {
            kind: TargetKind::Random,
            k: 4,
        },
        &mut rng,
    )?;
    let mut features = encode_features::<f64>(&g, &targets)?;
    features.standardize();

    let config = GdnnConfig {
        num_layers: 2,
        hidden_dim: 6,
        input_dim: features.dim(),
        edge_mode,
        edge_dim: 3,
        fanout: 2,
        predictor_hidden: vec![5],
        update_rule,
        dropout,
    };
    let provided = (edge_mode == EdgeMode::Provided).then(|| {
        let data = (0..g.num_edges() * 3)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0)
            .collect();
        Matrix::from_vec(g.num_edges(), 3, data).unwrap()
    });
    let mut model = GdnnModel::new(config, g.num_edges(), provided, &mut rng)?;

    let neighborhoods = model.sample_neighborhoods(&g, &mut rng, None);
    let masks = DropoutMasks::sample(model.config(), g.num_nodes(), &mut rng);
    let mut pairs: Vec<(NodeId, NodeId)> = g.edges().iter().step_by(2).copied().collect();
    let positives = pairs.len();
    pairs.extend(sample_negatives(&g, positives, &mut rng)?);
    pairs.push((9, 3));
    let mut labels = vec![1.0; positives];
    labels.resize(pairs.len(), 0.0);

    model.params.zero_grads();
    model.forward_backward(&features.data, &neighborhoods, &masks, &pairs, &labels)?;

    let params: ParamStore<DoubleDouble> = model.params.cast();
    let wide = GdnnModel::from_params(
        model.config().clone(),
        g.num_edges(),
        model.provided_edges().map(Matrix::cast),
        params.clone(),
    )?;
    let features = features.data.cast::<DoubleDouble>();
    let masks = masks.cast::<DoubleDouble>();
    let labels: Vec<DoubleDouble> = labels.iter().map(|&y| DoubleDouble::from(y)).collect();
    grad_check(
        &params,
        |p| wide.loss_with(p, &features, &neighborhoods, &masks, &pairs, &labels),
        DoubleDouble::from(GRADCHECK_EPS),
    )
}

/// Every update rule × edge mode combination, with dropout on.
pub fn standard_suite() -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::new();
    for rule in [UpdateRule::SampledMean, UpdateRule::GatedSum] {
        for mode in [EdgeMode::Learned, EdgeMode::Provided, EdgeMode::None] {
            let report = model_grad_check(mode, rule, 0.5, 7)?;
            cases.push(GradCheckCase {
                name: format!("{rule:?}/{mode:?}"),
                report,
            });
        }
    }
    Ok(cases)
}
