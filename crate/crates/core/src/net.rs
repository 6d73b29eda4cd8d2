//! Binary multilayer perceptrons and binary graph convolutional
//! networks with hand-written reverse-mode gradients.
//!
//! Latent weights `Omega` are real; every forward pass evaluates their
//! binarization `W = sign(Omega)`. Gradients flow through the
//! binarization with the straight-through estimator: hardTanh's
//! derivative is 1 on (-1, 1) and 0 outside. Besides ordinary weight
//! gradients for the baselines, [`BinaryNetwork::backward`] extracts
//! the per-layer intermediate gradients and layer inputs that the
//! projection optimizer consumes.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamps to `[-1, 1]`, identity inside.
pub fn hard_tanh(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Straight-through derivative of [`hard_tanh`]: 1 strictly inside
/// `(-1, 1)`, 0 at the boundary and beyond.
pub fn hard_tanh_grad(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        1.0
    } else {
        0.0
    }
}

/// The shared sign convention: `+1` for `x >= 0`, `-1` otherwise.
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One weight matrix of latent reals; the network always evaluates its
/// sign. Shape is inputs x outputs, so a batch row vector multiplies
/// from the left. Layers carry no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryLinearLayer {
    pub omega: DMatrix<f64>,
}

impl BinaryLinearLayer {
    pub fn new(omega: DMatrix<f64>) -> Self {
        BinaryLinearLayer { omega }
    }

    pub fn in_dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.omega.ncols()
    }

    /// The binarized weight matrix `W = sign(Omega)`.
    pub fn binarized(&self) -> DMatrix<f64> {
        self.omega.map(sign)
    }
}

/// Loss head applied to the last layer's pre-activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Single logit, sigmoid probability, binary cross-entropy.
    SigmoidBce,
    /// One logit per class, log-softmax, negative log-likelihood.
    LogSoftmaxNll,
}

impl Head {
    /// Mean loss over the given logit rows; `labels[i]` belongs to row
    /// `i` of `outputs`.
    pub fn loss(&self, outputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
        self.check(outputs, labels)?;
        let b = labels.len() as f64;
        let mut total = 0.0;
        match self {
            Head::SigmoidBce => {
                for (i, &y) in labels.iter().enumerate() {
                    let r = outputs[(i, 0)];
                    // max(r, 0) - r y + log(1 + e^-|r|), the stable form
                    // of -y log sigmoid(r) - (1 - y) log(1 - sigmoid(r)).
                    total += r.max(0.0) - r * y as f64 + (-r.abs()).exp().ln_1p();
                }
            }
            Head::LogSoftmaxNll => {
                for (i, &y) in labels.iter().enumerate() {
                    let row = outputs.row(i);
                    let max = row.max();
                    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    total += lse - outputs[(i, y)];
                }
            }
        }
        Ok(total / b)
    }

    /// Gradient of the mean loss with respect to the logit rows.
    pub fn gradient(&self, outputs: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
        self.check(outputs, labels)?;
        let b = labels.len() as f64;
        let mut grad = DMatrix::zeros(outputs.nrows(), outputs.ncols());
        match self {
            Head::SigmoidBce => {
                for (i, &y) in labels.iter().enumerate() {
                    grad[(i, 0)] = (sigmoid(outputs[(i, 0)]) - y as f64) / b;
                }
            }
            Head::LogSoftmaxNll => {
                for (i, &y) in labels.iter().enumerate() {
                    let row = outputs.row(i);
                    let max = row.max();
                    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for c in 0..outputs.ncols() {
                        let p = exps[c] / z;
                        grad[(i, c)] = (p - if c == y { 1.0 } else { 0.0 }) / b;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Predicted class per logit row: thresholded logit for the binary
    /// head, argmax (first index on ties) for the softmax head.
    pub fn predict(&self, outputs: &DMatrix<f64>) -> Vec<usize> {
        match self {
            Head::SigmoidBce => (0..outputs.nrows())
                .map(|i| usize::from(outputs[(i, 0)] >= 0.0))
                .collect(),
            Head::LogSoftmaxNll => (0..outputs.nrows())
                .map(|i| {
                    let row = outputs.row(i);
                    let mut best = 0;
                    for c in 1..outputs.ncols() {
                        if row[c] > row[best] {
                            best = c;
                        }
                    }
                    best
                })
                .collect(),
        }
    }

    fn check(&self, outputs: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
        if outputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "head labels",
                expected: outputs.nrows(),
                actual: labels.len(),
            });
        }
        match self {
            Head::SigmoidBce => {
                if outputs.ncols() != 1 {
                    return Err(Error::DimensionMismatch {
                        context: "sigmoid head logit columns",
                        expected: 1,
                        actual: outputs.ncols(),
                    });
                }
                if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
                    return Err(Error::InvalidArgument(format!(
                        "binary head labels must be 0 or 1, got {bad}"
                    )));
                }
            }
            Head::LogSoftmaxNll => {
                if let Some(&bad) = labels.iter().find(|&&y| y >= outputs.ncols()) {
                    return Err(Error::InvalidArgument(format!(
                        "label {bad} out of range for {} classes",
                        outputs.ncols()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Plain MLP, or GCN propagation with a fixed normalized adjacency.
#[derive(Clone, Debug, PartialEq)]
pub enum Flavor {
    Mlp,
    /// Holds the normalized adjacency produced by
    /// [`normalize_adjacency`]; every layer input is first mixed by it.
    Gcn(DMatrix<f64>),
}

/// A stack of binary linear layers, hardTanh between them, one loss
/// head on top.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryNetwork {
    pub layers: Vec<BinaryLinearLayer>,
    pub head: Head,
    pub flavor: Flavor,
}

/// Which weights a pass evaluates: the binarized `sign(Omega)` used
/// everywhere in binary training, or the raw latent `Omega` that
/// ProxQuant's full-precision steps need.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    Binary,
    Latent,
}

/// Everything the forward pass computed, over the full row set given
/// to [`BinaryNetwork::forward`]. `inputs[l]` is what layer `l`
/// multiplied (post-mixing for the GCN flavor) and `preacts[l]` its
/// pre-activation; the last pre-activation is the network output.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub inputs: Vec<DMatrix<f64>>,
    pub preacts: Vec<DMatrix<f64>>,
    pub mode: WeightMode,
}

impl ForwardCache {
    /// Logits of the forward pass, one row per input row.
    pub fn outputs(&self) -> &DMatrix<f64> {
        self.preacts.last().expect("cache always has one layer")
    }
}

/// Per-layer gradient information for one loss evaluation.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    /// Intermediate gradient dE/dR restricted to the loss rows, one row
    /// per batch sample, one column per layer output.
    pub rdot: DMatrix<f64>,
    /// The layer's forward input at those same rows; row `b` is the
    /// un-normalized Jacobian of any pre-activation entry of sample `b`
    /// with respect to its weight column.
    pub layer_input: DMatrix<f64>,
    /// Full straight-through gradient dE/dOmega over all rows (equal to
    /// the loss-row contribution for MLPs; GCN mixing makes off-batch
    /// rows contribute too).
    pub weight_grad: DMatrix<f64>,
}

/// Gradients for every layer, index-aligned with the network's layers.
#[derive(Clone, Debug)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrads>,
}

impl BinaryNetwork {
    /// Builds a network after checking that layer dimensions chain and
    /// the head fits the final width.
    pub fn new(layers: Vec<BinaryLinearLayer>, head: Head, flavor: Flavor) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "a network needs at least one layer".into(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    context: "layer dimension chain",
                    expected: pair[0].out_dim(),
                    actual: layers[l + 1].in_dim(),
                });
            }
        }
        let last = layers.last().unwrap().out_dim();
        match head {
            Head::SigmoidBce if last != 1 => {
                return Err(Error::DimensionMismatch {
                    context: "sigmoid head output width",
                    expected: 1,
                    actual: last,
                });
            }
            Head::LogSoftmaxNll if last < 2 => {
                return Err(Error::InvalidArgument(
                    "softmax head needs at least two output classes".into(),
                ));
            }
            _ => {}
        }
        if let Flavor::Gcn(a) = &flavor {
            if a.nrows() != a.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "gcn adjacency shape",
                    expected: a.nrows(),
                    actual: a.ncols(),
                });
            }
        }
        Ok(BinaryNetwork { layers, head, flavor })
    }

    /// Fresh network with `Omega` entries drawn uniformly from
    /// `[-1, 1]`. `dims` lists the layer widths input-first.
    pub fn random<R: Rng>(dims: &[usize], head: Head, flavor: Flavor, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "need an input and an output dimension".into(),
            ));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                BinaryLinearLayer::new(DMatrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-1.0..=1.0)))
            })
            .collect();
        BinaryNetwork::new(layers, head, flavor)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    fn layer_weights(&self, l: usize, mode: WeightMode) -> DMatrix<f64> {
        match mode {
            WeightMode::Binary => self.layers[l].binarized(),
            WeightMode::Latent => self.layers[l].omega.clone(),
        }
    }

    /// Runs the binary forward pass on all rows of `x`, caching every
    /// layer input and pre-activation. For the GCN flavor, `x` must
    /// hold one row per graph node.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        self.forward_with(x, WeightMode::Binary)
    }

    /// Forward pass evaluating the raw latent weights instead of their
    /// signs; everything else (mixing, hardTanh, caching) is identical.
    pub fn forward_latent(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        self.forward_with(x, WeightMode::Latent)
    }

    fn forward_with(&self, x: &DMatrix<f64>, mode: WeightMode) -> Result<ForwardCache> {
        if x.ncols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward feature dimension",
                expected: self.in_dim(),
                actual: x.ncols(),
            });
        }
        if let Flavor::Gcn(a) = &self.flavor {
            if x.nrows() != a.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "gcn forward node rows",
                    expected: a.nrows(),
                    actual: x.nrows(),
                });
            }
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in 0..self.layers.len() {
            let mixed = match &self.flavor {
                Flavor::Mlp => h,
                Flavor::Gcn(a) => a * h,
            };
            let r = &mixed * self.layer_weights(l, mode);
            inputs.push(mixed);
            h = if l + 1 < self.layers.len() {
                r.map(hard_tanh)
            } else {
                DMatrix::zeros(0, 0)
            };
            preacts.push(r);
        }
        Ok(ForwardCache { inputs, preacts, mode })
    }

    /// Mean loss at the given rows of the cached outputs; `labels[i]`
    /// pairs with `rows[i]`.
    pub fn loss(&self, cache: &ForwardCache, rows: &[usize], labels: &[usize]) -> Result<f64> {
        let outputs = select_rows(cache.outputs(), rows)?;
        self.head.loss(&outputs, labels)
    }

    /// Predicted class per requested row.
    pub fn predict(&self, cache: &ForwardCache, rows: &[usize]) -> Result<Vec<usize>> {
        let outputs = select_rows(cache.outputs(), rows)?;
        Ok(self.head.predict(&outputs))
    }

    /// Fraction of rows whose prediction matches `labels`.
    pub fn accuracy(&self, cache: &ForwardCache, rows: &[usize], labels: &[usize]) -> Result<f64> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "accuracy labels",
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "accuracy over an empty row set is undefined".into(),
            ));
        }
        let pred = self.predict(cache, rows)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / rows.len() as f64)
    }

    /// Reverse-mode pass for the mean loss at `rows`. Returns, per
    /// layer, the intermediate gradients and layer inputs restricted to
    /// those rows plus the full weight gradient.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        rows: &[usize],
        labels: &[usize],
    ) -> Result<GradientBundle> {
        if cache.preacts.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "forward cache does not match this network".into(),
            ));
        }
        let outputs = select_rows(cache.outputs(), rows)?;
        let head_grad = self.head.gradient(&outputs, labels)?;

        // Scatter the head gradient back to full row indexing; for MLPs
        // over a plain batch this is the identity placement.
        let total_rows = cache.outputs().nrows();
        let mut g = DMatrix::zeros(total_rows, self.out_dim());
        for (i, &row) in rows.iter().enumerate() {
            for c in 0..self.out_dim() {
                g[(row, c)] = head_grad[(i, c)];
            }
        }

        let mut layer_grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            let weight_grad = input.transpose() * &g;
            layer_grads.push(LayerGrads {
                rdot: select_rows(&g, rows)?,
                layer_input: select_rows(input, rows)?,
                weight_grad,
            });
            if l > 0 {
                // dE/dH^l flows back through this layer's weights, then
                // through the GCN mixing if present, then the hardTanh
                // clamp of the previous pre-activation.
                let mut upstream = &g * self.layer_weights(l, cache.mode).transpose();
                if let Flavor::Gcn(a) = &self.flavor {
                    upstream = a.transpose() * upstream;
                }
                g = upstream.zip_map(&cache.preacts[l - 1], |u, r| u * hard_tanh_grad(r));
            }
        }
        layer_grads.reverse();
        Ok(GradientBundle { layers: layer_grads })
    }
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty row selection".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= m.nrows()) {
        return Err(Error::InvalidArgument(format!(
            "row {bad} out of range for {} rows",
            m.nrows()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), m.ncols(), |i, c| m[(rows[i], c)]))
}

/// Symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` of a 0/1
/// adjacency with empty diagonal; `D` is the degree matrix of `A + I`,
/// so every node has degree at least one and the result is well
/// defined.
pub fn normalize_adjacency(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "adjacency shape",
            expected: n,
            actual: a.ncols(),
        });
    }
    for i in 0..n {
        if a[(i, i)] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "adjacency diagonal must be zero, node {i} has {}",
                a[(i, i)]
            )));
        }
        for j in 0..n {
            let v = a[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency entries must be 0 or 1, got {v} at ({i}, {j})"
                )));
            }
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::InvalidArgument(format!(
                    "adjacency must be symmetric, differs at ({i}, {j})"
                )));
            }
        }
    }
    let with_loops = a + DMatrix::identity(n, n);
    let inv_sqrt_d: Vec<f64> = (0..n)
        .map(|i| 1.0 / with_loops.row(i).sum().sqrt())
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        with_loops[(i, j)] * inv_sqrt_d[i] * inv_sqrt_d[j]
    }))
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    rows: usize,
    cols: usize,
    omega: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    layers: Vec<LayerDoc>,
    flavor: String,
    head: Head,
}

impl BinaryNetwork {
    /// Serializes the latent weights as JSON. The GCN adjacency is
    /// derived data and is not stored; supply it again when loading.
    pub fn to_checkpoint_json(&self) -> String {
        let doc = CheckpointDoc {
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    rows: l.in_dim(),
                    cols: l.out_dim(),
                    omega: (0..l.in_dim())
                        .flat_map(|i| (0..l.out_dim()).map(move |j| l.omega[(i, j)]))
                        .collect(),
                })
                .collect(),
            flavor: match self.flavor {
                Flavor::Mlp => "mlp".into(),
                Flavor::Gcn(_) => "gcn".into(),
            },
            head: self.head,
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serialization cannot fail")
    }

    /// Restores a network from [`BinaryNetwork::to_checkpoint_json`]
    /// output. `adjacency` must be given for GCN checkpoints and absent
    /// for MLP ones.
    pub fn from_checkpoint_json(text: &str, adjacency: Option<DMatrix<f64>>) -> Result<Self> {
        let doc: CheckpointDoc = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("bad checkpoint JSON: {e}")))?;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (i, l) in doc.layers.iter().enumerate() {
            if l.omega.len() != l.rows * l.cols {
                return Err(Error::Format(format!(
                    "checkpoint layer {i} declares {}x{} but carries {} values",
                    l.rows,
                    l.cols,
                    l.omega.len()
                )));
            }
            layers.push(BinaryLinearLayer::new(DMatrix::from_row_slice(
                l.rows, l.cols, &l.omega,
            )));
        }
        let flavor = match (doc.flavor.as_str(), adjacency) {
            ("mlp", None) => Flavor::Mlp,
            ("mlp", Some(_)) => {
                return Err(Error::InvalidArgument(
                    "adjacency given for an mlp checkpoint".into(),
                ));
            }
            ("gcn", Some(a)) => Flavor::Gcn(a),
            ("gcn", None) => {
                return Err(Error::InvalidArgument(
                    "gcn checkpoint needs its adjacency".into(),
                ));
            }
            (other, _) => {
                return Err(Error::Format(format!("unknown flavor {other:?}")));
            }
        };
        BinaryNetwork::new(layers, doc.head, flavor)
    }
}
