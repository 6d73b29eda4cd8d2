//! Optimizers: the QUBO-projected stochastic gradient step, the
//! BinaryConnect baselines, ProxQuant, and the fixed-point detector.
//!
//! The projected step decomposes each weight matrix into columns, turns
//! every column's intermediate gradients into a binary-map QUBO over
//! that column's input dimension, and moves the latent weights against
//! the solved spin vector. Solver failures abort a step before any
//! column is applied.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::binmap::{binary_map, BinaryMapInput};
use crate::error::{Error, Result};
use crate::net::{sign, BinaryNetwork, GradientBundle};
use crate::qubo::{derive_stream, QuboSolver, SpinVector};

/// Default learning rate for the projected step with local solvers and
/// for BinaryConnect-signSGD.
pub const ALPHA_QPSBGD: f64 = 0.05;
/// Default learning rate for the projected step against a remote
/// sampler.
pub const ALPHA_QPSBGD_REMOTE: f64 = 0.01;
/// Default learning rate for BinaryConnect-SGD.
pub const ALPHA_BC_SGD: f64 = 5e-5;
/// Default learning rate for BinaryConnect-signSGD.
pub const ALPHA_BC_SIGNSGD: f64 = 0.05;
/// Default ProxQuant regularization ramp slope (lambda_t = slope * t).
pub const PROXQUANT_LAMBDA_SLOPE: f64 = 1e-4;

/// One solved column within a projected step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepEntry {
    pub t: u64,
    pub layer: usize,
    pub column: usize,
    pub qubo_n: usize,
    pub qubo_m: usize,
    pub best_energy: f64,
}

impl StepEntry {
    /// The JSON-lines form streamed by the experiment runner.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("step entry serialization cannot fail")
    }
}

/// Report of one projected step: one entry per solved column.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub entries: Vec<StepEntry>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive and finite, got {alpha}"
        )));
    }
    Ok(())
}

/// Builds the per-column binary-map instance from a layer's gradients:
/// directions are the normalized layer-input rows, targets the
/// intermediate-gradient column. `None` means every sample's input row
/// vanished and the column carries no information this step.
///
/// The intermediate gradients carry the 1/batch factor of the mean
/// loss; the targets here are rescaled to per-sample derivatives so
/// that their magnitude is independent of batch size. Without this the
/// linear term shrinks with the batch while the quadratic term does
/// not, and the projection degenerates to a curvature-only minimizer
/// that ignores the gradient.
pub(crate) fn column_instance(
    layer_input: &DMatrix<f64>,
    rdot: &DMatrix<f64>,
    column: usize,
) -> Result<Option<BinaryMapInput>> {
    let scale = rdot.nrows() as f64;
    let v = DVector::from_iterator(rdot.nrows(), rdot.column(column).iter().map(|r| r * scale));
    BinaryMapInput::from_jacobian_rows(layer_input, &v)
}

/// One projected stochastic gradient step over the loss rows.
///
/// For every layer and every weight column, the intermediate gradients
/// are projected onto a spin vector by the solver and the latent column
/// moves by `-alpha` times that vector, so each coordinate changes by
/// exactly `alpha` in magnitude. All columns are solved before any is
/// applied; a solver error leaves the network untouched. Columns whose
/// sample inputs are all zero (saturated activations) are skipped.
///
/// Per-column solver seeds derive from `(seed, t, layer, column)`, so a
/// run is reproducible regardless of evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn qpsbgd_step(
    net: &mut BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
    alpha: f64,
    solver: &dyn QuboSolver,
    t: u64,
    seed: u64,
) -> Result<StepReport> {
    check_alpha(alpha)?;
    let cache = net.forward(x)?;
    let bundle = net.backward(&cache, rows, labels)?;

    let mut updates: Vec<(usize, usize, SpinVector)> = Vec::new();
    let mut report = StepReport::default();
    for (l, grads) in bundle.layers.iter().enumerate() {
        let step_seed = derive_stream(seed, t);
        for i in 0..net.layers[l].out_dim() {
            let Some(inp) = column_instance(&grads.layer_input, &grads.rdot, i)? else {
                continue;
            };
            let col_seed = derive_stream(derive_stream(step_seed, l as u64), i as u64);
            let problem = crate::binmap::build_qubo(&inp)?;
            let solved = solver.solve(&problem, col_seed).map_err(|e| Error::Solve {
                t,
                layer: l,
                column: i,
                source: Box::new(e),
            })?;
            report.entries.push(StepEntry {
                t,
                layer: l,
                column: i,
                qubo_n: problem.n,
                qubo_m: inp.m(),
                best_energy: solved.best_energy,
            });
            updates.push((l, i, solved.best));
        }
    }

    for (l, i, g) in updates {
        for (r, &s) in g.spins().iter().enumerate() {
            net.layers[l].omega[(r, i)] -= alpha * f64::from(s);
        }
    }
    Ok(report)
}

fn clip_unit(v: f64) -> f64 {
    v.clamp(-1.0, 1.0)
}

fn backward_binary(
    net: &BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
) -> Result<GradientBundle> {
    let cache = net.forward(x)?;
    net.backward(&cache, rows, labels)
}

/// BinaryConnect with plain SGD: straight-through gradients on the
/// binary forward pass, latent weights clipped to `[-1, 1]`.
pub fn bc_sgd_step(
    net: &mut BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
    alpha: f64,
) -> Result<()> {
    check_alpha(alpha)?;
    let bundle = backward_binary(net, x, rows, labels)?;
    for (l, grads) in bundle.layers.iter().enumerate() {
        let omega = &mut net.layers[l].omega;
        *omega = omega.zip_map(&grads.weight_grad, |w, g| clip_unit(w - alpha * g));
    }
    Ok(())
}

/// BinaryConnect with signSGD: the update direction is the sign of the
/// gradient under the shared convention (`sign(0) = +1`).
pub fn bc_signsgd_step(
    net: &mut BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
    alpha: f64,
) -> Result<()> {
    check_alpha(alpha)?;
    let bundle = backward_binary(net, x, rows, labels)?;
    for (l, grads) in bundle.layers.iter().enumerate() {
        let omega = &mut net.layers[l].omega;
        *omega = omega.zip_map(&grads.weight_grad, |w, g| clip_unit(w - alpha * sign(g)));
    }
    Ok(())
}

/// The proximal map of the W-shaped binary regularizer: moves `omega`
/// toward its nearest point of {-1, +1} by at most `threshold`.
fn prox_toward_binary(omega: f64, threshold: f64) -> f64 {
    let target = sign(omega);
    let distance = (target - omega).abs();
    omega + (target - omega).signum() * threshold.min(distance)
}

/// ProxQuant: a full-precision gradient step on the latent weights
/// followed by the proximal map with threshold `lambda_t * alpha`.
/// Evaluation still binarizes, but training never does.
pub fn proxquant_step(
    net: &mut BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
    alpha: f64,
    lambda_t: f64,
) -> Result<()> {
    check_alpha(alpha)?;
    if !(lambda_t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_t must be nonnegative, got {lambda_t}"
        )));
    }
    let cache = net.forward_latent(x)?;
    let bundle = net.backward(&cache, rows, labels)?;
    let threshold = lambda_t * alpha;
    for (l, grads) in bundle.layers.iter().enumerate() {
        let omega = &mut net.layers[l].omega;
        *omega = omega.zip_map(&grads.weight_grad, |w, g| {
            prox_toward_binary(w - alpha * g, threshold)
        });
    }
    Ok(())
}

/// Optimizer selection with its hyperparameters; `step` dispatches one
/// training iteration.
#[derive(Clone, Debug)]
pub enum Optimizer {
    QpSbgd { alpha: f64 },
    BcSgd { alpha: f64 },
    BcSignSgd { alpha: f64 },
    ProxQuant { alpha: f64, lambda_slope: f64 },
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::QpSbgd { .. } => "qpsbgd",
            Optimizer::BcSgd { .. } => "bc_sgd",
            Optimizer::BcSignSgd { .. } => "bc_signsgd",
            Optimizer::ProxQuant { .. } => "proxquant",
        }
    }

    /// Runs one iteration; only the projected optimizer consults the
    /// solver and produces a report.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        net: &mut BinaryNetwork,
        x: &DMatrix<f64>,
        rows: &[usize],
        labels: &[usize],
        solver: &dyn QuboSolver,
        t: u64,
        seed: u64,
    ) -> Result<Option<StepReport>> {
        match self {
            Optimizer::QpSbgd { alpha } => {
                qpsbgd_step(net, x, rows, labels, *alpha, solver, t, seed).map(Some)
            }
            Optimizer::BcSgd { alpha } => {
                bc_sgd_step(net, x, rows, labels, *alpha).map(|_| None)
            }
            Optimizer::BcSignSgd { alpha } => {
                bc_signsgd_step(net, x, rows, labels, *alpha).map(|_| None)
            }
            Optimizer::ProxQuant { alpha, lambda_slope } => {
                let lambda_t = lambda_slope * t as f64;
                proxquant_step(net, x, rows, labels, *alpha, lambda_t).map(|_| None)
            }
        }
    }
}

/// Checks the fixed-point condition at `s = sign(Omega)` against the
/// full-dataset gradient: a column is fixed iff the projected gradient
/// equals `-s` exactly, which guarantees further projected steps never
/// change that column's signs. Columns skipped by the step (all sample
/// inputs zero) never move either and count as fixed.
pub fn is_fixed_point(
    net: &BinaryNetwork,
    x: &DMatrix<f64>,
    rows: &[usize],
    labels: &[usize],
    solver: &dyn QuboSolver,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let cache = net.forward(x)?;
    let bundle = net.backward(&cache, rows, labels)?;
    let mut verdicts = Vec::with_capacity(net.layers.len());
    for (l, grads) in bundle.layers.iter().enumerate() {
        let mut layer_verdicts = Vec::with_capacity(net.layers[l].out_dim());
        for i in 0..net.layers[l].out_dim() {
            let fixed = match column_instance(&grads.layer_input, &grads.rdot, i)? {
                None => true,
                Some(inp) => {
                    let col_seed = derive_stream(derive_stream(seed, l as u64), i as u64);
                    let g = binary_map(&inp, solver, col_seed)?;
                    (0..net.layers[l].in_dim())
                        .all(|r| f64::from(g.spins()[r]) == -sign(net.layers[l].omega[(r, i)]))
                }
            };
            layer_verdicts.push(fixed);
        }
        verdicts.push(layer_verdicts);
    }
    Ok(verdicts)
}
