//! The binary map: projecting a gradient with respect to layer outputs
//! onto a spin vector that stands in for the gradient with respect to
//! the layer's weights.
//!
//! Given directions `u_i` and targets `v_i`, the map minimizes
//! `sum_i (v_i - g' u_i)^2` over `g` in `{-1, +1}^n`. [`build_qubo`]
//! rewrites that objective as a QUBO whose energy equals the residual
//! exactly; [`relaxed_map`] solves the same objective over real
//! vectors, which recovers the ordinary chain-rule gradient when the
//! directions are normalized Jacobian rows of a single output.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qubo::{QuboProblem, QuboSolver, SpinVector};

/// Threshold below which a Jacobian row is considered zero and dropped.
pub const JACOBIAN_DROP_NORM: f64 = 1e-12;

/// Directions and targets defining one binary-map instance.
///
/// `u` holds the directions as columns (n rows, m columns); `v` holds
/// one target per column. In training, column `b` is the normalized
/// layer input `x_b / ||x_b||^2` and `v[b]` the intermediate gradient
/// for that sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMapInput {
    pub u: DMatrix<f64>,
    pub v: DVector<f64>,
}

impl BinaryMapInput {
    /// Builds an instance, checking shape agreement and finiteness.
    pub fn new(u: DMatrix<f64>, v: DVector<f64>) -> Result<Self> {
        if u.nrows() == 0 || u.ncols() == 0 {
            return Err(Error::InvalidArgument(
                "binary map needs at least one direction of dimension at least one".into(),
            ));
        }
        if u.ncols() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "BinaryMapInput targets",
                expected: u.ncols(),
                actual: v.len(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "binary map inputs must be finite".into(),
            ));
        }
        Ok(BinaryMapInput { u, v })
    }

    /// Builds the training instantiation from raw Jacobian rows: each
    /// row `j_b` becomes the direction `j_b / ||j_b||^2` paired with
    /// target `v[b]`. Rows with `||j_b|| < JACOBIAN_DROP_NORM` carry no
    /// information and are dropped together with their target; if every
    /// row is dropped there is no instance, and `Ok(None)` is returned.
    pub fn from_jacobian_rows(rows: &DMatrix<f64>, v: &DVector<f64>) -> Result<Option<Self>> {
        if rows.nrows() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "from_jacobian_rows targets",
                expected: rows.nrows(),
                actual: v.len(),
            });
        }
        if rows.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "jacobian rows and targets must be finite".into(),
            ));
        }
        let n = rows.ncols();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut kept_v: Vec<f64> = Vec::new();
        for b in 0..rows.nrows() {
            let j = rows.row(b).transpose();
            let norm = j.norm();
            if norm < JACOBIAN_DROP_NORM {
                continue;
            }
            cols.push(j / (norm * norm));
            kept_v.push(v[b]);
        }
        if cols.is_empty() {
            return Ok(None);
        }
        let m = cols.len();
        let u = DMatrix::from_fn(n, m, |i, b| cols[b][i]);
        Ok(Some(BinaryMapInput {
            u,
            v: DVector::from_vec(kept_v),
        }))
    }

    /// Spin dimension of the map.
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Number of direction/target pairs.
    pub fn m(&self) -> usize {
        self.u.ncols()
    }

    /// The residual `sum_i (v_i - g' u_i)^2` the map minimizes.
    pub fn residual(&self, g: &SpinVector) -> Result<f64> {
        if g.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "residual assignment length",
                expected: self.n(),
                actual: g.len(),
            });
        }
        let gf = g.to_f64();
        let mut total = 0.0;
        for i in 0..self.m() {
            let r = self.v[i] - gf.dot(&self.u.column(i).into_owned());
            total += r * r;
        }
        Ok(total)
    }
}

/// Rewrites the binary-map objective as a QUBO: `Q = sum_i u_i u_i'`,
/// `s = -2 sum_i v_i u_i`, `offset = sum_i v_i^2`. The offset keeps the
/// QUBO energy equal to the squared residual for every assignment.
pub fn build_qubo(inp: &BinaryMapInput) -> Result<QuboProblem> {
    let q = &inp.u * inp.u.transpose();
    let s = &inp.u * &inp.v * -2.0;
    let offset = inp.v.norm_squared();
    QuboProblem::new(q, s, offset)
}

/// Projects the targets onto a spin vector by minimizing the QUBO of
/// [`build_qubo`] with the given solver. With the exhaustive solver the
/// result is the exact argmin under the lexicographic tie-break.
pub fn binary_map(inp: &BinaryMapInput, solver: &dyn QuboSolver, seed: u64) -> Result<SpinVector> {
    let problem = build_qubo(inp)?;
    Ok(solver.solve(&problem, seed)?.best)
}

/// The relaxed map: the minimum-norm least-squares solution `b` of
/// `min_b sum_i (v_i - b' u_i)^2`, via singular value decomposition.
///
/// When `u_i = j_i / ||j_i||^2` for the Jacobian row of a single output
/// and `v` is the gradient with respect to that output, `b` reproduces
/// the gradient with respect to the input exactly.
pub fn relaxed_map(inp: &BinaryMapInput) -> Result<DVector<f64>> {
    for i in 0..inp.m() {
        if inp.u.column(i).norm() == 0.0 {
            return Err(Error::SingularInput(format!(
                "relaxed map direction {i} is the zero vector"
            )));
        }
    }
    // Rows of the system are the directions: minimize ||U' b - v||.
    let system = inp.u.transpose();
    let svd = system.svd(true, true);
    svd.solve(&inp.v, 1e-12)
        .map_err(|e| Error::Numeric(format!("relaxed map SVD solve failed: {e}")))
}
