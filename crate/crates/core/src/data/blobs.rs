//! Two linearly separable Gaussian blobs, lifted to 3D with an
//! intercept column of ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::TabularDataset;
use crate::error::Result;

/// Samples per class.
pub const BLOB_CLASS_SIZE: usize = 40;
/// Feature dimension: two coordinates plus the intercept.
pub const BLOB_DIM: usize = 3;

const CENTERS: [(f64, f64); 2] = [(-2.0, -2.0), (2.0, 2.0)];
const SPREAD: f64 = 0.8;

/// Margin every sample must clear under some sign-vector classifier
/// before a draw is accepted.
pub const BLOB_MARGIN: f64 = 0.5;

/// Draws two balanced 2D Gaussian blobs labeled 0 and 1, appends the
/// constant-one intercept coordinate, and resamples until the classes
/// are verifiably linearly separable: some weight vector in {-1,+1}^3
/// must classify every sample with margin [`BLOB_MARGIN`], checked
/// exhaustively over all eight sign vectors. The trained model's
/// binarized layer is such a vector, so a perfect fit exists by
/// construction. All 80 samples form the training split; the test
/// split is empty.
pub fn make_blobs(seed: u64) -> Result<TabularDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SPREAD).expect("constant parameters are valid");
    loop {
        let mut x = DMatrix::zeros(2 * BLOB_CLASS_SIZE, 3);
        let mut y = Vec::with_capacity(2 * BLOB_CLASS_SIZE);
        for class in 0..2 {
            let (cx, cy) = CENTERS[class];
            for i in 0..BLOB_CLASS_SIZE {
                let row = class * BLOB_CLASS_SIZE + i;
                x[(row, 0)] = cx + noise.sample(&mut rng);
                x[(row, 1)] = cy + noise.sample(&mut rng);
                x[(row, 2)] = 1.0;
                y.push(class);
            }
        }
        if binary_separator(&x, &y, BLOB_MARGIN).is_some() {
            let n = y.len();
            return Ok(TabularDataset {
                x,
                y,
                train: (0..n).collect(),
                test: Vec::new(),
                seed,
            });
        }
    }
}

/// Exhaustive sign check: scans all eight weight vectors in {-1,+1}^3
/// for one whose score `x w` clears `margin` on the correct side of
/// every sample. Returns the first such vector.
pub fn binary_separator(x: &DMatrix<f64>, y: &[usize], margin: f64) -> Option<[f64; 3]> {
    for bits in 0..8u32 {
        let w = [
            if bits & 4 != 0 { 1.0 } else { -1.0 },
            if bits & 2 != 0 { 1.0 } else { -1.0 },
            if bits & 1 != 0 { 1.0 } else { -1.0 },
        ];
        let separates = y.iter().enumerate().all(|(row, &label)| {
            let score = x[(row, 0)] * w[0] + x[(row, 1)] * w[1] + x[(row, 2)] * w[2];
            let signed = if label == 1 { score } else { -score };
            signed >= margin
        });
        if separates {
            return Some(w);
        }
    }
    None
}

/// Searches a fine grid of directions for a line separating the two
/// classes in the first two coordinates. Returns a full 3-vector `w`
/// (direction plus intercept weight) with `sign(x w)` matching the
/// labels when one exists.
pub fn separating_direction(x: &DMatrix<f64>, y: &[usize]) -> Option<DVector<f64>> {
    let steps = 1440;
    for k in 0..steps {
        let theta = std::f64::consts::PI * k as f64 / steps as f64;
        let (dx, dy) = (theta.cos(), theta.sin());
        let mut min1 = f64::INFINITY;
        let mut max1 = f64::NEG_INFINITY;
        let mut min0 = f64::INFINITY;
        let mut max0 = f64::NEG_INFINITY;
        for (row, &label) in y.iter().enumerate() {
            let t = x[(row, 0)] * dx + x[(row, 1)] * dy;
            if label == 1 {
                min1 = min1.min(t);
                max1 = max1.max(t);
            } else {
                min0 = min0.min(t);
                max0 = max0.max(t);
            }
        }
        // Class 1 strictly above class 0 along this direction, or the
        // reverse; the midpoint becomes the intercept.
        let candidate = if min1 > max0 {
            Some((dx, dy, -(min1 + max0) / 2.0))
        } else if min0 > max1 {
            Some((-dx, -dy, (min0 + max1) / 2.0))
        } else {
            None
        };
        if let Some((wx, wy, b)) = candidate {
            let w = DVector::from_row_slice(&[wx, wy, b]);
            let consistent = y.iter().enumerate().all(|(row, &label)| {
                let score = x[(row, 0)] * wx + x[(row, 1)] * wy + b;
                (score >= 0.0) == (label == 1)
            });
            if consistent {
                return Some(w);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_have_intercept_and_balanced_labels() {
        let d = make_blobs(0).unwrap();
        assert_eq!(d.x.ncols(), 3);
        assert_eq!(d.x.nrows(), 2 * BLOB_CLASS_SIZE);
        for r in 0..d.x.nrows() {
            assert_eq!(d.x[(r, 2)], 1.0);
        }
        assert_eq!(d.y.iter().filter(|&&c| c == 0).count(), BLOB_CLASS_SIZE);
        assert_eq!(d.y.iter().filter(|&&c| c == 1).count(), BLOB_CLASS_SIZE);
        assert_eq!(d.train.len(), 2 * BLOB_CLASS_SIZE);
        assert!(d.test.is_empty());
    }

    #[test]
    fn blobs_are_separable_by_construction() {
        for seed in 0..5 {
            let d = make_blobs(seed).unwrap();
            let w = separating_direction(&d.x, &d.y).expect("generator guarantees a separator");
            for (row, &label) in d.y.iter().enumerate() {
                let score = d.x.row(row).transpose().dot(&w);
                assert_eq!(score >= 0.0, label == 1, "seed {seed} row {row}");
            }
        }
    }

    #[test]
    fn blobs_admit_a_perfect_sign_classifier() {
        for seed in 0..10 {
            let d = make_blobs(seed).unwrap();
            let w = binary_separator(&d.x, &d.y, BLOB_MARGIN)
                .expect("generator guarantees a sign-vector separator");
            for (row, &label) in d.y.iter().enumerate() {
                let score =
                    d.x[(row, 0)] * w[0] + d.x[(row, 1)] * w[1] + d.x[(row, 2)] * w[2];
                assert!(
                    if label == 1 { score } else { -score } >= BLOB_MARGIN,
                    "seed {seed} row {row} score {score}"
                );
            }
        }
    }

    #[test]
    fn blobs_are_deterministic_per_seed() {
        let a = make_blobs(7).unwrap();
        let b = make_blobs(7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let c = make_blobs(8).unwrap();
        assert_ne!(a.x, c.x);
    }
}
