//! MNIST-style 16-bit line features, plus a procedural digit renderer
//! for environments without the original image files.
//!
//! Per image: pixels whose normalized intensity exceeds 0.5 are the
//! keypoints; 16 lines at angles k*pi/16 run through the
//! intensity-weighted centroid; feature k is +1 when strictly more
//! keypoints lie in the positive half-plane of line k, -1 when strictly
//! fewer, and +1 on ties, matching the shared sign convention.
//! Coordinates are (x, y) = (column, row).

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::idx::{write_idx_images, write_idx_labels, IdxImages};
use crate::data::TabularDataset;
use crate::error::{Error, Result};

/// Number of sampled lines, and so the feature dimension.
pub const LINE_COUNT: usize = 16;
/// Normalized-intensity threshold above which a pixel is a keypoint.
pub const KEYPOINT_THRESHOLD: f64 = 0.5;
/// Training rows drawn per digit pair.
pub const MNIST_TRAIN_ROWS: usize = 500;
/// Test rows drawn per digit pair.
pub const MNIST_TEST_ROWS: usize = 3000;

/// Digits the experiments use.
pub const SUPPORTED_DIGITS: [u8; 4] = [0, 1, 2, 7];

/// Computes the 16 spin features of one grayscale image.
pub fn line_features(image: &[u8], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if image.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "line_features image size",
            expected: rows * cols,
            actual: image.len(),
        });
    }
    let mut total = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut keypoints: Vec<(f64, f64)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let w = f64::from(image[r * cols + c]) / 255.0;
            if w > 0.0 {
                total += w;
                cx += w * c as f64;
                cy += w * r as f64;
            }
            if w > KEYPOINT_THRESHOLD {
                keypoints.push((c as f64, r as f64));
            }
        }
    }
    let (cx, cy) = if total > 0.0 {
        (cx / total, cy / total)
    } else {
        ((cols as f64 - 1.0) / 2.0, (rows as f64 - 1.0) / 2.0)
    };

    let mut features = Vec::with_capacity(LINE_COUNT);
    for k in 0..LINE_COUNT {
        let theta = std::f64::consts::PI * k as f64 / LINE_COUNT as f64;
        // Line direction (cos, sin); its positive half-plane is where
        // the left-hand normal (-sin, cos) points.
        let (nx, ny) = (-theta.sin(), theta.cos());
        let mut pos = 0i64;
        let mut neg = 0i64;
        for &(px, py) in &keypoints {
            let d = (px - cx) * nx + (py - cy) * ny;
            if d > 0.0 {
                pos += 1;
            } else if d < 0.0 {
                neg += 1;
            }
        }
        features.push(crate::net::sign((pos - neg) as f64));
    }
    Ok(features)
}

/// Extracts line features for every image of the two digits and splits
/// 500/3000 by seeded sampling. The pair's first digit becomes class 0.
pub fn mnist_line_features(
    images: &IdxImages,
    labels: &[u8],
    digit_pair: (u8, u8),
    seed: u64,
) -> Result<TabularDataset> {
    let (a, b) = digit_pair;
    if a == b {
        return Err(Error::InvalidArgument(format!(
            "digit pair needs two distinct digits, got {a}/{b}"
        )));
    }
    for d in [a, b] {
        if !SUPPORTED_DIGITS.contains(&d) {
            return Err(Error::InvalidArgument(format!(
                "digit {d} is not one of the supported digits {SUPPORTED_DIGITS:?}"
            )));
        }
    }
    if images.images.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "mnist image/label count",
            expected: images.images.len(),
            actual: labels.len(),
        });
    }

    let mut feats: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<usize> = Vec::new();
    for (img, &label) in images.images.iter().zip(labels) {
        if label != a && label != b {
            continue;
        }
        feats.push(line_features(img, images.rows, images.cols)?);
        y.push(usize::from(label == b));
    }

    let needed = MNIST_TRAIN_ROWS + MNIST_TEST_ROWS;
    if feats.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "digit pair {a}/{b} has {} samples, need {needed} for the 500/3000 split",
            feats.len()
        )));
    }

    let x = DMatrix::from_fn(feats.len(), LINE_COUNT, |r, c| feats[r][c]);
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let train = order[..MNIST_TRAIN_ROWS].to_vec();
    let test = order[MNIST_TRAIN_ROWS..needed].to_vec();
    Ok(TabularDataset { x, y, train, test, seed })
}

const SIDE: usize = 28;

fn stamp_segment(img: &mut [f64], (x0, y0): (f64, f64), (x1, y1): (f64, f64), sigma: f64) {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (px, py) = (c as f64, r as f64);
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
            };
            let (qx, qy) = (x0 + t * dx, y0 + t * dy);
            let d2 = (px - qx).powi(2) + (py - qy).powi(2);
            let v = (-d2 / (2.0 * sigma * sigma)).exp();
            let cell = &mut img[r * SIDE + c];
            *cell = cell.max(v);
        }
    }
}

fn stamp_ellipse(img: &mut [f64], (cx, cy): (f64, f64), rx: f64, ry: f64, sigma: f64) {
    for r in 0..SIDE {
        for c in 0..SIDE {
            let (px, py) = (c as f64, r as f64);
            // Approximate distance to the ellipse ring via the scaled
            // radial residual.
            let rad = (((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2)).sqrt();
            let d = (rad - 1.0) * rx.min(ry);
            let v = (-d * d / (2.0 * sigma * sigma)).exp();
            let cell = &mut img[r * SIDE + c];
            *cell = cell.max(v);
        }
    }
}

/// Renders one jittered 28x28 digit from {0, 1, 2, 7} as strokes with a
/// Gaussian cross-section.
pub fn render_digit<R: Rng>(digit: u8, rng: &mut R) -> Result<Vec<u8>> {
    if !SUPPORTED_DIGITS.contains(&digit) {
        return Err(Error::InvalidArgument(format!(
            "cannot render digit {digit}; supported digits are {SUPPORTED_DIGITS:?}"
        )));
    }
    let sigma = 1.1 + rng.gen_range(-0.15..0.15);
    let rx = 5.5 + rng.gen_range(-0.7..0.7);
    let ry = 8.0 + rng.gen_range(-0.7..0.7);
    let jitter = Normal::new(0.0, 0.8).expect("constant parameters are valid");
    let mut j = |v: f64| v + jitter.sample(rng);
    let mut img = vec![0.0f64; SIDE * SIDE];
    match digit {
        0 => {
            stamp_ellipse(&mut img, (j(14.0), j(14.0)), rx, ry, sigma);
        }
        1 => {
            stamp_segment(&mut img, (j(14.0), j(5.0)), (j(14.0), j(23.0)), sigma);
        }
        2 => {
            let top_left = (j(8.5), j(8.0));
            let top_mid = (j(14.0), j(5.0));
            let top_right = (j(19.5), j(9.0));
            let bottom_left = (j(8.5), j(22.0));
            let bottom_right = (j(19.5), j(22.0));
            stamp_segment(&mut img, top_left, top_mid, sigma);
            stamp_segment(&mut img, top_mid, top_right, sigma);
            stamp_segment(&mut img, top_right, bottom_left, sigma);
            stamp_segment(&mut img, bottom_left, bottom_right, sigma);
        }
        7 => {
            let bar_left = (j(8.0), j(6.0));
            let bar_right = (j(20.0), j(6.0));
            stamp_segment(&mut img, bar_left, bar_right, sigma);
            stamp_segment(&mut img, bar_right, (j(11.0), j(23.0)), sigma);
        }
        _ => unreachable!("checked above"),
    }
    Ok(img
        .into_iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect())
}

/// Writes a seeded pool of rendered digits as an IDX image/label pair
/// (`images-idx3-ubyte`, `labels-idx1-ubyte`), `per_digit` images for
/// each of 0, 1, 2, 7, shuffled.
pub fn synthesize_mnist(dir: &Path, seed: u64, per_digit: usize) -> Result<(PathBuf, PathBuf)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(Vec<u8>, u8)> = Vec::with_capacity(4 * per_digit);
    for &digit in &SUPPORTED_DIGITS {
        for _ in 0..per_digit {
            pool.push((render_digit(digit, &mut rng)?, digit));
        }
    }
    pool.shuffle(&mut rng);
    let images = IdxImages {
        rows: SIDE,
        cols: SIDE,
        images: pool.iter().map(|(img, _)| img.clone()).collect(),
    };
    let labels: Vec<u8> = pool.iter().map(|(_, l)| *l).collect();
    let images_path = dir.join("images-idx3-ubyte");
    let labels_path = dir.join("labels-idx1-ubyte");
    write_idx_images(&images_path, &images)?;
    write_idx_labels(&labels_path, &labels)?;
    Ok((images_path, labels_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::idx::read_idx_images;

    #[test]
    fn features_are_sixteen_spins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = render_digit(2, &mut rng).unwrap();
        let f = line_features(&img, SIDE, SIDE).unwrap();
        assert_eq!(f.len(), LINE_COUNT);
        assert!(f.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn single_keypoint_in_the_positive_cone_gives_all_plus() {
        // One bright pixel at (x=4, y=15); three 1/3-weight faint
        // pixels around (x=24, y=13) balance the centroid to (14, 14).
        // The sole keypoint then sits at offset (-10, +1), inside the
        // cone that is strictly positive for all sixteen normals
        // (margin about one pixel, far above centroid rounding), so
        // every feature is +1.
        let mut img = vec![0u8; SIDE * SIDE];
        img[15 * SIDE + 4] = 255;
        img[12 * SIDE + 24] = 85;
        img[13 * SIDE + 24] = 85;
        img[14 * SIDE + 24] = 85;
        let f = line_features(&img, SIDE, SIDE).unwrap();
        assert_eq!(f, vec![1.0; LINE_COUNT]);
    }

    #[test]
    fn point_symmetric_image_ties_every_line_to_plus() {
        let mut img = vec![0u8; SIDE * SIDE];
        img[10 * SIDE + 10] = 255;
        img[18 * SIDE + 18] = 255;
        let f = line_features(&img, SIDE, SIDE).unwrap();
        assert_eq!(f, vec![1.0; LINE_COUNT]);
    }

    #[test]
    fn empty_image_defaults_to_all_plus() {
        let img = vec![0u8; SIDE * SIDE];
        let f = line_features(&img, SIDE, SIDE).unwrap();
        assert_eq!(f, vec![1.0; LINE_COUNT]);
    }

    #[test]
    fn synthesized_pool_splits_500_3000() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, labels) = synthesize_mnist(dir.path(), 3, 1800).unwrap();
        let images = read_idx_images(&imgs).unwrap();
        let labels = crate::data::idx::read_idx_labels(&labels).unwrap();
        assert_eq!(images.images.len(), 4 * 1800);

        let d = mnist_line_features(&images, &labels, (1, 7), 11).unwrap();
        assert_eq!(d.train.len(), MNIST_TRAIN_ROWS);
        assert_eq!(d.test.len(), MNIST_TEST_ROWS);
        assert_eq!(d.x.ncols(), LINE_COUNT);
        assert!(d.x.iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(d.train.iter().all(|i| !d.test.contains(i)));
        // Both classes present in both splits.
        for split in [&d.train, &d.test] {
            let ones = split.iter().filter(|&&i| d.y[i] == 1).count();
            assert!(ones > 0 && ones < split.len());
        }
    }

    #[test]
    fn digit_pair_validation() {
        let images = IdxImages { rows: 1, cols: 1, images: vec![] };
        assert!(mnist_line_features(&images, &[], (1, 1), 0).is_err());
        assert!(mnist_line_features(&images, &[], (3, 7), 0).is_err());
        assert!(mnist_line_features(&images, &[], (1, 7), 0).is_err());
    }

    #[test]
    fn rendered_digits_differ_between_classes() {
        // The mean feature vectors of two digit classes should not
        // coincide, otherwise the classification task is vacuous.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mean_features = |digit: u8, rng: &mut ChaCha8Rng| {
            let mut acc = vec![0.0; LINE_COUNT];
            for _ in 0..40 {
                let img = render_digit(digit, rng).unwrap();
                let f = line_features(&img, SIDE, SIDE).unwrap();
                for (a, v) in acc.iter_mut().zip(&f) {
                    *a += v;
                }
            }
            acc
        };
        let m1 = mean_features(1, &mut rng);
        let m7 = mean_features(7, &mut rng);
        let dist: f64 = m1.iter().zip(&m7).map(|(a, b)| (a - b).abs()).sum();
        assert!(dist > 10.0, "digit classes look identical: distance {dist}");
    }
}
