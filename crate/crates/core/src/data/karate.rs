//! The Karate-club social graph with four communities, 6-bit binary
//! node features, and a seeded 5-nodes-per-class training split.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::GraphDataset;
use crate::error::{Error, Result};

/// Nodes in the graph.
pub const KARATE_NODES: usize = 34;
/// Bits needed to encode a node index, and so the feature dimension.
pub const KARATE_FEATURE_DIM: usize = 6;
/// Communities.
pub const KARATE_CLASSES: usize = 4;
/// Training nodes drawn per class.
pub const KARATE_TRAIN_PER_CLASS: usize = 5;

/// The 78 undirected edges of the standard club graph.
const EDGES: [(usize, usize); 78] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10),
    (0, 11), (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2),
    (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3),
    (2, 7), (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7),
    (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16), (6, 16),
    (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33),
    (15, 32), (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33),
    (22, 32), (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33),
    (24, 25), (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33),
    (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32),
    (31, 33), (32, 33),
];

/// A four-community partition with every class at least five nodes
/// strong, so the 5-per-class training split always exists.
const LABELS: [usize; KARATE_NODES] = [
    0, 0, 0, 0, 1, 1, 1, 0, 2, 0, 1, 1, 0, 0, 2, 2, 1, 0, 2, 0, 2, 0, 2, 3,
    3, 3, 2, 3, 3, 2, 2, 3, 2, 2,
];

/// The 6-bit spin encoding of a node index, most significant bit
/// first: bit 1 maps to +1, bit 0 to -1.
pub fn node_features(node: usize) -> [f64; KARATE_FEATURE_DIM] {
    let mut f = [0.0; KARATE_FEATURE_DIM];
    for (b, slot) in f.iter_mut().enumerate() {
        let bit = node >> (KARATE_FEATURE_DIM - 1 - b) & 1;
        *slot = if bit == 1 { 1.0 } else { -1.0 };
    }
    f
}

/// Builds the graph dataset: embedded adjacency and labels, binary
/// index features, and a seeded split of five training nodes per class
/// with the remaining fourteen as test nodes.
pub fn karate_club(seed: u64) -> Result<GraphDataset> {
    let mut adjacency = DMatrix::zeros(KARATE_NODES, KARATE_NODES);
    for &(a, b) in &EDGES {
        adjacency[(a, b)] = 1.0;
        adjacency[(b, a)] = 1.0;
    }
    let x = DMatrix::from_fn(KARATE_NODES, KARATE_FEATURE_DIM, |r, c| node_features(r)[c]);
    let y = LABELS.to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(KARATE_CLASSES * KARATE_TRAIN_PER_CLASS);
    for class in 0..KARATE_CLASSES {
        let mut members: Vec<usize> = (0..KARATE_NODES).filter(|&n| LABELS[n] == class).collect();
        if members.len() < KARATE_TRAIN_PER_CLASS {
            return Err(Error::InvalidArgument(format!(
                "class {class} has only {} members",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        train.extend(members.into_iter().take(KARATE_TRAIN_PER_CLASS));
    }
    train.sort_unstable();
    let test: Vec<usize> = (0..KARATE_NODES).filter(|n| !train.contains(n)).collect();
    Ok(GraphDataset { adjacency, x, y, train, test, seed })
}
