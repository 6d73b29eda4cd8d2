//! Config-driven experiment runs: loads the dataset, drives the
//! training loop for every seed, evaluates binarized forward passes at
//! epoch boundaries, and writes metrics plus optional diagnostics.
//!
//! Determinism contract: with local solvers, identical configs produce
//! byte-identical metrics files. All randomness flows from the per-seed
//! generator or streams derived from it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binmap::binary_map;
use crate::config::{DatasetConfig, ExperimentConfig, FlavorConfig};
use crate::data::{adult, blobs, idx, karate, mnist, take_rows, GraphDataset, TabularDataset};
use crate::diagnostics::{cdp_counts, CdpTally};
use crate::error::{Error, Result};
use crate::net::{normalize_adjacency, BinaryNetwork, Flavor};
use crate::optim::{column_instance, Optimizer, StepEntry};
use crate::qubo::{derive_stream, QuboSolver};

/// Column header of the metrics CSV.
pub const METRICS_HEADER: &str = "seed,epoch,split,loss,accuracy";

/// Column header of the sign-agreement CSV.
pub const CDP_HEADER: &str = "seed,epoch,k,n,z";

/// Stream tag for the instrument's batch draws, far above any layer or
/// column index so it never collides with training streams.
const CDP_BATCH_STREAM: u64 = u64::MAX;

/// Stream tag seeding the instrument's solver calls.
const CDP_SOLVE_STREAM: u64 = u64::MAX - 1;

/// Which rows a metrics record was computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One evaluation row: loss and accuracy of the binarized network on
/// one split at one epoch.
#[derive(Clone, Debug)]
pub struct MetricsRecord {
    pub seed: u64,
    pub epoch: u64,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

impl MetricsRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.seed, self.epoch, self.split, self.loss, self.accuracy
        )
    }
}

/// Sign-agreement counts gathered at one evaluation point.
#[derive(Clone, Copy, Debug)]
pub struct CdpEpoch {
    pub seed: u64,
    pub epoch: u64,
    pub k: usize,
    pub n: usize,
}

/// Everything a run produced, beyond the files it wrote.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    pub cdp_epochs: Vec<CdpEpoch>,
    /// Agreement counts pooled over every epoch and seed, when the
    /// instrument ran and saw at least one usable coordinate.
    pub pooled_cdp: Option<CdpTally>,
    pub checkpoint_paths: Vec<PathBuf>,
}

/// A dataset ready to train on; graphs carry their normalized
/// adjacency so every seed's network shares one copy.
enum LoadedDataset {
    Tabular(TabularDataset),
    Graph {
        data: GraphDataset,
        normalized: DMatrix<f64>,
    },
}

impl LoadedDataset {
    fn x(&self) -> &DMatrix<f64> {
        match self {
            LoadedDataset::Tabular(d) => &d.x,
            LoadedDataset::Graph { data, .. } => &data.x,
        }
    }

    fn y(&self) -> &[usize] {
        match self {
            LoadedDataset::Tabular(d) => &d.y,
            LoadedDataset::Graph { data, .. } => &data.y,
        }
    }

    fn train(&self) -> &[usize] {
        match self {
            LoadedDataset::Tabular(d) => &d.train,
            LoadedDataset::Graph { data, .. } => &data.train,
        }
    }

    fn test(&self) -> &[usize] {
        match self {
            LoadedDataset::Tabular(d) => &d.test,
            LoadedDataset::Graph { data, .. } => &data.test,
        }
    }

    fn labels_at(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.y()[r]).collect()
    }
}

fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<LoadedDataset> {
    match cfg {
        DatasetConfig::Blobs => Ok(LoadedDataset::Tabular(blobs::make_blobs(seed)?)),
        DatasetConfig::Adult { train_path, test_path, feature_subset } => {
            Ok(LoadedDataset::Tabular(adult::load_adult(
                train_path,
                test_path,
                *feature_subset,
                seed,
            )?))
        }
        DatasetConfig::Mnist { images_path, labels_path, digit_pair } => {
            let images = idx::read_idx_images(images_path)?;
            let labels = idx::read_idx_labels(labels_path)?;
            Ok(LoadedDataset::Tabular(mnist::mnist_line_features(
                &images,
                &labels,
                *digit_pair,
                seed,
            )?))
        }
        DatasetConfig::Karate => {
            let data = karate::karate_club(seed)?;
            let normalized = normalize_adjacency(&data.adjacency)?;
            Ok(LoadedDataset::Graph { data, normalized })
        }
    }
}

/// Evaluates the binarized network on the train split and, when one
/// exists, the test split. One forward pass covers both.
fn evaluate(
    net: &BinaryNetwork,
    loaded: &LoadedDataset,
    seed: u64,
    epoch: u64,
    records: &mut Vec<MetricsRecord>,
) -> Result<()> {
    let cache = net.forward(loaded.x())?;
    let splits = [(Split::Train, loaded.train()), (Split::Test, loaded.test())];
    for (split, rows) in splits {
        if rows.is_empty() {
            continue;
        }
        let labels = loaded.labels_at(rows);
        let loss = net.loss(&cache, rows, &labels)?;
        let accuracy = net.accuracy(&cache, rows, &labels)?;
        records.push(MetricsRecord { seed, epoch, split, loss, accuracy });
    }
    Ok(())
}

/// Measures sign agreement between the projected batch gradient and the
/// full-train gradient of the current network: draws a fresh batch from
/// the instrument's own stream, projects every column the way a
/// training step would, and counts coordinates whose reference gradient
/// sign matches the projection.
#[allow(clippy::too_many_arguments)]
fn cdp_instrument(
    net: &BinaryNetwork,
    loaded: &LoadedDataset,
    batch_size: usize,
    solver: &dyn QuboSolver,
    cdp_rng: &mut ChaCha8Rng,
    solve_base: u64,
    seed: u64,
    epoch: u64,
) -> Result<Option<CdpEpoch>> {
    let (reference, batch_bundle) = match loaded {
        LoadedDataset::Tabular(d) => {
            let train_x = take_rows(&d.x, &d.train)?;
            let train_rows: Vec<usize> = (0..d.train.len()).collect();
            let cache = net.forward(&train_x)?;
            let reference = net.backward(&cache, &train_rows, &d.labels_at(&d.train))?;

            let batch: Vec<usize> = d.train.choose_multiple(cdp_rng, batch_size).copied().collect();
            let batch_x = take_rows(&d.x, &batch)?;
            let batch_rows: Vec<usize> = (0..batch.len()).collect();
            let batch_cache = net.forward(&batch_x)?;
            let bundle = net.backward(&batch_cache, &batch_rows, &d.labels_at(&batch))?;
            (reference, bundle)
        }
        LoadedDataset::Graph { data, .. } => {
            let cache = net.forward(&data.x)?;
            let reference = net.backward(&cache, &data.train, &data.labels_at(&data.train))?;
            let batch: Vec<usize> =
                data.train.choose_multiple(cdp_rng, batch_size).copied().collect();
            let bundle = net.backward(&cache, &batch, &data.labels_at(&batch))?;
            (reference, bundle)
        }
    };

    let mut k = 0;
    let mut n = 0;
    let epoch_stream = derive_stream(solve_base, epoch);
    for (l, grads) in batch_bundle.layers.iter().enumerate() {
        let layer_stream = derive_stream(epoch_stream, l as u64);
        for i in 0..grads.rdot.ncols() {
            let Some(inp) = column_instance(&grads.layer_input, &grads.rdot, i)? else {
                continue;
            };
            let g = binary_map(&inp, solver, derive_stream(layer_stream, i as u64))?;
            let reference_col = reference.layers[l].weight_grad.column(i).into_owned();
            let (dk, dn) = cdp_counts(&g, &reference_col)?;
            k += dk;
            n += dn;
        }
    }
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(CdpEpoch { seed, epoch, k, n }))
}

/// What one seed's training loop produced.
struct SeedOutcome {
    records: Vec<MetricsRecord>,
    cdp_epochs: Vec<CdpEpoch>,
    step_entries: Vec<StepEntry>,
    checkpoint: Option<String>,
}

fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    optimizer: &Optimizer,
    solver: &dyn QuboSolver,
) -> Result<SeedOutcome> {
    let loaded = load_dataset(&cfg.dataset, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flavor = match cfg.architecture.flavor {
        FlavorConfig::Mlp => Flavor::Mlp,
        FlavorConfig::Gcn => match &loaded {
            LoadedDataset::Graph { normalized, .. } => Flavor::Gcn(normalized.clone()),
            LoadedDataset::Tabular(_) => {
                return Err(Error::InvalidArgument(
                    "gcn flavor needs a graph dataset".to_owned(),
                ))
            }
        },
    };
    let mut net =
        BinaryNetwork::random(&cfg.architecture.dims, cfg.architecture.head, flavor, &mut rng)?;

    let instrument_on = cfg.cdp_log_path.is_some();
    let mut cdp_rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, CDP_BATCH_STREAM));
    let solve_base = derive_stream(seed, CDP_SOLVE_STREAM);

    let mut records = Vec::new();
    let mut cdp_epochs = Vec::new();
    let mut step_entries = Vec::new();

    evaluate(&net, &loaded, seed, 0, &mut records)?;
    if instrument_on {
        if let Some(epoch) = cdp_instrument(
            &net, &loaded, cfg.batch_size, solver, &mut cdp_rng, solve_base, seed, 0,
        )? {
            cdp_epochs.push(epoch);
        }
    }

    for t in 1..=cfg.iterations {
        let report = match &loaded {
            LoadedDataset::Tabular(d) => {
                let batch: Vec<usize> =
                    d.train.choose_multiple(&mut rng, cfg.batch_size).copied().collect();
                let batch_x = take_rows(&d.x, &batch)?;
                let batch_rows: Vec<usize> = (0..batch.len()).collect();
                let labels = d.labels_at(&batch);
                optimizer.step(&mut net, &batch_x, &batch_rows, &labels, solver, t, seed)?
            }
            LoadedDataset::Graph { data, .. } => {
                let batch: Vec<usize> =
                    data.train.choose_multiple(&mut rng, cfg.batch_size).copied().collect();
                let labels = data.labels_at(&batch);
                optimizer.step(&mut net, &data.x, &batch, &labels, solver, t, seed)?
            }
        };
        if cfg.step_log_path.is_some() {
            if let Some(report) = report {
                step_entries.extend(report.entries);
            }
        }

        if t % cfg.eval_every == 0 || t == cfg.iterations {
            let epoch = t.div_ceil(cfg.eval_every);
            evaluate(&net, &loaded, seed, epoch, &mut records)?;
            if instrument_on {
                if let Some(tally) = cdp_instrument(
                    &net, &loaded, cfg.batch_size, solver, &mut cdp_rng, solve_base, seed, epoch,
                )? {
                    cdp_epochs.push(tally);
                }
            }
        }
    }

    let checkpoint = cfg.checkpoint_dir.is_some().then(|| net.to_checkpoint_json());
    Ok(SeedOutcome { records, cdp_epochs, step_entries, checkpoint })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Runs the configured experiment: validates, trains every seed in
/// listed order, writes the metrics CSV and any requested logs, and
/// returns the collected records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let optimizer = cfg.optimizer.resolve();
    let solver = cfg.optimizer.solver().build();

    let mut records = Vec::new();
    let mut cdp_epochs = Vec::new();
    let mut step_entries = Vec::new();
    let mut checkpoint_paths = Vec::new();

    for &seed in &cfg.seeds {
        let outcome = run_seed(cfg, seed, &optimizer, solver.as_ref())?;
        records.extend(outcome.records);
        cdp_epochs.extend(outcome.cdp_epochs);
        step_entries.extend(outcome.step_entries);
        if let (Some(dir), Some(json)) = (&cfg.checkpoint_dir, outcome.checkpoint) {
            let path = dir.join(format!("seed-{seed}.json"));
            write_text(&path, &json)?;
            checkpoint_paths.push(path);
        }
    }

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for record in &records {
        csv.push_str(&record.csv_line());
        csv.push('\n');
    }
    write_text(&cfg.metrics_path, &csv)?;

    if let Some(path) = &cfg.cdp_log_path {
        let mut log = String::from(CDP_HEADER);
        log.push('\n');
        for e in &cdp_epochs {
            let z = CdpTally::from_counts(e.k, e.n)?.z;
            log.push_str(&format!("{},{},{},{},{}\n", e.seed, e.epoch, e.k, e.n, z));
        }
        write_text(path, &log)?;
    }

    if let Some(path) = &cfg.step_log_path {
        let mut log = String::new();
        for entry in &step_entries {
            log.push_str(&entry.to_json_line());
            log.push('\n');
        }
        write_text(path, &log)?;
    }

    let pooled: (usize, usize) =
        cdp_epochs.iter().fold((0, 0), |(k, n), e| (k + e.k, n + e.n));
    let pooled_cdp = if pooled.1 > 0 {
        Some(CdpTally::from_counts(pooled.0, pooled.1)?)
    } else {
        None
    };

    Ok(ExperimentOutcome { records, cdp_epochs, pooled_cdp, checkpoint_paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ArchitectureConfig, OptimizerConfig, SolverConfig};
    use crate::net::Head;
    use crate::qubo::SaParams;

    fn tiny_blobs_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Blobs,
            architecture: ArchitectureConfig {
                dims: vec![3, 1],
                head: Head::SigmoidBce,
                flavor: FlavorConfig::Mlp,
            },
            optimizer: OptimizerConfig::QpSbgd {
                alpha: Some(0.05),
                solver: SolverConfig::Exhaustive,
            },
            batch_size: 16,
            iterations: 6,
            eval_every: 2,
            seeds: vec![0, 1],
            metrics_path: dir.join("metrics.csv"),
            checkpoint_dir: None,
            cdp_log_path: None,
            step_log_path: None,
        }
    }

    fn read(path: &Path) -> String {
        fs::read_to_string(path).unwrap()
    }

    #[test]
    fn blobs_run_emits_expected_records() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_blobs_config(dir.path());
        let outcome = run_experiment(&cfg).unwrap();

        // Epochs 0..=3 per seed; blobs has no test split.
        assert_eq!(outcome.records.len(), 2 * 4);
        for record in &outcome.records {
            assert_eq!(record.split, Split::Train);
            assert!(record.loss.is_finite());
            assert!((0.0..=1.0).contains(&record.accuracy));
        }
        let epochs: Vec<u64> =
            outcome.records.iter().filter(|r| r.seed == 0).map(|r| r.epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2, 3]);

        let text = read(&cfg.metrics_path);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 1 + outcome.records.len());
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 5, "bad row {line}");
        }
    }

    #[test]
    fn identical_configs_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut first = tiny_blobs_config(dir.path());
        first.metrics_path = dir.path().join("a.csv");
        let mut second = tiny_blobs_config(dir.path());
        second.metrics_path = dir.path().join("b.csv");

        run_experiment(&first).unwrap();
        run_experiment(&second).unwrap();
        assert_eq!(read(&first.metrics_path), read(&second.metrics_path));
    }

    #[test]
    fn zero_iterations_evaluate_only_the_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_blobs_config(dir.path());
        cfg.iterations = 0;
        cfg.seeds = vec![7];
        let outcome = run_experiment(&cfg).unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].epoch, 0);
    }

    #[test]
    fn baseline_optimizers_train_without_reports() {
        let dir = tempfile::tempdir().unwrap();
        for optimizer in [
            OptimizerConfig::BcSgd { alpha: None },
            OptimizerConfig::BcSignSgd { alpha: None },
            OptimizerConfig::ProxQuant { alpha: None, lambda_slope: None },
        ] {
            let mut cfg = tiny_blobs_config(dir.path());
            cfg.metrics_path = dir.path().join(format!("{}.csv", optimizer.name()));
            cfg.optimizer = optimizer;
            cfg.iterations = 3;
            cfg.seeds = vec![0];
            let outcome = run_experiment(&cfg).unwrap();
            assert!(outcome.pooled_cdp.is_none());
            assert!(outcome.checkpoint_paths.is_empty());
            assert!(outcome.records.iter().all(|r| r.loss.is_finite()));
        }
    }

    #[test]
    fn karate_gcn_run_covers_both_splits_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            dataset: DatasetConfig::Karate,
            architecture: ArchitectureConfig {
                dims: vec![6, 4],
                head: Head::LogSoftmaxNll,
                flavor: FlavorConfig::Gcn,
            },
            optimizer: OptimizerConfig::QpSbgd {
                alpha: Some(0.05),
                solver: SolverConfig::Exhaustive,
            },
            batch_size: 10,
            iterations: 3,
            eval_every: 1,
            seeds: vec![0],
            metrics_path: dir.path().join("karate.csv"),
            checkpoint_dir: Some(dir.path().join("ckpt")),
            cdp_log_path: None,
            step_log_path: Some(dir.path().join("steps.jsonl")),
        };
        let outcome = run_experiment(&cfg).unwrap();

        // Epochs 0..=3, each with a train and a test record.
        assert_eq!(outcome.records.len(), 4 * 2);
        assert!(outcome.records.iter().any(|r| r.split == Split::Test));

        assert_eq!(outcome.checkpoint_paths.len(), 1);
        let json = read(&outcome.checkpoint_paths[0]);
        let normalized = normalize_adjacency(&karate::karate_club(0).unwrap().adjacency).unwrap();
        let restored = BinaryNetwork::from_checkpoint_json(&json, Some(normalized)).unwrap();
        assert_eq!(restored.in_dim(), 6);
        assert_eq!(restored.out_dim(), 4);

        // One report entry per (iteration, column) for the 6->4 layer.
        let steps = read(cfg.step_log_path.as_ref().unwrap());
        assert_eq!(steps.lines().count(), 3 * 4);
        for line in steps.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(value["qubo_n"], 6);
        }
    }

    #[test]
    fn cdp_instrument_logs_and_pools() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_blobs_config(dir.path());
        cfg.cdp_log_path = Some(dir.path().join("cdp.csv"));
        cfg.iterations = 2;
        cfg.eval_every = 1;
        cfg.seeds = vec![0];
        let outcome = run_experiment(&cfg).unwrap();

        let pooled = outcome.pooled_cdp.expect("instrument saw usable coordinates");
        assert!(pooled.n > 0);
        assert_eq!(
            pooled.n,
            outcome.cdp_epochs.iter().map(|e| e.n).sum::<usize>()
        );

        let text = read(cfg.cdp_log_path.as_ref().unwrap());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CDP_HEADER);
        assert_eq!(lines.len(), 1 + outcome.cdp_epochs.len());
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 5, "bad row {line}");
        }
    }

    #[test]
    fn mnist_sa_run_trains_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let (images_path, labels_path) =
            mnist::synthesize_mnist(dir.path(), 5, 1800).unwrap();
        let cfg = ExperimentConfig {
            dataset: DatasetConfig::Mnist {
                images_path,
                labels_path,
                digit_pair: (1, 7),
            },
            architecture: ArchitectureConfig {
                dims: vec![16, 2],
                head: Head::LogSoftmaxNll,
                flavor: FlavorConfig::Mlp,
            },
            optimizer: OptimizerConfig::QpSbgd {
                alpha: Some(0.05),
                solver: SolverConfig::Sa {
                    params: SaParams { sweeps: 30, restarts: 2, ..SaParams::default() },
                },
            },
            batch_size: 10,
            iterations: 2,
            eval_every: 1,
            seeds: vec![0],
            metrics_path: dir.path().join("mnist.csv"),
            checkpoint_dir: None,
            cdp_log_path: None,
            step_log_path: None,
        };
        let outcome = run_experiment(&cfg).unwrap();
        // Epochs 0..=2, train and test each.
        assert_eq!(outcome.records.len(), 3 * 2);
        assert!(outcome
            .records
            .iter()
            .all(|r| r.loss.is_finite() && (0.0..=1.0).contains(&r.accuracy)));
    }

    #[test]
    fn invalid_config_fails_before_training() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_blobs_config(dir.path());
        cfg.seeds.clear();
        assert!(matches!(run_experiment(&cfg), Err(Error::Config { .. })));
        assert!(!cfg.metrics_path.exists());
    }
}
