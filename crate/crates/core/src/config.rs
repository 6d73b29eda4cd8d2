//! JSON experiment configuration: dataset choice, architecture,
//! optimizer and solver, run length, seeds, and output paths.
//! Validation inspects the whole document and reports every violation
//! at once rather than stopping at the first.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{adult, blobs, karate, mnist};
use crate::error::{Error, Result};
use crate::net::Head;
use crate::optim::{
    Optimizer, ALPHA_BC_SGD, ALPHA_BC_SIGNSGD, ALPHA_QPSBGD, ALPHA_QPSBGD_REMOTE,
    PROXQUANT_LAMBDA_SLOPE,
};
use crate::qubo::{ExhaustiveSolver, QuboSolver, SaParams, SaSolver};
use crate::remote::{RemoteSolver, SamplerEndpoint};

/// Which dataset a run trains on. File-backed datasets carry their
/// paths; the generated ones need only the run seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs,
    Adult {
        train_path: PathBuf,
        test_path: PathBuf,
        /// Keep only this many features, chosen uniformly per seed.
        #[serde(default)]
        feature_subset: Option<usize>,
    },
    Mnist {
        images_path: PathBuf,
        labels_path: PathBuf,
        digit_pair: (u8, u8),
    },
    Karate,
}

impl DatasetConfig {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetConfig::Blobs => "blobs",
            DatasetConfig::Adult { .. } => "adult",
            DatasetConfig::Mnist { .. } => "mnist",
            DatasetConfig::Karate => "karate",
        }
    }

    /// Feature dimension the first layer must accept.
    pub fn input_dim(&self) -> usize {
        match self {
            DatasetConfig::Blobs => blobs::BLOB_DIM,
            DatasetConfig::Adult { feature_subset, .. } => {
                feature_subset.unwrap_or(adult::ADULT_DIM)
            }
            DatasetConfig::Mnist { .. } => mnist::LINE_COUNT,
            DatasetConfig::Karate => karate::KARATE_FEATURE_DIM,
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            DatasetConfig::Karate => karate::KARATE_CLASSES,
            _ => 2,
        }
    }

    /// Training rows, known without loading anything.
    pub fn train_rows(&self) -> usize {
        match self {
            DatasetConfig::Blobs => 2 * blobs::BLOB_CLASS_SIZE,
            DatasetConfig::Adult { .. } => adult::ADULT_TRAIN_ROWS,
            DatasetConfig::Mnist { .. } => mnist::MNIST_TRAIN_ROWS,
            DatasetConfig::Karate => karate::KARATE_CLASSES * karate::KARATE_TRAIN_PER_CLASS,
        }
    }
}

/// Whether layers mix rows through a normalized graph adjacency. The
/// adjacency itself comes from the dataset at run time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlavorConfig {
    Mlp,
    Gcn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Layer widths from input to output, e.g. `[3, 1]`.
    pub dims: Vec<usize>,
    pub head: Head,
    pub flavor: FlavorConfig,
}

/// Which QUBO solver projection steps use.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    Exhaustive,
    Sa {
        #[serde(default)]
        params: SaParams,
    },
    Remote {
        endpoint: SamplerEndpoint,
    },
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Exhaustive => "exhaustive",
            SolverConfig::Sa { .. } => "sa",
            SolverConfig::Remote { .. } => "remote",
        }
    }

    pub fn build(&self) -> Box<dyn QuboSolver> {
        match self {
            SolverConfig::Exhaustive => Box::new(ExhaustiveSolver::default()),
            SolverConfig::Sa { params } => Box::new(SaSolver { params: params.clone() }),
            SolverConfig::Remote { endpoint } => {
                Box::new(RemoteSolver { endpoint: endpoint.clone() })
            }
        }
    }
}

/// Optimizer choice with optional overrides; an omitted `alpha` takes
/// the per-optimizer default rate. The `kind` tags match the names the
/// optimizers report at run time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum OptimizerConfig {
    #[serde(rename = "qpsbgd")]
    QpSbgd {
        #[serde(default)]
        alpha: Option<f64>,
        solver: SolverConfig,
    },
    #[serde(rename = "bc_sgd")]
    BcSgd {
        #[serde(default)]
        alpha: Option<f64>,
    },
    #[serde(rename = "bc_signsgd")]
    BcSignSgd {
        #[serde(default)]
        alpha: Option<f64>,
    },
    #[serde(rename = "proxquant")]
    ProxQuant {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        lambda_slope: Option<f64>,
    },
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::QpSbgd { .. } => "qpsbgd",
            OptimizerConfig::BcSgd { .. } => "bc_sgd",
            OptimizerConfig::BcSignSgd { .. } => "bc_signsgd",
            OptimizerConfig::ProxQuant { .. } => "proxquant",
        }
    }

    pub fn is_projection(&self) -> bool {
        matches!(self, OptimizerConfig::QpSbgd { .. })
    }

    /// The solver the run will use; baselines never consult it, so they
    /// get the exhaustive default.
    pub fn solver(&self) -> SolverConfig {
        match self {
            OptimizerConfig::QpSbgd { solver, .. } => solver.clone(),
            _ => SolverConfig::Exhaustive,
        }
    }

    fn given_alpha(&self) -> Option<f64> {
        match self {
            OptimizerConfig::QpSbgd { alpha, .. }
            | OptimizerConfig::BcSgd { alpha }
            | OptimizerConfig::BcSignSgd { alpha }
            | OptimizerConfig::ProxQuant { alpha, .. } => *alpha,
        }
    }

    /// Resolves to a concrete optimizer, filling default rates: the
    /// projection uses its remote-tuned rate when the solver is remote,
    /// and ProxQuant's latent updates default to the BC-SGD rate.
    pub fn resolve(&self) -> Optimizer {
        match self {
            OptimizerConfig::QpSbgd { alpha, solver } => {
                let default = if matches!(solver, SolverConfig::Remote { .. }) {
                    ALPHA_QPSBGD_REMOTE
                } else {
                    ALPHA_QPSBGD
                };
                Optimizer::QpSbgd { alpha: alpha.unwrap_or(default) }
            }
            OptimizerConfig::BcSgd { alpha } => {
                Optimizer::BcSgd { alpha: alpha.unwrap_or(ALPHA_BC_SGD) }
            }
            OptimizerConfig::BcSignSgd { alpha } => {
                Optimizer::BcSignSgd { alpha: alpha.unwrap_or(ALPHA_BC_SIGNSGD) }
            }
            OptimizerConfig::ProxQuant { alpha, lambda_slope } => Optimizer::ProxQuant {
                alpha: alpha.unwrap_or(ALPHA_BC_SGD),
                lambda_slope: lambda_slope.unwrap_or(PROXQUANT_LAMBDA_SLOPE),
            },
        }
    }
}

fn default_eval_every() -> u64 {
    1
}

/// One training run: everything needed to reproduce its metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Total optimizer iterations per seed.
    pub iterations: u64,
    /// Iterations between evaluations; each evaluation point is one
    /// metrics epoch. Defaults to every iteration.
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    pub seeds: Vec<u64>,
    /// Metrics CSV destination.
    pub metrics_path: PathBuf,
    /// When set, a final checkpoint per seed lands here.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    /// When set, per-epoch sign-agreement tallies land here as CSV;
    /// needs the projection optimizer.
    #[serde(default)]
    pub cdp_log_path: Option<PathBuf>,
    /// When set, projection step reports append here as JSON lines.
    #[serde(default)]
    pub step_log_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Reads and parses a config file. Validation is separate so
    /// command-line overrides can apply in between.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if self.batch_size == 0 {
            violations.push("batch_size must be at least 1".to_owned());
        } else if self.batch_size > self.dataset.train_rows() {
            violations.push(format!(
                "batch_size {} exceeds the {} training rows of {}",
                self.batch_size,
                self.dataset.train_rows(),
                self.dataset.name()
            ));
        }
        if self.eval_every == 0 {
            violations.push("eval_every must be at least 1".to_owned());
        }
        if self.seeds.is_empty() {
            violations.push("seeds must not be empty".to_owned());
        }
        if self.metrics_path.as_os_str().is_empty() {
            violations.push("metrics_path must not be empty".to_owned());
        }

        let dims = &self.architecture.dims;
        if dims.len() < 2 {
            violations.push(format!(
                "architecture.dims needs an input and an output width, got {dims:?}"
            ));
        } else {
            if dims.iter().any(|&d| d == 0) {
                violations.push("architecture.dims entries must be positive".to_owned());
            }
            if dims[0] != self.dataset.input_dim() {
                violations.push(format!(
                    "architecture.dims[0] = {} but {} has {} features",
                    dims[0],
                    self.dataset.name(),
                    self.dataset.input_dim()
                ));
            }
            let out = *dims.last().expect("checked len");
            let classes = self.dataset.class_count();
            match self.architecture.head {
                Head::SigmoidBce => {
                    if out != 1 {
                        violations.push(format!(
                            "sigmoid_bce head needs an output width of 1, got {out}"
                        ));
                    }
                    if classes != 2 {
                        violations.push(format!(
                            "sigmoid_bce head is binary but {} has {classes} classes",
                            self.dataset.name()
                        ));
                    }
                }
                Head::LogSoftmaxNll => {
                    if out != classes {
                        violations.push(format!(
                            "log_softmax_nll head needs output width {classes} for {}, got {out}",
                            self.dataset.name()
                        ));
                    }
                }
            }
        }
        if self.architecture.flavor == FlavorConfig::Gcn
            && !matches!(self.dataset, DatasetConfig::Karate)
        {
            violations.push(format!(
                "gcn flavor needs a graph dataset, got {}",
                self.dataset.name()
            ));
        }

        match &self.dataset {
            DatasetConfig::Adult { feature_subset: Some(k), .. } => {
                if *k == 0 || *k > adult::ADULT_DIM {
                    violations.push(format!(
                        "feature_subset must be between 1 and {}, got {k}",
                        adult::ADULT_DIM
                    ));
                }
            }
            DatasetConfig::Mnist { digit_pair: (a, b), .. } => {
                if a == b {
                    violations.push(format!("digit_pair needs two distinct digits, got {a}/{b}"));
                }
                for d in [a, b] {
                    if !mnist::SUPPORTED_DIGITS.contains(d) {
                        violations.push(format!(
                            "digit {d} is unsupported; the choices are {:?}",
                            mnist::SUPPORTED_DIGITS
                        ));
                    }
                }
            }
            _ => {}
        }

        if let Some(alpha) = self.optimizer.given_alpha() {
            if !(alpha > 0.0) || !alpha.is_finite() {
                violations.push(format!("alpha must be positive and finite, got {alpha}"));
            }
        }
        if let OptimizerConfig::ProxQuant { lambda_slope: Some(l), .. } = &self.optimizer {
            if !(*l >= 0.0) || !l.is_finite() {
                violations.push(format!("lambda_slope must be nonnegative, got {l}"));
            }
        }
        match self.optimizer.solver() {
            SolverConfig::Sa { params } => {
                if let Err(e) = params.validate() {
                    violations.push(format!("sa solver: {e}"));
                }
            }
            SolverConfig::Remote { endpoint } => {
                if let Err(e) = endpoint.validate() {
                    violations.push(format!("remote solver: {e}"));
                }
            }
            SolverConfig::Exhaustive => {}
        }

        if self.cdp_log_path.is_some() && !self.optimizer.is_projection() {
            violations.push(format!(
                "cdp_log_path needs the qpsbgd optimizer, got {}",
                self.optimizer.name()
            ));
        }
        if self.step_log_path.is_some() && !self.optimizer.is_projection() {
            violations.push(format!(
                "step_log_path needs the qpsbgd optimizer, got {}",
                self.optimizer.name()
            ));
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { violations })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Blobs,
            architecture: ArchitectureConfig {
                dims: vec![3, 1],
                head: Head::SigmoidBce,
                flavor: FlavorConfig::Mlp,
            },
            optimizer: OptimizerConfig::QpSbgd { alpha: None, solver: SolverConfig::Exhaustive },
            batch_size: 16,
            iterations: 10,
            eval_every: 1,
            seeds: vec![0, 1],
            metrics_path: PathBuf::from("metrics.csv"),
            checkpoint_dir: None,
            cdp_log_path: None,
            step_log_path: None,
        }
    }

    #[test]
    fn json_round_trip_preserves_the_config() {
        let cfg = blobs_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }

    #[test]
    fn omitted_fields_take_defaults() {
        let text = r#"{
            "dataset": {"kind": "blobs"},
            "architecture": {"dims": [3, 1], "head": "sigmoid_bce", "flavor": "mlp"},
            "optimizer": {"kind": "qpsbgd", "solver": {"kind": "sa"}},
            "batch_size": 8,
            "iterations": 5,
            "seeds": [0],
            "metrics_path": "m.csv"
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.eval_every, 1);
        assert!(cfg.checkpoint_dir.is_none());
        match cfg.optimizer.resolve() {
            Optimizer::QpSbgd { alpha } => assert_eq!(alpha, ALPHA_QPSBGD),
            other => panic!("unexpected optimizer {other:?}"),
        }
        match cfg.optimizer.solver() {
            SolverConfig::Sa { params } => assert_eq!(params.sweeps, SaParams::default().sweeps),
            other => panic!("unexpected solver {other:?}"),
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn remote_solver_lowers_the_default_rate() {
        let cfg = OptimizerConfig::QpSbgd {
            alpha: None,
            solver: SolverConfig::Remote {
                endpoint: SamplerEndpoint {
                    base_url: "http://localhost:1".into(),
                    auth_token: None,
                    num_reads: 4,
                    timeout_ms: 100,
                },
            },
        };
        match cfg.resolve() {
            Optimizer::QpSbgd { alpha } => assert_eq!(alpha, ALPHA_QPSBGD_REMOTE),
            other => panic!("unexpected optimizer {other:?}"),
        }
    }

    #[test]
    fn validation_collects_every_violation() {
        let mut cfg = blobs_config();
        cfg.batch_size = 0;
        cfg.seeds.clear();
        cfg.architecture.dims = vec![4, 2];
        cfg.architecture.flavor = FlavorConfig::Gcn;
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.len() >= 4, "got {violations:?}");
                assert!(violations.iter().any(|v| v.contains("batch_size")));
                assert!(violations.iter().any(|v| v.contains("seeds")));
                assert!(violations.iter().any(|v| v.contains("dims[0]")));
                assert!(violations.iter().any(|v| v.contains("gcn")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn oversized_batch_is_reported() {
        let mut cfg = blobs_config();
        cfg.batch_size = 81;
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.iter().any(|v| v.contains("exceeds the 80 training rows")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn head_and_class_mismatches_are_reported() {
        let mut cfg = blobs_config();
        cfg.architecture.dims = vec![3, 2];
        assert!(cfg.validate().is_err(), "sigmoid head must demand width 1");

        let mut cfg = blobs_config();
        cfg.dataset = DatasetConfig::Karate;
        cfg.architecture.dims = vec![6, 1];
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.iter().any(|v| v.contains("4 classes")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn mnist_digit_pair_is_checked() {
        let mut cfg = blobs_config();
        cfg.dataset = DatasetConfig::Mnist {
            images_path: PathBuf::from("img"),
            labels_path: PathBuf::from("lab"),
            digit_pair: (3, 3),
        };
        cfg.architecture.dims = vec![16, 2];
        cfg.architecture.head = Head::LogSoftmaxNll;
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.iter().any(|v| v.contains("distinct")));
                assert!(violations.iter().any(|v| v.contains("unsupported")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn cdp_logging_requires_the_projection() {
        let mut cfg = blobs_config();
        cfg.optimizer = OptimizerConfig::BcSgd { alpha: None };
        cfg.cdp_log_path = Some(PathBuf::from("cdp.csv"));
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.iter().any(|v| v.contains("cdp_log_path")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "dataset": {"kind": "blobs"},
            "architecture": {"dims": [3, 1], "head": "sigmoid_bce", "flavor": "mlp"},
            "optimizer": {"kind": "bc_sgd"},
            "batch_size": 8,
            "iterations": 5,
            "seeds": [0],
            "metrics_path": "m.csv",
            "warp_factor": 9
        }"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_solver_settings_surface_in_validation() {
        let mut cfg = blobs_config();
        cfg.optimizer = OptimizerConfig::QpSbgd {
            alpha: Some(0.05),
            solver: SolverConfig::Sa {
                params: SaParams { sweeps: 0, ..SaParams::default() },
            },
        };
        match cfg.validate() {
            Err(Error::Config { violations }) => {
                assert!(violations.iter().any(|v| v.contains("sweeps")));
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }
}
