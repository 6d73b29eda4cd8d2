//! Command-line front end: config-driven training plus thin wrappers
//! around the QUBO solvers, the annealing-spectrum diagnostic, the
//! sign-agreement instrument, and the dataset loaders.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spingrad::config::{DatasetConfig, ExperimentConfig, OptimizerConfig, SolverConfig};
use spingrad::config::{ArchitectureConfig, FlavorConfig};
use spingrad::data::{adult, idx, karate::karate_club, mnist};
use spingrad::data::{adult::load_adult, blobs::make_blobs};
use spingrad::diagnostics::{spectral_gap, CdpTally};
use spingrad::experiment::{run_experiment, CDP_HEADER};
use spingrad::net::Head;
use spingrad::qubo::{parse_qubo_text, SaParams};
use spingrad::remote::SamplerEndpoint;

#[derive(Parser)]
#[command(
    name = "spingrad",
    about = "Binary network training via QUBO-projected gradients",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment described by a JSON config.
    Train(TrainArgs),
    /// Solve one QUBO from a text file and print the best state.
    SolveQubo(SolveQuboArgs),
    /// Tabulate the annealing spectrum of a QUBO as CSV.
    SpectralGap(SpectralGapArgs),
    /// Train on MNIST line features and report per-epoch sign
    /// agreement between projected and true gradients.
    CdpTest(CdpTestArgs),
    /// Dataset inspection.
    #[command(subcommand)]
    Datasets(DatasetsCommand),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverKind {
    Exhaustive,
    Sa,
    Remote,
}

/// Remote-sampler connection flags, meaningful with `--solver remote`.
#[derive(Args)]
struct RemoteArgs {
    /// Base URL of the remote sampler.
    #[arg(long)]
    endpoint_url: Option<String>,
    /// Bearer token sent with every request.
    #[arg(long)]
    auth_token: Option<String>,
    /// Reads requested per solve.
    #[arg(long, default_value_t = 32)]
    num_reads: u64,
    /// Request timeout in milliseconds.
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
}

impl RemoteArgs {
    fn solver_config(&self, kind: SolverKind) -> Result<SolverConfig> {
        Ok(match kind {
            SolverKind::Exhaustive => SolverConfig::Exhaustive,
            SolverKind::Sa => SolverConfig::Sa { params: SaParams::default() },
            SolverKind::Remote => {
                let Some(base_url) = self.endpoint_url.clone() else {
                    bail!("--endpoint-url is required with --solver remote");
                };
                SolverConfig::Remote {
                    endpoint: SamplerEndpoint {
                        base_url,
                        auth_token: self.auth_token.clone(),
                        num_reads: self.num_reads,
                        timeout_ms: self.timeout_ms,
                    },
                }
            }
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the projection solver.
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Args)]
struct SolveQuboArgs {
    /// QUBO text file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverKind::Exhaustive)]
    solver: SolverKind,
    /// Solver seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    remote: RemoteArgs,
}

#[derive(Args)]
struct SpectralGapArgs {
    /// QUBO text file.
    #[arg(long)]
    input: PathBuf,
    /// Number of schedule points.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Destination CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CdpTestArgs {
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Digit pair "a,b" drawn from 0, 1, 2, 7.
    #[arg(long, value_parser = parse_digit_pair, default_value = "1,7")]
    digit_pair: (u8, u8),
    #[arg(long, default_value_t = 30)]
    iterations: u64,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    eval_every: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annealer sweeps per restart.
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    /// Annealer restarts per solve.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Metrics CSV destination.
    #[arg(long, default_value = "cdp-metrics.csv")]
    metrics_out: PathBuf,
    /// Per-epoch tally CSV destination.
    #[arg(long, default_value = "cdp-log.csv")]
    log_out: PathBuf,
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Write one dataset as CSV with a header row.
    Dump(DumpArgs),
    /// Write seeded stand-in files in the real on-disk formats
    /// (svmlight for adult, IDX for mnist) for environments without
    /// the original downloads.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthName {
    Adult,
    Mnist,
}

#[derive(Args)]
struct SynthArgs {
    /// Which file pair to write.
    #[arg(long, value_enum)]
    name: SynthName,
    /// Destination directory, created if missing.
    #[arg(long)]
    dir: PathBuf,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Images drawn per digit before the train/test split (mnist).
    #[arg(long, default_value_t = 1800)]
    per_digit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetName {
    Blobs,
    Adult,
    Mnist,
    Karate,
}

#[derive(Args)]
struct DumpArgs {
    /// Which dataset to materialize.
    #[arg(long, value_enum)]
    name: DatasetName,
    /// Split and subset seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// svmlight training file (adult).
    #[arg(long, required_if_eq("name", "adult"))]
    train_path: Option<PathBuf>,
    /// svmlight test file (adult).
    #[arg(long, required_if_eq("name", "adult"))]
    test_path: Option<PathBuf>,
    /// Keep only this many adult features, seeded choice.
    #[arg(long)]
    feature_subset: Option<usize>,
    /// IDX image file (mnist).
    #[arg(long, required_if_eq("name", "mnist"))]
    images: Option<PathBuf>,
    /// IDX label file (mnist).
    #[arg(long, required_if_eq("name", "mnist"))]
    labels: Option<PathBuf>,
    /// Digit pair "a,b" (mnist).
    #[arg(long, value_parser = parse_digit_pair, default_value = "1,7")]
    digit_pair: (u8, u8),
    /// Destination CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_digit_pair(text: &str) -> std::result::Result<(u8, u8), String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"a,b\", got \"{text}\""));
    }
    let a = parts[0].trim().parse().map_err(|e| format!("bad digit \"{}\": {e}", parts[0]))?;
    let b = parts[1].trim().parse().map_err(|e| format!("bad digit \"{}\": {e}", parts[1]))?;
    Ok((a, b))
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(kind) = args.solver {
        match &mut cfg.optimizer {
            OptimizerConfig::QpSbgd { solver, .. } => {
                *solver = args.remote.solver_config(kind)?;
            }
            other => bail!(
                "--solver only applies to the qpsbgd optimizer; the config uses {}",
                other.name()
            ),
        }
    }
    cfg.validate()?;

    eprintln!(
        "training {} with {} ({} solver), {} seed(s)",
        cfg.dataset.name(),
        cfg.optimizer.name(),
        cfg.optimizer.solver().name(),
        cfg.seeds.len()
    );
    let outcome = run_experiment(&cfg)?;
    println!(
        "wrote {} metrics records to {}",
        outcome.records.len(),
        cfg.metrics_path.display()
    );
    for seed in &cfg.seeds {
        let last = outcome
            .records
            .iter()
            .filter(|r| r.seed == *seed)
            .map(|r| r.epoch)
            .max();
        if let Some(epoch) = last {
            for r in outcome
                .records
                .iter()
                .filter(|r| r.seed == *seed && r.epoch == epoch)
            {
                println!(
                    "seed {seed}: final {} loss {:.6}, accuracy {:.4}",
                    r.split, r.loss, r.accuracy
                );
            }
        }
    }
    for path in &outcome.checkpoint_paths {
        println!("checkpoint: {}", path.display());
    }
    if let Some(tally) = &outcome.pooled_cdp {
        println!(
            "pooled sign agreement: k = {}, n = {}, Z = {:.3}",
            tally.k, tally.n, tally.z
        );
    }
    Ok(())
}

fn solve_qubo(args: SolveQuboArgs) -> Result<()> {
    let problem = parse_qubo_text(&read_input(&args.input)?)?;
    let solver = args.remote.solver_config(args.solver)?.build();
    let result = solver.solve(&problem, args.seed)?;
    let spins: Vec<&str> = result
        .best
        .spins()
        .iter()
        .map(|&s| if s > 0 { "+1" } else { "-1" })
        .collect();
    println!("best: {}", spins.join(" "));
    println!("energy: {}", result.best_energy);
    println!("reads: {}", result.reads);
    Ok(())
}

fn spectral_gap_cmd(args: SpectralGapArgs) -> Result<()> {
    let problem = parse_qubo_text(&read_input(&args.input)?)?;
    let spectrum = spectral_gap(&problem, args.grid)?;
    let levels = spectrum.levels[0].len().min(16);
    let mut csv = String::from("s,gap");
    for i in 0..levels {
        csv.push_str(&format!(",e{i}"));
    }
    csv.push('\n');
    for (point, evs) in spectrum.grid.iter().zip(&spectrum.levels) {
        csv.push_str(&format!("{point},{}", evs[1] - evs[0]));
        for value in &evs[..levels] {
            csv.push_str(&format!(",{value}"));
        }
        csv.push('\n');
    }
    emit(args.out.as_deref(), &csv)?;
    eprintln!(
        "min gap {} at s = {}",
        spectrum.min_gap, spectrum.argmin_s
    );
    Ok(())
}

fn cdp_test(args: CdpTestArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetConfig::Mnist {
            images_path: args.images,
            labels_path: args.labels,
            digit_pair: args.digit_pair,
        },
        architecture: ArchitectureConfig {
            dims: vec![mnist::LINE_COUNT, 2],
            head: Head::LogSoftmaxNll,
            flavor: FlavorConfig::Mlp,
        },
        optimizer: OptimizerConfig::QpSbgd {
            alpha: None,
            solver: SolverConfig::Sa {
                params: SaParams {
                    sweeps: args.sweeps,
                    restarts: args.restarts,
                    ..SaParams::default()
                },
            },
        },
        batch_size: args.batch_size,
        iterations: args.iterations,
        eval_every: args.eval_every,
        seeds: vec![args.seed],
        metrics_path: args.metrics_out,
        checkpoint_dir: None,
        cdp_log_path: Some(args.log_out),
        step_log_path: None,
    };
    cfg.validate()?;
    let outcome = run_experiment(&cfg)?;

    println!("{CDP_HEADER}");
    for e in &outcome.cdp_epochs {
        let z = CdpTally::from_counts(e.k, e.n)?.z;
        println!("{},{},{},{},{}", e.seed, e.epoch, e.k, e.n, z);
    }
    match &outcome.pooled_cdp {
        Some(tally) => eprintln!(
            "pooled: k = {}, n = {}, Z = {:.3}",
            tally.k, tally.n, tally.z
        ),
        None => eprintln!("pooled: no usable coordinates"),
    }
    Ok(())
}

fn dump(args: DumpArgs) -> Result<()> {
    let (x, y, train, test) = match args.name {
        DatasetName::Blobs => {
            let d = make_blobs(args.seed)?;
            (d.x, d.y, d.train, d.test)
        }
        DatasetName::Adult => {
            let d = load_adult(
                args.train_path.as_deref().expect("required by clap"),
                args.test_path.as_deref().expect("required by clap"),
                args.feature_subset,
                args.seed,
            )?;
            (d.x, d.y, d.train, d.test)
        }
        DatasetName::Mnist => {
            let images = idx::read_idx_images(args.images.as_deref().expect("required by clap"))?;
            let labels = idx::read_idx_labels(args.labels.as_deref().expect("required by clap"))?;
            let d = mnist::mnist_line_features(&images, &labels, args.digit_pair, args.seed)?;
            (d.x, d.y, d.train, d.test)
        }
        DatasetName::Karate => {
            let d = karate_club(args.seed)?;
            (d.x, d.y, d.train, d.test)
        }
    };

    let mut split = vec!["unused"; x.nrows()];
    for &r in &train {
        split[r] = "train";
    }
    for &r in &test {
        split[r] = "test";
    }
    let mut csv = String::from("row,split,label");
    for j in 0..x.ncols() {
        csv.push_str(&format!(",f{j}"));
    }
    csv.push('\n');
    for r in 0..x.nrows() {
        csv.push_str(&format!("{r},{},{}", split[r], y[r]));
        for j in 0..x.ncols() {
            csv.push_str(&format!(",{}", x[(r, j)]));
        }
        csv.push('\n');
    }
    emit(args.out.as_deref(), &csv)
}

fn synth(args: SynthArgs) -> Result<()> {
    fs::create_dir_all(&args.dir)
        .with_context(|| format!("creating {}", args.dir.display()))?;
    let (a, b) = match args.name {
        SynthName::Adult => adult::synthesize_adult(&args.dir, args.seed)?,
        SynthName::Mnist => mnist::synthesize_mnist(&args.dir, args.seed, args.per_digit)?,
    };
    println!("wrote {}", a.display());
    println!("wrote {}", b.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::SolveQubo(args) => solve_qubo(args),
        Command::SpectralGap(args) => spectral_gap_cmd(args),
        Command::CdpTest(args) => cdp_test(args),
        Command::Datasets(DatasetsCommand::Dump(args)) => dump(args),
        Command::Datasets(DatasetsCommand::Synth(args)) => synth(args),
    }
}
