//! Command-line front end: check, train, eval, verify and sweep.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, cap_dataset, mnist_task, DataError};
use crate::mixer::{validate_architecture, ValidationReport};
use crate::model::arch::{label, ArchError, ArchitectureSpec};
use crate::model::{
    argmax, circuit_inference, train, Checkpoint, ModelError, Network, ParameterStore, Samples,
    TrainConfig, TrainReport,
};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("architecture is not fully feasible:\n{0}")]
    Infeasible(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("sweep stopped at r={r}: {source}; partial results in {partial}")]
    Sweep {
        r: usize,
        partial: PathBuf,
        source: Box<CliError>,
    },
}

impl CliError {
    /// 2 for unreadable or malformed input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Arch(_) | CliError::Usage(_) | CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfmix", version, about = "Mixed quantum neural network simulator and trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every junction and report feasibility (exit 0 iff feasible).
    Check {
        #[arg(long)]
        arch: PathBuf,
        /// Where to write the JSON report (default: next to the file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an architecture and write checkpoint, metrics and manifest.
    Train {
        #[arg(long)]
        arch: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs/eval")]
        out: PathBuf,
    },
    /// Compare the factorized model with whole-circuit simulation.
    Verify {
        #[arg(long, required_unless_present = "demo_path6")]
        arch: Option<PathBuf>,
        /// Use trained parameters instead of a seeded initialisation.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run the built-in V(amplitude) → product-P counterexample instead.
        #[arg(long)]
        demo_path6: bool,
        #[arg(long, default_value = "runs/verify")]
        out: PathBuf,
    },
    /// Train once per V repetition count and tabulate test accuracy.
    Sweep {
        #[arg(long)]
        arch: PathBuf,
        #[arg(long, default_value_t = 1)]
        r_min: usize,
        #[arg(long, default_value_t = 3)]
        r_max: usize,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// `mnist` (IDX files in $QFMIX_DATA or ./data) or `cap` (synthetic, 8 inputs).
    #[arg(long, default_value = "mnist")]
    pub dataset: String,
    /// Comma-separated digits.
    #[arg(long, default_value = "3,6", value_delimiter = ',')]
    pub classes: Vec<u8>,
    #[arg(long, default_value_t = 4)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 10.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            momentum: self.momentum,
            temperature: self.temperature,
            seed: self.seed,
        }
    }
}

/// Train and test samples for a dataset selection.
pub fn load_task(sel: &DataArgs, seed: u64) -> Result<(Samples, Samples), CliError> {
    match sel.dataset.as_str() {
        "mnist" => Ok(mnist_task(&data::data_dir(), &sel.classes, sel.resolution)?),
        "cap" => Ok((cap_dataset(600, seed), cap_dataset(600, seed.wrapping_add(1)))),
        other => Err(CliError::Usage(format!("unknown dataset '{other}'"))),
    }
}

pub fn read_arch(path: &Path) -> Result<ArchitectureSpec, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(ArchitectureSpec::parse(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    csv_schema_version: u32,
    code_version: &'static str,
    seed: u64,
    config: C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, seed: u64, config: C) -> Result<(), CliError> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            command,
            csv_schema_version: CSV_SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
        },
    )
}

/// Validates and writes the JSON report; returns the report and exit code.
pub fn cmd_check(arch_path: &Path, out: Option<&Path>) -> Result<(ValidationReport, i32), CliError> {
    let arch = read_arch(arch_path)?;
    let report = validate_architecture(&arch)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| arch_path.with_extension("report.json"));
    write_json(&out, &report)?;
    Ok((report.clone(), if report.pass { 0 } else { 1 }))
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub architecture: String,
    pub dataset: String,
    pub classes: String,
    pub resolution: usize,
    pub test_accuracy: f64,
}

pub struct TrainOutcome {
    pub params: ParameterStore,
    pub report: TrainReport,
    pub test_accuracy: f64,
}

/// Refuses infeasible architectures, then trains from a seeded init.
pub fn fit(
    arch: &ArchitectureSpec,
    train_set: &Samples,
    test_set: &Samples,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, CliError> {
    let report = validate_architecture(arch)?;
    if !report.pass {
        return Err(CliError::Infeasible(report.to_string()));
    }
    let net = Network::new(arch)?;
    let mut params = net.init_params(cfg.seed);
    let report = train(&net, &mut params, train_set, Some(test_set), cfg)?;
    let test_accuracy = report.final_test_acc().unwrap_or(f64::NAN);
    Ok(TrainOutcome {
        params,
        report,
        test_accuracy,
    })
}

fn row(arch: &ArchitectureSpec, sel: &DataArgs, acc: f64) -> ResultRow {
    let (classes, resolution) = match sel.dataset.as_str() {
        "cap" => ("0,1".to_string(), 0),
        _ => (
            sel.classes.iter().map(u8::to_string).collect::<Vec<_>>().join(","),
            sel.resolution,
        ),
    };
    ResultRow {
        architecture: label(arch),
        dataset: sel.dataset.clone(),
        classes,
        resolution,
        test_accuracy: 100.0 * acc,
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn cmd_train(arch_path: &Path, sel: &DataArgs, hyper: &HyperArgs, out: &Path) -> Result<ResultRow, CliError> {
    let arch = read_arch(arch_path)?;
    let (tr, te) = load_task(sel, hyper.seed)?;
    ensure_dir(out)?;
    write_manifest(out, "train", hyper.seed, (sel, hyper, arch.to_string()))?;
    let fitted = fit(&arch, &tr, &te, &hyper.config())?;
    write_json(&out.join("checkpoint.json"), &Checkpoint::new(&arch, &fitted.params))?;
    write_rows(&out.join("metrics.csv"), &fitted.report.epochs)?;
    let r = row(&arch, sel, fitted.test_accuracy);
    write_rows(&out.join("result.csv"), std::slice::from_ref(&r))?;
    Ok(r)
}

pub fn cmd_eval(checkpoint: &Path, sel: &DataArgs, seed: u64, out: &Path) -> Result<ResultRow, CliError> {
    let text = fs::read_to_string(checkpoint).map_err(io_err(checkpoint))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.version != Checkpoint::VERSION {
        return Err(CliError::Usage(format!("unsupported checkpoint version {}", ck.version)));
    }
    let arch = ck.architecture()?;
    let (_, te) = load_task(sel, seed)?;
    let net = Network::new(&arch)?;
    let acc = crate::model::accuracy(&net, &ck.params, &te)?;
    ensure_dir(out)?;
    write_manifest(out, "eval", seed, (sel, checkpoint))?;
    let r = row(&arch, sel, acc);
    write_rows(&out.join("result.csv"), std::slice::from_ref(&r))?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub sample: usize,
    pub max_abs_deviation: f64,
    pub argmax_agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifySummary {
    pub rows: Vec<VerifyRow>,
    pub max_deviation: f64,
    pub agreement: f64,
}

/// Random non-negative inputs, as pixel data would be.
pub fn random_inputs(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect())
        .collect()
}

pub fn verify(
    arch: &ArchitectureSpec,
    params: &ParameterStore,
    inputs: &[Vec<f64>],
) -> Result<VerifySummary, CliError> {
    let net = Network::new(arch)?;
    let mut rows = Vec::with_capacity(inputs.len());
    for (sample, x) in inputs.iter().enumerate() {
        let model = net.forward(params, x)?.output;
        let exact = circuit_inference(arch, params, x)?;
        let max_abs_deviation = model
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(VerifyRow {
            sample,
            max_abs_deviation,
            argmax_agrees: argmax(&model) == argmax(&exact),
        });
    }
    let max_deviation = rows.iter().map(|r| r.max_abs_deviation).fold(0.0, f64::max);
    let agreement = rows.iter().filter(|r| r.argmax_agrees).count() as f64 / rows.len().max(1) as f64;
    Ok(VerifySummary {
        rows,
        max_deviation,
        agreement,
    })
}

/// V on two qubits left in amplitude view, feeding a product P neuron.
pub fn path6_demo_arch() -> ArchitectureSpec {
    ArchitectureSpec::parse(
        "input_dim 4\nclasses 1\nlayer v width=2 view=amplitude\nlayer p width=1 gadget=product\n",
    )
    .expect("demo architecture parses")
}

/// Seeded parameters with N angles spread over [−π, π] so N layers matter.
pub fn random_params(net: &Network, seed: u64) -> ParameterStore {
    let mut p = net.init_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    for t in p.v_thetas.iter_mut().flatten().chain(p.n_thetas.iter_mut().flatten()) {
        *t = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    }
    p
}

pub fn cmd_verify(
    arch: Option<&Path>,
    checkpoint: Option<&Path>,
    samples: usize,
    seed: u64,
    demo_path6: bool,
    out: &Path,
) -> Result<VerifySummary, CliError> {
    let (arch, params) = if let Some(ck) = checkpoint {
        let text = fs::read_to_string(ck).map_err(io_err(ck))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        (ck.architecture()?, ck.params)
    } else {
        let arch = match (demo_path6, arch) {
            (true, _) => path6_demo_arch(),
            (false, Some(p)) => read_arch(p)?,
            (false, None) => return Err(CliError::Usage("--arch is required".into())),
        };
        let net = Network::new(&arch)?;
        let params = random_params(&net, seed);
        (arch, params)
    };
    let inputs = random_inputs(arch.input_dim, samples, seed);
    let summary = verify(&arch, &params, &inputs)?;
    ensure_dir(out)?;
    write_manifest(out, "verify", seed, (arch.to_string(), samples, demo_path6))?;
    write_rows(&out.join("verify.csv"), &summary.rows)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: usize,
    pub architecture: String,
    pub test_accuracy: f64,
    pub final_train_loss: f64,
}

/// Trains the template once per R with identical settings. Rows are written
/// after every run so a failure leaves the finished rows on disk.
pub fn sweep(
    arch: &ArchitectureSpec,
    rs: std::ops::RangeInclusive<usize>,
    train_set: &Samples,
    test_set: &Samples,
    cfg: &TrainConfig,
    csv_path: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    if rs.is_empty() {
        return Err(CliError::Usage("empty R range".into()));
    }
    let mut rows = Vec::new();
    for r in rs {
        let a = arch.with_v_repeat(r);
        let res = fit(&a, train_set, test_set, cfg).map(|f| SweepRow {
            r,
            architecture: label(&a),
            test_accuracy: 100.0 * f.test_accuracy,
            final_train_loss: f.report.epochs.last().map_or(f64::NAN, |e| e.train_loss),
        });
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                let partial = csv_path.map(Path::to_path_buf).unwrap_or_default();
                if let Some(p) = csv_path {
                    write_rows(p, &rows)?;
                }
                return Err(CliError::Sweep {
                    r,
                    partial,
                    source: Box::new(e),
                });
            }
        }
        if let Some(p) = csv_path {
            write_rows(p, &rows)?;
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(
    arch_path: &Path,
    r_min: usize,
    r_max: usize,
    sel: &DataArgs,
    hyper: &HyperArgs,
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let arch = read_arch(arch_path)?;
    let (tr, te) = load_task(sel, hyper.seed)?;
    ensure_dir(out)?;
    write_manifest(out, "sweep", hyper.seed, (sel, hyper, arch.to_string(), r_min, r_max))?;
    sweep(&arch, r_min..=r_max, &tr, &te, &hyper.config(), Some(&out.join("sweep.csv")))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res: Result<i32, CliError> = match cli.command {
        Command::Check { arch, out } => cmd_check(&arch, out.as_deref()).map(|(report, code)| {
            println!("{report}");
            code
        }),
        Command::Train {
            arch,
            data,
            hyper,
            out,
        } => cmd_train(&arch, &data, &hyper, &out).map(|r| {
            print_rows(std::slice::from_ref(&r));
            0
        }),
        Command::Eval {
            checkpoint,
            data,
            seed,
            out,
        } => cmd_eval(&checkpoint, &data, seed, &out).map(|r| {
            print_rows(std::slice::from_ref(&r));
            0
        }),
        Command::Verify {
            arch,
            checkpoint,
            samples,
            seed,
            demo_path6,
            out,
        } => cmd_verify(arch.as_deref(), checkpoint.as_deref(), samples, seed, demo_path6, &out).map(|s| {
            println!(
                "samples {} max deviation {:.3e} argmax agreement {:.1}%",
                s.rows.len(),
                s.max_deviation,
                100.0 * s.agreement
            );
            0
        }),
        Command::Sweep {
            arch,
            r_min,
            r_max,
            data,
            hyper,
            out,
        } => cmd_sweep(&arch, r_min, r_max, &data, &hyper, &out).map(|rows| {
            print_rows(&rows);
            0
        }),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_rows<T: Serialize>(rows: &[T]) {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        let _ = w.serialize(r);
    }
    let _ = w.flush();
}
