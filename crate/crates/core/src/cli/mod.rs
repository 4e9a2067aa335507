//! Command-line front end: `fit`, `estimate-bound` and `sample`.
//!
//! A `fit` run writes `fit.json`, `trace.csv`, `windows.csv`,
//! `posterior_global.csv`, `posterior_latent.csv`, `bound_estimate.json` and
//! `timing.json` into the output directory. Exit codes: 0 success, 2 config
//! error, 3 data error, 4 fit diverged.

pub mod config;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use config::{Columns, ModelKind, RunConfig};

use crate::error::{Error, Result};
use crate::family::VariationalParams;
use crate::models::{GlmmData, GlmmFamily, Model, ModelDims, SvmData};
use crate::optimizer::{estimate_bound, fit, BoundEstimate, FitReport, Init, Method};
use crate::verify::Welford;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// A loaded model of any supported kind.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Glmm(GlmmData),
    Svm(SvmData),
}

impl LoadedModel {
    pub fn load(config: &RunConfig) -> Result<Self> {
        let path = &config.data;
        Ok(match config.model {
            ModelKind::GlmmPoisson => {
                LoadedModel::Glmm(io::load_glmm_csv(path, &config.columns, GlmmFamily::Poisson)?)
            }
            ModelKind::GlmmBernoulli => {
                LoadedModel::Glmm(io::load_glmm_csv(path, &config.columns, GlmmFamily::Bernoulli)?)
            }
            ModelKind::Svm => LoadedModel::Svm(io::load_svm_csv(path, &config.columns)?),
        })
    }

    fn inner(&self) -> &dyn Model {
        match self {
            LoadedModel::Glmm(m) => m,
            LoadedModel::Svm(m) => m,
        }
    }
}

impl Model for LoadedModel {
    fn dims(&self) -> ModelDims {
        self.inner().dims()
    }
    fn log_joint(&self, theta: &[f64]) -> Result<f64> {
        self.inner().log_joint(theta)
    }
    fn grad_log_joint(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.inner().grad_log_joint(theta)
    }
    fn log_joint_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.inner().log_joint_and_grad(theta)
    }
    fn global_labels(&self) -> Vec<String> {
        self.inner().global_labels()
    }
    fn local_labels(&self) -> Vec<String> {
        self.inner().local_labels()
    }
}

/// Contents of `fit.json`: the run configuration and the fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub status: String,
    pub config: RunConfig,
    pub report: FitReport,
}

impl FitFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
}

/// Marginal means and standard deviations of draws from `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub global: Vec<ParamSummary>,
    pub latent: Vec<ParamSummary>,
    /// Draws of θ, kept when requested.
    pub samples: Option<Vec<Vec<f64>>>,
}

const POSTERIOR_STREAM: u64 = 1 << 33;

/// Ancestral sampling: `θG ~ q(θG)` then `θL ~ q(θL | θG)`.
pub fn sample_posterior<M: Model + ?Sized>(
    lambda: &VariationalParams,
    model: &M,
    count: usize,
    seed: u64,
    keep_samples: bool,
) -> Result<PosteriorSummary> {
    let dims = model.dims();
    if lambda.dims() != dims {
        return Err(Error::invalid("λ does not match the model"));
    }
    if count < 2 {
        return Err(Error::invalid("at least two posterior draws are required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POSTERIOR_STREAM);
    let dim = dims.theta_dim();
    let mut acc = vec![Welford::default(); dim];
    let mut kept = keep_samples.then(|| Vec::with_capacity(count));
    for _ in 0..count {
        let s: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let theta = lambda.reparam(&s)?.theta();
        for (a, v) in acc.iter_mut().zip(&theta) {
            a.push(*v);
        }
        if let Some(k) = kept.as_mut() {
            k.push(theta);
        }
    }
    let summarize = |labels: Vec<String>, stats: &[Welford]| {
        labels
            .into_iter()
            .zip(stats)
            .map(|(label, s)| ParamSummary { label, mean: s.mean, sd: s.sd() })
            .collect()
    };
    Ok(PosteriorSummary {
        global: summarize(model.global_labels(), &acc[..dims.g]),
        latent: summarize(model.local_labels(), &acc[dims.g..]),
        samples: kept,
    })
}

#[derive(Debug, Serialize)]
struct Timing {
    wall_time_secs: f64,
    threads: usize,
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn write_posterior(out: &Path, summary: &PosteriorSummary) -> Result<()> {
    io::write_summary_csv(&out.join("posterior_global.csv"), &summary.global)?;
    io::write_summary_csv(&out.join("posterior_latent.csv"), &summary.latent)
}

/// Runs a full fit and writes every artifact into `config.out`.
pub fn run(config: &RunConfig) -> Result<FitReport> {
    config.validate()?;
    let model = LoadedModel::load(config)?;
    let lambda0 = match (config.fit.init, &config.init_file) {
        (Init::FromFile, Some(path)) => Some(FitFile::read(path)?.report.lambda),
        (Init::FromFile, None) => {
            return Err(Error::Config("init = from_file needs --init-file".into()))
        }
        _ => None,
    };
    std::fs::create_dir_all(&config.out)?;
    let threads = config.worker_threads();
    let pool = thread_pool(threads)?;
    let out = &config.out;

    let report = match pool.install(|| fit(&model, lambda0, &config.fit)) {
        Ok(r) => r,
        Err(Error::FitDiverged { reason, report }) => {
            let file = FitFile {
                status: format!("diverged: {reason}"),
                config: config.clone(),
                report: *report,
            };
            io::write_json(&out.join("fit.json"), &file)?;
            io::write_series_csv(&out.join("trace.csv"), ["iteration", "bound"], &file.report.trace)?;
            return Err(Error::FitDiverged { reason, report: Box::new(file.report) });
        }
        Err(e) => return Err(e),
    };

    let file = FitFile {
        status: "ok".into(),
        config: config.clone(),
        report,
    };
    io::write_json(&out.join("fit.json"), &file)?;
    let report = file.report;
    io::write_series_csv(&out.join("trace.csv"), ["iteration", "bound"], &report.trace)?;
    io::write_series_csv(&out.join("windows.csv"), ["window", "mean_bound"], &report.window_means)?;

    let summary = sample_posterior(&report.lambda, &model, config.samples, config.fit.seed, false)?;
    write_posterior(out, &summary)?;
    let bound = pool.install(|| {
        estimate_bound(&report.lambda, &model, config.bound_k(), config.reps, config.fit.seed)
    })?;
    io::write_json(&out.join("bound_estimate.json"), &bound)?;
    io::write_json(
        &out.join("timing.json"),
        &Timing { wall_time_secs: report.wall_time_secs, threads },
    )?;
    Ok(report)
}

/// Loads a `fit.json` and its data, optionally from a different data path.
pub fn load_fit(path: &Path, data: Option<&Path>) -> Result<(FitFile, LoadedModel)> {
    let mut file = FitFile::read(path)?;
    if let Some(d) = data {
        file.config.data = d.to_path_buf();
    }
    let model = LoadedModel::load(&file.config)?;
    if file.report.lambda.dims() != model.dims() {
        return Err(Error::InvalidData(format!(
            "{} was fitted to data of a different shape",
            path.display()
        )));
    }
    Ok((file, model))
}

#[derive(Debug, Parser)]
#[command(name = "csgva", version, about = "Conditionally structured Gaussian variational inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a variational approximation and write all artifacts.
    Fit(FitArgs),
    /// Re-estimate the lower bound of a saved fit.
    EstimateBound(BoundArgs),
    /// Summarize draws from a saved fit.
    Sample(SampleArgs),
}

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub init: Option<Init>,
    /// `fit.json` providing λ for `--init from_file`.
    #[arg(long)]
    pub init_file: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl FitArgs {
    pub fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => {
                let model = self
                    .model
                    .ok_or_else(|| Error::Config("--model is required without --config".into()))?;
                let data = self
                    .data
                    .clone()
                    .ok_or_else(|| Error::Config("--data is required without --config".into()))?;
                RunConfig::new(model, data)
            }
        };
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(d) = self.data {
            cfg.data = d;
        }
        if let Some(m) = self.method {
            cfg.fit.method = m;
        }
        if let Some(k) = self.k {
            cfg.fit.k = k;
        }
        if let Some(s) = self.seed {
            cfg.fit.seed = s;
        }
        if let Some(i) = self.init {
            cfg.fit.init = i;
        }
        if let Some(f) = self.init_file {
            cfg.init_file = Some(f);
        }
        if let Some(n) = self.max_iters {
            cfg.fit.max_iters = n;
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        if let Some(n) = self.reps {
            cfg.reps = n;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        Ok(cfg)
    }
}

#[derive(Debug, clap::Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Importance samples; defaults to the K of an `iw` fit, else 1.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Data file, when it moved since fitting.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output file; defaults to `bound_estimate.json` beside the fit.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; defaults to the directory holding the fit.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every draw to `posterior_samples.csv`.
    #[arg(long)]
    pub save_samples: bool,
}

fn sibling(fit: &Path, name: &str) -> PathBuf {
    fit.parent().unwrap_or(Path::new(".")).join(name)
}

fn estimate_command(args: BoundArgs) -> Result<BoundEstimate> {
    let (file, model) = load_fit(&args.fit, args.data.as_deref())?;
    let k = args.k.unwrap_or_else(|| file.config.bound_k());
    let seed = args.seed.unwrap_or(file.config.fit.seed);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let pool = thread_pool(args.threads.unwrap_or(cores).max(1))?;
    let est = pool.install(|| estimate_bound(&file.report.lambda, &model, k, args.reps, seed))?;
    let out = args.out.unwrap_or_else(|| sibling(&args.fit, "bound_estimate.json"));
    io::write_json(&out, &est)?;
    Ok(est)
}

fn sample_command(args: SampleArgs) -> Result<PosteriorSummary> {
    let (file, model) = load_fit(&args.fit, args.data.as_deref())?;
    let seed = args.seed.unwrap_or(file.config.fit.seed);
    let summary = sample_posterior(&file.report.lambda, &model, args.count, seed, args.save_samples)?;
    let out = args.out.unwrap_or_else(|| sibling(&args.fit, ""));
    std::fs::create_dir_all(&out)?;
    write_posterior(&out, &summary)?;
    if let Some(samples) = &summary.samples {
        let mut labels = model.global_labels();
        labels.extend(model.local_labels());
        io::write_samples_csv(&out.join("posterior_samples.csv"), &labels, samples)?;
    }
    Ok(summary)
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::InvalidData(_) | Error::Parse { .. } => EXIT_DATA,
        Error::FitDiverged { .. } => EXIT_DIVERGED,
        _ => 1,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Fit(args) => args.into_config().and_then(|cfg| {
            let report = run(&cfg)?;
            println!(
                "{}: {} iterations, stopped by {:?}; artifacts in {}",
                report.method.as_str(),
                report.iterations,
                report.stop_reason,
                cfg.out.display()
            );
            Ok(())
        }),
        Command::EstimateBound(args) => estimate_command(args).map(|est| {
            println!("bound {} (sd {}) with K = {}, {} reps", est.mean, est.sd, est.k, est.reps);
        }),
        Command::Sample(args) => sample_command(args).map(|s| {
            for p in &s.global {
                println!("{:>24} {:>14.6} {:>12.6}", p.label, p.mean, p.sd);
            }
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilyDims;
    use crate::family::LambdaBlocks;
    use crate::verify::GaussianTarget;

    #[test]
    fn zero_lambda_samples_standard_normal() {
        let dims = FamilyDims::new(2, 3, 1, 1);
        let target = GaussianTarget::diagonal(dims, vec![0.0; 5], &[1.0; 5], 0.0).unwrap();
        let lambda = VariationalParams::zeros(dims, false).unwrap();
        let n = 10_000;
        let s = sample_posterior(&lambda, &target, n, 3, false).unwrap();
        assert_eq!(s.global.len(), 2);
        assert_eq!(s.latent.len(), 3);
        let se = 1.0 / (n as f64).sqrt();
        for p in s.global.iter().chain(&s.latent) {
            assert!(p.mean.abs() < 4.0 * se, "{p:?}");
            // sd of the sample sd is about 1/sqrt(2n)
            assert!((p.sd - 1.0).abs() < 4.0 * se / 2f64.sqrt() + 1e-3, "{p:?}");
        }
        assert_eq!(s.latent[0].label, "b_1");
    }

    #[test]
    fn sampling_is_reproducible() {
        let dims = FamilyDims::new(1, 2, 1, 1);
        let target = GaussianTarget::diagonal(dims, vec![0.0; 3], &[1.0; 3], 0.0).unwrap();
        let mut lambda = VariationalParams::zeros(dims, false).unwrap();
        lambda.values_mut()[0] = 0.7;
        let a = sample_posterior(&lambda, &target, 100, 5, true).unwrap();
        let b = sample_posterior(&lambda, &target, 100, 5, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.as_ref().unwrap().len(), 100);
        assert!((a.global[0].mean - lambda.mu1()[0]).abs() < 0.5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::InvalidData("x".into())), EXIT_DATA);
        assert_eq!(main_with_args(["csgva", "fit", "--method", "iw"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["csgva", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(
            main_with_args(["csgva", "fit", "--model", "svm", "--data", "/nonexistent/file.csv"]),
            EXIT_DATA
        );
    }
}
