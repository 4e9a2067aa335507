use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::FitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    GlmmPoisson,
    GlmmBernoulli,
    Svm,
}

/// Column bindings for the input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Columns {
    /// Subject identifier (GLMM).
    pub subject: String,
    /// Response column (GLMM).
    pub response: String,
    /// Fixed-effect covariates in design order; all remaining columns when absent.
    pub covariates: Option<Vec<String>>,
    /// Covariates with a random effect; the intercept always has one.
    pub random: Vec<String>,
    /// Covariates constant within each subject that enter the random-effect mean.
    pub subject_specific: Vec<String>,
    /// Series column (SVM); the first column when absent.
    pub series: Option<String>,
    /// Whether the SVM series holds raw rates to be mean-corrected.
    pub mean_correct: bool,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            subject: "subject".into(),
            response: "y".into(),
            covariates: None,
            random: Vec::new(),
            subject_specific: Vec::new(),
            series: None,
            mean_correct: true,
        }
    }
}

/// Everything needed for one `fit` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub data: PathBuf,
    #[serde(default)]
    pub columns: Columns,
    /// Posterior draws summarized after fitting.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Replications for the bound estimate.
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    /// Earlier `fit.json` whose λ starts the fit when `init = from_file`.
    #[serde(default, skip_serializing)]
    pub init_file: Option<PathBuf>,
}

fn default_samples() -> usize {
    2000
}

fn default_reps() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(model: ModelKind, data: impl Into<PathBuf>) -> Self {
        Self {
            model,
            data: data.into(),
            columns: Columns::default(),
            samples: default_samples(),
            reps: default_reps(),
            fit: FitConfig::default(),
            out: default_out(),
            threads: None,
            init_file: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }
        if self.reps < 2 {
            return Err(Error::Config("reps must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.model == ModelKind::Svm
            && (!self.columns.random.is_empty() || !self.columns.subject_specific.is_empty())
        {
            return Err(Error::Config(
                "random and subject_specific columns apply to GLMMs only".into(),
            ));
        }
        Ok(())
    }

    /// Samples per iteration used by the final stage.
    pub fn bound_k(&self) -> usize {
        match self.fit.method {
            crate::optimizer::Method::Iw => self.fit.k,
            _ => 1,
        }
    }

    /// Worker threads: the requested count, else the machine's cores, capped at K.
    pub fn worker_threads(&self) -> usize {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        self.threads.unwrap_or(cores).min(self.bound_k().max(1)).max(1)
    }
}
