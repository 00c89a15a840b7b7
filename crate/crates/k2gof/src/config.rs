//! Run configuration: builtin defaults < JSON config file < CLI flags.

use std::path::{Path, PathBuf};

use k2gof_core::model::{builtin, ModelSpec, SupportRect};
use k2gof_core::quadrature::Grid;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::usermodel::{load_user_model, SupportJson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Projected,
    Refit,
    Mc,
}

/// Effective settings of a run. `threads` and `out` change neither results
/// nor the echoed configuration, so outputs stay byte-identical across
/// worker counts and output directories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Reference model `Q` whose null distribution is simulated.
    pub reference: String,
    /// Candidate models tested through the rotation.
    pub candidates: Vec<String>,
    /// Data-generating model of power studies.
    pub truth: String,
    /// Parameters of `truth`; the model's initial guess when absent.
    pub truth_params: Option<Vec<f64>>,
    /// Reference parameters for `null`; read from `fit` when absent.
    pub params: Option<Vec<f64>>,
    /// A `fit.json` supplying reference parameters.
    pub fit: Option<PathBuf>,
    /// Directory holding `null_*.json` for `test`; defaults to `out`.
    pub null_dir: Option<PathBuf>,
    /// JSON files of user-defined models.
    pub models: Vec<PathBuf>,
    pub support: SupportJson,
    pub grid: [usize; 2],
    pub n: usize,
    pub replicates: usize,
    pub power_replicates: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub method: Method,
    pub recalibrate: bool,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let region = builtin::default_region();
        RunConfig {
            reference: "Q".into(),
            candidates: vec!["F1".into(), "F2".into(), "F3".into()],
            truth: "P".into(),
            truth_params: None,
            params: None,
            fit: None,
            null_dir: None,
            models: Vec::new(),
            support: SupportJson { lower: region.lower().to_vec(), upper: region.upper().to_vec() },
            grid: [50, 40],
            n: 100,
            replicates: 1000,
            power_replicates: 2000,
            alphas: vec![0.001, 0.05, 0.1],
            seed: 1,
            method: Method::Projected,
            recalibrate: false,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return bad("alphas must lie in (0, 1)");
        }
        if self.grid[0] < 2 || self.grid[1] < 2 {
            return bad("grid needs at least 2 cells per axis");
        }
        Ok(())
    }

    pub fn support_rect(&self) -> Result<SupportRect> {
        SupportRect::new(self.support.lower.clone(), self.support.upper.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Ok(Grid::new(&self.support_rect()?, self.grid[0], self.grid[1])?)
    }

    /// Looks `name` up among the user model files, then the builtins on
    /// the configured support.
    pub fn model(&self, name: &str) -> Result<ModelSpec> {
        for path in &self.models {
            let spec = load_user_model(path)?;
            if spec.name() == name {
                if spec.support() != &self.support_rect()? {
                    return Err(Error::input(path, format!("support of {name} differs from the configured support")));
                }
                return Ok(spec);
            }
        }
        builtin::by_name_on(name, self.support_rect()?).ok_or_else(|| Error::Config(format!("unknown model '{name}'")))
    }

    pub fn null_dir(&self) -> &Path {
        self.null_dir.as_deref().unwrap_or(&self.out)
    }
}
