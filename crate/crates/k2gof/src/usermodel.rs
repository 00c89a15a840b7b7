//! Models loaded from JSON files with an expression density.
//!
//! ```json
//! {
//!   "name": "Gumbel",
//!   "d": 2,
//!   "support": {"lower": [1, 1], "upper": [20, 25]},
//!   "params": [{"name": "mu", "domain": "real"}, {"name": "s", "domain": "positive", "initial": 3}],
//!   "density": "exp(-(x1 - b1) / b2 - exp(-(x1 - b1) / b2)) * exp(-x2 / 10)"
//! }
//! ```
//!
//! `density` is an unnormalized density (not its logarithm). Domains are
//! `"real"`, `"positive"` or a `[lower, upper]` pair. Scores use central
//! differences and sampling uses the grid-cell sampler.

use std::path::Path;
use std::sync::Arc;

use k2gof_core::model::{LogDensity, ModelSpec, ParamDomain, SupportRect};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModelFile {
    pub name: String,
    pub d: usize,
    pub support: SupportJson,
    pub params: Vec<ParamJson>,
    pub density: String,
}

#[derive(Debug, Clone, Deserialize, serde::Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SupportJson {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamJson {
    pub name: String,
    #[serde(default = "DomainJson::real")]
    pub domain: DomainJson,
    pub initial: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DomainJson {
    Named(String),
    Interval([f64; 2]),
}

impl DomainJson {
    fn real() -> Self {
        DomainJson::Named("real".into())
    }

    fn resolve(&self) -> std::result::Result<ParamDomain, String> {
        match self {
            DomainJson::Named(s) if s == "real" => Ok(ParamDomain::REAL),
            DomainJson::Named(s) if s == "positive" => Ok(ParamDomain::POSITIVE),
            DomainJson::Named(s) => Err(format!("unknown domain '{s}'")),
            DomainJson::Interval([lo, hi]) if lo < hi => Ok(ParamDomain::new(*lo, *hi)),
            DomainJson::Interval([lo, hi]) => Err(format!("empty domain [{lo}, {hi}]")),
        }
    }
}

fn default_initial(d: &ParamDomain) -> f64 {
    match (d.lower.is_finite(), d.upper.is_finite()) {
        (true, true) => 0.5 * (d.lower + d.upper),
        (true, false) => d.lower + 1.0,
        (false, true) => d.upper - 1.0,
        (false, false) => 0.0,
    }
}

struct ExprDensity {
    expr: Expr,
}

impl LogDensity for ExprDensity {
    fn log_unnormalized(&self, params: &[f64], x: &[f64]) -> f64 {
        self.expr.eval(x, params).ln()
    }
}

impl UserModelFile {
    pub fn into_spec(self, origin: &Path) -> Result<ModelSpec> {
        let bad = |m: String| Error::input(origin, m);
        if self.d != 2 {
            return Err(bad(format!("d = {} is not supported; grids are two-dimensional", self.d)));
        }
        if self.params.is_empty() {
            return Err(bad("a model needs at least one parameter".into()));
        }
        let support = SupportRect::new(self.support.lower, self.support.upper).map_err(|e| bad(e.to_string()))?;
        let expr = Expr::parse(&self.density, self.d, self.params.len()).map_err(|e| bad(format!("density {e}")))?;
        let mut params = Vec::with_capacity(self.params.len());
        let mut initial = Vec::with_capacity(self.params.len());
        for p in self.params {
            let domain = p.domain.resolve().map_err(|e| bad(format!("parameter {}: {e}", p.name)))?;
            initial.push(p.initial.unwrap_or_else(|| default_initial(&domain)));
            params.push((p.name, domain));
        }
        ModelSpec::new(self.name, support, params, initial, Arc::new(ExprDensity { expr })).map_err(|e| bad(e.to_string()))
    }
}

pub fn load_user_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: UserModelFile = serde_json::from_str(&text).map_err(|e| Error::input(path, e.to_string()))?;
    file.into_spec(path)
}
