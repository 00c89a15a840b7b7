//! Subcommands `fit`, `null`, `test`, `power`, `bench` and `sample`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use k2gof_core::fit::{mle_fit, FitResult};
use k2gof_core::model::{instantiate, sample};
use k2gof_core::sim::{p_value, NullDistribution};
use k2gof_core::{RngStream, StatKind};
use serde_json::{json, Value};

use crate::config::{Method, RunConfig};
use crate::engine::{
    data_statistics, power_study, simulate_null_mc, simulate_null_projected, simulate_null_refit, Engine, NullSet,
    PowerConfig,
};
use crate::error::{Error, Result};
use crate::io;

/// Largest tolerated rotation-plan audit residual in `test`.
pub const AUDIT_LIMIT: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "k2gof", version, about = "Goodness-of-fit for parametric models via projected and K-2 rotated empirical processes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its fields
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Sample size of simulated data sets
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Null-distribution replicates
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Reference model name
    #[arg(long, global = true)]
    pub reference: Option<String>,
    /// Comma-separated candidate model names
    #[arg(long, global = true, value_delimiter = ',')]
    pub candidates: Option<Vec<String>>,
    /// User model JSON file (repeatable)
    #[arg(long = "model-file", global = true)]
    pub models: Vec<PathBuf>,
    /// Grid cells per axis, e.g. 50,40
    #[arg(long, global = true, value_delimiter = ',', num_args = 2)]
    pub grid: Option<Vec<usize>>,
    /// Comma-separated significance levels
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum-likelihood fit of the reference model, written to fit.json
    Fit {
        data: PathBuf,
    },
    /// Simulate the null distributions of D, omega2 and A2
    Null {
        /// Reference parameters, comma-separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
        /// fit.json supplying the reference parameters
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Test the reference and every candidate on a data set
    Test {
        data: PathBuf,
        /// Directory holding null_*.json (default: --out)
        #[arg(long)]
        null_dir: Option<PathBuf>,
    },
    /// Power study with data drawn from a truth model
    Power {
        #[arg(long)]
        truth: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        truth_params: Option<Vec<f64>>,
        #[arg(long)]
        power_replicates: Option<usize>,
        /// Recalibrate the reference null at every replicate
        #[arg(long)]
        recalibrate: bool,
    },
    /// Time the projected and the refit bootstrap
    Bench {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
    },
    /// Draw a data set from a model, written to data.csv
    Sample {
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        params: Option<Vec<f64>>,
    },
}

impl Cli {
    /// Effective configuration: defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let g = &self.global;
        let mut c = match &g.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = g.seed {
            c.seed = v;
        }
        if let Some(v) = g.threads {
            c.threads = Some(v);
        }
        if let Some(v) = g.method {
            c.method = v;
        }
        if let Some(v) = &g.out {
            c.out = v.clone();
        }
        if let Some(v) = g.n {
            c.n = v;
        }
        if let Some(v) = g.replicates {
            c.replicates = v;
        }
        if let Some(v) = &g.reference {
            c.reference = v.clone();
        }
        if let Some(v) = &g.candidates {
            c.candidates = v.clone();
        }
        c.models.extend(g.models.iter().cloned());
        if let Some(v) = &g.grid {
            c.grid = [v[0], v[1]];
        }
        if let Some(v) = &g.alphas {
            c.alphas = v.clone();
        }
        match &self.command {
            Command::Null { params, fit } => {
                if let Some(p) = params {
                    c.params = Some(p.clone());
                }
                if let Some(f) = fit {
                    c.fit = Some(f.clone());
                }
            }
            Command::Bench { params: Some(p) } => c.params = Some(p.clone()),
            Command::Test { null_dir: Some(d), .. } => c.null_dir = Some(d.clone()),
            Command::Power { truth, truth_params, power_replicates, recalibrate } => {
                if let Some(t) = truth {
                    c.truth = t.clone();
                }
                if let Some(t) = truth_params {
                    c.truth_params = Some(t.clone());
                }
                if let Some(r) = power_replicates {
                    c.power_replicates = *r;
                }
                c.recalibrate |= *recalibrate;
            }
            _ => {}
        }
        c.validate()?;
        Ok(c)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve_config()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let started = Instant::now();
    let engine = Engine::new(cfg.threads)?;
    let name = match &cli.command {
        Command::Fit { data } => {
            cmd_fit(&cfg, data)?;
            "fit"
        }
        Command::Null { .. } => {
            cmd_null(&cfg, &engine)?;
            "null"
        }
        Command::Test { data, .. } => {
            cmd_test(&cfg, data)?;
            "test"
        }
        Command::Power { .. } => {
            cmd_power(&cfg, &engine)?;
            "power"
        }
        Command::Bench { .. } => {
            cmd_bench(&cfg, &engine)?;
            "bench"
        }
        Command::Sample { model, params } => {
            cmd_sample(&cfg, model, params.as_deref())?;
            "sample"
        }
    };
    if name != "bench" {
        io::write_timing(&cfg.out.join("timing.json"), name, started.elapsed().as_secs_f64(), engine.threads())?;
    }
    Ok(())
}

fn out(cfg: &RunConfig, file: &str) -> PathBuf {
    cfg.out.join(file)
}

/// Writes fit.json; a fit that does not converge is still written and then
/// reported as [`k2gof_core::Error::NoConvergence`].
pub fn cmd_fit(cfg: &RunConfig, data_path: &Path) -> Result<FitResult> {
    let spec = cfg.model(&cfg.reference)?;
    let grid = cfg.build_grid()?;
    let data = io::read_points(data_path, spec.support())?;
    if data.len() < k2gof_core::fit::MIN_FIT_OBSERVATIONS {
        return Err(Error::input(
            data_path,
            format!("{} rows; a fit needs at least {}", data.len(), k2gof_core::fit::MIN_FIT_OBSERVATIONS),
        ));
    }
    let fit = mle_fit(&spec, &data, &grid)?;
    io::write_json(&out(cfg, "fit.json"), &io::envelope(cfg, json!({ "fit": fit })))?;
    Ok(fit.into_result()?)
}

/// Reference parameters from the config, else from a fit.json.
fn reference_params(cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(p) = &cfg.params {
        return Ok(p.clone());
    }
    if let Some(path) = &cfg.fit {
        let v: Value = io::read_json(path)?;
        let values = v
            .pointer("/fit/params/values")
            .and_then(|a| serde_json::from_value::<Vec<f64>>(a.clone()).ok())
            .ok_or_else(|| Error::input(path, "no fit.params.values"))?;
        return Ok(values);
    }
    Err(Error::Config("reference parameters needed: pass --params or --fit".into()))
}

pub fn cmd_null(cfg: &RunConfig, engine: &Engine) -> Result<NullSet> {
    let spec = cfg.model(&cfg.reference)?;
    let grid = cfg.build_grid()?;
    let params = reference_params(cfg)?;
    let (n, r, seed) = (cfg.n, cfg.replicates, cfg.seed);
    let set = match cfg.method {
        Method::Projected => simulate_null_projected(engine, &spec, &params, &grid, n, r, seed)?,
        Method::Refit => simulate_null_refit(engine, &spec, &params, &grid, n, r, seed)?,
        Method::Mc => simulate_null_mc(engine, &spec, &params, &grid, n, r, seed)?,
    };
    let hash = io::config_hash(cfg);
    for dist in set.iter() {
        let kind = dist.stat_kind.as_str();
        let file = io::NullFile::new(dist, set.excluded, hash.clone());
        io::write_json(&out(cfg, &format!("null_{kind}.json")), &serde_json::to_value(&file).expect("serializable"))?;
        io::write_null_values_csv(&out(cfg, &format!("null_{kind}.csv")), dist)?;
        io::write_histogram(&out(cfg, &format!("hist_{kind}.csv")), &dist.values)?;
    }
    io::write_json(&out(cfg, "null_config.json"), &io::envelope(cfg, json!({ "excluded": set.excluded })))?;
    Ok(set)
}

fn load_nulls(cfg: &RunConfig) -> Result<Vec<NullDistribution>> {
    StatKind::ALL
        .iter()
        .map(|k| {
            let path = cfg.null_dir().join(format!("null_{}.json", k.as_str()));
            let file: io::NullFile = io::read_json(&path)?;
            if file.meta.stat_kind != *k {
                return Err(Error::input(&path, format!("holds {} values", file.meta.stat_kind.as_str())));
            }
            Ok(file.into_distribution())
        })
        .collect()
}

fn stat_row(model: &str, kind: &str, t: &k2gof_core::StatTriple, fit: &FitResult, nulls: &[NullDistribution]) -> Value {
    let p = |k: StatKind| p_value(&nulls[StatKind::ALL.iter().position(|x| *x == k).expect("known")], t.get(k));
    json!({
        "model": model,
        "process": kind,
        "params": fit.params,
        "loglik": fit.log_likelihood,
        "D": t.d,
        "omega2": t.omega2,
        "A2": t.a2,
        "p_values": {"D": p(StatKind::D), "omega2": p(StatKind::Omega2), "A2": p(StatKind::A2)},
    })
}

/// Writes report.json. Fails with [`Error::Audit`] after writing the
/// report when a rotation plan residual exceeds [`AUDIT_LIMIT`].
pub fn cmd_test(cfg: &RunConfig, data_path: &Path) -> Result<Value> {
    let reference = cfg.model(&cfg.reference)?;
    let candidates = cfg.candidates.iter().map(|c| cfg.model(c)).collect::<Result<Vec<_>>>()?;
    let grid = cfg.build_grid()?;
    let data = io::read_points(data_path, reference.support())?;
    let nulls = load_nulls(cfg)?;
    let (stats, _, plans) = data_statistics(&data, &reference, &candidates, &grid, true)?;
    let mut rows = vec![stat_row(reference.name(), "projected", &stats.reference, &stats.reference_fit, &nulls)];
    let mut worst: Option<(String, f64)> = None;
    for ((name, t, fit), plan) in stats.candidates.iter().zip(&plans) {
        let audit = plan.audit()?;
        let mut row = stat_row(name, "rotated", t, fit, &nulls);
        row["k_const"] = json!(plan.k_const());
        row["audit"] = serde_json::to_value(audit).expect("serializable");
        rows.push(row);
        let r = audit.max_residual();
        if r > AUDIT_LIMIT && worst.as_ref().is_none_or(|(_, w)| r > *w) {
            worst = Some((name.clone(), r));
        }
    }
    let null_meta = json!({
        "model": nulls[0].model,
        "params_at_build": nulls[0].params_at_build,
        "replicates": nulls[0].replicates,
        "seed": nulls[0].seed,
        "method": nulls[0].method,
    });
    let report = io::envelope(cfg, json!({ "n": data.len(), "null": null_meta, "rows": rows }));
    io::write_json(&out(cfg, "report.json"), &report)?;
    if let Some((candidate, residual)) = worst {
        return Err(Error::Audit { reference: reference.name().to_string(), candidate, residual });
    }
    Ok(report)
}

fn truth_params(cfg: &RunConfig, spec: &k2gof_core::ModelSpec) -> Vec<f64> {
    cfg.truth_params.clone().unwrap_or_else(|| spec.initial_guess().to_vec())
}

pub fn cmd_power(cfg: &RunConfig, engine: &Engine) -> Result<crate::engine::PowerReport> {
    let truth_spec = cfg.model(&cfg.truth)?;
    let reference = cfg.model(&cfg.reference)?;
    let candidates = cfg.candidates.iter().map(|c| cfg.model(c)).collect::<Result<Vec<_>>>()?;
    let grid = cfg.build_grid()?;
    let truth = instantiate(&truth_spec, &truth_params(cfg, &truth_spec), &grid)?;
    let pc = PowerConfig {
        n: cfg.n,
        r_power: cfg.power_replicates,
        r_null: cfg.replicates,
        alphas: cfg.alphas.clone(),
        seed: cfg.seed,
        recalibrate: cfg.recalibrate,
    };
    let report = power_study(engine, &truth, &reference, &candidates, &grid, &pc)?;
    io::write_rows(&out(cfg, "power.csv"), &report.rows)?;
    io::write_json(&out(cfg, "power.json"), &io::envelope(cfg, json!({ "report": report })))?;
    Ok(report)
}

/// Times the projected and the refit bootstrap at the configured size and
/// writes bench.json. Both timings are wall-clock and not reproducible.
pub fn cmd_bench(cfg: &RunConfig, engine: &Engine) -> Result<Value> {
    let spec = cfg.model(&cfg.reference)?;
    let grid = cfg.build_grid()?;
    let params = reference_params(cfg).unwrap_or_else(|_| spec.initial_guess().to_vec());
    let t = Instant::now();
    simulate_null_projected(engine, &spec, &params, &grid, cfg.n, cfg.replicates, cfg.seed)?;
    let projected = t.elapsed().as_secs_f64();
    let t = Instant::now();
    simulate_null_refit(engine, &spec, &params, &grid, cfg.n, cfg.replicates, cfg.seed)?;
    let refit = t.elapsed().as_secs_f64();
    let v = io::envelope(
        cfg,
        json!({
            "threads": engine.threads(),
            "projected_seconds": projected,
            "refit_seconds": refit,
            "speedup": refit / projected,
        }),
    );
    io::write_json(&out(cfg, "bench.json"), &v)?;
    Ok(v)
}

pub fn cmd_sample(cfg: &RunConfig, model: &str, params: Option<&[f64]>) -> Result<()> {
    let spec = cfg.model(model)?;
    let grid = cfg.build_grid()?;
    let params = params.map(<[f64]>::to_vec).unwrap_or_else(|| spec.initial_guess().to_vec());
    let inst = instantiate(&spec, &params, &grid)?;
    let mut rng = RngStream::new(cfg.seed, 0);
    let points = sample(&inst, cfg.n, &mut rng)?;
    io::write_points(&out(cfg, "data.csv"), &points)
}
