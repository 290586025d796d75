//! Bench suites: many independent runs, one comparison table.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::solvers::{Engine, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub config: RunConfig,
    /// Gap target for iterations-to-ε; overrides the suite default.
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutputs {
    pub table_csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    #[serde(default)]
    pub rows: Vec<BenchRow>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub outputs: SuiteOutputs,
}

fn default_eps() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub name: String,
    pub engine: Engine,
    pub eps: f64,
    pub iterations_to_eps: Option<usize>,
    pub iterations: Option<usize>,
    pub final_gap: Option<f64>,
    pub sublinear_exponent: Option<f64>,
    pub linear_factor: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
}

impl BenchSuite {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn run_row(row: &BenchRow, default_eps: f64, base: &Path) -> BenchOutcome {
    let eps = row.eps.unwrap_or(default_eps);
    let mut outcome = BenchOutcome {
        name: row.name.clone(),
        engine: row.config.algorithm,
        eps,
        iterations_to_eps: None,
        iterations: None,
        final_gap: None,
        sublinear_exponent: None,
        linear_factor: None,
        wall_time_s: None,
        error: None,
    };
    let mut config = row.config.clone();
    if config.stop == StopRule::None {
        config.stop = StopRule::GapBelow(eps);
    }
    // per-row files would collide across rows sharing a config template
    config.outputs = Default::default();
    match super::execute(&config, base) {
        Ok((trace, summary)) => {
            outcome.iterations_to_eps = trace
                .records
                .iter()
                .find(|r| r.lag_gap.or(r.primal_gap).is_some_and(|g| g <= eps))
                .map(|r| r.t);
            outcome.iterations = Some(summary.iterations);
            outcome.final_gap = summary.last.lag_gap.or(summary.last.primal_gap);
            outcome.sublinear_exponent = summary.rates.and_then(|r| r.sublinear_exponent);
            outcome.linear_factor = summary.rates.and_then(|r| r.linear_factor);
            outcome.wall_time_s = Some(summary.wall_time_s);
        }
        Err(e) => outcome.error = Some(e.to_string()),
    }
    outcome
}

/// Runs every row on the capped thread pool. Row failures are recorded and
/// do not stop the suite.
pub fn run_suite(suite: &BenchSuite, base: &Path) -> Result<Vec<BenchOutcome>> {
    let pool = super::thread_pool()?;
    let outcomes: Vec<BenchOutcome> = pool.install(|| suite.rows.par_iter().map(|r| run_row(r, suite.eps, base)).collect());
    if let Some(p) = &suite.outputs.table_csv {
        write_table(File::create(base.join(p))?, &outcomes)?;
    }
    if let Some(p) = &suite.outputs.json {
        let mut f = File::create(base.join(p))?;
        serde_json::to_writer_pretty(&mut f, &outcomes)?;
        writeln!(f)?;
    }
    Ok(outcomes)
}

pub fn run_suite_file(path: &Path) -> Result<Vec<BenchOutcome>> {
    let suite = BenchSuite::from_json(&std::fs::read_to_string(path)?)?;
    run_suite(&suite, path.parent().unwrap_or(Path::new(".")))
}

pub fn write_table<W: Write>(out: W, outcomes: &[BenchOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name",
        "engine",
        "eps",
        "iterations_to_eps",
        "iterations",
        "final_gap",
        "sublinear_exponent",
        "linear_factor",
        "wall_time_s",
        "error",
    ])
    .map_err(|e| Error::Parse(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for o in outcomes {
        w.write_record([
            o.name.clone(),
            o.engine.name().to_owned(),
            o.eps.to_string(),
            o.iterations_to_eps.map(|v| v.to_string()).unwrap_or_default(),
            o.iterations.map(|v| v.to_string()).unwrap_or_default(),
            opt(o.final_gap),
            opt(o.sublinear_exponent),
            opt(o.linear_factor),
            opt(o.wall_time_s),
            o.error.clone().unwrap_or_default(),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
