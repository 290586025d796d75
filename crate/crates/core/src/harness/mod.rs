//! File-level driver: configs in, trace CSVs and summary JSON out.

pub mod acceptance;
pub mod config;
pub mod suite;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, RateFit, TraceRecord};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::solvers::{self, Engine, Trace, Violation};

pub use config::{resolve, ResolutionAudit, Resolved, RunConfig};

/// Environment variable capping worker threads for suites and verification.
pub const THREADS_ENV: &str = "ACCELPD_THREADS";

/// Thread cap from [`THREADS_ENV`]; `None` leaves the choice to rayon.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(diagnostics::CSV_HEADER.split(','))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

/// Reads a trace written by [`write_trace_csv`]; the header must match
/// exactly.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    if header.join(",") != diagnostics::CSV_HEADER {
        return Err(Error::Parse(format!(
            "trace header {:?} differs from {:?}",
            header.join(","),
            diagnostics::CSV_HEADER
        )));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Fits on the last `window` records of a trace file (all records when
/// `window` is `None`).
pub fn rates_from_csv(path: &Path, window: Option<usize>) -> Result<RateFit> {
    let records = read_trace_csv(File::open(path)?)?;
    let window = window.unwrap_or(records.len().saturating_sub(1));
    diagnostics::fit_rate(&records, window, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub engine: Engine,
    pub iterations: usize,
    pub stopped_early: bool,
    pub initial: TraceRecord,
    #[serde(rename = "final")]
    pub last: TraceRecord,
    /// Primal gap after the optional closing PGD step.
    pub polished_primal_gap: Option<f64>,
    pub rates: Option<RateFit>,
    pub lyapunov_monotone: bool,
    pub violation_count: usize,
    pub first_violation: Option<Violation>,
    pub wall_time_s: f64,
    pub resolution: ResolutionAudit,
}

/// Default fit: the last 1000 records (at least 10) past the `2a♯` warm-up.
pub fn default_rate_fit(trace: &Trace, audit: &ResolutionAudit) -> Option<RateFit> {
    let warmup = audit.a_sharp.map_or(1, |a| (2.0 * a).ceil() as usize).max(1);
    let eligible = trace.records.iter().filter(|r| r.t >= warmup).count();
    let window = eligible.min(1000);
    (window >= 10)
        .then(|| diagnostics::fit_rate(&trace.records, window, warmup).ok())
        .flatten()
}

pub fn summarize(trace: &Trace, problem: &ProblemInstance, audit: ResolutionAudit, wall_time_s: f64) -> Result<Summary> {
    let polished_primal_gap = match (&trace.polished, &problem.reference) {
        (Some(x), Some(r)) => match (problem.objective(x)?.finite(), r.psi_star) {
            (Some(v), Some(s)) => Some(v - s),
            _ => None,
        },
        _ => None,
    };
    Ok(Summary {
        engine: trace.engine,
        iterations: trace.iterations(),
        stopped_early: trace.stopped_early,
        initial: trace.records[0].clone(),
        last: trace.records.last().expect("trace has the initial record").clone(),
        polished_primal_gap,
        rates: default_rate_fit(trace, &audit),
        lyapunov_monotone: trace.lyapunov_monotone,
        violation_count: trace.violations.len(),
        first_violation: trace.violations.first().cloned(),
        wall_time_s,
        resolution: audit,
    })
}

/// Loads, resolves and runs a config; outputs are written relative to
/// `base`.
pub fn execute(config: &RunConfig, base: &Path) -> Result<(Trace, Summary)> {
    let problem = config.problem.load(base, config.seed)?;
    let Resolved { solve, audit } = resolve(config, &problem)?;
    let start = Instant::now();
    let trace = solvers::run(config.algorithm, &problem, &solve)?;
    let summary = summarize(&trace, &problem, audit, start.elapsed().as_secs_f64())?;
    if let Some(p) = &config.outputs.trace_csv {
        write_trace_csv(File::create(base.join(p))?, &trace.records)?;
    }
    if let Some(p) = &config.outputs.summary_json {
        let mut f = File::create(base.join(p))?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        writeln!(f)?;
    }
    Ok((trace, summary))
}

pub fn execute_file(path: &Path) -> Result<(Trace, Summary)> {
    let text = std::fs::read_to_string(path)?;
    let config = RunConfig::from_json(&text)?;
    execute(&config, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_empty_cells() {
        let mut a = TraceRecord::empty(0, 0.0);
        a.lag_gap = Some(1.5);
        let mut b = TraceRecord::empty(1, 1.0);
        b.lyap = Some(0.25);
        b.ineq_slack = Some(-3e-17);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(diagnostics::CSV_HEADER));
        assert_eq!(read_trace_csv(buf.as_slice()).unwrap(), vec![a, b]);
    }

    #[test]
    fn foreign_header_is_rejected() {
        let text = "t,a,lyap\n0,1,2\n";
        assert!(matches!(read_trace_csv(text.as_bytes()), Err(Error::Parse(_))));
    }
}
