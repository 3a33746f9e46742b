//! Batches of independent runs, parameter sweeps and CSV/gnuplot output.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, Protocol, ScenarioConfig};
use crate::metrics::{aggregate_batch, RunMetrics, Summary, DIAGNOSTICS, METRICS};
use crate::rng::run_seed;
use crate::sim::{run_scenario, Scenario};

/// Environment variable holding the worker count for batch runs.
pub const WORKERS_ENV: &str = "CHRA_WORKERS";

#[derive(Debug, Error)]
pub enum BatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bad sweep `{0}`: expected `param=v1,v2,...`")]
    Sweep(String),
    #[error("bad {WORKERS_ENV} value `{0}`")]
    Workers(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One swept parameter and its values, kept as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<String>,
}

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self, BatchError> {
        let (param, values) = spec.split_once('=').ok_or_else(|| BatchError::Sweep(spec.into()))?;
        let param = param.trim().to_owned();
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_owned())
            .filter(|v| !v.is_empty())
            .collect();
        if param.is_empty() || values.is_empty() {
            return Err(BatchError::Sweep(spec.into()));
        }
        Ok(Self { param, values })
    }

    /// Checks every value against the config parser before any run starts.
    pub fn validate(&self, base: &ScenarioConfig) -> Result<(), BatchError> {
        for v in &self.values {
            self.apply(base, v)?;
        }
        Ok(())
    }

    fn apply(&self, base: &ScenarioConfig, value: &str) -> Result<ScenarioConfig, BatchError> {
        let mut cfg = base.clone();
        if self.param != "protocol" {
            cfg.set(&self.param, value)?;
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

/// Metrics of one run within a batch.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Result of one (parameter value, protocol) cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub param: String,
    pub protocol: Protocol,
    pub runs: Vec<RunRecord>,
    pub summary: BTreeMap<String, Summary>,
}

fn pool() -> Result<rayon::ThreadPool, BatchError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| BatchError::Workers(v.clone()))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| BatchError::Pool(e.to_string()))
}

/// `cfg.runs` independent runs of one protocol. Run `i` uses
/// `run_seed(cfg.seed, i)` whichever worker executes it, so results do not
/// depend on the worker count.
pub fn run_batch(cfg: &ScenarioConfig, protocol: Protocol) -> Result<Vec<RunRecord>, BatchError> {
    let pool = pool()?;
    Ok(pool.install(|| run_batch_in_pool(cfg, protocol)))
}

fn run_batch_in_pool(cfg: &ScenarioConfig, protocol: Protocol) -> Vec<RunRecord> {
    (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(cfg.seed, i as u64);
            let out = run_scenario(Scenario::from_config(cfg, protocol, seed));
            RunRecord {
                index: i,
                seed,
                metrics: out.metrics,
            }
        })
        .collect()
}

/// Metrics reported for a sweep: the standard five plus SAM bytes when the
/// SAM period is the swept parameter.
pub fn metrics_for(sweep: Option<&Sweep>) -> Vec<&'static str> {
    let mut m = METRICS.to_vec();
    if sweep.is_some_and(|s| s.param == "t_sam") {
        m.push("sam_bytes");
    }
    m
}

/// Runs every (value, protocol) combination. Without a sweep there is a
/// single cell per protocol with `param` set to `base`.
pub fn run_sweep(
    base: &ScenarioConfig,
    protocols: &[Protocol],
    sweep: Option<&Sweep>,
) -> Result<Vec<Cell>, BatchError> {
    let pool = pool()?;
    let metrics = metrics_for(sweep);
    let mut plan: Vec<(String, ScenarioConfig, Protocol)> = Vec::new();
    match sweep {
        None => {
            for &p in protocols {
                plan.push(("base".into(), base.clone(), p));
            }
        }
        Some(s) if s.param == "protocol" => {
            for v in &s.values {
                let p: Protocol = v.parse()?;
                plan.push((format!("protocol={v}"), base.clone(), p));
            }
        }
        Some(s) => {
            for v in &s.values {
                let cfg = s.apply(base, v)?;
                for &p in protocols {
                    plan.push((format!("{}={v}", s.param), cfg.clone(), p));
                }
            }
        }
    }
    let cells = pool.install(|| {
        plan.into_iter()
            .map(|(param, cfg, protocol)| {
                let runs = run_batch_in_pool(&cfg, protocol);
                let per_run: Vec<RunMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
                Cell {
                    param,
                    protocol,
                    summary: aggregate_batch(&per_run, &metrics),
                    runs,
                }
            })
            .collect()
    });
    Ok(cells)
}

fn fmt_value(x: f64) -> String {
    format!("{x:.6}")
}

/// Summary CSV: `param,protocol,metric,mean,ci95,runs`.
pub fn write_summary<W: Write>(out: W, cells: &[Cell]) -> Result<(), BatchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "protocol", "metric", "mean", "ci95", "runs"])?;
    for c in cells {
        for (metric, s) in &c.summary {
            w.write_record([
                c.param.as_str(),
                c.protocol.name(),
                metric.as_str(),
                &fmt_value(s.mean),
                &fmt_value(s.ci95),
                &s.runs.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format per-run CSV: `param,protocol,run,seed,metric,value`, with the
/// diagnostic counters after the requested metrics. Metrics
/// undefined for a run (no packets sent or delivered) are left out.
pub fn write_per_run<W: Write>(out: W, cells: &[Cell], metrics: &[&str]) -> Result<(), BatchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "protocol", "run", "seed", "metric", "value"])?;
    for c in cells {
        for r in &c.runs {
            let extra = DIAGNOSTICS.iter().filter(|d| !metrics.contains(d));
            for &m in metrics.iter().chain(extra) {
                if let Some(v) = r.metrics.get(m) {
                    w.write_record([
                        c.param.as_str(),
                        c.protocol.name(),
                        &r.index.to_string(),
                        &r.seed.to_string(),
                        m,
                        &fmt_value(v),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot script plotting every metric of `summary.csv` against the swept
/// parameter, one line per protocol, with 95% error bars.
pub fn gnuplot_script(sweep: &Sweep, protocols: &[Protocol], metrics: &[&str]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset terminal pngcairo size 800,600\nset key outside\n");
    s.push_str(&format!("set xlabel '{}'\n", sweep.param));
    for m in metrics {
        s.push_str(&format!("set output '{m}.png'\nset ylabel '{m}'\nplot "));
        let lines: Vec<String> = protocols
            .iter()
            .map(|p| {
                format!(
                    "'summary.csv' using (strcol(2) eq '{p}' && strcol(3) eq '{m}' ? \
                     real(substr(strcol(1), strstrt(strcol(1), '=') + 1, 99)) : 1/0):4:5 \
                     with yerrorlines title '{p}'"
                )
            })
            .collect();
        s.push_str(&lines.join(", \\\n     "));
        s.push('\n');
    }
    s
}
