//! `simulate`: batch runs and parameter sweeps from a scenario file.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use chra_core::batch::{gnuplot_script, metrics_for, run_sweep, write_per_run, write_summary, Sweep};
use chra_core::config::{Protocol, ScenarioConfig};
use chra_core::sim::{run_scenario, Scenario};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "simulate", about = "Run MANET routing simulations and write summary CSVs")]
struct Args {
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// chra, backbone, aodv or all.
    #[arg(long)]
    protocol: Option<String>,
    /// Parameter sweep, e.g. `speed=0,2,4,6,8,10`.
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs per cell.
    #[arg(long)]
    runs: Option<usize>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write a packet trace of the first run of each protocol.
    #[arg(long)]
    trace: bool,
    /// Also write per-run metrics in long format.
    #[arg(long)]
    per_run: bool,
    /// Also write a gnuplot script for the sweep.
    #[arg(long)]
    gnuplot: bool,
}

fn load(args: &Args) -> Result<(ScenarioConfig, Vec<Protocol>), String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            ScenarioConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set {kv}: expected KEY=VALUE"))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| e.to_string())?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.runs {
        if r == 0 {
            return Err("--runs must be > 0".into());
        }
        cfg.runs = r;
    }
    let protocols = match args.protocol.as_deref() {
        Some("all") => Protocol::ALL.to_vec(),
        Some(p) => {
            let p: Protocol = p.parse().map_err(|e: chra_core::config::ConfigError| e.to_string())?;
            cfg.protocol = p;
            vec![p]
        }
        None if args.config.is_some() || !args.set.is_empty() => vec![cfg.protocol],
        None => Protocol::ALL.to_vec(),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    Ok((cfg, protocols))
}

fn write_trace(cfg: &ScenarioConfig, protocols: &[Protocol], out: &std::path::Path) -> Result<(), String> {
    for &p in protocols {
        let seed = chra_core::rng::run_seed(cfg.seed, 0);
        let run = run_scenario(Scenario::from_config(cfg, p, seed).with_trace());
        let path = out.join(format!("trace_{p}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let res: Result<(), csv::Error> = (|| {
            w.write_record(["time", "plane", "kind", "from", "to", "bytes", "from_role", "to_role"])?;
            for r in run.stats.trace.iter().flatten() {
                w.write_record([
                    format!("{:.6}", r.time),
                    r.plane().name().to_owned(),
                    r.kind.name().to_owned(),
                    r.from.to_string(),
                    r.to.map_or_else(|| "*".to_owned(), |t| t.to_string()),
                    r.size.to_string(),
                    format!("{:?}", r.from_role),
                    r.to_role.map_or_else(|| "*".to_owned(), |t| format!("{t:?}")),
                ])?;
            }
            w.flush()?;
            Ok(())
        })();
        res.map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn run(args: Args) -> Result<(), String> {
    let (cfg, protocols) = load(&args)?;
    let sweep = args
        .sweep
        .as_deref()
        .map(Sweep::parse)
        .transpose()
        .map_err(|e| e.to_string())?;
    if let Some(s) = &sweep {
        s.validate(&cfg).map_err(|e| e.to_string())?;
        if s.param == "protocol" {
            for v in &s.values {
                v.parse::<Protocol>().map_err(|e| e.to_string())?;
            }
        }
    }
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;

    let cells = run_sweep(&cfg, &protocols, sweep.as_ref()).map_err(|e| e.to_string())?;
    let summary_path = args.out.join("summary.csv");
    let f = File::create(&summary_path).map_err(|e| format!("{}: {e}", summary_path.display()))?;
    write_summary(BufWriter::new(f), &cells).map_err(|e| e.to_string())?;

    let metrics = metrics_for(sweep.as_ref());
    if args.per_run {
        let path = args.out.join("runs.csv");
        let f = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        write_per_run(BufWriter::new(f), &cells, &metrics).map_err(|e| e.to_string())?;
    }
    if args.gnuplot {
        let s = sweep.clone().unwrap_or(Sweep {
            param: "base".into(),
            values: vec!["0".into()],
        });
        let path = args.out.join("plot.gp");
        fs::write(&path, gnuplot_script(&s, &protocols, &metrics)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if args.trace {
        write_trace(&cfg, &protocols, &args.out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::FAILURE
        }
    }
}
