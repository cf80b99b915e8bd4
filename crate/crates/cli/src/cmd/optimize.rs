use clap::{Args, Subcommand};

use corners_core::optimizer::{minimize_t, sweep, sweep_csv, OptimizeConfig};
use corners_core::Error;

use super::Completion;
use crate::manifest::{write_output, Session};

#[derive(Debug, Subcommand)]
pub enum OptimizeCommand {
    /// Minimize T at one mean.
    Single {
        #[command(flatten)]
        params: Params,
        /// Target mean.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Minimize T across a list of means and write CSV.
    Sweep {
        #[command(flatten)]
        params: Params,
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long)]
        alphas: String,
    },
}

#[derive(Debug, Args)]
pub struct Params {
    /// JSON optimizer configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<String>,
    /// Grid shape, e.g. `2,2,2`.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<String>,
}

fn parse_shape(s: &str) -> Result<[usize; 3], Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Parse(format!("shape entry {p:?} is not an integer"))))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|_| Error::Parse(format!("shape {s:?} needs three entries")))
}

pub fn parse_alphas(s: &str) -> Result<Vec<f64>, Error> {
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Parse(format!("{p:?} is not a number")));
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(num).collect::<Result<_, _>>()?;
        let [start, stop, step] = <[f64; 3]>::try_from(parts).map_err(|_| Error::Parse(format!("range {s:?} needs start:stop:step")))?;
        if !(step > 0.0) || stop < start {
            return Err(Error::Domain(format!("range {s:?} is empty")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // Snap to 12 decimals so `0.1:0.9:0.1` yields 0.3, not 0.30000000000000004.
        Ok((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
    } else {
        s.split(',').map(num).collect()
    }
}

fn resolve(params: &Params, alpha: Option<f64>, session: &mut Session) -> Result<OptimizeConfig, Error> {
    let mut cfg = match &params.config {
        Some(path) => serde_json::from_str(&session.read_input(path)?)?,
        None => OptimizeConfig::new(alpha.unwrap_or(0.5), [2, 2, 2]),
    };
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    if let Some(s) = &params.shape {
        cfg.shape = parse_shape(s)?;
    }
    cfg.restarts = params.restarts.unwrap_or(cfg.restarts);
    cfg.max_iters = params.max_iters.unwrap_or(cfg.max_iters);
    cfg.tolerance = params.tolerance.unwrap_or(cfg.tolerance);
    cfg.seed = params.seed.unwrap_or(cfg.seed);
    Ok(cfg)
}

pub fn run(cmd: &OptimizeCommand, session: &mut Session) -> Result<Completion, Error> {
    match cmd {
        OptimizeCommand::Single { params, alpha } => {
            if alpha.is_none() && params.config.is_none() {
                return Err(Error::Domain("optimize single needs --alpha or --config".into()));
            }
            let cfg = resolve(params, *alpha, session)?;
            session.configure("optimize single", &cfg, vec![cfg.seed]);
            let report = minimize_t(&cfg)?;
            write_output(params.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
            Ok(if report.violations.is_empty() { Completion::Done } else { Completion::InvariantViolated })
        }
        OptimizeCommand::Sweep { params, alphas } => {
            let list = parse_alphas(alphas)?;
            let base = resolve(params, list.first().copied(), session)?;
            session.configure("optimize sweep", serde_json::json!({ "base": &base, "alphas": &list }), vec![base.seed]);
            let rows = sweep(&base, &list)?;
            write_output(params.out.as_deref(), &sweep_csv(&rows))?;
            let broken = rows.iter().any(|r| r.best_t < r.lower * (1.0 - 1e-12));
            Ok(if broken { Completion::InvariantViolated } else { Completion::Done })
        }
    }
}
