use rayon::prelude::*;

use super::config::{build_game, build_init, ExperimentConfig, GameSpec, InitSpec};
use super::Outcome;
use crate::dynamics::run;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Parameters a sweep can vary.
const SWEEPABLE: [&str; 9] = [
    "gamma",
    "alpha",
    "beta",
    "eps_proj",
    "tol",
    "diverge_bound",
    "max_iters",
    "init_seed",
    "game_seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepParam {
    pub name: String,
    pub values: Vec<f64>,
}

/// Parses `name=v1,v2,...`.
pub fn parse_param(text: &str) -> Result<SweepParam> {
    let (name, list) = text.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "sweep parameter `{text}` is not of the form name=v1,v2"
        ))
    })?;
    let name = name.trim();
    if !SWEEPABLE.contains(&name) {
        return Err(Error::Config(format!(
            "cannot sweep `{name}`; sweepable: {}",
            SWEEPABLE.join(", ")
        )));
    }
    let values = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>().map_err(|_| {
                Error::Config(format!("sweep parameter `{name}`: `{s}` is not a number"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepParam {
        name: name.to_string(),
        values,
    })
}

fn as_count(name: &str, x: f64) -> Result<u64> {
    if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(Error::Config(format!(
            "{name} must be a non-negative integer, got {x}"
        )))
    }
}

fn apply(cfg: &mut ExperimentConfig, name: &str, x: f64) -> Result<()> {
    match name {
        "gamma" => cfg.method.gamma = x,
        "alpha" => cfg.method.alpha = x,
        "beta" => cfg.method.beta = x,
        "eps_proj" => cfg.method.eps_proj = x,
        "tol" => cfg.tol = x,
        "diverge_bound" => cfg.diverge_bound = x,
        "max_iters" => cfg.max_iters = as_count(name, x)? as usize,
        "init_seed" => cfg.init = InitSpec::random(as_count(name, x)?),
        "game_seed" => match &mut cfg.game {
            GameSpec::RandomBilinear { seed, .. } => *seed = as_count(name, x)?,
            _ => {
                return Err(Error::Config(
                    "game_seed applies only to random_bilinear games".into(),
                ))
            }
        },
        _ => unreachable!("names are checked by parse_param"),
    }
    Ok(())
}

/// Cartesian product of the value lists; the first parameter varies slowest.
fn grid(params: &[SweepParam]) -> Vec<Vec<f64>> {
    params.iter().fold(vec![Vec::new()], |acc, p| {
        acc.iter()
            .flat_map(|prefix| {
                p.values.iter().map(move |&v| {
                    let mut row = prefix.clone();
                    row.push(v);
                    row
                })
            })
            .collect()
    })
}

struct PointResult {
    stop_reason: String,
    iters: String,
    final_dist_sq: String,
    observed_rate: String,
    error: String,
}

fn run_point(template: &ExperimentConfig, params: &[SweepParam], values: &[f64]) -> PointResult {
    let attempt = || -> Result<PointResult> {
        let mut cfg = template.clone();
        for (p, &v) in params.iter().zip(values) {
            apply(&mut cfg, &p.name, v)?;
        }
        cfg.check()?;
        // Points are not written out; keep only the endpoints in memory.
        cfg.stride = cfg.max_iters;
        let game = build_game(&cfg.game)?;
        let init = build_init(&cfg.init, game.as_game())?;
        let traj = run(game.as_game(), &cfg.method, init, &cfg.run_options())?;
        Ok(PointResult {
            stop_reason: traj.stop_reason.as_str().into(),
            iters: traj.iters.to_string(),
            final_dist_sq: fmt_f64(traj.final_dist_sq()),
            observed_rate: traj.observed_rate().map(fmt_f64).unwrap_or_default(),
            error: String::new(),
        })
    };
    attempt().unwrap_or_else(|e| PointResult {
        stop_reason: String::new(),
        iters: String::new(),
        final_dist_sq: String::new(),
        observed_rate: String::new(),
        error: e.to_string(),
    })
}

/// Runs `template` at every grid point (in parallel) and returns one CSV row
/// per point in grid order. Failures are recorded in the `error` column.
pub fn cmd_sweep(template: &ExperimentConfig, params: &[SweepParam]) -> Result<Outcome> {
    if params.is_empty() || params.iter().any(|p| p.values.is_empty()) {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let points = grid(params);
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|v| run_point(template, params, v))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = params.iter().map(|p| p.name.as_str()).collect();
    header.extend([
        "stop_reason",
        "iters",
        "final_dist_sq",
        "observed_rate",
        "error",
    ]);
    let csv_err = |e: csv::Error| Error::Csv {
        path: "<sweep>".into(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for (values, r) in points.iter().zip(&results) {
        let mut row: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        row.extend([
            r.stop_reason.clone(),
            r.iters.clone(),
            r.final_dist_sq.clone(),
            r.observed_rate.clone(),
            r.error.clone(),
        ]);
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: "<sweep>".into(),
        message: e.to_string(),
    })?;
    Ok(Outcome::ok(
        String::from_utf8(bytes).expect("csv output is utf-8"),
    ))
}
