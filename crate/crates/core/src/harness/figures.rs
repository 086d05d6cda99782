use std::fmt::Write as _;
use std::path::Path;

use super::config::{build_game, ExperimentConfig, GameSpec, InitSpec};
use super::{write_file, Outcome};
use crate::dynamics::{run, MethodConfig};
use crate::error::{Error, Result};
use crate::game::JointPoint;

/// Step budget for figure runs; every convergent configuration reaches the
/// tolerance well inside it.
pub const FIGURE_MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRun {
    /// File stem, e.g. `fig4_ppca`.
    pub name: String,
    pub game: GameSpec,
    pub method: MethodConfig,
}

fn baselines() -> Vec<(&'static str, MethodConfig)> {
    vec![
        ("gda", MethodConfig::gda(0.1)),
        ("agda", MethodConfig::agda(0.1)),
        ("grad_sca", MethodConfig::grad_sca(0.1, 0.3)),
        ("grad_aca", MethodConfig::grad_aca(0.1, 0.3)),
        ("mpm", MethodConfig::mpm(1.0, 0.3)),
    ]
}

/// Runs for figure `which`; 5, 7 and 9 are top views of 4, 6 and 8 and map
/// to the same data. Returns the canonical figure id.
pub fn figure_set(which: u32) -> Result<(u32, Vec<FigureRun>)> {
    let canonical = match which {
        4 | 5 => 4,
        6 | 7 => 6,
        8 | 9 => 8,
        other => {
            return Err(Error::Config(format!(
                "unknown figure {other}; expected one of 4, 6, 8 (or 5, 7, 9)"
            )))
        }
    };
    let game = if canonical == 6 {
        GameSpec::G2
    } else {
        GameSpec::ScalarBilinear
    };
    let alpha = if canonical == 8 { 0.0 } else { 0.1 };
    let mut methods = baselines();
    methods.push(("ppca", MethodConfig::ppca(1.0, alpha, 0.3)));
    methods.push(("appca", MethodConfig::appca(1.0, alpha, 0.3)));
    let runs = methods
        .into_iter()
        .map(|(name, method)| FigureRun {
            name: format!("fig{canonical}_{name}"),
            game: game.clone(),
            method,
        })
        .collect();
    Ok((canonical, runs))
}

/// Writes one trajectory CSV per method of figure `which` into `out_dir`,
/// starting from `init` (default `(1, 1)`).
pub fn cmd_figures(which: u32, out_dir: &Path, init: Option<&JointPoint>) -> Result<Outcome> {
    let (_, runs) = figure_set(which)?;
    let init_spec = match init {
        Some(z) => InitSpec::point(z.theta.as_slice(), z.phi.as_slice()),
        None => InitSpec::point(&[1.0], &[1.0]),
    };
    let mut stdout = String::new();
    for fig in runs {
        let mut cfg =
            ExperimentConfig::new(fig.game.clone(), fig.method.clone(), init_spec.clone());
        cfg.max_iters = FIGURE_MAX_ITERS;
        let game = build_game(&cfg.game)?;
        let z0 = super::build_init(&cfg.init, game.as_game())?;
        let traj = run(game.as_game(), &cfg.method, z0, &cfg.run_options())?;
        let file = format!("{}.csv", fig.name);
        write_file(&out_dir.join(&file), &traj.to_csv_string())?;
        writeln!(
            stdout,
            "{file} {} {}",
            traj.stop_reason.as_str(),
            traj.iters
        )
        .unwrap();
    }
    Ok(Outcome::ok(stdout))
}
