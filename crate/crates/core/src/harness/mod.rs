//! Config-driven experiments behind the `ppca` binary.
//!
//! Every command returns an [`Outcome`] carrying the exit code and the text
//! destined for stdout, so the binary is a thin shell and the commands are
//! testable in-process.

mod config;
mod figures;
mod rates;
mod sweep;
mod verify;

use std::path::Path;

pub use config::{
    build_game, build_init, random_point, BuiltGame, ExperimentConfig, GameSpec, InitSpec,
};
pub use figures::{cmd_figures, figure_set, FigureRun, FIGURE_MAX_ITERS};
pub use rates::{cmd_rates, RatesRequest};
pub use sweep::{cmd_sweep, parse_param, SweepParam};
pub use verify::{
    cmd_verify, run_verify, CheckResult, Fault, VerifyOptions, VerifyReport, DEFAULT_SIZES,
};

use crate::dynamics::{run, StopReason, Trajectory};
use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGED: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

impl Outcome {
    pub fn ok(stdout: String) -> Self {
        Self {
            code: EXIT_OK,
            stdout,
        }
    }
}

/// JSON number with 17 significant digits; `null` for non-finite values.
pub(crate) fn json_f64(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    std::fs::write(path, contents).map_err(io_err)
}

/// One-line JSON summary `{stop_reason, iters, final_dist_sq}`.
pub fn run_summary(traj: &Trajectory) -> String {
    format!(
        r#"{{"stop_reason":"{}","iters":{},"final_dist_sq":{}}}"#,
        traj.stop_reason.as_str(),
        traj.iters,
        json_f64(traj.final_dist_sq())
    )
}

/// Runs one experiment, writes its trajectory CSV to `out` (or the config's
/// `out_path`) and reports the summary. Exit 2 when the run diverged.
pub fn cmd_run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome> {
    cfg.check()?;
    let out = out.or(cfg.out_path.as_deref()).ok_or_else(|| {
        Error::Config("out_path: no output path given (set `out_path` or pass --out)".into())
    })?;
    let game = build_game(&cfg.game)?;
    let init = build_init(&cfg.init, game.as_game())?;
    let traj = run(game.as_game(), &cfg.method, init, &cfg.run_options())?;
    write_file(out, &traj.to_csv_string())?;
    let code = if traj.stop_reason == StopReason::Diverged {
        EXIT_DIVERGED
    } else {
        EXIT_OK
    };
    Ok(Outcome {
        code,
        stdout: run_summary(&traj) + "\n",
    })
}
