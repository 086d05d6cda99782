use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::config::MethodConfig;
use super::step::{step, MethodState};
use crate::error::{Error, Result};
use crate::game::{signed_gradient_unchecked, Game, JointPoint};
use crate::io::fmt_f64;

pub const DEFAULT_DIVERGE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TolReached,
    MaxIters,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TolReached => "tol_reached",
            StopReason::MaxIters => "max_iters",
            StopReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Stop once `sqrt(dist_sq) <= tol`.
    pub tol: f64,
    /// Stop as diverged once `sqrt(dist_sq) >= diverge_bound`.
    pub diverge_bound: f64,
    /// Record every `stride`-th point (the first and last are always kept).
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-6,
            diverge_bound: DEFAULT_DIVERGE_BOUND,
            stride: 1,
        }
    }
}

/// A recorded run. `dist` and `grad_norms` hold one entry per iterate
/// `0..=iters`; `points` holds the strided subset at `record_iters`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub record_iters: Vec<usize>,
    pub points: Vec<JointPoint>,
    pub dist: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub stop_reason: StopReason,
    pub iters: usize,
}

impl Trajectory {
    pub fn final_point(&self) -> &JointPoint {
        self.points
            .last()
            .expect("trajectory always holds the initial point")
    }

    pub fn final_dist_sq(&self) -> f64 {
        *self
            .dist
            .last()
            .expect("trajectory always holds the initial distance")
    }

    /// `sqrt(dist_{t+1} / dist_t)` for every step.
    pub fn step_ratios(&self) -> Vec<f64> {
        self.dist.windows(2).map(|w| (w[1] / w[0]).sqrt()).collect()
    }

    /// Geometric mean of the per-step distance ratios over the last half of
    /// the run. `None` for runs with fewer than two steps.
    pub fn observed_rate(&self) -> Option<f64> {
        let end = self.dist.len() - 1;
        let start = end / 2;
        if end - start < 1 {
            return None;
        }
        let (d0, d1) = (self.dist[start], self.dist[end]);
        if d0 == 0.0 {
            return Some(0.0);
        }
        Some((d1 / d0).sqrt().powf(1.0 / (end - start) as f64))
    }

    pub fn csv_header(&self) -> String {
        let (m, n) = self.final_point().dims();
        let mut h = String::from("iter,dist_sq,grad_norm");
        for i in 0..m {
            write!(h, ",theta_{i}").unwrap();
        }
        for j in 0..n {
            write!(h, ",phi_{j}").unwrap();
        }
        h
    }

    /// Header `iter,dist_sq,grad_norm,theta_0..,phi_0..`, one row per recorded point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        let mut line = String::new();
        for (&t, z) in self.record_iters.iter().zip(&self.points) {
            line.clear();
            write!(
                line,
                "{t},{},{}",
                fmt_f64(self.dist[t]),
                fmt_f64(self.grad_norms[t])
            )
            .unwrap();
            for x in z.theta.iter().chain(z.phi.iter()) {
                line.push(',');
                line.push_str(&fmt_f64(*x));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// One parsed row of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub dist_sq: f64,
    pub grad_norm: f64,
    pub point: JointPoint,
}

/// Parses trajectory CSV text produced by [`Trajectory::write_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let bad = |msg: String| Error::Csv {
        path: "<trajectory>".into(),
        message: msg,
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let m = headers.iter().filter(|h| h.starts_with("theta_")).count();
    let n = headers.iter().filter(|h| h.starts_with("phi_")).count();
    if headers.len() != 3 + m + n || &headers[0] != "iter" {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("`{}` is not a number", &record[i])))
        };
        let coords = (3..3 + m + n).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(TrajectoryRow {
            iter: record[0]
                .parse()
                .map_err(|_| bad(format!("bad iter `{}`", &record[0])))?,
            dist_sq: num(1)?,
            grad_norm: num(2)?,
            point: JointPoint::from_slices(&coords[..m], &coords[m..]),
        });
    }
    Ok(rows)
}

/// Iterates the configured rule from `init` until the distance to the known
/// critical point (origin when none is known) falls below `tol`, exceeds
/// `diverge_bound` or turns non-finite, or `max_iters` steps are taken.
pub fn run<G: Game + ?Sized>(
    game: &G,
    cfg: &MethodConfig,
    init: JointPoint,
    opts: &RunOptions,
) -> Result<Trajectory> {
    cfg.validate()?;
    game.check_dims(&init)?;
    if opts.max_iters < 1 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::Config(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if opts.stride < 1 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if !init.is_finite() {
        return Err(Error::Config("initial point must be finite".into()));
    }
    let reference = game
        .known_critical_point()
        .unwrap_or_else(|| JointPoint::zeros(game.dim_theta(), game.dim_phi()));
    let d0 = init.dist_sq(&reference).sqrt();
    if opts.diverge_bound.is_nan() || opts.diverge_bound <= d0 {
        return Err(Error::Config(format!(
            "diverge_bound {} must exceed the initial distance {d0}",
            opts.diverge_bound
        )));
    }

    let mut traj = Trajectory {
        record_iters: Vec::new(),
        points: Vec::new(),
        dist: Vec::new(),
        grad_norms: Vec::new(),
        stop_reason: StopReason::MaxIters,
        iters: 0,
    };
    let mut state = MethodState::new(init);
    loop {
        let t = state.step_count;
        let z = &state.current;
        let d = z.dist_sq(&reference);
        traj.dist.push(d);
        traj.grad_norms
            .push(signed_gradient_unchecked(game, z).norm());

        let stop = if !d.is_finite() || d.sqrt() >= opts.diverge_bound {
            Some(StopReason::Diverged)
        } else if d.sqrt() <= opts.tol {
            Some(StopReason::TolReached)
        } else if t >= opts.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        if stop.is_some() || t.is_multiple_of(opts.stride) {
            traj.record_iters.push(t);
            traj.points.push(z.clone());
        }
        if let Some(reason) = stop {
            traj.stop_reason = reason;
            traj.iters = t;
            return Ok(traj);
        }

        state = match step(game, &state, cfg) {
            Ok(next) => next,
            Err(Error::NonFinite { .. }) => {
                traj.stop_reason = StopReason::Diverged;
                traj.iters = t;
                if traj.record_iters.last() != Some(&t) {
                    traj.record_iters.push(t);
                    traj.points.push(state.current.clone());
                }
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{g2_game, random_bilinear, scalar_bilinear};

    fn one_one() -> JointPoint {
        JointPoint::from_slices(&[1.0], &[1.0])
    }

    #[test]
    fn ppca_contracts_at_sqrt_half() {
        let traj = run(
            &scalar_bilinear(),
            &MethodConfig::ppca(1.0, 0.1, 0.3),
            one_one(),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::TolReached);
        for r in traj.step_ratios() {
            assert!((r - 0.5f64.sqrt()).abs() <= 1e-9, "{r}");
        }
    }

    #[test]
    fn gda_diverges_at_sqrt_1_01() {
        let opts = RunOptions {
            diverge_bound: 1e6,
            max_iters: 100_000,
            ..RunOptions::default()
        };
        let traj = run(
            &scalar_bilinear(),
            &MethodConfig::gda(0.1),
            one_one(),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::Diverged);
        for r in traj.step_ratios() {
            assert!((r - 1.01f64.sqrt()).abs() <= 1e-9, "{r}");
        }
    }

    #[test]
    fn start_at_critical_point() {
        let traj = run(
            &g2_game(),
            &MethodConfig::ppca(1.0, 0.1, 0.3),
            JointPoint::zeros(1, 1),
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::TolReached);
        assert_eq!(traj.iters, 0);
        assert_eq!(traj.points.len(), 1);
    }

    #[test]
    fn max_iters_and_lengths() {
        let opts = RunOptions {
            max_iters: 25,
            ..RunOptions::default()
        };
        let traj = run(
            &scalar_bilinear(),
            &MethodConfig::agda(0.1),
            one_one(),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::MaxIters);
        assert_eq!(traj.iters, 25);
        assert_eq!(traj.points.len(), 26);
        assert_eq!(traj.dist.len(), 26);
        assert_eq!(traj.grad_norms.len(), 26);
    }

    #[test]
    fn stride_keeps_all_distances() {
        let opts = RunOptions {
            max_iters: 25,
            stride: 10,
            ..RunOptions::default()
        };
        let traj = run(
            &scalar_bilinear(),
            &MethodConfig::agda(0.1),
            one_one(),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.record_iters, vec![0, 10, 20, 25]);
        assert_eq!(traj.dist.len(), 26);
    }

    #[test]
    fn preconditions() {
        let g = scalar_bilinear();
        let cfg = MethodConfig::gda(0.1);
        let bad = [
            RunOptions {
                max_iters: 0,
                ..RunOptions::default()
            },
            RunOptions {
                tol: 0.0,
                ..RunOptions::default()
            },
            RunOptions {
                diverge_bound: 1.0,
                ..RunOptions::default()
            },
        ];
        for opts in bad {
            assert!(matches!(
                run(&g, &cfg, one_one(), &opts),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn overflow_is_diverged_not_error() {
        let opts = RunOptions {
            diverge_bound: f64::INFINITY,
            max_iters: 100_000,
            ..RunOptions::default()
        };
        let traj = run(&g2_game(), &MethodConfig::gda(10.0), one_one(), &opts).unwrap();
        assert_eq!(traj.stop_reason, StopReason::Diverged);
    }

    #[test]
    fn csv_round_trip_reproduces_distances() {
        let g = random_bilinear(3, 4, None);
        let init = JointPoint::from_slices(&[1.0, -2.0, 0.5], &[0.25, 1.0, -1.0]);
        let traj = run(
            &g,
            &MethodConfig::extra_gradient(0.1),
            init,
            &RunOptions::default(),
        )
        .unwrap();
        let text = traj.to_csv_string();
        assert!(
            text.starts_with("iter,dist_sq,grad_norm,theta_0,theta_1,theta_2,phi_0,phi_1,phi_2\n")
        );
        let rows = parse_trajectory_csv(&text).unwrap();
        assert_eq!(rows.len(), traj.points.len());
        for (row, z) in rows.iter().zip(&traj.points) {
            assert_eq!(&row.point, z);
            let recomputed = row.point.norm_sq();
            assert!((recomputed - row.dist_sq).abs() <= 1e-12 * row.dist_sq.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let g = random_bilinear(4, 8, None);
        let init = JointPoint::from_slices(&[1.0, -2.0, 0.5, 0.1], &[0.25, 1.0, -1.0, 3.0]);
        let cfg = MethodConfig::grad_aca(0.05, 0.1);
        let a = run(&g, &cfg, init.clone(), &RunOptions::default()).unwrap();
        let b = run(&g, &cfg, init, &RunOptions::default()).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }
}
