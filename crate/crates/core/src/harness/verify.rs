use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Outcome, EXIT_OK, EXIT_VERIFY};
use crate::dynamics::{
    equivalence_report, gda_step, ppca_step, EquivalenceRates, MethodConfig, MethodState,
};
use crate::error::{Error, Result};
use crate::game::{project, signed_gradient, JointPoint, DEFAULT_EPS_PROJ};
use crate::games::{g2_game, random_bilinear, scalar_bilinear, BilinearGame, QuadraticGame};
use crate::gradcheck::check_gradients;
use crate::spectral::{eig_extremes, ppca_iteration_matrix, verify_contraction};

pub const DEFAULT_SIZES: [usize; 4] = [1, 2, 5, 10];

const GAMES_PER_SIZE: usize = 5;
const STATES_PER_GAME: usize = 20;
const TRAJECTORY_STEPS: usize = 100;

/// Deliberate mutations used to confirm the suite catches broken code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The projection helper returns the negated projection.
    ProjectionSign,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection-sign" => Ok(Fault::ProjectionSign),
            other => Err(Error::Config(format!(
                "unknown fault `{other}`; known: projection-sign"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: DEFAULT_SIZES.to_vec(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let sizes: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        writeln!(s, "verify seed={} sizes=[{}]", self.seed, sizes.join(",")).unwrap();
        for c in &self.checks {
            writeln!(
                s,
                "{:<20} {} cases={:<5} max_residual={:.3e} tol={:.0e}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.cases,
                c.max_residual,
                c.tol
            )
            .unwrap();
        }
        if self.passed() {
            writeln!(s, "result: PASS ({} checks)", self.checks.len()).unwrap();
        } else {
            writeln!(s, "result: FAIL ({})", self.failed().join(", ")).unwrap();
        }
        s
    }
}

type ProjectFn = fn(&DVector<f64>, &DVector<f64>, f64) -> Result<DVector<f64>>;

fn sign_flipped_project(v: &DVector<f64>, u: &DVector<f64>, eps: f64) -> Result<DVector<f64>> {
    project(v, u, eps).map(|p| -p)
}

/// Independent stream per (check, size) so adding sizes leaves other draws unchanged.
fn rng_for(seed: u64, check: u64, n: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (check << 40) ^ n as u64)
}

fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn games_for(rng: &mut ChaCha8Rng, n: usize) -> Vec<BilinearGame> {
    (0..GAMES_PER_SIZE)
        .map(|_| random_bilinear(n, rng.random(), None))
        .collect()
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm() * b.norm();
    if scale == 0.0 {
        0.0
    } else {
        a.dot(b).abs() / scale
    }
}

struct Acc {
    cases: usize,
    max: f64,
    ok: bool,
}

impl Acc {
    fn new() -> Self {
        Self {
            cases: 0,
            max: 0.0,
            ok: true,
        }
    }

    /// Records a residual; NaN counts as a failure.
    fn push(&mut self, r: f64, tol: f64) {
        self.cases += 1;
        if r.is_nan() || r > tol {
            self.ok = false;
        }
        self.max = if r.is_nan() {
            f64::NAN
        } else {
            self.max.max(r)
        };
    }

    fn finish(self, name: &'static str, tol: f64) -> CheckResult {
        CheckResult {
            name,
            cases: self.cases,
            max_residual: self.max,
            tol,
            passed: self.ok,
        }
    }
}

/// The centripetal term on a bilinear game is orthogonal to the signed
/// gradient, so its projection vanishes. Also self-tests the projection
/// helper on generic vectors, where a broken projection cannot hide.
fn check_projection(opts: &VerifyOptions, pj: ProjectFn) -> Result<CheckResult> {
    const TOL: f64 = 1e-10;
    let mut acc = Acc::new();
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, 1, n);
        for game in games_for(&mut rng, n) {
            for _ in 0..STATES_PER_GAME {
                let z = JointPoint::new(normal_vec(&mut rng, n), normal_vec(&mut rng, n));
                let gamma = rng.random_range(0.05..1.0);
                let g = signed_gradient(&game, &z)?.vec;
                let half = JointPoint::from_stacked(&(z.stacked() + &g * gamma), n);
                let delta = signed_gradient(&game, &half)?.vec - &g;
                let p = pj(&delta, &g, DEFAULT_EPS_PROJ)?;
                let dn = delta.norm();
                acc.push(cosine(&delta, &g), TOL);
                acc.push(if dn > 0.0 { p.norm() / dn } else { 0.0 }, TOL);

                let v = normal_vec(&mut rng, 2 * n);
                let u = normal_vec(&mut rng, 2 * n);
                let pv = pj(&v, &u, DEFAULT_EPS_PROJ)?;
                acc.push((&v - &pv).dot(&u).abs() / (v.norm() * u.norm()), TOL);
                let again = pj(&pv, &u, DEFAULT_EPS_PROJ)?;
                acc.push((&again - &pv).norm() / v.norm(), TOL);
            }
        }
    }
    Ok(acc.finish("projection_vanishes", TOL))
}

fn check_gda_orthogonality(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-10;
    let mut acc = Acc::new();
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, 2, n);
        for game in games_for(&mut rng, n) {
            let (_, smax) = game.singular_range();
            let cfg = MethodConfig::gda(0.5 / smax);
            let mut state = MethodState::new(JointPoint::new(
                normal_vec(&mut rng, n),
                normal_vec(&mut rng, n),
            ));
            let mut g = signed_gradient(&game, &state.current)?.vec;
            for _ in 0..TRAJECTORY_STEPS {
                state = gda_step(&game, &state, &cfg)?;
                let g_next = signed_gradient(&game, &state.current)?.vec;
                acc.push(cosine(&(&g_next - &g), &g), TOL);
                g = g_next;
            }
        }
    }
    Ok(acc.finish("gda_orthogonality", TOL))
}

struct LinearDraw {
    game: BilinearGame,
    gamma: f64,
    alpha: f64,
    beta: f64,
    z: JointPoint,
}

fn linear_draws(opts: &VerifyOptions, check: u64) -> Vec<LinearDraw> {
    let mut out = Vec::new();
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, check, n);
        for game in games_for(&mut rng, n) {
            let gamma = rng.random_range(0.0..2.0);
            let alpha = rng.random_range(0.0..1.0);
            let beta = rng.random_range(0.0..2.0);
            let z = JointPoint::new(normal_vec(&mut rng, n), normal_vec(&mut rng, n));
            out.push(LinearDraw {
                game,
                gamma,
                alpha,
                beta,
                z,
            });
        }
    }
    out
}

fn check_block_diagonality(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-12;
    let mut acc = Acc::new();
    for d in linear_draws(opts, 3) {
        let k = ppca_iteration_matrix(d.game.a(), d.gamma, d.alpha, d.beta)?;
        acc.push(k.block_residual, TOL);
    }
    Ok(acc.finish("block_diagonality", TOL))
}

fn check_linear_dynamics(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-12;
    let mut acc = Acc::new();
    for d in linear_draws(opts, 4) {
        let k = ppca_iteration_matrix(d.game.a(), d.gamma, d.alpha, d.beta)?;
        let cfg = MethodConfig::ppca(d.gamma, d.alpha, d.beta);
        let next = ppca_step(&d.game, &MethodState::new(d.z.clone()), &cfg)?.current;
        let expected = k.apply(&d.z);
        let scale = expected.norm().max(next.norm());
        acc.push(
            if scale > 0.0 {
                next.dist_sq(&expected).sqrt() / scale
            } else {
                0.0
            },
            TOL,
        );
    }
    Ok(acc.finish("linear_dynamics", TOL))
}

/// PPCA at the prescribed rates on games with controlled conditioning:
/// per-step contraction, `|z_T| <= eps` at the iteration bound, and the
/// trajectory equal to `K^t z_0`.
fn check_contraction(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-10;
    let log_ratio = 1e6f64.ln();
    let mut acc = Acc::new();
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, 5, n);
        for cond in [1.5, 3.0] {
            let game = random_bilinear(n, rng.random(), Some(cond));
            let (lmin, lmax) = eig_extremes(game.a())?;
            let alpha = 0.5 * lmin * lmax.sqrt() / (lmax * lmax);
            let cfg = MethodConfig::ppca(1.0, alpha, lmin / (lmax * lmax));
            let init = JointPoint::new(normal_vec(&mut rng, n), normal_vec(&mut rng, n));
            let r = verify_contraction(&game, &cfg, &init, 0, Some(log_ratio))?;
            let ratio_excess = (r.max_ratio - r.contraction).max(0.0);
            let eps_excess = match (r.norm_at_t_bound, r.epsilon) {
                (Some(norm), Some(eps)) if eps > 0.0 => ((norm - eps) / eps).max(0.0),
                _ => 0.0,
            };
            let residual = r.max_linear_deviation.max(ratio_excess).max(eps_excess);
            acc.push(residual, TOL);
            acc.ok &= r.passed();
        }
    }
    Ok(acc.finish("contraction", TOL))
}

fn check_equivalence(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-10;
    let mut acc = Acc::new();
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, 6, n);
        for game in games_for(&mut rng, n).into_iter().take(2) {
            let init = JointPoint::new(normal_vec(&mut rng, n), normal_vec(&mut rng, n));
            let report =
                equivalence_report(&game, &init, TRAJECTORY_STEPS, &EquivalenceRates::default())?;
            for p in &report.pairs {
                acc.push(p.relative, TOL);
            }
        }
    }
    Ok(acc.finish("equivalence", TOL))
}

fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> Result<QuadraticGame> {
    let sym = |rng: &mut ChaCha8Rng| {
        let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&b + b.transpose()) * 0.5
    };
    let p = sym(rng);
    let q = sym(rng);
    let r = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    QuadraticGame::new(p, q, r)
}

fn check_gradient_oracle(opts: &VerifyOptions) -> Result<CheckResult> {
    const TOL: f64 = 1e-5;
    const SAMPLES: usize = 10;
    let mut acc = Acc::new();
    acc.push(
        check_gradients(&scalar_bilinear(), SAMPLES, opts.seed, TOL)?.max_rel_deviation,
        TOL,
    );
    acc.push(
        check_gradients(&g2_game(), SAMPLES, opts.seed, TOL)?.max_rel_deviation,
        TOL,
    );
    for &n in &opts.sizes {
        let mut rng = rng_for(opts.seed, 7, n);
        let bil = random_bilinear(n, rng.random(), None);
        let quad = random_quadratic(&mut rng, n)?;
        for report in [
            check_gradients(&bil, SAMPLES, rng.random(), TOL)?,
            check_gradients(&quad, SAMPLES, rng.random(), TOL)?,
        ] {
            acc.push(
                if report.passed {
                    report.max_rel_deviation
                } else {
                    f64::NAN
                },
                TOL,
            );
        }
    }
    Ok(acc.finish("gradient_oracle", TOL))
}

/// Runs the invariant suite over seeded random games at each size.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.sizes.is_empty() || opts.sizes.contains(&0) {
        return Err(Error::Config(
            "verify sizes must be a non-empty list of positive integers".into(),
        ));
    }
    let pj: ProjectFn = match opts.fault {
        Some(Fault::ProjectionSign) => sign_flipped_project,
        None => project,
    };
    let checks = vec![
        check_projection(opts, pj)?,
        check_gda_orthogonality(opts)?,
        check_block_diagonality(opts)?,
        check_linear_dynamics(opts)?,
        check_contraction(opts)?,
        check_equivalence(opts)?,
        check_gradient_oracle(opts)?,
    ];
    Ok(VerifyReport {
        seed: opts.seed,
        sizes: opts.sizes.clone(),
        checks,
    })
}

/// Exit 0 when every check passes, 3 otherwise.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<Outcome> {
    let report = run_verify(opts)?;
    Ok(Outcome {
        code: if report.passed() {
            EXIT_OK
        } else {
            EXIT_VERIFY
        },
        stdout: report.render(),
    })
}
