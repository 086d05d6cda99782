//! Cross-method reductions on bilinear games, checked by running both sides.

use serde::Serialize;

use super::config::{MethodConfig, PerPlayerRates};
use super::step::{step, MethodState};
use crate::error::{Error, Result};
use crate::game::{signed_gradient_unchecked, Game, JointPoint};
use crate::games::BilinearGame;

/// Rates used for each pair of the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceRates {
    /// MPM predictive rate, matched by Grad-SCA's `beta_i`.
    pub mpm_gamma: f64,
    /// MPM gradient rate, matched by Grad-SCA's `alpha_i + beta_i`.
    pub mpm_beta: f64,
    pub ogda_gamma: f64,
    pub eg_gamma: f64,
}

impl Default for EquivalenceRates {
    fn default() -> Self {
        Self {
            mpm_gamma: 0.05,
            mpm_beta: 0.2,
            ogda_gamma: 0.15,
            eg_gamma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDeviation {
    pub pair: &'static str,
    pub max_deviation: f64,
    /// Largest iterate norm seen on either side.
    pub scale: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub steps: usize,
    pub pairs: Vec<PairDeviation>,
}

impl EquivalenceReport {
    pub fn max_relative(&self) -> f64 {
        self.pairs.iter().map(|p| p.relative).fold(0.0, f64::max)
    }
}

/// MPM in its two-step form: the predictive point becomes `z_1` and then
/// `z_{k+2} = z_{k+1} + beta g(z_{k+1}) - gamma g(z_k)`. Returns `z_0..=z_steps`.
pub fn mpm_two_step_trajectory<G: Game + ?Sized>(
    game: &G,
    init: &JointPoint,
    gamma: f64,
    beta: f64,
    steps: usize,
) -> Vec<JointPoint> {
    let m = init.theta.len();
    let mut zs = vec![init.clone()];
    let mut g_prev = signed_gradient_unchecked(game, init).vec;
    if steps == 0 {
        return zs;
    }
    let z1 = init.stacked() + &g_prev * gamma;
    zs.push(JointPoint::from_stacked(&z1, m));
    for _ in 1..steps {
        let z = zs.last().unwrap();
        let g = signed_gradient_unchecked(game, z).vec;
        let next = z.stacked() + &g * beta - &g_prev * gamma;
        zs.push(JointPoint::from_stacked(&next, m));
        g_prev = g;
    }
    zs
}

fn run_steps<G: Game + ?Sized>(
    game: &G,
    mut state: MethodState,
    cfg: &MethodConfig,
    steps: usize,
) -> Result<Vec<JointPoint>> {
    let mut zs = vec![state.current.clone()];
    for _ in 0..steps {
        state = step(game, &state, cfg)?;
        zs.push(state.current.clone());
    }
    Ok(zs)
}

fn compare(pair: &'static str, a: &[JointPoint], b: &[JointPoint]) -> PairDeviation {
    let max_deviation = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.dist_sq(y).sqrt())
        .fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(JointPoint::norm).fold(0.0, f64::max);
    PairDeviation {
        pair,
        max_deviation,
        scale,
        relative: if scale > 0.0 {
            max_deviation / scale
        } else {
            max_deviation
        },
    }
}

/// Runs the three reductions for `steps` iterations:
/// MPM two-step form vs Grad-SCA (`beta_i = gamma`, `alpha_i + beta_i = beta`),
/// MPM(`gamma`, `2 gamma`) vs OGDA, and PPCA(`alpha = beta = gamma`) vs extra-gradient.
pub fn equivalence_report(
    game: &BilinearGame,
    init: &JointPoint,
    steps: usize,
    rates: &EquivalenceRates,
) -> Result<EquivalenceReport> {
    game.check_dims(init)?;
    if !game.full_rank() || !game.is_square() {
        return Err(Error::NotFullRankSquare("equivalence report".into()));
    }
    let (g, b) = (rates.mpm_gamma, rates.mpm_beta);
    if b.is_nan() || g.is_nan() || b <= g {
        return Err(Error::Config(format!(
            "MPM/Grad-SCA pairing needs beta > gamma so that alpha_i = beta - gamma is positive (got gamma={g}, beta={b})"
        )));
    }

    let mpm = mpm_two_step_trajectory(game, init, g, b, steps);
    let sca_cfg = MethodConfig::grad_sca(0.0, 0.0).with_per_player(PerPlayerRates {
        alpha1: b - g,
        alpha2: b - g,
        beta1: g,
        beta2: g,
    });
    let mut sca = vec![init.clone()];
    if steps > 0 {
        let state = MethodState {
            current: mpm[1].clone(),
            prev_grad_theta: Some(game.grad_theta(init)),
            prev_grad_phi: Some(game.grad_phi(init)),
            step_count: 1,
        };
        sca.extend(run_steps(game, state, &sca_cfg, steps - 1)?);
    }

    let ogda = run_steps(
        game,
        MethodState::new(init.clone()),
        &MethodConfig::ogda(rates.ogda_gamma),
        steps,
    )?;
    let mpm_2g = run_steps(
        game,
        MethodState::new(init.clone()),
        &MethodConfig::mpm(rates.ogda_gamma, 2.0 * rates.ogda_gamma),
        steps,
    )?;

    let e = rates.eg_gamma;
    let ppca = run_steps(
        game,
        MethodState::new(init.clone()),
        &MethodConfig::ppca(e, e, e),
        steps,
    )?;
    let eg = run_steps(
        game,
        MethodState::new(init.clone()),
        &MethodConfig::extra_gradient(e),
        steps,
    )?;

    Ok(EquivalenceReport {
        steps,
        pairs: vec![
            compare("mpm_vs_grad_sca", &mpm, &sca),
            compare("mpm_2gamma_vs_ogda", &mpm_2g, &ogda),
            compare("ppca_vs_extra_gradient", &ppca, &eg),
        ],
    })
}
