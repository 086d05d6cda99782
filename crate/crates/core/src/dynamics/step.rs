//! One-step update rules. Every rule is a pure function `state -> state`.
//!
//! Rules are written in the stacked coordinates `z = (theta; phi)` where the
//! signed gradient `g(z) = (-grad_theta V, grad_phi V)` is an ascent-descent
//! direction: `z + a * g(z)` is a simultaneous GDA step of size `a`.

use nalgebra::DVector;

use super::config::{Method, MethodConfig};
use crate::error::{Error, Result};
use crate::game::{project, signed_gradient_unchecked, Game, JointPoint};

/// Iterate plus the gradient history Grad-SCA/ACA need.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodState {
    pub current: JointPoint,
    /// `grad_theta V(theta_{t-1}, phi_{t-1})`.
    pub prev_grad_theta: Option<DVector<f64>>,
    /// Grad-SCA: `grad_phi V(theta_{t-1}, phi_{t-1})`;
    /// Grad-ACA: `grad_phi V(theta_t, phi_{t-1})`.
    pub prev_grad_phi: Option<DVector<f64>>,
    pub step_count: usize,
}

impl MethodState {
    pub fn new(init: JointPoint) -> Self {
        Self {
            current: init,
            prev_grad_theta: None,
            prev_grad_phi: None,
            step_count: 0,
        }
    }

    fn advance(&self, next: JointPoint) -> Result<MethodState> {
        if !next.is_finite() {
            return Err(Error::NonFinite {
                step: self.step_count,
            });
        }
        Ok(MethodState {
            current: next,
            prev_grad_theta: None,
            prev_grad_phi: None,
            step_count: self.step_count + 1,
        })
    }
}

fn signed<G: Game + ?Sized>(game: &G, z: &JointPoint) -> DVector<f64> {
    signed_gradient_unchecked(game, z).vec
}

fn offset(z: &JointPoint, dir: &DVector<f64>, scale: f64) -> JointPoint {
    let m = z.theta.len();
    JointPoint::from_stacked(&(z.stacked() + dir * scale), m)
}

/// Dispatches on `cfg.method`.
pub fn step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    match cfg.method {
        Method::Gda => gda_step(game, state, cfg),
        Method::Agda => agda_step(game, state, cfg),
        Method::Mpm => mpm_step(game, state, cfg),
        Method::GradSca => grad_sca_step(game, state, cfg),
        Method::GradAca => grad_aca_step(game, state, cfg),
        Method::Ogda => ogda_step(game, state, cfg),
        Method::ExtraGradient => eg_step(game, state, cfg),
        Method::Ppca => ppca_step(game, state, cfg),
        Method::Appca => appca_step(game, state, cfg),
    }
}

/// Simultaneous gradient descent ascent with rate `alpha`.
pub fn gda_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let z = &state.current;
    state.advance(offset(z, &signed(game, z), cfg.alpha))
}

/// Alternating GDA: phi's gradient is taken at the updated theta.
pub fn agda_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let z = &state.current;
    let theta = &z.theta - game.grad_theta(z) * cfg.alpha;
    let half = JointPoint::new(theta, z.phi.clone());
    let phi = &z.phi + game.grad_phi(&half) * cfg.alpha;
    state.advance(JointPoint::new(half.theta, phi))
}

/// Predictive step of size `gamma`, then a step of size `beta` from the
/// original point along the signed gradient at the predicted point.
pub fn mpm_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    lookahead_step(game, state, cfg.gamma, cfg.beta)
}

/// OGDA as the `beta = 2 gamma` instance of MPM.
pub fn ogda_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    lookahead_step(game, state, cfg.gamma, 2.0 * cfg.gamma)
}

/// Extra-gradient: predictive and corrective steps share `gamma`.
pub fn eg_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    lookahead_step(game, state, cfg.gamma, cfg.gamma)
}

fn lookahead_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    gamma: f64,
    beta: f64,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let z = &state.current;
    let half = offset(z, &signed(game, z), gamma);
    if !half.is_finite() {
        return Err(Error::NonFinite {
            step: state.step_count,
        });
    }
    state.advance(offset(z, &signed(game, &half), beta))
}

/// Simultaneous centripetal acceleration.
///
/// On the first step the history is taken equal to the current gradients, so
/// the centripetal term vanishes and the step is plain GDA.
pub fn grad_sca_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    cfg.validate()?;
    game.check_dims(&state.current)?;
    let r = cfg.player_rates();
    let z = &state.current;

    let gt = game.grad_theta(z);
    let gp = game.grad_phi(z);
    let prev_t = state.prev_grad_theta.as_ref().unwrap_or(&gt);
    let prev_p = state.prev_grad_phi.as_ref().unwrap_or(&gp);

    let theta = &z.theta - centripetal(&gt, prev_t, r.alpha1, r.beta1) * r.alpha1;
    let phi = &z.phi + centripetal(&gp, prev_p, r.alpha2, r.beta2) * r.alpha2;

    let mut next = state.advance(JointPoint::new(theta, phi))?;
    next.prev_grad_theta = Some(gt);
    next.prev_grad_phi = Some(gp);
    Ok(next)
}

/// Alternating centripetal acceleration: phi's terms use the updated theta.
pub fn grad_aca_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    cfg.validate()?;
    game.check_dims(&state.current)?;
    let r = cfg.player_rates();
    let z = &state.current;

    let gt = game.grad_theta(z);
    let prev_t = state.prev_grad_theta.as_ref().unwrap_or(&gt);
    let theta = &z.theta - centripetal(&gt, prev_t, r.alpha1, r.beta1) * r.alpha1;

    let mixed = JointPoint::new(theta, z.phi.clone());
    let gp = game.grad_phi(&mixed);
    let prev_p = state.prev_grad_phi.as_ref().unwrap_or(&gp);
    let phi = &z.phi + centripetal(&gp, prev_p, r.alpha2, r.beta2) * r.alpha2;

    let mut next = state.advance(JointPoint::new(mixed.theta, phi))?;
    next.prev_grad_theta = Some(gt);
    next.prev_grad_phi = Some(gp);
    Ok(next)
}

/// `G = g + (beta/alpha) (g - g_prev)`.
fn centripetal(g: &DVector<f64>, prev: &DVector<f64>, alpha: f64, beta: f64) -> DVector<f64> {
    if beta == 0.0 {
        return g.clone();
    }
    g + (g - prev) * (beta / alpha)
}

struct Prediction {
    z: DVector<f64>,
    grad: DVector<f64>,
    delta: DVector<f64>,
}

fn predict<G: Game + ?Sized>(game: &G, state: &MethodState, gamma: f64) -> Result<Prediction> {
    let z = &state.current;
    let grad = signed(game, z);
    let half = offset(z, &grad, gamma);
    if !half.is_finite() {
        return Err(Error::NonFinite {
            step: state.step_count,
        });
    }
    let delta = signed(game, &half) - &grad;
    Ok(Prediction {
        z: z.stacked(),
        grad,
        delta,
    })
}

/// Predictive projection centripetal acceleration:
/// `z' = z + alpha g(z) + beta (D - proj_{g(z)} D)` with
/// `D = g(z + gamma g(z)) - g(z)`.
pub fn ppca_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let p = predict(game, state, cfg.gamma)?;
    let centripetal = &p.delta - project(&p.delta, &p.grad, cfg.eps_proj)?;
    let next = &p.z + &p.grad * cfg.alpha + centripetal * cfg.beta;
    state.advance(JointPoint::from_stacked(&next, state.current.theta.len()))
}

/// PPCA with the projection dropped; equal to `ppca_step` on bilinear games.
pub fn ppca_unprojected_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let p = predict(game, state, cfg.gamma)?;
    let next = &p.z + &p.grad * cfg.alpha + &p.delta * cfg.beta;
    state.advance(JointPoint::from_stacked(&next, state.current.theta.len()))
}

/// Alternating PPCA. The alpha-term of phi uses `grad_phi V(theta_{t+1}, phi_t)`
/// and the centripetal term is the unprojected gradient difference. On
/// bilinear games the projection vanishes, so this matches PPCA's
/// centripetal term there; on other games the two differ (g2 from `(1, 1)`
/// diverges under this rule but converges with the projection kept).
pub fn appca_step<G: Game + ?Sized>(
    game: &G,
    state: &MethodState,
    cfg: &MethodConfig,
) -> Result<MethodState> {
    game.check_dims(&state.current)?;
    let p = predict(game, state, cfg.gamma)?;
    let centripetal = &p.delta;
    let m = state.current.theta.len();
    let n = state.current.phi.len();

    let theta = p.z.rows(0, m) + p.grad.rows(0, m) * cfg.alpha + centripetal.rows(0, m) * cfg.beta;
    let mixed = JointPoint::new(theta, state.current.phi.clone());
    let phi =
        &state.current.phi + game.grad_phi(&mixed) * cfg.alpha + centripetal.rows(m, n) * cfg.beta;
    state.advance(JointPoint::new(mixed.theta, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{g2_game, random_bilinear, scalar_bilinear};
    use approx::assert_relative_eq;

    fn one_one() -> MethodState {
        MethodState::new(JointPoint::from_slices(&[1.0], &[1.0]))
    }

    fn pair(s: &MethodState) -> (f64, f64) {
        (s.current.theta[0], s.current.phi[0])
    }

    fn assert_pair(s: &MethodState, expected: (f64, f64), tol: f64) {
        let (t, p) = pair(s);
        assert!(
            (t - expected.0).abs() <= tol && (p - expected.1).abs() <= tol,
            "got ({t}, {p}), expected {expected:?}"
        );
    }

    #[test]
    fn gda_examples() {
        let g = scalar_bilinear();
        assert_pair(
            &gda_step(&g, &one_one(), &MethodConfig::gda(0.1)).unwrap(),
            (0.9, 1.1),
            1e-15,
        );
        assert_eq!(
            gda_step(&g, &one_one(), &MethodConfig::gda(0.0))
                .unwrap()
                .current,
            one_one().current
        );
    }

    #[test]
    fn agda_example() {
        let g = scalar_bilinear();
        assert_pair(
            &agda_step(&g, &one_one(), &MethodConfig::agda(0.1)).unwrap(),
            (0.9, 1.09),
            1e-15,
        );
        assert_eq!(
            agda_step(&g, &one_one(), &MethodConfig::agda(0.0))
                .unwrap()
                .current,
            one_one().current
        );
    }

    #[test]
    fn mpm_anchors_at_current_point() {
        let g = scalar_bilinear();
        // half point (0, 2)
        assert_pair(
            &mpm_step(&g, &one_one(), &MethodConfig::mpm(1.0, 0.3)).unwrap(),
            (0.4, 1.0),
            1e-15,
        );
        assert_eq!(
            mpm_step(&g, &one_one(), &MethodConfig::mpm(5.0, 0.0))
                .unwrap()
                .current,
            one_one().current
        );
    }

    #[test]
    fn grad_sca_examples() {
        let g = scalar_bilinear();
        let cfg = MethodConfig::grad_sca(0.1, 0.3);
        assert_pair(
            &grad_sca_step(&g, &one_one(), &cfg).unwrap(),
            (0.9, 1.1),
            1e-15,
        );

        let mut s = one_one();
        s.prev_grad_theta = Some(DVector::from_element(1, 0.0));
        s.prev_grad_phi = Some(DVector::from_element(1, 0.0));
        s.step_count = 1;
        let next = grad_sca_step(&g, &s, &cfg).unwrap();
        assert_pair(&next, (0.6, 1.4), 1e-15);
        assert_eq!(next.prev_grad_theta.unwrap()[0], 1.0);
        assert_eq!(next.prev_grad_phi.unwrap()[0], 1.0);
    }

    #[test]
    fn grad_sca_rejects_zero_alpha() {
        let err = grad_sca_step(
            &scalar_bilinear(),
            &one_one(),
            &MethodConfig::grad_sca(0.0, 0.3),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn grad_aca_examples() {
        let g = scalar_bilinear();
        assert_pair(
            &grad_aca_step(&g, &one_one(), &MethodConfig::grad_aca(0.1, 0.0)).unwrap(),
            (0.9, 1.09),
            1e-15,
        );
        assert_pair(
            &grad_aca_step(&g, &one_one(), &MethodConfig::grad_aca(0.1, 0.3)).unwrap(),
            (0.9, 1.09),
            1e-15,
        );

        let mut s = one_one();
        s.prev_grad_theta = Some(DVector::from_element(1, 0.0));
        s.prev_grad_phi = Some(DVector::from_element(1, 0.0));
        s.step_count = 1;
        let next = grad_aca_step(&g, &s, &MethodConfig::grad_aca(0.1, 0.3)).unwrap();
        assert_pair(&next, (0.6, 1.24), 1e-15);
        // phi history is grad_phi at (theta_{t+1}, phi_t) = theta_{t+1}
        assert_relative_eq!(next.prev_grad_phi.unwrap()[0], 0.6, max_relative = 1e-15);
    }

    #[test]
    fn history_only_after_first_step() {
        let g = scalar_bilinear();
        let s0 = one_one();
        assert!(s0.prev_grad_theta.is_none());
        let s1 = step(&g, &s0, &MethodConfig::grad_sca(0.1, 0.3)).unwrap();
        assert!(s1.prev_grad_theta.is_some() && s1.prev_grad_phi.is_some());
        let s1 = step(&g, &s0, &MethodConfig::ppca(1.0, 0.1, 0.3)).unwrap();
        assert!(s1.prev_grad_theta.is_none());
        assert_eq!(s1.step_count, 1);
    }

    #[test]
    fn ppca_on_scalar_bilinear() {
        let s = ppca_step(
            &scalar_bilinear(),
            &one_one(),
            &MethodConfig::ppca(1.0, 0.1, 0.3),
        )
        .unwrap();
        assert_pair(&s, (0.6, 0.8), 1e-15);
    }

    #[test]
    fn ppca_on_g2_uses_projection() {
        // Delta - proj = (-48/17, -80/17)
        let s = ppca_step(&g2_game(), &one_one(), &MethodConfig::ppca(1.0, 0.1, 0.3)).unwrap();
        let expected = (
            1.0 - 1.0 + 0.3 * (-48.0 / 17.0),
            1.0 + 0.6 + 0.3 * (-80.0 / 17.0),
        );
        assert_pair(&s, expected, 1e-14);
        assert_pair(&s, (-0.847059, 0.188235), 1e-6);
    }

    #[test]
    fn ppca_with_zero_beta_is_gda() {
        for game in [&g2_game() as &dyn Game, &scalar_bilinear()] {
            for gamma in [0.0, 0.5, 3.0] {
                let a = ppca_step(game, &one_one(), &MethodConfig::ppca(gamma, 0.1, 0.0)).unwrap();
                let b = gda_step(game, &one_one(), &MethodConfig::gda(0.1)).unwrap();
                assert_eq!(a.current, b.current);
            }
        }
    }

    #[test]
    fn appca_examples() {
        let g = scalar_bilinear();
        assert_pair(
            &appca_step(&g, &one_one(), &MethodConfig::appca(1.0, 0.1, 0.3)).unwrap(),
            (0.6, 0.76),
            1e-15,
        );
        let g = random_bilinear(3, 4, None);
        let s = MethodState::new(JointPoint::from_slices(
            &[0.3, -1.0, 2.0],
            &[1.0, 0.5, -0.2],
        ));
        let a = appca_step(&g, &s, &MethodConfig::appca(1.0, 0.0, 0.3)).unwrap();
        let b = ppca_step(&g, &s, &MethodConfig::ppca(1.0, 0.0, 0.3)).unwrap();
        assert!(a.current.dist_sq(&b.current).sqrt() <= 1e-14 * a.current.norm());
    }

    #[test]
    fn appca_on_g2_uses_unprojected_term() {
        let g = g2_game();
        let cfg = MethodConfig::appca(1.0, 0.0, 0.3);
        let a = appca_step(&g, &one_one(), &cfg).unwrap();
        let b = ppca_unprojected_step(&g, &one_one(), &MethodConfig::ppca(1.0, 0.0, 0.3)).unwrap();
        assert_eq!(a.current, b.current);
        // g = (-10, 6), half (-9, 7), delta = (36, -28)
        assert_pair(&a, (1.0 + 0.3 * 36.0, 1.0 - 0.3 * 28.0), 1e-12);
    }

    #[test]
    fn ogda_is_mpm_with_doubled_beta() {
        let g = random_bilinear(3, 2, None);
        let s = MethodState::new(JointPoint::from_slices(
            &[0.3, -1.0, 2.0],
            &[1.0, 0.5, -0.2],
        ));
        let a = ogda_step(&g, &s, &MethodConfig::ogda(0.15)).unwrap();
        let b = mpm_step(&g, &s, &MethodConfig::mpm(0.15, 0.3)).unwrap();
        assert_eq!(a.current, b.current);
        assert_pair(
            &ogda_step(&scalar_bilinear(), &one_one(), &MethodConfig::ogda(0.5)).unwrap(),
            (-0.5, 1.5),
            1e-15,
        );
    }

    #[test]
    fn extra_gradient_examples() {
        let g = scalar_bilinear();
        assert_pair(
            &eg_step(&g, &one_one(), &MethodConfig::extra_gradient(0.1)).unwrap(),
            (0.89, 1.09),
            1e-15,
        );
        assert_eq!(
            eg_step(&g, &one_one(), &MethodConfig::extra_gradient(0.0))
                .unwrap()
                .current,
            one_one().current
        );
        let g = random_bilinear(4, 9, None);
        let s = MethodState::new(JointPoint::from_slices(
            &[0.3, -1.0, 2.0, 0.1],
            &[1.0, 0.5, -0.2, 0.7],
        ));
        let a = eg_step(&g, &s, &MethodConfig::extra_gradient(0.1)).unwrap();
        let b = ppca_step(&g, &s, &MethodConfig::ppca(0.1, 0.1, 0.1)).unwrap();
        assert!(a.current.dist_sq(&b.current).sqrt() <= 1e-14 * a.current.norm());
    }

    #[test]
    fn every_rule_is_stationary_at_critical_points() {
        let games: Vec<Box<dyn Game>> = vec![
            Box::new(scalar_bilinear()),
            Box::new(g2_game()),
            Box::new(random_bilinear(3, 1, None)),
        ];
        for game in &games {
            let z = game.known_critical_point().unwrap();
            for method in Method::ALL {
                let cfg = MethodConfig::new(method, 1.0, 0.1, 0.3);
                let s = step(game.as_ref(), &MethodState::new(z.clone()), &cfg).unwrap();
                assert_eq!(s.current, z, "{method}");
                let s2 = step(game.as_ref(), &s, &cfg).unwrap();
                assert_eq!(s2.current, z, "{method}");
            }
        }
    }

    #[test]
    fn non_finite_is_signalled() {
        let s = MethodState::new(JointPoint::from_slices(&[1e300], &[1e300]));
        let err = gda_step(&g2_game(), &s, &MethodConfig::gda(1e10));
        assert!(matches!(err, Err(Error::NonFinite { step: 0 })));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let s = MethodState::new(JointPoint::from_slices(&[1.0, 2.0], &[1.0]));
        assert!(matches!(
            ppca_step(&scalar_bilinear(), &s, &MethodConfig::ppca(1.0, 0.1, 0.3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
