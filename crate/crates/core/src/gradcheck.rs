//! Central finite-difference oracle for a game's analytic gradients.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, JointPoint};

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheckReport {
    pub samples: usize,
    pub max_rel_deviation: f64,
    pub tol: f64,
    pub passed: bool,
    /// Set when the payoff or a gradient was non-finite at a sample.
    pub failure: Option<String>,
}

/// Relative step `1e-6 * (1 + |x|)`.
fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Central differences of the payoff along every coordinate of `z`.
pub fn finite_difference_gradients<G: Game + ?Sized>(
    game: &G,
    z: &JointPoint,
) -> (DVector<f64>, DVector<f64>) {
    let (m, n) = z.dims();
    let mut gt = DVector::zeros(m);
    let mut gp = DVector::zeros(n);
    let mut probe = z.clone();
    for i in 0..m {
        let x = z.theta[i];
        let h = fd_step(x);
        probe.theta[i] = x + h;
        let up = game.payoff(&probe);
        probe.theta[i] = x - h;
        let down = game.payoff(&probe);
        probe.theta[i] = x;
        gt[i] = (up - down) / (2.0 * h);
    }
    for j in 0..n {
        let x = z.phi[j];
        let h = fd_step(x);
        probe.phi[j] = x + h;
        let up = game.payoff(&probe);
        probe.phi[j] = x - h;
        let down = game.payoff(&probe);
        probe.phi[j] = x;
        gp[j] = (up - down) / (2.0 * h);
    }
    (gt, gp)
}

fn rel_deviation(analytic: &DVector<f64>, numeric: &DVector<f64>) -> f64 {
    if analytic.is_empty() {
        return 0.0;
    }
    (analytic - numeric).norm() / numeric.norm().max(1e-6)
}

/// Compares analytic gradients with finite differences at `samples` points
/// drawn from a seeded standard normal.
pub fn check_gradients<G: Game + ?Sized>(
    game: &G,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<GradientCheckReport> {
    if samples == 0 {
        return Err(Error::Config(
            "gradient check needs at least one sample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (game.dim_theta(), game.dim_phi());
    let mut worst = 0.0f64;
    let mut failure = None;

    for s in 0..samples {
        let theta = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let phi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let z = JointPoint::new(theta, phi);

        if !game.payoff(&z).is_finite() {
            failure = Some(format!("non-finite payoff at sample {s}: {z:?}"));
            break;
        }
        let (ft, fp) = finite_difference_gradients(game, &z);
        let (at, ap) = (game.grad_theta(&z), game.grad_phi(&z));
        let dev = rel_deviation(&at, &ft).max(rel_deviation(&ap, &fp));
        if !dev.is_finite() {
            failure = Some(format!(
                "non-finite gradient or payoff near sample {s}: {z:?}"
            ));
            break;
        }
        worst = worst.max(dev);
    }

    let passed = failure.is_none() && worst <= tol;
    Ok(GradientCheckReport {
        samples,
        max_rel_deviation: worst,
        tol,
        passed,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{g2_game, random_bilinear, scalar_bilinear, QuadraticGame};

    /// g2 with grad_theta doubled.
    struct CorruptedG2(QuadraticGame);

    impl Game for CorruptedG2 {
        fn dim_theta(&self) -> usize {
            self.0.dim_theta()
        }
        fn dim_phi(&self) -> usize {
            self.0.dim_phi()
        }
        fn payoff(&self, z: &JointPoint) -> f64 {
            self.0.payoff(z)
        }
        fn grad_theta(&self, z: &JointPoint) -> DVector<f64> {
            self.0.grad_theta(z) * 2.0
        }
        fn grad_phi(&self, z: &JointPoint) -> DVector<f64> {
            self.0.grad_phi(z)
        }
    }

    struct Blowup;

    impl Game for Blowup {
        fn dim_theta(&self) -> usize {
            1
        }
        fn dim_phi(&self) -> usize {
            1
        }
        fn payoff(&self, _: &JointPoint) -> f64 {
            f64::NAN
        }
        fn grad_theta(&self, _: &JointPoint) -> DVector<f64> {
            DVector::zeros(1)
        }
        fn grad_phi(&self, _: &JointPoint) -> DVector<f64> {
            DVector::zeros(1)
        }
    }

    #[test]
    fn exact_gradients_pass() {
        for report in [
            check_gradients(&g2_game(), 50, 1, 1e-5).unwrap(),
            check_gradients(&scalar_bilinear(), 50, 2, 1e-5).unwrap(),
            check_gradients(&random_bilinear(6, 3, None), 50, 3, 1e-5).unwrap(),
        ] {
            assert!(report.passed, "{report:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let report = check_gradients(&CorruptedG2(g2_game()), 20, 1, 1e-5).unwrap();
        assert!(!report.passed);
        assert!(
            (report.max_rel_deviation - 1.0).abs() < 1e-6,
            "{}",
            report.max_rel_deviation
        );
    }

    #[test]
    fn non_finite_payoff_is_reported() {
        let report = check_gradients(&Blowup, 3, 1, 1e-5).unwrap();
        assert!(!report.passed);
        assert!(report.failure.unwrap().contains("sample 0"));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(check_gradients(&g2_game(), 0, 1, 1e-5).is_err());
    }
}
