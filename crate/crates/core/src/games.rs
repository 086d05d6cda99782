//! Concrete games: affine bilinear games, quadratic games such as g2, and
//! seeded random bilinear instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::game::{Game, JointPoint};

/// Relative singular-value threshold for the full-rank test.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular values of `a`, sorted descending.
pub(crate) fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `V(theta, phi) = theta^T A phi + theta^T b + c^T phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGame {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    sigma_min: f64,
    sigma_max: f64,
    rank_tol: f64,
}

/// A centered bilinear game plus the critical point it was shifted by.
#[derive(Debug, Clone)]
pub struct ShiftedGame {
    pub game: BilinearGame,
    pub offset: JointPoint,
}

impl ShiftedGame {
    /// Maps a point of the original game into the shifted coordinates.
    pub fn to_shifted(&self, z: &JointPoint) -> JointPoint {
        JointPoint::new(&z.theta - &self.offset.theta, &z.phi - &self.offset.phi)
    }

    pub fn to_original(&self, z: &JointPoint) -> JointPoint {
        JointPoint::new(&z.theta + &self.offset.theta, &z.phi + &self.offset.phi)
    }
}

impl BilinearGame {
    /// `a` is `m x n`; `b` has length `m`, `c` length `n`. Rate-level
    /// operations additionally require `a` square and full rank.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Config("coupling matrix must be non-empty".into()));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                what: "b",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if c.len() != a.ncols() {
            return Err(Error::DimensionMismatch {
                what: "c",
                expected: a.ncols(),
                got: c.len(),
            });
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config("bilinear game entries must be finite".into()));
        }
        let s = singular_values(&a);
        Ok(Self {
            sigma_max: s[0],
            sigma_min: *s.last().unwrap(),
            a,
            b,
            c,
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    /// The centered game `theta^T A phi`.
    pub fn centered(a: DMatrix<f64>) -> Result<Self> {
        let (m, n) = a.shape();
        Self::new(a, DVector::zeros(m), DVector::zeros(n))
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn is_square(&self) -> bool {
        self.a.is_square()
    }

    pub fn is_centered(&self) -> bool {
        self.b.iter().chain(self.c.iter()).all(|&x| x == 0.0)
    }

    /// Smallest singular value exceeds `rank_tol` times the largest.
    pub fn full_rank(&self) -> bool {
        self.sigma_max > 0.0 && self.sigma_min > self.rank_tol * self.sigma_max
    }

    /// Extreme singular values `(sigma_min, sigma_max)` of `A`.
    pub fn singular_range(&self) -> (f64, f64) {
        (self.sigma_min, self.sigma_max)
    }

    fn require_unique(&self) -> Result<()> {
        if !self.is_square() || !self.full_rank() {
            let ratio = if self.sigma_max > 0.0 && self.is_square() {
                self.sigma_min / self.sigma_max
            } else {
                0.0
            };
            return Err(Error::NoUniqueCriticalPoint { ratio });
        }
        Ok(())
    }

    /// Solves `A phi* + b = 0`, `A^T theta* + c = 0`.
    pub fn critical_point(&self) -> Result<JointPoint> {
        self.require_unique()?;
        let svd = self.a.clone().svd(true, true);
        let eps = self.rank_tol * self.sigma_max;
        let phi = svd
            .solve(&(-&self.b), eps)
            .map_err(|e| Error::Config(format!("critical point solve failed: {e}")))?;
        let svd_t = self.a.transpose().svd(true, true);
        let theta = svd_t
            .solve(&(-&self.c), eps)
            .map_err(|e| Error::Config(format!("critical point solve failed: {e}")))?;
        Ok(JointPoint::new(theta, phi))
    }

    /// Residual norms `(|A phi + b|, |A^T theta + c|)` of the first-order
    /// conditions at `z`.
    pub fn first_order_residuals(&self, z: &JointPoint) -> (f64, f64) {
        (
            (&self.a * &z.phi + &self.b).norm(),
            (self.a.transpose() * &z.theta + &self.c).norm(),
        )
    }

    /// Moves the critical point to the origin: `V(theta, phi) = theta^T A phi`.
    pub fn shift_to_origin(&self) -> Result<ShiftedGame> {
        let offset = self.critical_point()?;
        let game = Self::centered(self.a.clone())?.with_rank_tol(self.rank_tol);
        Ok(ShiftedGame { game, offset })
    }

    /// `M = [[0, -A], [A^T, 0]]` and `s = (-b, c)` with signed gradient `M z + s`.
    pub fn signed_gradient_operator(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (m, n) = self.a.shape();
        let mut op = DMatrix::zeros(m + n, m + n);
        op.view_mut((0, m), (m, n)).copy_from(&(-&self.a));
        op.view_mut((m, 0), (n, m)).copy_from(&self.a.transpose());
        let mut s = DVector::zeros(m + n);
        s.rows_mut(0, m).copy_from(&(-&self.b));
        s.rows_mut(m, n).copy_from(&self.c);
        (op, s)
    }
}

impl Game for BilinearGame {
    fn dim_theta(&self) -> usize {
        self.a.nrows()
    }

    fn dim_phi(&self) -> usize {
        self.a.ncols()
    }

    fn payoff(&self, z: &JointPoint) -> f64 {
        z.theta.dot(&(&self.a * &z.phi)) + z.theta.dot(&self.b) + self.c.dot(&z.phi)
    }

    fn grad_theta(&self, z: &JointPoint) -> DVector<f64> {
        &self.a * &z.phi + &self.b
    }

    fn grad_phi(&self, z: &JointPoint) -> DVector<f64> {
        self.a.tr_mul(&z.theta) + &self.c
    }

    fn known_critical_point(&self) -> Option<JointPoint> {
        if self.is_centered() {
            return Some(JointPoint::zeros(self.a.nrows(), self.a.ncols()));
        }
        self.critical_point().ok()
    }

    fn is_bilinear(&self) -> bool {
        true
    }
}

/// `V(theta, phi) = theta^T P theta + phi^T Q phi + theta^T R phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl QuadraticGame {
    pub fn new(p: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let (m, n) = r.shape();
        if p.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                what: "P rows",
                expected: m,
                got: p.nrows(),
            });
        }
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "Q rows",
                expected: n,
                got: q.nrows(),
            });
        }
        for (name, mat) in [("P", &p), ("Q", &q)] {
            let scale = mat.amax().max(1.0);
            if (mat - mat.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Config(format!("{name} must be symmetric")));
            }
        }
        if p.iter()
            .chain(q.iter())
            .chain(r.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config(
                "quadratic game entries must be finite".into(),
            ));
        }
        Ok(Self { p, q, r })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl Game for QuadraticGame {
    fn dim_theta(&self) -> usize {
        self.r.nrows()
    }

    fn dim_phi(&self) -> usize {
        self.r.ncols()
    }

    fn payoff(&self, z: &JointPoint) -> f64 {
        z.theta.dot(&(&self.p * &z.theta))
            + z.phi.dot(&(&self.q * &z.phi))
            + z.theta.dot(&(&self.r * &z.phi))
    }

    fn grad_theta(&self, z: &JointPoint) -> DVector<f64> {
        &self.p * &z.theta * 2.0 + &self.r * &z.phi
    }

    fn grad_phi(&self, z: &JointPoint) -> DVector<f64> {
        &self.q * &z.phi * 2.0 + self.r.tr_mul(&z.theta)
    }

    // The gradient is linear, so the origin is always critical.
    fn known_critical_point(&self) -> Option<JointPoint> {
        Some(JointPoint::zeros(self.r.nrows(), self.r.ncols()))
    }
}

/// `V(theta, phi) = theta * phi`.
pub fn scalar_bilinear() -> BilinearGame {
    BilinearGame::centered(DMatrix::from_element(1, 1, 1.0)).expect("1x1 identity is a valid game")
}

/// `g2(theta, phi) = 3 theta^2 + phi^2 + 4 theta phi`.
pub fn g2_game() -> QuadraticGame {
    QuadraticGame::new(
        DMatrix::from_element(1, 1, 3.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 4.0),
    )
    .expect("g2 coefficients are valid")
}

/// Seeded centered `n x n` bilinear game with full-rank `A`.
///
/// With `cond_target = Some(k)` the singular values are replaced by values
/// spread log-uniformly over `[1, k]` (both endpoints included), so that
/// `lambda_max(AA^T) / lambda_min(AA^T) = k^2`. For `n = 1` there is a single
/// singular value and the target cannot be honored; it is set to 1.
///
/// # Panics
/// If `n == 0` or `cond_target < 1`.
pub fn random_bilinear(n: usize, seed: u64, cond_target: Option<f64>) -> BilinearGame {
    assert!(n >= 1, "random_bilinear needs n >= 1");
    if let Some(k) = cond_target {
        assert!(
            k.is_finite() && k >= 1.0,
            "cond_target must be >= 1, got {k}"
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));

    match cond_target {
        Some(k) => {
            let svd = a.clone().svd(true, true);
            let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let log_k = k.ln();
            let mut s: Vec<f64> = (0..n)
                .map(|i| match i {
                    0 => 1.0,
                    _ if i == n - 1 => k,
                    _ => (rng.random::<f64>() * log_k).exp(),
                })
                .collect();
            if n == 1 {
                s[0] = 1.0;
            }
            a = &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * &vt;
        }
        None => {
            let mut attempts = 0;
            while {
                let s = singular_values(&a);
                s[n - 1] <= 1e3 * DEFAULT_RANK_TOL * s[0]
            } {
                attempts += 1;
                if attempts > 16 {
                    // clamp the small singular values instead of resampling forever
                    let svd = a.clone().svd(true, true);
                    let floor = 1e-3 * svd.singular_values.max();
                    let s = svd.singular_values.map(|x| x.max(floor));
                    a = svd.u.unwrap() * DMatrix::from_diagonal(&s) * svd.v_t.unwrap();
                    break;
                }
                a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            }
        }
    }
    BilinearGame::centered(a).expect("generated matrix is finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::signed_gradient;
    use approx::assert_relative_eq;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn affine_example() -> BilinearGame {
        BilinearGame::new(
            DMatrix::from_diagonal(&dv(&[2.0, 3.0])),
            dv(&[-2.0, -6.0]),
            dv(&[4.0, 9.0]),
        )
        .unwrap()
    }

    #[test]
    fn critical_point_of_diagonal_game() {
        let z = affine_example().critical_point().unwrap();
        assert_relative_eq!(z.phi, dv(&[1.0, 2.0]), max_relative = 1e-14);
        assert_relative_eq!(z.theta, dv(&[-2.0, -3.0]), max_relative = 1e-14);
    }

    #[test]
    fn critical_point_of_homogeneous_game() {
        let g = BilinearGame::centered(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(g.critical_point().unwrap().norm(), 0.0);
    }

    #[test]
    fn critical_point_of_permuted_game() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = BilinearGame::new(a, dv(&[1.0, 0.0]), dv(&[0.0, 1.0])).unwrap();
        let z = g.critical_point().unwrap();
        assert!((z.phi - dv(&[0.0, -1.0])).norm() < 1e-14);
        assert!((z.theta - dv(&[-1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn rank_deficient_has_no_unique_critical_point() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let g = BilinearGame::new(a, dv(&[1.0, 0.0]), dv(&[0.0, 1.0])).unwrap();
        assert!(!g.full_rank());
        let err = g.critical_point().unwrap_err();
        assert!(err.to_string().contains("no unique critical point"));
        assert!(g.shift_to_origin().is_err());
    }

    #[test]
    fn critical_point_residual_bound() {
        for seed in 0..20 {
            let n = 1 + (seed as usize % 7);
            let base = random_bilinear(n, seed, None);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = BilinearGame::new(base.a().clone(), b.clone(), c.clone()).unwrap();
            let z = g.critical_point().unwrap();
            let (r1, r2) = g.first_order_residuals(&z);
            let bound = 1e-10 * (g.a().norm() * z.norm() + b.norm() + c.norm());
            assert!(
                r1 <= bound && r2 <= bound,
                "seed {seed}: {r1} {r2} > {bound}"
            );
        }
    }

    #[test]
    fn shift_examples() {
        let centered = scalar_bilinear();
        let shifted = centered.shift_to_origin().unwrap();
        assert_eq!(shifted.game, centered);
        assert_eq!(shifted.offset.norm(), 0.0);

        let shifted = affine_example().shift_to_origin().unwrap();
        assert_relative_eq!(
            shifted.offset.theta,
            dv(&[-2.0, -3.0]),
            max_relative = 1e-14
        );
        assert_relative_eq!(shifted.offset.phi, dv(&[1.0, 2.0]), max_relative = 1e-14);
        assert!(shifted.game.is_centered());
        assert!(shifted.game.critical_point().unwrap().norm() <= 1e-12);
    }

    #[test]
    fn shift_preserves_payoff_up_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let base = random_bilinear(n, 5, None);
        let b = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = BilinearGame::new(base.a().clone(), b, c).unwrap();
        let shifted = g.shift_to_origin().unwrap();
        let constant = g.payoff(&shifted.offset);
        for _ in 0..10 {
            let z = JointPoint::new(
                DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
                DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
            );
            let original = g.payoff(&z);
            let via_shift = shifted.game.payoff(&shifted.to_shifted(&z)) + constant;
            assert_relative_eq!(original, via_shift, max_relative = 1e-10, epsilon = 1e-12);
            assert!((shifted.to_original(&shifted.to_shifted(&z)).dist_sq(&z)).sqrt() < 1e-12);
        }
    }

    #[test]
    fn signed_gradient_matches_operator_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, n) in [(1, 1), (3, 3), (2, 5), (6, 4)] {
            let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let c = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let g = BilinearGame::new(a, b, c).unwrap();
            let (op, s) = g.signed_gradient_operator();
            for _ in 0..10 {
                let z = JointPoint::new(
                    DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
                    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)),
                );
                let direct = signed_gradient(&g, &z).unwrap().vec;
                let via_op = &op * z.stacked() + &s;
                assert!((&direct - &via_op).norm() <= 1e-12 * direct.norm().max(1.0));
            }
        }
    }

    #[test]
    fn scalar_bilinear_examples() {
        let g = scalar_bilinear();
        let z = JointPoint::from_slices(&[1.0], &[1.0]);
        assert_eq!(
            signed_gradient(&g, &z).unwrap().vec.as_slice(),
            &[-1.0, 1.0]
        );
        assert_eq!(g.critical_point().unwrap().norm(), 0.0);
        assert_eq!(g.payoff(&JointPoint::from_slices(&[2.0], &[3.0])), 6.0);
    }

    #[test]
    fn g2_examples() {
        let g = g2_game();
        assert_eq!(g.payoff(&JointPoint::from_slices(&[1.0], &[1.0])), 8.0);
        let z0 = JointPoint::zeros(1, 1);
        assert_eq!(
            signed_gradient(&g, &z0).unwrap().vec.as_slice(),
            &[0.0, 0.0]
        );
    }

    #[test]
    fn quadratic_rejects_asymmetric() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticGame::new(p, DMatrix::identity(1, 1), DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn random_bilinear_is_deterministic_and_full_rank() {
        let a = random_bilinear(5, 17, None);
        let b = random_bilinear(5, 17, None);
        assert_eq!(
            a.a().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.a().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        for seed in 0..30 {
            assert!(random_bilinear(5, seed, None).full_rank());
        }
    }

    #[test]
    fn random_bilinear_hits_condition_target() {
        for seed in 0..10 {
            let g = random_bilinear(5, seed, Some(10.0));
            // independent route: eigenvalues of AA^T
            let eig = (g.a() * g.a().transpose()).symmetric_eigenvalues();
            let ratio = eig.max() / eig.min();
            assert!((99.0..=101.0).contains(&ratio), "seed {seed}: {ratio}");
        }
    }
}
