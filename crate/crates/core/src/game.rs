//! Game abstraction shared by every dynamic: joint points, the signed
//! gradient field and the vector projection used by PPCA.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Default threshold below which `project` treats the target vector as zero.
pub const DEFAULT_EPS_PROJ: f64 = 1e-12;

/// The pair `(theta, phi)`: min-player and max-player parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPoint {
    pub theta: DVector<f64>,
    pub phi: DVector<f64>,
}

impl JointPoint {
    pub fn new(theta: DVector<f64>, phi: DVector<f64>) -> Self {
        Self { theta, phi }
    }

    pub fn from_slices(theta: &[f64], phi: &[f64]) -> Self {
        Self {
            theta: DVector::from_column_slice(theta),
            phi: DVector::from_column_slice(phi),
        }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            theta: DVector::zeros(m),
            phi: DVector::zeros(n),
        }
    }

    /// Splits a stacked `(theta; phi)` vector whose first `m` entries are theta.
    pub fn from_stacked(v: &DVector<f64>, m: usize) -> Self {
        let n = v.len() - m;
        Self {
            theta: v.rows(0, m).into_owned(),
            phi: v.rows(m, n).into_owned(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let (m, n) = self.dims();
        let mut v = DVector::zeros(m + n);
        v.rows_mut(0, m).copy_from(&self.theta);
        v.rows_mut(m, n).copy_from(&self.phi);
        v
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.theta.len(), self.phi.len())
    }

    pub fn norm_sq(&self) -> f64 {
        self.theta.norm_squared() + self.phi.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Euclidean distance to `other`.
    pub fn dist_sq(&self, other: &JointPoint) -> f64 {
        (&self.theta - &other.theta).norm_squared() + (&self.phi - &other.phi).norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain(self.phi.iter())
            .all(|x| x.is_finite())
    }
}

/// The stacked field `(-grad_theta V, grad_phi V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGradient {
    pub vec: DVector<f64>,
}

impl SignedGradient {
    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }
}

/// A differentiable two-player zero-sum payoff `V(theta, phi)`; theta
/// minimizes, phi maximizes.
///
/// Implementations must be immutable after construction.
pub trait Game: Send + Sync {
    fn dim_theta(&self) -> usize;
    fn dim_phi(&self) -> usize;
    fn payoff(&self, z: &JointPoint) -> f64;
    fn grad_theta(&self, z: &JointPoint) -> DVector<f64>;
    fn grad_phi(&self, z: &JointPoint) -> DVector<f64>;

    fn known_critical_point(&self) -> Option<JointPoint> {
        None
    }

    /// True when the payoff is `theta^T A phi + theta^T b + c^T phi`; in that
    /// case the PPCA projection term vanishes identically.
    fn is_bilinear(&self) -> bool {
        false
    }

    fn check_dims(&self, z: &JointPoint) -> Result<()> {
        if z.theta.len() != self.dim_theta() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: self.dim_theta(),
                got: z.theta.len(),
            });
        }
        if z.phi.len() != self.dim_phi() {
            return Err(Error::DimensionMismatch {
                what: "phi",
                expected: self.dim_phi(),
                got: z.phi.len(),
            });
        }
        Ok(())
    }
}

/// Evaluates `(-grad_theta V(z), grad_phi V(z))`.
pub fn signed_gradient<G: Game + ?Sized>(game: &G, z: &JointPoint) -> Result<SignedGradient> {
    game.check_dims(z)?;
    Ok(signed_gradient_unchecked(game, z))
}

pub(crate) fn signed_gradient_unchecked<G: Game + ?Sized>(
    game: &G,
    z: &JointPoint,
) -> SignedGradient {
    let gt = game.grad_theta(z);
    let gp = game.grad_phi(z);
    let m = gt.len();
    let mut vec = DVector::zeros(m + gp.len());
    for (dst, g) in vec.iter_mut().zip(gt.iter()) {
        *dst = -g;
    }
    vec.rows_mut(m, gp.len()).copy_from(&gp);
    SignedGradient { vec }
}

/// Projection of `v` onto the direction of `u`: `(<v,u>/|u|^2) u`.
///
/// Returns the zero vector when `|u|^2 <= eps_proj^2`.
pub fn project(v: &DVector<f64>, u: &DVector<f64>, eps_proj: f64) -> Result<DVector<f64>> {
    if v.len() != u.len() {
        return Err(Error::DimensionMismatch {
            what: "projection operands",
            expected: u.len(),
            got: v.len(),
        });
    }
    if eps_proj.is_nan() || eps_proj <= 0.0 {
        return Err(Error::Config(format!(
            "eps_proj must be positive, got {eps_proj}"
        )));
    }
    let uu = u.norm_squared();
    if uu <= eps_proj * eps_proj {
        return Ok(DVector::zeros(u.len()));
    }
    Ok(u * (v.dot(u) / uu))
}
