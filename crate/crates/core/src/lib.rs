//! Predictive projection centripetal acceleration (PPCA) and related
//! first-order dynamics for two-player zero-sum differentiable games.
//!
//! The crate is organised bottom-up:
//!
//! * [`game`]: the [`Game`] trait, joint iterates and the projection helper.
//! * [`games`]: bilinear and quadratic test games.
//! * [`dynamics`]: step rules (GDA through APPCA) and the trajectory runner.
//! * [`spectral`]: closed-form rates and contraction checks on bilinear games.
//! * [`harness`]: config-driven experiments behind the `ppca` binary.

pub mod dynamics;
pub mod error;
pub mod game;
pub mod games;
pub mod gradcheck;
pub mod harness;
pub mod io;
pub mod spectral;

pub use dynamics::{
    run, step, Method, MethodConfig, MethodState, RunOptions, StopReason, Trajectory,
};
pub use error::{Error, Result};
pub use game::{project, signed_gradient, Game, JointPoint, SignedGradient};
pub use games::{g2_game, random_bilinear, scalar_bilinear, BilinearGame, QuadraticGame};
pub use spectral::{eig_extremes, ppca_iteration_matrix, SpectralReport};
