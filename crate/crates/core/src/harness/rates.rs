use super::config::{build_game, GameSpec};
use super::Outcome;
use crate::error::{Error, Result};
use crate::spectral::{
    alpha_zero_rates, eg_rates, gamma_eq_alpha_rates, mpm_rates, ppca_rates, RateMethod,
    SpectralReport,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RatesRequest {
    pub game: GameSpec,
    pub method: RateMethod,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub log_ratio: f64,
}

fn required(name: &str, x: Option<f64>, method: &str) -> Result<f64> {
    x.ok_or_else(|| Error::Config(format!("{method} rates need --{name}")))
}

impl RatesRequest {
    /// Only the `A` block matters; `b` and `c` shift the critical point but
    /// leave every rate unchanged.
    pub fn evaluate(&self) -> Result<SpectralReport> {
        let game = build_game(&self.game)?;
        let bil = game
            .bilinear()
            .ok_or_else(|| Error::NotFullRankSquare("game is not bilinear".into()))?;
        let a = bil.a();
        match self.method {
            RateMethod::Ppca => {
                let gamma = required("gamma", self.gamma, "ppca")?;
                let alpha = required("alpha", self.alpha, "ppca")?;
                ppca_rates(a, gamma, alpha, self.log_ratio)
            }
            RateMethod::PpcaAlphaZero => alpha_zero_rates(a, self.gamma, self.log_ratio),
            RateMethod::Mpm => mpm_rates(a, required("gamma", self.gamma, "mpm")?, self.log_ratio),
            RateMethod::PpcaGammaEqAlpha => gamma_eq_alpha_rates(
                a,
                required("beta", self.beta, "ppca_gamma_eq_alpha")?,
                self.log_ratio,
            ),
            RateMethod::Eg => eg_rates(a),
        }
    }
}

pub fn cmd_rates(req: &RatesRequest) -> Result<Outcome> {
    Ok(Outcome::ok(req.evaluate()?.to_json() + "\n"))
}
