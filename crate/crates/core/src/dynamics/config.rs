use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::DEFAULT_EPS_PROJ;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gda,
    Agda,
    Mpm,
    GradSca,
    GradAca,
    Ogda,
    ExtraGradient,
    Ppca,
    Appca,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Gda,
        Method::Agda,
        Method::Mpm,
        Method::GradSca,
        Method::GradAca,
        Method::Ogda,
        Method::ExtraGradient,
        Method::Ppca,
        Method::Appca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gda => "gda",
            Method::Agda => "agda",
            Method::Mpm => "mpm",
            Method::GradSca => "grad_sca",
            Method::GradAca => "grad_aca",
            Method::Ogda => "ogda",
            Method::ExtraGradient => "extra_gradient",
            Method::Ppca => "ppca",
            Method::Appca => "appca",
        }
    }

    /// Methods that carry gradient history between steps.
    pub fn uses_history(self) -> bool {
        matches!(self, Method::GradSca | Method::GradAca)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Separate learning/centripetal rates per player for Grad-SCA/ACA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerPlayerRates {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

fn default_eps_proj() -> f64 {
    DEFAULT_EPS_PROJ
}

/// Which dynamic to run and its rates.
///
/// `gamma` is the predictive rate, `alpha` the learning rate and `beta` the
/// adaptive rate. Rates a method does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_player: Option<PerPlayerRates>,
    #[serde(default = "default_eps_proj")]
    pub eps_proj: f64,
}

impl MethodConfig {
    pub fn new(method: Method, gamma: f64, alpha: f64, beta: f64) -> Self {
        Self {
            method,
            gamma,
            alpha,
            beta,
            per_player: None,
            eps_proj: DEFAULT_EPS_PROJ,
        }
    }

    pub fn gda(alpha: f64) -> Self {
        Self::new(Method::Gda, 0.0, alpha, 0.0)
    }

    pub fn agda(alpha: f64) -> Self {
        Self::new(Method::Agda, 0.0, alpha, 0.0)
    }

    pub fn mpm(gamma: f64, beta: f64) -> Self {
        Self::new(Method::Mpm, gamma, 0.0, beta)
    }

    pub fn grad_sca(alpha: f64, beta: f64) -> Self {
        Self::new(Method::GradSca, 0.0, alpha, beta)
    }

    pub fn grad_aca(alpha: f64, beta: f64) -> Self {
        Self::new(Method::GradAca, 0.0, alpha, beta)
    }

    pub fn ogda(gamma: f64) -> Self {
        Self::new(Method::Ogda, gamma, 0.0, 0.0)
    }

    pub fn extra_gradient(gamma: f64) -> Self {
        Self::new(Method::ExtraGradient, gamma, 0.0, 0.0)
    }

    pub fn ppca(gamma: f64, alpha: f64, beta: f64) -> Self {
        Self::new(Method::Ppca, gamma, alpha, beta)
    }

    pub fn appca(gamma: f64, alpha: f64, beta: f64) -> Self {
        Self::new(Method::Appca, gamma, alpha, beta)
    }

    pub fn with_per_player(mut self, rates: PerPlayerRates) -> Self {
        self.per_player = Some(rates);
        self
    }

    /// `(alpha1, alpha2, beta1, beta2)`, broadcasting `(alpha, beta)` when no
    /// per-player rates are set.
    pub fn player_rates(&self) -> PerPlayerRates {
        self.per_player.unwrap_or(PerPlayerRates {
            alpha1: self.alpha,
            alpha2: self.alpha,
            beta1: self.beta,
            beta2: self.beta,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "rate `{name}` must be finite and non-negative, got {x}"
                )))
            }
        };
        check("gamma", self.gamma)?;
        check("alpha", self.alpha)?;
        check("beta", self.beta)?;
        if !(self.eps_proj > 0.0 && self.eps_proj.is_finite()) {
            return Err(Error::Config(format!(
                "eps_proj must be positive, got {}",
                self.eps_proj
            )));
        }
        if let Some(p) = &self.per_player {
            if !self.method.uses_history() {
                return Err(Error::Config(format!(
                    "per_player rates are only accepted for grad_sca/grad_aca, not {}",
                    self.method
                )));
            }
            check("alpha1", p.alpha1)?;
            check("alpha2", p.alpha2)?;
            check("beta1", p.beta1)?;
            check("beta2", p.beta2)?;
        }
        if self.method.uses_history() {
            let p = self.player_rates();
            if (p.alpha1 == 0.0 && p.beta1 != 0.0) || (p.alpha2 == 0.0 && p.beta2 != 0.0) {
                return Err(Error::Config(
                    "centripetal acceleration divides by the learning rate: alpha must be non-zero when beta is".into(),
                ));
            }
        }
        Ok(())
    }
}
