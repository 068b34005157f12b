use serde::{Deserialize, Serialize};

use crate::data::Treatment;
use crate::error::domain;
use crate::nuisance::{sigmoid, softplus};
use crate::Result;

/// Binomial-deviance surrogate `h(a, u) = −((a + 1)/2)·u + log(1 + eᵘ)`.
pub fn surrogate_h(a: Treatment, u: f64) -> f64 {
    match a {
        Treatment::Treated => softplus(-u),
        Treatment::Control => softplus(u),
    }
}

/// `∂h(a, u)/∂u`
pub fn surrogate_h_derivative(a: Treatment, u: f64) -> f64 {
    match a {
        Treatment::Treated => sigmoid(u) - 1.0,
        Treatment::Control => sigmoid(u),
    }
}

/// Shape parameters of the smooth indicator bound `H_{β,γ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct SurrogateParams {
    beta: f64,
    gamma: f64,
}

#[derive(Deserialize)]
struct RawParams {
    beta: f64,
    gamma: f64,
}

impl TryFrom<RawParams> for SurrogateParams {
    type Error = crate::Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        SurrogateParams::new(raw.beta, raw.gamma)
    }
}

impl SurrogateParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return Err(domain(alloc::format!(
                "surrogate parameters must be positive and finite, got beta={beta}, gamma={gamma}"
            )));
        }
        Ok(SurrogateParams { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Left derivative at zero is `γ`, right derivative `1/(4β)`.
    pub fn differentiable_at_zero(&self) -> bool {
        (self.gamma - 0.25 / self.beta).abs() <= 1e-12
    }
}

/// `H_{β,γ}(u) = 1/2 + 1/(1 + e^{−u/β})` for `u ≥ 0`, `1/(1 − γu)` for `u < 0`.
#[allow(non_snake_case)]
pub fn surrogate_H(params: SurrogateParams, u: f64) -> f64 {
    if u >= 0.0 {
        0.5 + 1.0 / (1.0 + libm::exp(-u / params.beta))
    } else {
        1.0 / (1.0 - params.gamma * u)
    }
}
