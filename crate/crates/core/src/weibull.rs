//! Two-parameter Weibull law over usage cycles.
//!
//! Shape `alpha`, scale `beta`, CDF `1 - exp(-(t/beta)^alpha)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub alpha: f64,
    pub beta: f64,
}

impl WeibullParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Weibull parameters must be positive and finite, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        -(-(t / self.beta).powf(self.alpha)).exp_m1()
    }

    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        (-(t / self.beta).powf(self.alpha)).exp()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let z = t / self.beta;
        (self.alpha / self.beta) * z.powf(self.alpha - 1.0) * (-z.powf(self.alpha)).exp()
    }

    /// Log density; `-inf` for `t <= 0`.
    pub fn ln_pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let z = t / self.beta;
        self.alpha.ln() - self.beta.ln() + (self.alpha - 1.0) * z.ln() - z.powf(self.alpha)
    }

    /// Inverse CDF for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(u));
        }
        Ok(self.beta * (-(-u).ln_1p()).powf(1.0 / self.alpha))
    }
}
