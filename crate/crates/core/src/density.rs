//! Unit-variance error densities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Laplace diversity giving unit variance (`2 b^2 = 1`).
pub const LAPLACE_SCALE: f64 = FRAC_1_SQRT_2;

/// Error family, each scaled to mean zero and variance one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorDensity {
    Normal,
    /// Student-t with `nu > 2` degrees of freedom, multiplied by `sqrt((nu - 2) / nu)`.
    ScaledT { nu: f64 },
    /// Laplace with diversity `sqrt(2) / 2`.
    Laplace,
}

impl ErrorDensity {
    pub fn scaled_t(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 2.0) {
            return Err(Error::invalid(format!(
                "t degrees of freedom must be finite and > 2, got {nu}"
            )));
        }
        Ok(ErrorDensity::ScaledT { nu })
    }

    /// Scale applied to the standard family member.
    pub fn scale(&self) -> f64 {
        match *self {
            ErrorDensity::Normal => 1.0,
            ErrorDensity::ScaledT { nu } => ((nu - 2.0) / nu).sqrt(),
            ErrorDensity::Laplace => LAPLACE_SCALE,
        }
    }

    /// Whether `d^2/ds^2 log f` exists everywhere, i.e. whether the analytic
    /// Hessian and the sandwich covariance are available.
    pub fn has_curvature(&self) -> bool {
        !matches!(self, ErrorDensity::Laplace)
    }

    pub fn log_pdf(&self, s: f64) -> f64 {
        match *self {
            ErrorDensity::Normal => -0.5 * (2.0 * PI).ln() - 0.5 * s * s,
            ErrorDensity::ScaledT { nu } => {
                let c = self.scale();
                let norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln() - c.ln();
                norm - 0.5 * (nu + 1.0) * (s * s / (nu - 2.0)).ln_1p()
            }
            ErrorDensity::Laplace => -(2.0 * LAPLACE_SCALE).ln() - s.abs() / LAPLACE_SCALE,
        }
    }

    /// `f'(s) / f(s)`.
    pub fn score(&self, s: f64) -> f64 {
        match *self {
            ErrorDensity::Normal => -s,
            ErrorDensity::ScaledT { nu } => -(nu + 1.0) * s / (nu - 2.0 + s * s),
            ErrorDensity::Laplace => {
                if s > 0.0 {
                    -1.0 / LAPLACE_SCALE
                } else if s < 0.0 {
                    1.0 / LAPLACE_SCALE
                } else {
                    0.0
                }
            }
        }
    }

    /// `f''/f - (f'/f)^2`, the second derivative of `log f`.
    ///
    /// Laplace returns 0 everywhere (its log-density is piecewise linear).
    pub fn curvature(&self, s: f64) -> f64 {
        match *self {
            ErrorDensity::Normal => -1.0,
            ErrorDensity::ScaledT { nu } => {
                let k = nu - 2.0;
                let den = k + s * s;
                -(nu + 1.0) * (k - s * s) / (den * den)
            }
            ErrorDensity::Laplace => 0.0,
        }
    }

    /// Quantile function of the unit-variance distribution.
    pub fn quantile(&self, prob: f64) -> f64 {
        match *self {
            ErrorDensity::Normal => Normal::standard().inverse_cdf(prob),
            ErrorDensity::ScaledT { nu } => {
                let t = StudentsT::new(0.0, 1.0, nu).expect("nu validated at construction");
                self.scale() * t.inverse_cdf(prob)
            }
            ErrorDensity::Laplace => {
                if prob < 0.5 {
                    LAPLACE_SCALE * (2.0 * prob).ln()
                } else {
                    -LAPLACE_SCALE * (2.0 - 2.0 * prob).ln()
                }
            }
        }
    }

    /// One draw from the distribution.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ErrorDensity::Normal => rng.sample(StandardNormal),
            ErrorDensity::ScaledT { nu } => {
                let t = StudentT::new(nu).expect("nu validated at construction");
                self.scale() * t.sample(rng)
            }
            ErrorDensity::Laplace => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -LAPLACE_SCALE * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// Fill `out` with i.i.d. draws.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            ErrorDensity::ScaledT { nu } => {
                let t = StudentT::new(nu).expect("nu validated at construction");
                let c = self.scale();
                for v in out.iter_mut() {
                    *v = c * t.sample(rng);
                }
            }
            _ => {
                for v in out.iter_mut() {
                    *v = self.draw(rng);
                }
            }
        }
    }

    /// `count` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![0.0; count];
        self.fill(&mut rng, &mut out);
        out
    }
}

impl fmt::Display for ErrorDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorDensity::Normal => write!(f, "normal"),
            ErrorDensity::ScaledT { nu } => write!(f, "t:{nu}"),
            ErrorDensity::Laplace => write!(f, "laplace"),
        }
    }
}

impl FromStr for ErrorDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "normal" | "gaussian" => Ok(ErrorDensity::Normal),
            "laplace" => Ok(ErrorDensity::Laplace),
            _ => match s.strip_prefix("t:") {
                Some(nu) => {
                    let nu: f64 = nu
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad degrees of freedom in '{s}'")))?;
                    ErrorDensity::scaled_t(nu)
                }
                None => Err(Error::invalid(format!(
                    "unknown error density '{s}' (expected normal, t:<nu> or laplace)"
                ))),
            },
        }
    }
}

impl Serialize for ErrorDensity {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ErrorDensity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
