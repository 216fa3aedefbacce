//! φ-divergence generators.
//!
//! A [`DivergenceSpec`] names a strictly convex generator φ on (0, ∞) with
//! φ(1) = φ′(1) = 0, together with its derivative and the conjugate-style
//! transform φ#(t) = t·φ′(t) − φ(t) used by the dual divergence estimators.
//!
//! | name        | φ(t)                                  |
//! |-------------|---------------------------------------|
//! | `kl`        | t log t − t + 1                        |
//! | `mkl`       | −log t + t − 1                         |
//! | `hellinger` | ½(√t − 1)²                             |
//! | `cressie-read:γ` | (t^γ − γt + γ − 1)/(γ(γ − 1))     |
//!
//! Besides the plain evaluators, which reject t below [`MIN_ARGUMENT`], each
//! generator has log-space evaluators taking `ln t` (and optionally a log
//! weight). The estimators use those so that density ratios which underflow
//! or overflow in the tails still produce the correct limiting values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest argument accepted by the plain evaluators.
pub const MIN_ARGUMENT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DivergenceSpec {
    CressieRead(f64),
    ModifiedKl,
    Kl,
    Hellinger,
}

impl Default for DivergenceSpec {
    fn default() -> Self {
        DivergenceSpec::Hellinger
    }
}

fn check_argument(t: f64) -> Result<()> {
    if t.is_finite() && t >= MIN_ARGUMENT {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "divergence argument t",
            value: t,
        })
    }
}

/// Cressie-Read generator (t^γ − γt + γ − 1)/(γ(γ − 1)).
pub fn cressie_read(gamma: f64, t: f64) -> Result<f64> {
    DivergenceSpec::cressie_read(gamma)?.phi(t)
}

/// φ#(t) = t·φ′(t) − φ(t).
pub fn phi_sharp(spec: DivergenceSpec, t: f64) -> Result<f64> {
    spec.phi_sharp(t)
}

/// ½(√t − 1)², the default proximal generator.
pub fn psi_hellinger(t: f64) -> Result<f64> {
    DivergenceSpec::Hellinger.phi(t)
}

/// Derivative of [`psi_hellinger`]: (1 − 1/√t)/2.
pub fn psi_hellinger_prime(t: f64) -> Result<f64> {
    DivergenceSpec::Hellinger.phi_prime(t)
}

impl DivergenceSpec {
    /// Cressie-Read member with index `gamma`; 0 and 1 are the limiting
    /// cases and must be requested as [`DivergenceSpec::ModifiedKl`] and
    /// [`DivergenceSpec::Kl`].
    pub fn cressie_read(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma == 0.0 || gamma == 1.0 {
            return Err(Error::Domain {
                what: "Cressie-Read index γ (must be finite and not 0 or 1)",
                value: gamma,
            });
        }
        Ok(DivergenceSpec::CressieRead(gamma))
    }

    /// Cressie-Read index of the generator, up to normalization.
    ///
    /// `Hellinger` is ¼ of the γ = ½ member, `Kl` and `ModifiedKl` are the
    /// limits γ → 1 and γ → 0.
    pub fn cressie_read_index(&self) -> f64 {
        match *self {
            DivergenceSpec::CressieRead(g) => g,
            DivergenceSpec::ModifiedKl => 0.0,
            DivergenceSpec::Kl => 1.0,
            DivergenceSpec::Hellinger => 0.5,
        }
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(match *self {
            DivergenceSpec::CressieRead(g) => (t.powf(g) - g * t + g - 1.0) / (g * (g - 1.0)),
            DivergenceSpec::ModifiedKl => -t.ln() + t - 1.0,
            DivergenceSpec::Kl => t * t.ln() - t + 1.0,
            DivergenceSpec::Hellinger => {
                let d = t.sqrt() - 1.0;
                0.5 * d * d
            }
        })
    }

    pub fn phi_prime(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(match *self {
            DivergenceSpec::CressieRead(g) => (t.powf(g - 1.0) - 1.0) / (g - 1.0),
            DivergenceSpec::ModifiedKl => 1.0 - 1.0 / t,
            DivergenceSpec::Kl => t.ln(),
            DivergenceSpec::Hellinger => 0.5 * (1.0 - 1.0 / t.sqrt()),
        })
    }

    pub fn phi_sharp(&self, t: f64) -> Result<f64> {
        check_argument(t)?;
        Ok(self.phi_sharp_log(t.ln()))
    }

    /// φ(t)·w given `ln t` and `ln w`.
    pub fn weighted_phi(&self, log_t: f64, log_w: f64) -> f64 {
        let w = log_w.exp();
        match *self {
            DivergenceSpec::CressieRead(g) => {
                w * ((g * log_t).exp_m1() - g * log_t.exp_m1()) / (g * (g - 1.0))
            }
            DivergenceSpec::ModifiedKl => w * (log_t.exp_m1() - log_t),
            DivergenceSpec::Kl => (log_t + log_w).exp() * (log_t - 1.0) + w,
            DivergenceSpec::Hellinger => {
                let d = (0.5 * (log_t + log_w)).exp() - (0.5 * log_w).exp();
                0.5 * d * d
            }
        }
    }

    /// φ′(t)·w given `ln t` and `ln w`.
    pub fn weighted_phi_prime(&self, log_t: f64, log_w: f64) -> f64 {
        match *self {
            DivergenceSpec::CressieRead(g) => {
                (((g - 1.0) * log_t + log_w).exp() - log_w.exp()) / (g - 1.0)
            }
            DivergenceSpec::ModifiedKl => log_w.exp() - (log_w - log_t).exp(),
            DivergenceSpec::Kl => log_t * log_w.exp(),
            DivergenceSpec::Hellinger => 0.5 * (log_w.exp() - (log_w - 0.5 * log_t).exp()),
        }
    }

    /// φ#(t) given `ln t`.
    pub fn phi_sharp_log(&self, log_t: f64) -> f64 {
        match *self {
            DivergenceSpec::CressieRead(g) => (g * log_t).exp_m1() / g,
            DivergenceSpec::ModifiedKl => log_t,
            DivergenceSpec::Kl => log_t.exp_m1(),
            DivergenceSpec::Hellinger => 0.5 * (0.5 * log_t).exp_m1(),
        }
    }
}

impl fmt::Display for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceSpec::CressieRead(g) => write!(f, "cressie-read:{g}"),
            DivergenceSpec::ModifiedKl => f.write_str("mkl"),
            DivergenceSpec::Kl => f.write_str("kl"),
            DivergenceSpec::Hellinger => f.write_str("hellinger"),
        }
    }
}

impl FromStr for DivergenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        match name.as_str() {
            "kl" => Ok(DivergenceSpec::Kl),
            "mkl" | "modified-kl" => Ok(DivergenceSpec::ModifiedKl),
            "hellinger" => Ok(DivergenceSpec::Hellinger),
            _ => {
                let gamma = name
                    .strip_prefix("cressie-read:")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown divergence '{s}'")))?;
                DivergenceSpec::cressie_read(gamma)
            }
        }
    }
}

impl TryFrom<String> for DivergenceSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DivergenceSpec> for String {
    fn from(spec: DivergenceSpec) -> String {
        spec.to_string()
    }
}

/// The proximal generator ψ in the penalty Dψ.
///
/// Only nonnegativity, ψ(t) = 0 iff t = 1 and ψ′(1) = 0 are required, so
/// any φ generator qualifies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProximalGenerator(pub DivergenceSpec);

impl ProximalGenerator {
    pub fn hellinger() -> Self {
        ProximalGenerator(DivergenceSpec::Hellinger)
    }

    /// −log t + t − 1; paired with the modified-KL objective this makes the
    /// proximal iteration coincide with EM.
    pub fn modified_kl() -> Self {
        ProximalGenerator(DivergenceSpec::ModifiedKl)
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        self.0.phi(t)
    }

    pub fn psi_prime(&self, t: f64) -> Result<f64> {
        self.0.phi_prime(t)
    }

    /// ψ(t)·w from `ln t` and `ln w`.
    pub fn weighted(&self, log_t: f64, log_w: f64) -> f64 {
        self.0.weighted_phi(log_t, log_w)
    }
}
