//! Connection-radius rules `ε_t` and the regime of `tε_t^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ε_t = a·t^{−b}·(1 + c·t^{−e})`.
///
/// The correction factor is optional (`c = 0` by default). It does not change
/// the limit of `tε_t^d`, but it lets thermodynamic rules approach their
/// limit at a controlled rate instead of sitting on it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRule {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub e: f64,
}

impl EpsilonRule {
    pub fn power(a: f64, b: f64) -> Self {
        Self { a, b, c: 0.0, e: 0.0 }
    }

    pub fn with_correction(mut self, c: f64, e: f64) -> Self {
        self.c = c;
        self.e = e;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::validation("epsilon.a", format!("must be positive, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(Error::validation("epsilon.b", "must be finite"));
        }
        if self.c != 0.0 && !(self.e > 0.0 && self.e.is_finite()) {
            return Err(Error::validation(
                "epsilon.e",
                "the correction exponent must be positive when c is non-zero",
            ));
        }
        if !(self.c > -1.0 && self.c.is_finite()) {
            return Err(Error::validation("epsilon.c", "must be finite and greater than -1"));
        }
        Ok(())
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        let base = self.a * t.powf(-self.b);
        if self.c == 0.0 {
            base
        } else {
            base * (1.0 + self.c * t.powf(-self.e))
        }
    }

    /// `tε_t^d`, the expected number of neighbours up to the factor `κ_d`.
    pub fn tau(&self, t: f64, d: usize) -> f64 {
        t * self.epsilon(t).powi(d as i32)
    }

    /// Limit of `tε_t^d` computed from `(a, b, d)`.
    pub fn regime(&self, d: usize) -> Result<Regime> {
        self.validate()?;
        if self.b <= 0.0 {
            return Err(Error::AmbiguousRegime(format!(
                "b = {} does not give ε_t → 0",
                self.b
            )));
        }
        let bd = self.b * d as f64;
        Ok(if (bd - 1.0).abs() <= 1e-12 {
            Regime::Thermodynamic {
                theta: self.a.powi(d as i32),
            }
        } else if bd > 1.0 {
            Regime::Sparse
        } else {
            Regime::Dense
        })
    }
}

/// Asymptotic behaviour of `tε_t^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "lowercase")]
pub enum Regime {
    /// `tε_t^d → 0`.
    Sparse,
    /// `tε_t^d → θ ∈ (0, ∞)`.
    Thermodynamic { theta: f64 },
    /// `tε_t^d → ∞`.
    Dense,
}

impl Regime {
    /// The limit of `tε_t^d` (infinite for the dense regime).
    pub fn witness(&self) -> f64 {
        match self {
            Regime::Sparse => 0.0,
            Regime::Thermodynamic { theta } => *theta,
            Regime::Dense => f64::INFINITY,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Sparse => "sparse",
            Regime::Thermodynamic { .. } => "thermodynamic",
            Regime::Dense => "dense",
        }
    }

    /// Whether the limiting covariance of the varying-exponent vector is
    /// non-degenerate, so that the `d₂` bound can be claimed.
    pub fn d2_applicable(&self) -> bool {
        !matches!(self, Regime::Dense)
    }
}
