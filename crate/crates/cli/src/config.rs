//! Experiment configuration: a single JSON document.

use poisson_clt::bounds::{clamp_p, resolve_q, ZetaBudget};
use poisson_clt::geometry::ConvexBody;
use poisson_clt::model::{EpsilonRule, ModelSpec, VaryingDomainSpec, VaryingExponentSpec};
use poisson_clt::verify::PoincareBudget;
use poisson_clt::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Application {
    Exponents,
    Domains,
}

/// `q` as a number in `[1, 2]` or the keyword `"auto"` (`q = 3 − 2/p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QChoice {
    Value(f64),
    Keyword(String),
}

impl Default for QChoice {
    fn default() -> Self {
        QChoice::Keyword("auto".into())
    }
}

fn default_c0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub application: Application,
    pub d: usize,
    /// Common window (application `exponents`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<ConvexBody>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<f64>>,
    /// One window per component (application `domains`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<ConvexBody>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub epsilon: EpsilonRule,
    pub t_grid: Vec<f64>,
    pub replicas: usize,
    pub p: f64,
    #[serde(default)]
    pub q: QChoice,
    #[serde(default = "default_c0")]
    pub c0: f64,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Enables Monte Carlo ζ estimates in `bounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_monte_carlo: Option<ZetaBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poincare: Option<PoincareBudget>,
}

/// A configuration that passed validation, with derived quantities.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub p: f64,
    pub q: f64,
}

fn require<T: Clone>(v: &Option<T>, field: &str, app: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::validation(field, format!("required for application = {app}")))
}

fn forbid<T>(v: &Option<T>, field: &str, app: &str) -> Result<()> {
    match v {
        Some(_) => Err(Error::validation(field, format!("not used by application = {app}"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde names the offending field between backticks.
            let field = msg.split('`').nth(1).unwrap_or("config").to_string();
            Error::validation(field, msg)
        })
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        Ok(match self.application {
            Application::Exponents => {
                forbid(&self.windows, "windows", "exponents")?;
                forbid(&self.alpha, "alpha", "exponents")?;
                ModelSpec::Exponents(VaryingExponentSpec {
                    d: self.d,
                    window: require(&self.window, "window", "exponents")?,
                    alphas: require(&self.exponents, "exponents", "exponents")?,
                    epsilon: self.epsilon,
                })
            }
            Application::Domains => {
                forbid(&self.window, "window", "domains")?;
                forbid(&self.exponents, "exponents", "domains")?;
                ModelSpec::Domains(VaryingDomainSpec {
                    d: self.d,
                    windows: require(&self.windows, "windows", "domains")?,
                    alpha: require(&self.alpha, "alpha", "domains")?,
                    epsilon: self.epsilon,
                })
            }
        })
    }

    pub fn validate(&self) -> Result<Validated> {
        let spec = self.spec()?;
        spec.validate()?;
        if !(self.epsilon.b > 0.0) {
            return Err(Error::validation("epsilon.b", format!("must be positive so that ε_t → 0, got {}", self.epsilon.b)));
        }
        spec.regime()?;
        if self.t_grid.is_empty() {
            return Err(Error::validation("t_grid", "at least one intensity is required"));
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::validation("t_grid", format!("intensities must be positive and finite, got {t}")));
        }
        if self.replicas < 2 {
            return Err(Error::validation("replicas", format!("need at least 2, got {}", self.replicas)));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::validation("c0", format!("must be positive, got {}", self.c0)));
        }
        let p = clamp_p(self.p)?;
        let q = match &self.q {
            QChoice::Value(v) => resolve_q(p, Some(*v))?,
            QChoice::Keyword(k) if k == "auto" => resolve_q(p, None)?,
            QChoice::Keyword(k) => return Err(Error::validation("q", format!("expected a number or \"auto\", got {k:?}"))),
        };
        let d = self.d as f64;
        let alphas: Vec<f64> = (0..spec.m()).map(|i| spec.component(i).1).collect();
        for a in alphas {
            if !(d + 2.0 * p * a > 0.0) {
                return Err(Error::validation("p", format!("moment condition d + 2pα > 0 fails for α = {a}")));
            }
            if !(d + (q + 1.0) * a > 0.0) {
                return Err(Error::validation("q", format!("moment condition d + (q+1)α > 0 fails for α = {a}")));
            }
        }
        if let Some(z) = &self.zeta_monte_carlo {
            if z.replicas < 2 || z.y_samples == 0 {
                return Err(Error::validation("zeta_monte_carlo", "need at least 2 replicas and one y-sample"));
            }
        }
        if let Some(b) = &self.poincare {
            if b.replicas < 2 || b.x_samples == 0 {
                return Err(Error::validation("poincare", "need at least 2 replicas and one x-sample"));
            }
        }
        Ok(Validated {
            config: self.clone(),
            spec,
            p,
            q,
        })
    }

    /// The configuration as recorded in outputs: the output directory is
    /// dropped so that results do not depend on where they are written.
    pub fn recorded(&self) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: None,
            ..self.clone()
        }
    }
}
