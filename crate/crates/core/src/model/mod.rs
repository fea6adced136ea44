//! Model definitions for the two edge-length vectors, their
//! normalizations, and their limiting covariance matrices.
//!
//! * Varying exponents: `(L^{α_1}(W), …, L^{α_m}(W))` on one window.
//! * Varying domains: `(L^α(W_1), …, L^α(W_m))` with one exponent.

pub mod covariance;
pub mod pd;
pub mod regime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{union_bounding_box, unit_ball_volume, ConvexBody, McBudget};
use crate::gilbert::{Components, EdgeVector};
use crate::linalg::{jacobi_eigen, Matrix};
use crate::process::{sample_poisson, PointConfiguration};
use crate::seed::{tags, SeedPath};

pub use covariance::{Bracket, CovarianceBracket};
pub use pd::{pd_certificate, PdCertificate, PdVerdict};
pub use regime::{EpsilonRule, Regime};

/// Relative tolerance for declaring a matrix positive definite.
pub const PD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaryingExponentSpec {
    pub d: usize,
    pub window: ConvexBody,
    pub alphas: Vec<f64>,
    pub epsilon: EpsilonRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaryingDomainSpec {
    pub d: usize,
    pub windows: Vec<ConvexBody>,
    pub alpha: f64,
    pub epsilon: EpsilonRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "application", rename_all = "lowercase")]
pub enum ModelSpec {
    Exponents(VaryingExponentSpec),
    Domains(VaryingDomainSpec),
}

fn check_dim(d: usize, body: &ConvexBody, field: &str) -> Result<()> {
    body.validate()?;
    if body.dim() != d {
        return Err(Error::validation(
            field,
            format!("body has dimension {} but d = {d}", body.dim()),
        ));
    }
    Ok(())
}

fn check_rule(d: usize, rule: &EpsilonRule) -> Result<()> {
    rule.validate()?;
    if rule.b >= 2.0 / d as f64 {
        return Err(Error::validation(
            "epsilon.b",
            format!("t²ε_t^d must diverge, which needs b < 2/d = {}", 2.0 / d as f64),
        ));
    }
    Ok(())
}

impl VaryingExponentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        check_dim(self.d, &self.window, "window")?;
        if self.alphas.is_empty() {
            return Err(Error::validation("exponents", "at least one exponent is required"));
        }
        let d = self.d as f64;
        for (i, &a) in self.alphas.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::validation("exponents", format!("exponent {i} is not finite")));
            }
            for &b in &self.alphas[i..] {
                if a + b <= -d {
                    return Err(Error::InvalidExponents(format!(
                        "α_i + α_j = {} must exceed −d = {}",
                        a + b,
                        -d
                    )));
                }
            }
        }
        check_rule(self.d, &self.epsilon)
    }
}

impl VaryingDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if self.windows.is_empty() {
            return Err(Error::validation("windows", "at least one window is required"));
        }
        for w in &self.windows {
            check_dim(self.d, w, "windows")?;
        }
        if !(self.alpha > -(self.d as f64) / 2.0) {
            return Err(Error::InvalidExponents(format!(
                "α = {} must exceed −d/2 = {}",
                self.alpha,
                -(self.d as f64) / 2.0
            )));
        }
        check_rule(self.d, &self.epsilon)
    }

    /// `(σ₁, σ₂) = (dκ_d/(d+2α), (dκ_d/(α+d))²)`.
    pub fn sigmas(&self) -> (f64, f64) {
        domain_sigmas(self.d, self.alpha)
    }
}

pub fn domain_sigmas(d: usize, alpha: f64) -> (f64, f64) {
    let dk = d as f64 * unit_ball_volume(d).expect("d ≥ 1");
    let df = d as f64;
    (dk / (df + 2.0 * alpha), (dk / (alpha + df)).powi(2))
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Exponents(s) => s.validate(),
            ModelSpec::Domains(s) => s.validate(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ModelSpec::Exponents(s) => s.d,
            ModelSpec::Domains(s) => s.d,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            ModelSpec::Exponents(s) => s.alphas.len(),
            ModelSpec::Domains(s) => s.windows.len(),
        }
    }

    pub fn rule(&self) -> &EpsilonRule {
        match self {
            ModelSpec::Exponents(s) => &s.epsilon,
            ModelSpec::Domains(s) => &s.epsilon,
        }
    }

    pub fn epsilon(&self, t: f64) -> f64 {
        self.rule().epsilon(t)
    }

    pub fn regime(&self) -> Result<Regime> {
        self.rule().regime(self.d())
    }

    pub fn components(&self) -> Components {
        match self {
            ModelSpec::Exponents(s) => Components::Exponents {
                window: s.window.clone(),
                alphas: s.alphas.clone(),
            },
            ModelSpec::Domains(s) => Components::Domains {
                windows: s.windows.clone(),
                alpha: s.alpha,
            },
        }
    }

    /// Window and exponent of component `i`.
    pub fn component(&self, i: usize) -> (&ConvexBody, f64) {
        match self {
            ModelSpec::Exponents(s) => (&s.window, s.alphas[i]),
            ModelSpec::Domains(s) => (&s.windows[i], s.alpha),
        }
    }

    pub fn edge_vector(&self, t: f64) -> Result<EdgeVector> {
        EdgeVector::new(self.components(), self.epsilon(t))
    }

    /// Region on which the Poisson process is sampled: the window itself, or
    /// the bounding box of the union of all windows.
    pub fn sampling_domain(&self) -> ConvexBody {
        match self {
            ModelSpec::Exponents(s) => s.window.clone(),
            ModelSpec::Domains(s) if s.windows.len() == 1 => s.windows[0].clone(),
            ModelSpec::Domains(s) => ConvexBody::Box {
                bounds: union_bounding_box(&s.windows),
            },
        }
    }

    pub fn sample(&self, t: f64, seed: SeedPath) -> Result<PointConfiguration> {
        sample_poisson(&self.sampling_domain(), t, seed)
    }

    /// Per-component normalizing divisors.
    ///
    /// Varying exponents: `tε^{α_i+d/2} ∨ t^{3/2}ε^{α_i+d}`.
    /// Varying domains: `tε^{α+d/2}(½σ₁ + σ₂tε^d)^{1/2}`.
    pub fn scales(&self, t: f64) -> Result<Vec<f64>> {
        let eps = self.epsilon(t);
        let d = self.d() as f64;
        let scales: Vec<f64> = match self {
            ModelSpec::Exponents(s) => s
                .alphas
                .iter()
                .map(|&a| (t * eps.powf(a + d / 2.0)).max(t.powf(1.5) * eps.powf(a + d)))
                .collect(),
            ModelSpec::Domains(s) => {
                let (s1, s2) = s.sigmas();
                let tau = t * eps.powi(s.d as i32);
                let v = t * eps.powf(s.alpha + d / 2.0) * (0.5 * s1 + s2 * tau).sqrt();
                vec![v; s.windows.len()]
            }
        };
        if let Some(bad) = scales.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::DegenerateSpec(format!("normalizing scale {bad} is not positive")));
        }
        Ok(scales)
    }

    fn geometry_budget(budget: &McBudget, key: u64) -> McBudget {
        McBudget::new(budget.samples, budget.seed.derive(tags::GEOMETRY).with_replica(key))
    }

    /// `E L_i` for every component.
    pub fn means(&self, t: f64, budget: &McBudget) -> Result<Vec<Bracket>> {
        let eps = self.epsilon(t);
        (0..self.m())
            .map(|i| {
                let (w, a) = self.component(i);
                covariance::mean(w, a, t, eps, &Self::geometry_budget(budget, i as u64))
            })
            .collect()
    }

    /// Centering values: the exact mean where available, else the leading term.
    pub fn centering(&self, t: f64, budget: &McBudget) -> Result<Vec<f64>> {
        Ok(self.means(t, budget)?.iter().map(Bracket::value).collect())
    }

    /// `(raw − mean) / scale` componentwise.
    pub fn normalize(&self, raw: &[f64], means: &[f64], t: f64) -> Result<Vec<f64>> {
        let scales = self.scales(t)?;
        Ok(raw
            .iter()
            .zip(means)
            .zip(&scales)
            .map(|((r, m), s)| (r - m) / s)
            .collect())
    }

    /// `W_i ∩ W_j` for the covariance of components `i, j`.
    pub fn overlap(&self, i: usize, j: usize) -> Option<ConvexBody> {
        match self {
            ModelSpec::Exponents(s) => Some(s.window.clone()),
            ModelSpec::Domains(s) => s.windows[i].intersect(&s.windows[j]),
        }
    }

    /// Brackets for `cov(L_i, L_j)` of the raw functionals.
    pub fn raw_covariance(&self, i: usize, j: usize, t: f64, budget: &McBudget) -> Result<CovarianceBracket> {
        let eps = self.epsilon(t);
        let (_, ai) = self.component(i);
        let (_, aj) = self.component(j);
        let key = (self.m() * self.m() + i * self.m() + j) as u64;
        covariance::covariance(
            self.overlap(i, j).as_ref(),
            ai,
            aj,
            t,
            eps,
            &Self::geometry_budget(budget, key),
        )
    }

    /// Brackets for the covariance of the normalized components.
    pub fn normalized_covariance(&self, t: f64, budget: &McBudget) -> Result<Vec<Vec<CovarianceBracket>>> {
        let scales = self.scales(t)?;
        let m = self.m();
        let mut out = vec![vec![CovarianceBracket::ZERO; m]; m];
        for i in 0..m {
            for j in i..m {
                let c = self.raw_covariance(i, j, t, budget)?.scaled(1.0 / (scales[i] * scales[j]));
                out[i][j] = c;
                out[j][i] = c;
            }
        }
        Ok(out)
    }
}

/// Mean of component `i` and covariance of components `(i, j)` together
/// with the relative boundary remainder `γ_{W_i∩W_j} ε`.
pub fn exact_mean_and_cov(
    spec: &ModelSpec,
    (i, j): (usize, usize),
    t: f64,
    budget: &McBudget,
) -> Result<(Bracket, CovarianceBracket)> {
    let mean = spec.means(t, budget)?[i];
    let cov = spec.raw_covariance(i, j, t, budget)?;
    Ok((mean, cov))
}

/// `σ⁽¹⁾_ij = dκ_d/(2|α_i+α_j+d|)` and `σ⁽²⁾_ij = d²κ_d²/((α_i+d)(α_j+d))`.
pub fn sigma_matrices(spec: &VaryingExponentSpec) -> Result<(Matrix, Matrix)> {
    let d = spec.d as f64;
    let dk = d * unit_ball_volume(spec.d)?;
    let a = &spec.alphas;
    for (i, &ai) in a.iter().enumerate() {
        if ai + d == 0.0 {
            return Err(Error::InvalidExponents(format!("α_{i} + d = 0")));
        }
        for &aj in a {
            if ai + aj + d == 0.0 {
                return Err(Error::InvalidExponents("α_i + α_j + d = 0".into()));
            }
        }
    }
    let m = a.len();
    let s1 = Matrix::from_fn(m, |i, j| dk / (2.0 * (a[i] + a[j] + d).abs()));
    let s2 = Matrix::from_fn(m, |i, j| dk * dk / ((a[i] + d) * (a[j] + d)));
    Ok((s1, s2))
}

/// `β_ij = (σ⁽¹⁾_ij + σ⁽²⁾_ij τ)/(1 ∨ τ)` with `τ = tε_t^d`.
pub fn beta_matrix(s1: &Matrix, s2: &Matrix, tau: f64) -> Matrix {
    Matrix::from_fn(s1.n(), |i, j| (s1.get(i, j) + s2.get(i, j) * tau) / tau.max(1.0))
}

/// Limit of `β` in the given regime.
pub fn c_limit(s1: &Matrix, s2: &Matrix, regime: &Regime) -> Matrix {
    Matrix::from_fn(s1.n(), |i, j| {
        let (a, b) = (s1.get(i, j), s2.get(i, j));
        match *regime {
            Regime::Sparse => a,
            Regime::Thermodynamic { theta } if theta <= 1.0 => a + theta * b,
            Regime::Thermodynamic { theta } => a / theta + b,
            Regime::Dense => b,
        }
    })
}

/// `(β⁽ᵗ⁾, c, regime)` for the varying-exponent vector.
pub fn beta_and_limit(spec: &VaryingExponentSpec, t: f64) -> Result<(Matrix, Matrix, Regime)> {
    let regime = spec.epsilon.regime(spec.d)?;
    let (s1, s2) = sigma_matrices(spec)?;
    let beta = beta_matrix(&s1, &s2, spec.epsilon.tau(t, spec.d));
    let c = c_limit(&s1, &s2, &regime);
    Ok((beta, c, regime))
}

/// Target covariance `C` with per-entry Monte Carlo standard errors (zero
/// where exact).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMatrix {
    pub c: Matrix,
    pub std_err: Matrix,
}

impl TargetMatrix {
    pub fn is_exact(&self) -> bool {
        self.std_err.max_abs() == 0.0
    }
}

/// `C = |W|·c` (varying exponents) or `C_ij = |W_i ∩ W_j|` (varying domains).
pub fn target_matrix_c(spec: &ModelSpec, budget: &McBudget) -> Result<TargetMatrix> {
    match spec {
        ModelSpec::Exponents(s) => {
            let regime = s.epsilon.regime(s.d)?;
            let (s1, s2) = sigma_matrices(s)?;
            let c = c_limit(&s1, &s2, &regime);
            let vol = s.window.volume(&ModelSpec::geometry_budget(budget, 0))?;
            Ok(TargetMatrix {
                c: c.scaled(vol.value),
                std_err: c.scaled(vol.std_err.abs()),
            })
        }
        ModelSpec::Domains(s) => {
            let (c, std_err) = pd::intersection_gram(&s.windows, budget)?;
            Ok(TargetMatrix { c, std_err })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub op_norm: f64,
    pub min_eigenvalue: f64,
    pub pd: bool,
    pub tolerance: f64,
}

impl SpectralReport {
    pub fn inv_op_norm(&self) -> Result<f64> {
        if !self.pd {
            return Err(Error::SingularMatrix(format!(
                "min eigenvalue {:e} is not above {:e}·‖C‖",
                self.min_eigenvalue, self.tolerance
            )));
        }
        Ok(1.0 / self.min_eigenvalue)
    }
}

/// Eigenvalues, operator norm and positive-definiteness of a symmetric matrix.
pub fn spectral(c: &Matrix) -> Result<SpectralReport> {
    let e = jacobi_eigen(c)?;
    let op_norm = e.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_eigenvalue = e.eigenvalues.first().copied().unwrap_or(0.0);
    Ok(SpectralReport {
        pd: op_norm > 0.0 && min_eigenvalue > PD_TOLERANCE * op_norm,
        eigenvalues: e.eigenvalues,
        op_norm,
        min_eigenvalue,
        tolerance: PD_TOLERANCE,
    })
}

/// Everything known about the covariance structure at one intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub t: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub regime: Option<Regime>,
    pub sigma1: Option<Matrix>,
    pub sigma2: Option<Matrix>,
    pub beta_t: Option<Matrix>,
    pub c_limit: Option<Matrix>,
    pub sigma1_scalar: Option<f64>,
    pub sigma2_scalar: Option<f64>,
    pub target: TargetMatrix,
    pub spectral: SpectralReport,
    /// Bracket `[lower, upper]` for the covariance of the normalized vector.
    pub normalized_lower: Matrix,
    pub normalized_upper: Matrix,
    pub relative_remainder: Matrix,
    pub pd_tolerance: f64,
    pub empirical: Option<Matrix>,
    pub empirical_std_err: Option<Matrix>,
}

impl CovarianceReport {
    pub fn new(spec: &ModelSpec, t: f64, budget: &McBudget) -> Result<Self> {
        spec.validate()?;
        let d = spec.d();
        let eps = spec.epsilon(t);
        let regime = spec.regime().ok();
        let target = target_matrix_c(spec, budget)?;
        let spectral = spectral(&target.c)?;
        let brackets = spec.normalized_covariance(t, budget)?;
        let m = spec.m();
        let pick = |f: &dyn Fn(&CovarianceBracket) -> f64| Matrix::from_fn(m, |i, j| f(&brackets[i][j]));
        let (mut sigma1, mut sigma2, mut beta_t, mut c_lim, mut s1s, mut s2s) = (None, None, None, None, None, None);
        match spec {
            ModelSpec::Exponents(s) => {
                let (beta, c, _) = beta_and_limit(s, t)?;
                let (a, b) = sigma_matrices(s)?;
                sigma1 = Some(a);
                sigma2 = Some(b);
                beta_t = Some(beta);
                c_lim = Some(c);
            }
            ModelSpec::Domains(s) => {
                let (a, b) = s.sigmas();
                s1s = Some(a);
                s2s = Some(b);
            }
        }
        Ok(Self {
            t,
            epsilon: eps,
            tau: t * eps.powi(d as i32),
            regime,
            sigma1,
            sigma2,
            beta_t,
            c_limit: c_lim,
            sigma1_scalar: s1s,
            sigma2_scalar: s2s,
            target,
            spectral,
            normalized_lower: pick(&|b| b.value.lower),
            normalized_upper: pick(&|b| b.value.upper),
            relative_remainder: pick(&|b| b.relative_remainder),
            pd_tolerance: PD_TOLERANCE,
            empirical: None,
            empirical_std_err: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square() -> ConvexBody {
        ConvexBody::cube(2, 0.0, 1.0).unwrap()
    }

    fn exponents(alphas: Vec<f64>, rule: EpsilonRule) -> VaryingExponentSpec {
        VaryingExponentSpec {
            d: 2,
            window: square(),
            alphas,
            epsilon: rule,
        }
    }

    #[test]
    fn sigma_hand_values() {
        let (s1, s2) = sigma_matrices(&exponents(vec![0.0, 0.0], EpsilonRule::power(1.0, 0.5))).unwrap();
        assert!((s1.get(0, 1) - PI / 2.0).abs() < 1e-14);
        assert!((s2.get(1, 0) - PI * PI).abs() < 1e-13);
        let (s1, s2) = sigma_matrices(&exponents(vec![0.0, 1.0, -0.5], EpsilonRule::power(1.0, 0.5))).unwrap();
        assert!(s1.is_symmetric(0.0) && s2.is_symmetric(0.0));
    }

    #[test]
    fn beta_and_c_cases() {
        let spec = exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.5));
        let (s1, s2) = sigma_matrices(&spec).unwrap();
        let (beta, c, regime) = beta_and_limit(&spec, 100.0).unwrap();
        assert_eq!(regime, Regime::Thermodynamic { theta: 1.0 });
        for i in 0..2 {
            for j in 0..2 {
                let sum = s1.get(i, j) + s2.get(i, j);
                assert!((beta.get(i, j) - sum).abs() < 1e-12);
                assert!((c.get(i, j) - sum).abs() < 1e-12);
            }
        }
        let dense = exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.25));
        let (_, c, _) = beta_and_limit(&dense, 100.0).unwrap();
        assert_eq!(c, s2);
    }

    #[test]
    fn dense_target_is_pi_squared_ones() {
        let spec = ModelSpec::Exponents(exponents(vec![0.0, 0.0], EpsilonRule::power(1.0, 0.25)));
        let c = target_matrix_c(&spec, &McBudget::default()).unwrap();
        assert!(c.is_exact());
        assert!(c.c.max_abs_diff(&Matrix::from_fn(2, |_, _| PI * PI)) < 1e-12);
    }

    #[test]
    fn domain_targets() {
        let w2 = ConvexBody::cuboid(vec![[0.5, 1.5], [0.0, 1.0]]).unwrap();
        let far = ConvexBody::cuboid(vec![[3.0, 4.0], [0.0, 1.0]]).unwrap();
        let spec = ModelSpec::Domains(VaryingDomainSpec {
            d: 2,
            windows: vec![square(), w2, far],
            alpha: 1.0,
            epsilon: EpsilonRule::power(1.0, 0.5),
        });
        let c = target_matrix_c(&spec, &McBudget::default()).unwrap();
        assert_eq!(c.c.get(0, 1), 0.5);
        assert_eq!(c.c.get(0, 2), 0.0);
        assert_eq!(c.c.get(2, 2), 1.0);
        let same = ModelSpec::Domains(VaryingDomainSpec {
            d: 2,
            windows: vec![square(), square()],
            alpha: 1.0,
            epsilon: EpsilonRule::power(1.0, 0.5),
        });
        let c = target_matrix_c(&same, &McBudget::default()).unwrap();
        assert_eq!(c.c, Matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0]]));
        assert!(!spectral(&c.c).unwrap().pd);
    }

    #[test]
    fn domain_sigma_hand_values() {
        let (s1, s2) = domain_sigmas(2, 1.0);
        assert!((s1 - PI / 2.0).abs() < 1e-14);
        assert!((s2 - 4.0 * PI * PI / 9.0).abs() < 1e-13);
    }

    #[test]
    fn normalization_is_linear_and_centred() {
        let spec = ModelSpec::Exponents(exponents(vec![1.0, 2.0], EpsilonRule::power(1.0, 0.5)));
        let t = 300.0;
        let means = spec.centering(t, &McBudget::default()).unwrap();
        assert_eq!(spec.normalize(&means, &means, t).unwrap(), vec![0.0, 0.0]);
        let raw: Vec<f64> = means.iter().map(|m| m + 3.0).collect();
        let raw2: Vec<f64> = means.iter().map(|m| m + 6.0).collect();
        let a = spec.normalize(&raw, &means, t).unwrap();
        let b = spec.normalize(&raw2, &means, t).unwrap();
        for k in 0..2 {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-12 * b[k].abs());
        }
    }

    #[test]
    fn spectral_examples() {
        let r = spectral(&Matrix::diag(&[2.0, 3.0])).unwrap();
        assert_eq!(r.op_norm, 3.0);
        assert!(r.pd);
        assert_eq!(r.inv_op_norm().unwrap(), 0.5);
        let r = spectral(&Matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0]])).unwrap();
        assert!(!r.pd);
        assert!(matches!(r.inv_op_norm(), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn dense_exponent_target_is_singular() {
        let spec = ModelSpec::Exponents(exponents(vec![0.0, 1.0], EpsilonRule::power(1.0, 0.25)));
        let c = target_matrix_c(&spec, &McBudget::default()).unwrap();
        let r = spectral(&c.c).unwrap();
        assert!(r.min_eigenvalue < 1e-9 * r.op_norm);
    }

    #[test]
    fn validation_rejects_bad_exponents() {
        let spec = exponents(vec![-1.0, -1.2], EpsilonRule::power(1.0, 0.5));
        assert!(matches!(spec.validate(), Err(Error::InvalidExponents(_))));
        let spec = exponents(vec![0.0], EpsilonRule::power(1.0, 1.0));
        assert!(spec.validate().is_err());
    }
}
