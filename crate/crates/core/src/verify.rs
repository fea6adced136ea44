//! Empirical checks of the normal approximation: replica batches, sample
//! covariances, a certified test-function panel for `d₃`, the p-Poincaré
//! inequality and log-log rate regression.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::PoissonFunctional;
use crate::geometry::{ConvexBody, McBudget, DEFAULT_MC_BUDGET};
use crate::linalg::{jacobi_eigen, Matrix};
use crate::model::{ModelSpec, PD_TOLERANCE};
use crate::numerics::{mean_and_se, ExactSum};
use crate::process::{sample_poisson, REJECTION_CAP};
use crate::seed::{tags, SeedPath, SEED_POLICY};

/// Normalized functional vectors of `R` independent configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaBatch {
    pub spec: ModelSpec,
    pub t: f64,
    pub replicas: usize,
    pub master_seed: u64,
    pub seed_policy: String,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// `raw[r]` is `(L_1, …, L_m)` for replica `r`.
    pub raw: Vec<Vec<f64>>,
    /// `rows[r] = (raw[r] − means) / scales`.
    pub rows: Vec<Vec<f64>>,
}

impl ReplicaBatch {
    pub fn m(&self) -> usize {
        self.means.len()
    }
}

/// Seed of replica `r` under `master_seed`.
pub fn replica_seed(master_seed: u64, r: usize) -> SeedPath {
    SeedPath::new(master_seed, 0)
        .derive(tags::CONFIGURATIONS)
        .with_replica(r as u64)
}

pub fn run_replicas(spec: &ModelSpec, t: f64, replicas: usize, master_seed: u64) -> Result<ReplicaBatch> {
    spec.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::validation("t", format!("must be positive, got {t}")));
    }
    if replicas < 2 {
        return Err(Error::validation("replicas", format!("need at least 2, got {replicas}")));
    }
    let budget = McBudget::new(
        DEFAULT_MC_BUDGET,
        SeedPath::new(master_seed, 0).derive(tags::GEOMETRY),
    );
    let means = spec.centering(t, &budget)?;
    let scales = spec.scales(t)?;
    let vector = spec.edge_vector(t)?;
    let raw: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let config = spec.sample(t, replica_seed(master_seed, r))?;
            Ok(vector.indexed_values(&vector.index(&config)?))
        })
        .collect::<Result<_>>()?;
    let rows = raw
        .iter()
        .map(|v| spec.normalize(v, &means, t))
        .collect::<Result<_>>()?;
    Ok(ReplicaBatch {
        spec: spec.clone(),
        t,
        replicas,
        master_seed,
        seed_policy: SEED_POLICY.to_string(),
        means,
        scales,
        raw,
        rows,
    })
}

/// Unbiased sample covariance of `rows` with jackknife standard errors.
///
/// Standard errors need at least three rows and are `NaN` otherwise.
pub fn empirical_covariance(rows: &[Vec<f64>]) -> Result<(Matrix, Matrix)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::validation("replicas", format!("need at least 2 rows, got {n}")));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidParameter("rows have different lengths".into()));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..m)
        .map(|k| rows.iter().map(|r| r[k]).collect::<ExactSum>().value() / nf)
        .collect();
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let mut cov = Matrix::zeros(m);
    let mut se = Matrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let q: f64 = centred.iter().map(|r| r[i] * r[j]).collect::<ExactSum>().value();
            let c = q / (nf - 1.0);
            // Leave-one-out: Q₋ₖ = Q − n/(n−1)·aₖbₖ over n−2 degrees of freedom.
            let e = if n < 3 {
                f64::NAN
            } else {
                let loo: Vec<f64> = centred
                    .iter()
                    .map(|r| (q - nf / (nf - 1.0) * r[i] * r[j]) / (nf - 2.0))
                    .collect();
                let lm = loo.iter().copied().collect::<ExactSum>().value() / nf;
                let ss: f64 = loo.iter().map(|v| (v - lm) * (v - lm)).collect::<ExactSum>().value();
                ((nf - 1.0) / nf * ss).sqrt()
            };
            cov.set(i, j, c);
            cov.set(j, i, c);
            se.set(i, j, e);
            se.set(j, i, e);
        }
    }
    Ok((cov, se))
}

/// Eigenvalues with `|λ| ≤ CLAMP·‖C‖` are treated as zero.
pub const GAUSSIAN_CLAMP: f64 = 1e-12;

/// `n` draws from `N(0, C)` via the factor `VΛ^{1/2}`, which also covers
/// singular `C`.
pub fn gaussian_sample(c: &Matrix, n: usize, seed: SeedPath) -> Result<Vec<Vec<f64>>> {
    if !c.is_square() || !c.is_symmetric(1e-12 * c.max_abs().max(1.0)) {
        return Err(Error::InvalidParameter("covariance must be square and symmetric".into()));
    }
    let m = c.n();
    let eig = jacobi_eigen(c)?;
    let op = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.first().copied().unwrap_or(0.0);
    if min < -PD_TOLERANCE * op {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l.abs() <= GAUSSIAN_CLAMP * op { 0.0 } else { l.max(0.0).sqrt() })
        .collect();
    let factor = Matrix::from_fn(m, |i, k| eig.eigenvectors.get(i, k) * roots[k]);
    let mut rng = seed.derive(tags::GAUSSIAN).rng();
    Ok((0..n)
        .map(|_| {
            let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            factor.mul_vec(&z)
        })
        .collect())
}

/// `h(x) = cos(⟨u, x⟩ + φ)` with `‖u‖_∞ ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFunction {
    pub u: Vec<f64>,
    pub phi: f64,
}

impl PanelFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self.u.iter().zip(x).map(|(a, b)| a * b).sum();
        (s + self.phi).cos()
    }

    /// `E h(X)` for `X ∼ N(0, C)`: `e^{−⟨u,Cu⟩/2} cos φ`.
    pub fn gaussian_mean(&self, c: &Matrix) -> f64 {
        (-0.5 * c.quad_form(&self.u)).exp() * self.phi.cos()
    }
}

/// Test functions whose second and third partial derivatives are bounded by
/// one, so that each lies in the `d₃` test class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionPanel {
    pub m: usize,
    pub functions: Vec<PanelFunction>,
}

/// Maximum size of the standard panel.
pub const PANEL_CAP: usize = 160;

impl TestFunctionPanel {
    /// Checks `‖u‖_∞ ≤ 1` for every member: then
    /// `|∂_i∂_j h| ≤ |u_i u_j| ≤ 1` and `|∂_i∂_j∂_k h| ≤ 1`.
    pub fn new(m: usize, functions: Vec<PanelFunction>) -> Result<Self> {
        for f in &functions {
            if f.u.len() != m {
                return Err(Error::InvalidParameter(format!(
                    "frequency vector of length {} in a panel of dimension {m}",
                    f.u.len()
                )));
            }
            if f.u.iter().any(|v| !(v.abs() <= 1.0)) || !f.phi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "panel function {f:?} is not certified: need ‖u‖_∞ ≤ 1"
                )));
            }
        }
        Ok(Self { m, functions })
    }

    /// All `u ∈ {−1, 0, 1}^m ∖ {0}` with phases `0` and `π/2`, in
    /// lexicographic order, truncated to [`PANEL_CAP`] functions.
    pub fn standard(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("panel dimension must be positive".into()));
        }
        let mut functions = Vec::new();
        let mut digits = vec![0usize; m];
        'outer: loop {
            if digits.iter().any(|&d| d != 1) {
                let u: Vec<f64> = digits.iter().map(|&d| d as f64 - 1.0).collect();
                for phi in [0.0, std::f64::consts::FRAC_PI_2] {
                    if functions.len() == PANEL_CAP {
                        break 'outer;
                    }
                    functions.push(PanelFunction { u: u.clone(), phi });
                }
            }
            let mut k = m;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < 3 {
                    break;
                }
                digits[k] = 0;
            }
        }
        Self::new(m, functions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub function: PanelFunction,
    pub batch_mean: f64,
    pub gaussian_mean: f64,
    pub abs_diff: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEstimate {
    /// `max_h |E h(F) − E h(X)|` over the panel: a lower bound on `d₃`, up
    /// to Monte Carlo error.
    pub lower_bound: f64,
    /// Standard error of the maximizing entry.
    pub std_err: f64,
    pub argmax: usize,
    pub entries: Vec<PanelEntry>,
}

/// How the Gaussian side of the panel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaussianSide {
    ClosedForm,
    Sampled { samples: usize, seed: SeedPath },
}

/// Minimum number of Gaussian draws when the Gaussian side is sampled.
pub const MIN_GAUSSIAN_SAMPLES: usize = 10_000;

pub fn d3_panel_estimate(
    rows: &[Vec<f64>],
    c: &Matrix,
    panel: &TestFunctionPanel,
    gaussian: GaussianSide,
) -> Result<PanelEstimate> {
    if rows.len() < 2 {
        return Err(Error::validation("replicas", "need at least 2 rows"));
    }
    if c.n() != panel.m || rows.iter().any(|r| r.len() != panel.m) {
        return Err(Error::InvalidParameter("panel, covariance and rows disagree in dimension".into()));
    }
    if panel.functions.is_empty() {
        return Err(Error::InvalidParameter("empty panel".into()));
    }
    let sampled = match gaussian {
        GaussianSide::ClosedForm => None,
        GaussianSide::Sampled { samples, seed } => {
            if samples < MIN_GAUSSIAN_SAMPLES {
                return Err(Error::InsufficientBudget(format!(
                    "{samples} Gaussian samples; at least {MIN_GAUSSIAN_SAMPLES} are needed"
                )));
            }
            Some(gaussian_sample(c, samples, seed)?)
        }
    };
    let entries: Vec<PanelEntry> = panel
        .functions
        .par_iter()
        .map(|f| {
            let vals: Vec<f64> = rows.iter().map(|r| f.eval(r)).collect();
            let (bm, bse) = mean_and_se(&vals);
            let (gm, gse) = match &sampled {
                None => (f.gaussian_mean(c), 0.0),
                Some(xs) => mean_and_se(&xs.iter().map(|x| f.eval(x)).collect::<Vec<_>>()),
            };
            PanelEntry {
                function: f.clone(),
                batch_mean: bm,
                gaussian_mean: gm,
                abs_diff: (bm - gm).abs(),
                std_err: (bse * bse + gse * gse).sqrt(),
            }
        })
        .collect();
    let argmax = entries
        .iter()
        .enumerate()
        .fold(0, |best, (k, e)| if e.abs_diff > entries[best].abs_diff { k } else { best });
    Ok(PanelEstimate {
        lower_bound: entries[argmax].abs_diff,
        std_err: entries[argmax].std_err,
        argmax,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareBudget {
    pub replicas: usize,
    /// Uniform `x`-samples per replica for the add-one-cost integral.
    pub x_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareCheck {
    pub p: f64,
    /// `E|F − EF|^p`.
    pub lhs: f64,
    pub lhs_std_err: f64,
    /// `2^{2−p} ∫ E|D_xF|^p λ(dx)`.
    pub rhs: f64,
    pub rhs_std_err: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pooled_std_err: f64,
    pub pass: bool,
}

/// p-Poincaré inequality `E|F − EF|^p ≤ 2^{2−p} ∫ E|D_xF|^p λ(dx)` for a
/// scalar functional of a Poisson process with intensity `t` on `body`.
pub fn poincare_check<F: PoissonFunctional>(
    f: &F,
    body: &ConvexBody,
    t: f64,
    p: f64,
    budget: &PoincareBudget,
    seed: SeedPath,
) -> Result<PoincareCheck> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::validation("p", format!("must lie in [1, 2], got {p}")));
    }
    if f.components() != 1 {
        return Err(Error::InvalidParameter("the Poincaré check takes a scalar functional".into()));
    }
    if budget.replicas < 2 || budget.x_samples == 0 {
        return Err(Error::InsufficientBudget("need ≥ 2 replicas and ≥ 1 x-sample".into()));
    }
    let vol = body.volume(&McBudget::new(DEFAULT_MC_BUDGET, seed.derive(tags::GEOMETRY)))?.value;
    let bb = body.bounding_box();
    let per: Vec<(f64, f64)> = (0..budget.replicas)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let config = sample_poisson(body, t, seed.derive(tags::CONFIGURATIONS).with_replica(r as u64))?;
            let idx = f.index(&config)?;
            let mut rng = seed.derive(tags::X_SAMPLES).with_replica(r as u64).rng();
            let mut acc = ExactSum::new();
            for _ in 0..budget.x_samples {
                let x = body.sample_uniform(&bb, &mut rng, REJECTION_CAP)?;
                acc.add(f.add_one_cost(&idx, &x)[0].abs().powf(p));
            }
            Ok((f.value(&idx)[0], acc.value() / budget.x_samples as f64))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let values: Vec<f64> = per.iter().map(|v| v.0).collect();
    let mean = values.iter().copied().collect::<ExactSum>().value() / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).abs().powf(p)).collect();
    let (dm, dse) = mean_and_se(&dev);
    // n/(n−1) makes the p = 2 case the unbiased variance.
    let lhs = dm * n / (n - 1.0);
    let lhs_std_err = dse * n / (n - 1.0);
    let (cm, cse) = mean_and_se(&per.iter().map(|v| v.1).collect::<Vec<_>>());
    let k = 2f64.powf(2.0 - p) * t * vol;
    let (rhs, rhs_std_err) = (k * cm, k * cse);
    let pooled = (lhs_std_err * lhs_std_err + rhs_std_err * rhs_std_err).sqrt();
    Ok(PoincareCheck {
        p,
        lhs,
        lhs_std_err,
        rhs,
        rhs_std_err,
        margin: rhs - lhs,
        pooled_std_err: pooled,
        pass: lhs <= rhs + 3.0 * pooled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log y = intercept + slope·log t`.
pub fn rate_regression(ts: &[f64], ys: &[f64]) -> Result<RateFit> {
    if ts.len() != ys.len() {
        return Err(Error::InvalidParameter("grid and series differ in length".into()));
    }
    if ts.len() < 4 {
        return Err(Error::validation("t_grid", format!("need at least 4 points, got {}", ts.len())));
    }
    if let Some(v) = ts.iter().chain(ys).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::LogDomain(format!("cannot take the logarithm of {v}")));
    }
    let x: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("grid points must not all coincide".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}
