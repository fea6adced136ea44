//! The four ζ terms and the assembled `d₂`/`d₃` bounds.
//!
//! For a centred vector `F` and a target covariance `C`,
//!
//! * `ζ₁ = Σ_ij |C_ij − cov(F_i, F_j)|`
//! * `ζ₂ = 2^{2/p−1} Σ_ij (∫(∫ ‖D²_{x,y}F_i‖_{2p} ‖D²_{x,y}F_j‖_{2p} λ(dx))^p λ(dy))^{1/p}`
//! * `ζ₃ = 2^{2/p}   Σ_ij (∫(∫ ‖D_xF_i‖_{2p} ‖D²_{x,y}F_j‖_{2p} λ(dx))^p λ(dy))^{1/p}`
//! * `ζ₄ = m^{q−1}   Σ_ij ∫ ‖D_xF_i‖_{q+1} ‖D_xF_j‖_{q+1}^q λ(dx)`
//!
//! where `‖G‖_r = E[|G|^r]^{1/r}`. Then
//! `d₃ ≤ ½(ζ₁+ζ₂+ζ₃) + ζ₄` and, for positive-definite `C`,
//! `d₂ ≤ a(ζ₁+ζ₂+ζ₃) + max(2a, √(2π)/8·‖C⁻¹‖^{3/2}‖C‖)ζ₄` with
//! `a = ‖C⁻¹‖‖C‖^{1/2}`.
//!
//! Closed-form values for the edge-length vectors are upper bounds that
//! carry the add-one-cost moment constant `c₀` as a free parameter.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::PoissonFunctional;
use crate::geometry::{unit_ball_volume, ConvexBody, McBudget};
use crate::linalg::Matrix;
use crate::model::{beta_and_limit, spectral, target_matrix_c, ModelSpec, Regime, SpectralReport};
use crate::numerics::mean_and_se;
use crate::process::{sample_poisson, REJECTION_CAP};
use crate::seed::{tags, SeedPath};

/// Admissible `p`: values above 2 are clamped to 2, while `p ≤ 1` has no
/// nearest point in `(1, 2]` and is rejected.
pub fn clamp_p(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 1.0 {
        return Err(Error::validation("p", format!("must exceed 1, got {p}")));
    }
    Ok(p.min(2.0))
}

/// `q` as given, or `3 − 2/p` when `None`, for an already clamped `p`.
pub fn resolve_q(p: f64, q: Option<f64>) -> Result<f64> {
    let p = clamp_p(p)?;
    let q = q.unwrap_or(3.0 - 2.0 / p);
    if !(1.0..=2.0).contains(&q) {
        return Err(Error::validation("q", format!("must lie in [1, 2], got {q}")));
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zetas {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
}

impl Zetas {
    pub fn scaled(&self, s: f64) -> Zetas {
        Zetas {
            zeta1: self.zeta1 * s,
            zeta2: self.zeta2 * s,
            zeta3: self.zeta3 * s,
            zeta4: self.zeta4 * s,
        }
    }
}

pub fn d3_bound(z: &Zetas) -> f64 {
    0.5 * (z.zeta1 + z.zeta2 + z.zeta3) + z.zeta4
}

/// Requires a positive-definite `C`.
pub fn d2_bound(z: &Zetas, c: &SpectralReport) -> Result<f64> {
    let inv = c.inv_op_norm()?;
    let a = inv * c.op_norm.sqrt();
    let b = (2.0 * a).max((2.0 * std::f64::consts::PI).sqrt() / 8.0 * inv.powf(1.5) * c.op_norm);
    Ok(a * (z.zeta1 + z.zeta2 + z.zeta3) + b * z.zeta4)
}

/// `(d₃ bound, d₂ bound or the reason it is unavailable)`.
pub fn assemble_bounds(z: &Zetas, c: &SpectralReport) -> (f64, Result<f64>) {
    (d3_bound(z), d2_bound(z, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaMode {
    /// Explicit upper bounds, up to the constant `c0`.
    ClosedForm { c0: f64 },
    MonteCarlo {
        /// Bootstrap standard errors of `ζ₁..ζ₄`.
        std_errs: [f64; 4],
        /// Relative plug-in bias indicator `(p−1)·Var/(n·mean²)` of the
        /// inner integrals of `ζ₂` and `ζ₃`.
        plug_in_bias: [f64; 2],
        replicas: usize,
        x_samples: usize,
        y_samples: usize,
        bootstrap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaBreakdown {
    pub t: f64,
    pub p: f64,
    pub q: f64,
    /// Value used in the assembled bounds (the upper end in closed form).
    pub zeta1: f64,
    /// `[lower, upper]` for `ζ₁`.
    pub zeta1_interval: [f64; 2],
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    pub mode: ZetaMode,
    pub d3_bound: f64,
    pub d2_bound: Option<f64>,
    /// Why the `d₂` bound is absent, if it is.
    pub d2_note: Option<String>,
}

impl ZetaBreakdown {
    pub fn zetas(&self) -> Zetas {
        Zetas {
            zeta1: self.zeta1,
            zeta2: self.zeta2,
            zeta3: self.zeta3,
            zeta4: self.zeta4,
        }
    }

    fn assemble(t: f64, p: f64, q: f64, z: Zetas, zeta1_interval: [f64; 2], mode: ZetaMode, c: &SpectralReport) -> Self {
        let (d3, d2) = assemble_bounds(&z, c);
        let (d2_bound, d2_note) = match d2 {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            t,
            p,
            q,
            zeta1: z.zeta1,
            zeta1_interval,
            zeta2: z.zeta2,
            zeta3: z.zeta3,
            zeta4: z.zeta4,
            mode,
            d3_bound: d3,
            d2_bound,
            d2_note,
        }
    }
}

fn moment_conditions(d: usize, alphas: &[f64], p: f64, q: f64) -> Result<()> {
    let d = d as f64;
    for &a in alphas {
        if !(d + 2.0 * p * a > 0.0) {
            return Err(Error::MomentCondition(format!(
                "d + 2pα = {} must be positive (α = {a}, p = {p})",
                d + 2.0 * p * a
            )));
        }
        if !(d + (q + 1.0) * a > 0.0) {
            return Err(Error::MomentCondition(format!(
                "d + (q+1)α = {} must be positive (α = {a}, q = {q})",
                d + (q + 1.0) * a
            )));
        }
    }
    Ok(())
}

/// Closed-form upper bounds on the ζ terms for a model at intensity `t`.
pub fn zeta_closed_form(
    spec: &ModelSpec,
    t: f64,
    p: f64,
    q: Option<f64>,
    c0: f64,
    budget: &McBudget,
) -> Result<ZetaBreakdown> {
    spec.validate()?;
    let p = clamp_p(p)?;
    let q = resolve_q(p, q)?;
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::validation("c0", format!("must be positive, got {c0}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::validation("t", format!("must be positive, got {t}")));
    }
    let d = spec.d();
    let df = d as f64;
    let dk = df * unit_ball_volume(d)?;
    let m = spec.m();
    let mf = m as f64;
    let eps = spec.epsilon(t);
    let tau = t * eps.powi(d as i32);
    let target = target_matrix_c(spec, budget)?;
    let c = &target.c;
    let sp = spectral(c)?;
    let tp = t.powf(-1.0 + 1.0 / p);

    let (z, zeta1_lower) = match spec {
        ModelSpec::Exponents(s) => {
            moment_conditions(d, &s.alphas, p, q)?;
            let (beta, _, _) = beta_and_limit(s, t)?;
            let vol = s.window.volume(budget)?.value;
            let gamma = s.window.gamma();
            let (mut z1, mut z1_lo, mut z2sum) = (0.0, 0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    let b = beta.get(i, j);
                    let cij = c.get(i, j);
                    z1 += b * gamma * eps + (vol * b - cij).abs();
                    let (lo, hi) = (b * (vol - gamma * eps), b * vol);
                    z1_lo += (lo - cij).max(0.0) + (cij - hi).max(0.0);
                    z2sum += dk / (df + s.alphas[i] + s.alphas[j]);
                }
            }
            let z3sum: f64 = s.alphas.iter().map(|a| dk / (df + a)).sum();
            let z = Zetas {
                zeta1: z1,
                zeta2: 2f64.powf(2.0 / p - 1.0) * vol.powf(1.0 / p) * z2sum * tp / tau.max(1.0),
                zeta3: 2f64.powf(2.0 / p) * c0 * mf * vol.powf(1.0 / p) * z3sum * tp
                    * tau.min(1.0).powf(1.0 / (2.0 * p)),
                zeta4: mf.powf(q + 1.0) * c0.powf(1.0 + q) * vol * t.powf((1.0 - q) / 2.0)
                    * tau.min(1.0).powf((1.0 - q) / 2.0),
            };
            (z, z1_lo)
        }
        ModelSpec::Domains(s) => {
            moment_conditions(d, &[s.alpha], p, q)?;
            let (s1, s2) = s.sigmas();
            let scale = 0.5 * s1 + s2 * tau;
            let (mut z1, mut z2sum, mut z4sum) = (0.0, 0.0, 0.0);
            for i in 0..m {
                for j in 0..m {
                    if let Some(w) = s.windows[i].intersect(&s.windows[j]) {
                        z1 += w.gamma() * eps;
                    }
                    z2sum += c.get(i, j).powf(1.0 / p);
                    z4sum += c.get(i, j);
                }
            }
            let z3sum: f64 = (0..m).map(|j| c.get(j, j).powf(1.0 / p)).sum();
            let z = Zetas {
                zeta1: z1,
                zeta2: 2f64.powf(2.0 / p - 1.0) * s1 * tp * z2sum / scale,
                zeta3: 2f64.powf(2.0 / p) * c0 * mf * (dk / (df + s.alpha)) * tp
                    * tau.powf(1.0 / (2.0 * p))
                    * tau.max(1.0).powf(1.0 - 1.0 / (2.0 * p))
                    / scale
                    * z3sum,
                zeta4: mf.powf(q - 1.0) * c0.powf(1.0 + q) * z4sum
                    * t.powf((1.0 - q) / 2.0)
                    * tau.powf((1.0 - q) / 2.0)
                    * tau.max(1.0).powf(q)
                    / scale.powf((1.0 + q) / 2.0),
            };
            (z, 0.0)
        }
    };
    Ok(ZetaBreakdown::assemble(
        t,
        p,
        q,
        z,
        [zeta1_lower, z.zeta1],
        ZetaMode::ClosedForm { c0 },
        &sp,
    ))
}

/// Sample sizes for the nested Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaBudget {
    pub replicas: usize,
    /// Inner `x`-samples per `y`-stratum.
    pub x_samples: usize,
    /// Outer `y`-strata.
    pub y_samples: usize,
    pub bootstrap: usize,
}

impl Default for ZetaBudget {
    fn default() -> Self {
        Self {
            replicas: 200,
            x_samples: 32,
            y_samples: 32,
            bootstrap: 200,
        }
    }
}

/// Minimum inner sample size for the nested estimator.
pub const MIN_X_SAMPLES: usize = 16;

struct ReplicaCosts {
    values: Vec<f64>,
    /// `|D_xF_i|^{2p}` then `|D_xF_i|^{q+1}`, indexed `[x * m + i]`.
    d1_2p: Vec<f64>,
    d1_q1: Vec<f64>,
    /// `|D²_{x,y}F_i|^{2p}`, indexed `[(s * nx + k) * m + i]`.
    d2_2p: Vec<f64>,
}

/// Nested estimator state shared by the point estimate and the bootstrap.
struct Nested<'a> {
    reps: &'a [ReplicaCosts],
    c: &'a Matrix,
    m: usize,
    nx: usize,
    lam: f64,
    p: f64,
    q: f64,
}

impl Nested<'_> {
    /// ζ estimates for replica multiplicities `wr` and stratum multiplicities `ws`.
    fn estimate(&self, wr: &[f64], ws: &[f64]) -> (Zetas, [f64; 2]) {
        let (m, nx, p, q, lam) = (self.m, self.nx, self.p, self.q, self.lam);
        let wsum: f64 = wr.iter().sum();
        let npts = nx * ws.len();
        let mut mom1 = vec![0.0; npts * m];
        let mut momq = vec![0.0; npts * m];
        let mut mom2 = vec![0.0; npts * m];
        let mut mean = vec![0.0; m];
        for (rep, &w) in self.reps.iter().zip(wr) {
            if w == 0.0 {
                continue;
            }
            for k in 0..npts * m {
                mom1[k] += w * rep.d1_2p[k];
                momq[k] += w * rep.d1_q1[k];
                mom2[k] += w * rep.d2_2p[k];
            }
            for i in 0..m {
                mean[i] += w * rep.values[i];
            }
        }
        for v in mom1.iter_mut().chain(momq.iter_mut()).chain(mom2.iter_mut()) {
            *v /= wsum;
        }
        for v in mean.iter_mut() {
            *v /= wsum;
        }
        let mut cov = Matrix::zeros(m);
        for (rep, &w) in self.reps.iter().zip(wr) {
            for i in 0..m {
                for j in 0..m {
                    cov.0[i][j] += w * (rep.values[i] - mean[i]) * (rep.values[j] - mean[j]);
                }
            }
        }
        let zeta1: f64 = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| (self.c.get(i, j) - cov.get(i, j) / (wsum - 1.0)).abs())
            .sum();

        let r2p = 1.0 / (2.0 * p);
        let wssum: f64 = ws.iter().sum();
        let mut zeta2 = 0.0;
        let mut zeta3 = 0.0;
        let mut bias = [0.0, 0.0];
        let mut nbias = 0.0;
        let mut g2 = vec![0.0; nx];
        let mut g3 = vec![0.0; nx];
        for i in 0..m {
            for j in 0..m {
                let (mut o2, mut o3) = (0.0, 0.0);
                for (s, &w) in ws.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for k in 0..nx {
                        let x = s * nx + k;
                        let d2j = mom2[x * m + j].powf(r2p);
                        g2[k] = mom2[x * m + i].powf(r2p) * d2j;
                        g3[k] = mom1[x * m + i].powf(r2p) * d2j;
                    }
                    let (m2, _) = mean_and_se(&g2);
                    let (m3, _) = mean_and_se(&g3);
                    o2 += w * (lam * m2).powf(p);
                    o3 += w * (lam * m3).powf(p);
                    for (b, (g, mu)) in bias.iter_mut().zip([(&g2, m2), (&g3, m3)]) {
                        if mu > 0.0 {
                            let var = crate::numerics::sample_variance(g);
                            *b += w * (p - 1.0) * var / (nx as f64 * mu * mu);
                        }
                    }
                    nbias += w;
                }
                zeta2 += (lam * o2 / wssum).powf(1.0 / p);
                zeta3 += (lam * o3 / wssum).powf(1.0 / p);
            }
        }
        zeta2 *= 2f64.powf(2.0 / p - 1.0);
        zeta3 *= 2f64.powf(2.0 / p);

        let r1 = 1.0 / (q + 1.0);
        let mut zeta4 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut acc = 0.0;
                for (s, &w) in ws.iter().enumerate() {
                    for k in 0..nx {
                        let x = s * nx + k;
                        acc += w * momq[x * m + i].powf(r1) * momq[x * m + j].powf(q * r1);
                    }
                }
                zeta4 += lam * acc / (wssum * nx as f64);
            }
        }
        zeta4 *= (m as f64).powf(q - 1.0);
        if nbias > 0.0 {
            bias[0] /= nbias;
            bias[1] /= nbias;
        }
        (
            Zetas {
                zeta1,
                zeta2,
                zeta3,
                zeta4,
            },
            bias,
        )
    }
}

/// Nested Monte Carlo estimate of the ζ terms for a functional of a Poisson
/// process of intensity `t` on `body`, against the target covariance `c`.
///
/// Integrals against `λ = t·Leb|_body` are estimated as `t|body|·E_{x∼U}`.
/// Replica multiplicities and `y`-strata are jointly resampled for the
/// bootstrap standard errors.
#[allow(clippy::too_many_arguments)]
pub fn zeta_monte_carlo<F: PoissonFunctional>(
    f: &F,
    body: &ConvexBody,
    t: f64,
    c: &Matrix,
    p: f64,
    q: Option<f64>,
    budget: &ZetaBudget,
    seed: SeedPath,
) -> Result<ZetaBreakdown> {
    let p = clamp_p(p)?;
    let q = resolve_q(p, q)?;
    if budget.x_samples < MIN_X_SAMPLES {
        return Err(Error::InsufficientBudget(format!(
            "{} x-samples per y-stratum; at least {MIN_X_SAMPLES} are needed",
            budget.x_samples
        )));
    }
    if budget.replicas < 2 || budget.y_samples == 0 {
        return Err(Error::InsufficientBudget(
            "need at least 2 replicas and one y-stratum".into(),
        ));
    }
    let m = f.components();
    if c.n() != m {
        return Err(Error::InvalidParameter(format!(
            "target matrix is {}×{} but the functional has {m} components",
            c.n(),
            c.n()
        )));
    }
    let (nx, ny) = (budget.x_samples, budget.y_samples);
    let vol = body.volume(&McBudget::new(crate::geometry::DEFAULT_MC_BUDGET, seed.derive(tags::GEOMETRY)))?.value;
    let lam = t * vol;
    let bb = body.bounding_box();

    let mut ys = Vec::with_capacity(ny);
    let mut xs = Vec::with_capacity(ny * nx);
    let mut yr = seed.derive(tags::Y_SAMPLES).rng();
    for s in 0..ny {
        ys.push(body.sample_uniform(&bb, &mut yr, REJECTION_CAP)?);
        let mut xr = seed.derive(tags::X_SAMPLES).with_replica(s as u64).rng();
        for _ in 0..nx {
            xs.push(body.sample_uniform(&bb, &mut xr, REJECTION_CAP)?);
        }
    }

    let reps: Vec<ReplicaCosts> = (0..budget.replicas)
        .into_par_iter()
        .map(|r| -> Result<ReplicaCosts> {
            let config = sample_poisson(body, t, seed.derive(tags::CONFIGURATIONS).with_replica(r as u64))?;
            let idx = f.index(&config)?;
            let values = f.value(&idx);
            let mut d1_2p = Vec::with_capacity(nx * ny * m);
            let mut d1_q1 = Vec::with_capacity(nx * ny * m);
            let mut d2_2p = Vec::with_capacity(nx * ny * m);
            for (n, x) in xs.iter().enumerate() {
                for v in f.add_one_cost(&idx, x) {
                    d1_2p.push(v.abs().powf(2.0 * p));
                    d1_q1.push(v.abs().powf(q + 1.0));
                }
                for v in f.second_difference(&idx, x, &ys[n / nx]) {
                    d2_2p.push(v.abs().powf(2.0 * p));
                }
            }
            Ok(ReplicaCosts {
                values,
                d1_2p,
                d1_q1,
                d2_2p,
            })
        })
        .collect::<Result<_>>()?;

    let nested = Nested {
        reps: &reps,
        c,
        m,
        nx,
        lam,
        p,
        q,
    };
    let (z, bias) = nested.estimate(&vec![1.0; budget.replicas], &vec![1.0; ny]);
    let boot: Vec<Zetas> = (0..budget.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.derive(tags::BOOTSTRAP).with_replica(b as u64).rng();
            let mut wr = vec![0.0; budget.replicas];
            for _ in 0..budget.replicas {
                wr[rng.random_range(0..budget.replicas)] += 1.0;
            }
            let mut ws = vec![0.0; ny];
            for _ in 0..ny {
                ws[rng.random_range(0..ny)] += 1.0;
            }
            nested.estimate(&wr, &ws).0
        })
        .collect();
    let sd = |g: fn(&Zetas) -> f64| -> f64 {
        if boot.len() < 2 {
            return f64::NAN;
        }
        crate::numerics::sample_variance(&boot.iter().map(g).collect::<Vec<_>>()).sqrt()
    };
    let std_errs = [sd(|z| z.zeta1), sd(|z| z.zeta2), sd(|z| z.zeta3), sd(|z| z.zeta4)];
    let sp = spectral(c)?;
    Ok(ZetaBreakdown::assemble(
        t,
        p,
        q,
        z,
        [z.zeta1, z.zeta1],
        ZetaMode::MonteCarlo {
            std_errs,
            plug_in_bias: bias,
            replicas: budget.replicas,
            x_samples: nx,
            y_samples: ny,
            bootstrap: budget.bootstrap,
        },
        &sp,
    ))
}

/// Observed ratios `E[(D_xL)^r]^{1/r} / (ε^α (tε^d)^{1/r} (1∨tε^d)^{1−1/r})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Fit {
    pub c0: f64,
    /// `(r, max ratio over sampled x and components)`.
    pub per_order: Vec<(f64, f64)>,
}

/// Fits the add-one-cost moment constant as the largest observed ratio to
/// its scaling form, over the moment orders `orders`.
pub fn fit_c0(
    spec: &ModelSpec,
    t: f64,
    orders: &[f64],
    replicas: usize,
    x_samples: usize,
    seed: SeedPath,
) -> Result<C0Fit> {
    if replicas < 2 || x_samples == 0 {
        return Err(Error::InsufficientBudget("need ≥ 2 replicas and ≥ 1 x-sample".into()));
    }
    let d = spec.d();
    let eps = spec.epsilon(t);
    let tau = t * eps.powi(d as i32);
    let vector = spec.edge_vector(t)?;
    let m = spec.m();
    let mut pts: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut rng = seed.derive(tags::X_SAMPLES).rng();
    for i in 0..m {
        let w = spec.component(i).0;
        let wbb = w.bounding_box();
        for _ in 0..x_samples {
            pts.push((i, w.sample_uniform(&wbb, &mut rng, REJECTION_CAP)?));
        }
    }
    let costs: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let config = spec.sample(t, seed.derive(tags::CONFIGURATIONS).with_replica(r as u64))?;
            let idx = vector.index(&config)?;
            Ok(pts.iter().map(|(i, x)| vector.add_one_costs(&idx, x)[*i]).collect())
        })
        .collect::<Result<_>>()?;
    let mut per_order = Vec::new();
    let mut c0: f64 = 0.0;
    for &r in orders {
        let mut best: f64 = 0.0;
        for (n, (i, _)) in pts.iter().enumerate() {
            let alpha = spec.component(*i).1;
            let mom = costs.iter().map(|c| c[n].powf(r)).sum::<f64>() / replicas as f64;
            let scale = eps.powf(alpha) * tau.powf(1.0 / r) * tau.max(1.0).powf(1.0 - 1.0 / r);
            best = best.max(mom.powf(1.0 / r) / scale);
        }
        per_order.push((r, best));
        c0 = c0.max(best);
    }
    Ok(C0Fit { c0, per_order })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTerm {
    pub label: String,
    /// Exponent of `t` in this term; `None` when the term vanishes identically.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub regime: Regime,
    /// Largest exponent among the terms: the predicted log-log slope.
    pub exponent: f64,
    pub expression: String,
    pub terms: Vec<RateTerm>,
    /// Whether the bound is claimed for `d₂` as well as `d₃`.
    pub d2_applicable: bool,
}

/// Predicted convergence exponent for the rule `ε_t = a t^{−b}(1 + c t^{−e})`.
pub fn rate_prediction(spec: &ModelSpec, p: f64) -> Result<RatePrediction> {
    let p = clamp_p(p)?;
    let rule = spec.rule();
    let regime = spec.regime()?;
    let d = spec.d() as f64;
    let b = rule.b;
    let lim = if rule.c != 0.0 { Some(-rule.e) } else { None };
    let tp = -1.0 + 1.0 / p;
    let term = |label: &str, exponent: Option<f64>| RateTerm {
        label: label.to_string(),
        exponent,
    };
    let eps_term = term("ε_t", Some(-b));
    let (terms, expression) = match (spec, regime) {
        (ModelSpec::Exponents(_), Regime::Sparse) => (
            vec![
                eps_term,
                term("σ2*·tε_t^d", Some(1.0 - b * d)),
                term("(t²ε_t^d)^(−1+1/p)", Some((2.0 - b * d) * tp)),
            ],
            "ε_t + σ2*·tε_t^d + (t²ε_t^d)^(−1+1/p)",
        ),
        (ModelSpec::Exponents(_), Regime::Thermodynamic { theta }) if theta <= 1.0 => (
            vec![eps_term, term("σ2*·|θ − tε_t^d|", lim), term("t^(−1+1/p)", Some(tp))],
            "ε_t + σ2*·|θ − tε_t^d| + t^(−1+1/p)",
        ),
        (ModelSpec::Exponents(_), Regime::Thermodynamic { .. }) => (
            vec![eps_term, term("σ1*·|1/θ − 1/(tε_t^d)|", lim), term("t^(−1+1/p)", Some(tp))],
            "ε_t + σ1*·|1/θ − 1/(tε_t^d)| + t^(−1+1/p)",
        ),
        (ModelSpec::Exponents(_), Regime::Dense) => (
            vec![eps_term, term("σ1*/(tε_t^d)", Some(-(1.0 - b * d))), term("t^(−1+1/p)", Some(tp))],
            "ε_t + σ1*/(tε_t^d) + t^(−1+1/p)",
        ),
        (ModelSpec::Domains(_), Regime::Sparse) => (
            vec![eps_term, term("(t²ε_t^d)^(−1+1/p)", Some((2.0 - b * d) * tp))],
            "ε_t + (t²ε_t^d)^(−1+1/p)",
        ),
        (ModelSpec::Domains(_), _) => (
            vec![eps_term, term("t^(−1+1/p)", Some(tp))],
            "ε_t + t^(−1+1/p)",
        ),
    };
    let exponent = terms
        .iter()
        .filter_map(|t| t.exponent)
        .fold(f64::NEG_INFINITY, f64::max);
    let d2_applicable = match spec {
        ModelSpec::Exponents(_) => regime.d2_applicable(),
        ModelSpec::Domains(_) => true,
    };
    Ok(RatePrediction {
        regime,
        exponent,
        expression: expression.to_string(),
        terms,
        d2_applicable,
    })
}

/// Writes one row per breakdown: `t,zeta1_lower,zeta1,zeta2,zeta3,zeta4,d3_bound,d2_bound`.
pub fn write_zeta_csv<W: Write>(rows: &[ZetaBreakdown], mut w: W) -> Result<()> {
    writeln!(w, "t,zeta1_lower,zeta1,zeta2,zeta3,zeta4,d3_bound,d2_bound")?;
    for r in rows {
        let d2 = r.d2_bound.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t, r.zeta1_interval[0], r.zeta1, r.zeta2, r.zeta3, r.zeta4, r.d3_bound, d2
        )?;
    }
    Ok(())
}
