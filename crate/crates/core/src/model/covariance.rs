//! Means and covariances of edge-length functionals from the Mecke formula.
//!
//! With `h(x, y) = 1{0<‖x−y‖<ε} 1{x,y ∈ W} ‖x−y‖^α`,
//!
//! * `E L = ½ t² ∬ h`,
//! * `cov(L_i, L_j) = t³ ∭ h_i(x,y) h_j(y,w) + ½ t² ∬ h_i h_j`.
//!
//! Both reduce to pair integrals `∬_{W×W} 1{‖x−y‖<ε} ‖x−y‖^s` and to a
//! triple integral bracketed between the inner parallel set and the full
//! window. Pair integrals over boxes are evaluated in closed form.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{unit_ball_volume, ConvexBody, McBudget};
use crate::numerics::{gamma_half, ExactSum};

/// `∫_{B(0,ε)} ‖z‖^s dz = dκ_d ε^{s+d} / (s+d)`, for `s + d > 0`.
pub fn ball_power_integral(d: usize, s: f64, eps: f64) -> f64 {
    let kd = unit_ball_volume(d).expect("d ≥ 1");
    d as f64 * kd * eps.powf(s + d as f64) / (s + d as f64)
}

/// Exact `∬_{B×B} 1{‖x−y‖<ε} ‖x−y‖^s dx dy` for an axis-aligned box `B`,
/// valid when `ε` does not exceed the shortest side.
///
/// Writing the integral as `∫_{‖z‖<ε} ‖z‖^s ∏_k (L_k − |z_k|) dz` and
/// expanding the product over subsets `S` of axes gives
/// `Σ_S (−1)^{|S|} ∏_{k∉S} L_k · ω_{|S|} ε^{s+d+|S|}/(s+d+|S|)` with
/// `ω_j = ∫_{S^{d−1}} ∏_{k≤j}|u_k| du = 2π^{(d−j)/2}/Γ((d+j)/2)`.
pub fn box_pair_integral(bounds: &[[f64; 2]], s: f64, eps: f64) -> Option<f64> {
    let d = bounds.len();
    let sides: Vec<f64> = bounds.iter().map(|[lo, hi]| hi - lo).collect();
    if sides.iter().any(|&l| eps > l) {
        return None;
    }
    let mut sum = ExactSum::new();
    for mask in 0u32..(1 << d) {
        let j = mask.count_ones();
        let mut prod = 1.0;
        for (k, l) in sides.iter().enumerate() {
            if mask & (1 << k) == 0 {
                prod *= l;
            }
        }
        let omega = 2.0 * std::f64::consts::PI.powf((d as f64 - j as f64) / 2.0) / gamma_half(d as u32 + j);
        let expo = s + d as f64 + j as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum.add(sign * prod * omega * eps.powf(expo) / expo);
    }
    Some(sum.value())
}

/// A quantity known to lie in `[lower, upper]`, with its leading-order
/// approximation and, when available, its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub leading: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: Option<f64>,
}

impl Bracket {
    pub const ZERO: Bracket = Bracket {
        leading: 0.0,
        lower: 0.0,
        upper: 0.0,
        exact: Some(0.0),
    };

    /// Exact value if known, otherwise the leading term.
    pub fn value(&self) -> f64 {
        self.exact.unwrap_or(self.leading)
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v >= self.lower - slack && v <= self.upper + slack
    }

    fn scaled(self, s: f64) -> Bracket {
        Bracket {
            leading: self.leading * s,
            lower: self.lower * s,
            upper: self.upper * s,
            exact: self.exact.map(|v| v * s),
        }
    }

    fn plus(self, o: Bracket) -> Bracket {
        Bracket {
            leading: self.leading + o.leading,
            lower: self.lower + o.lower,
            upper: self.upper + o.upper,
            exact: match (self.exact, o.exact) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
        }
    }
}

/// `|W|` and a certified lower bound on `|W_ε|`.
fn volume_and_inner(body: &ConvexBody, eps: f64, budget: &McBudget) -> Result<(f64, f64)> {
    let vol = body.volume(budget)?.value;
    let inner = body
        .exact_inner_volume(eps)
        .unwrap_or_else(|| (vol - body.gamma() * eps).max(0.0));
    Ok((vol, inner))
}

/// `∬_{W×W} 1{‖x−y‖<ε} ‖x−y‖^s dx dy`, bracketed by
/// `[|W_ε|, |W|] · ∫_{B_ε}‖z‖^s`.
pub fn pair_integral(body: &ConvexBody, s: f64, eps: f64, budget: &McBudget) -> Result<Bracket> {
    let rho = ball_power_integral(body.dim(), s, eps);
    let (vol, inner) = volume_and_inner(body, eps, budget)?;
    let exact = match body {
        ConvexBody::Box { bounds } => box_pair_integral(bounds, s, eps),
        _ => None,
    };
    Ok(Bracket {
        leading: vol * rho,
        lower: exact.unwrap_or(inner * rho),
        upper: exact.unwrap_or(vol * rho),
        exact,
    })
}

/// `E L = ½ t² ∬_{W×W} 1{‖x−y‖<ε} ‖x−y‖^α`.
pub fn mean(body: &ConvexBody, alpha: f64, t: f64, eps: f64, budget: &McBudget) -> Result<Bracket> {
    Ok(pair_integral(body, alpha, eps, budget)?.scaled(0.5 * t * t))
}

/// Covariance of `L^{α_i}(W_i)` and `L^{α_j}(W_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBracket {
    pub value: Bracket,
    /// `γ_{W_i∩W_j} ε`: relative size of the boundary remainder.
    pub relative_remainder: f64,
}

impl CovarianceBracket {
    pub const ZERO: CovarianceBracket = CovarianceBracket {
        value: Bracket::ZERO,
        relative_remainder: 0.0,
    };

    /// `leading · (1 − γε, 1 + γε)`.
    pub fn symmetric_interval(&self) -> (f64, f64) {
        let l = self.value.leading;
        (l * (1.0 - self.relative_remainder), l * (1.0 + self.relative_remainder))
    }

    pub fn scaled(&self, s: f64) -> CovarianceBracket {
        CovarianceBracket {
            value: self.value.scaled(s),
            relative_remainder: self.relative_remainder,
        }
    }
}

/// `cov(L^{α_i}(W_i), L^{α_j}(W_j))` where both windows are the same body or
/// `overlap = W_i ∩ W_j` (`None` when null).
pub fn covariance(
    overlap: Option<&ConvexBody>,
    alpha_i: f64,
    alpha_j: f64,
    t: f64,
    eps: f64,
    budget: &McBudget,
) -> Result<CovarianceBracket> {
    let Some(w) = overlap else {
        return Ok(CovarianceBracket::ZERO);
    };
    let d = w.dim();
    let quad = pair_integral(w, alpha_i + alpha_j, eps, budget)?.scaled(0.5 * t * t);
    let a = ball_power_integral(d, alpha_i, eps) * ball_power_integral(d, alpha_j, eps) * t.powi(3);
    let (vol, inner) = volume_and_inner(w, eps, budget)?;
    let cubic = Bracket {
        leading: vol * a,
        lower: inner * a,
        upper: vol * a,
        exact: None,
    };
    Ok(CovarianceBracket {
        value: quad.plus(cubic),
        relative_remainder: w.gamma() * eps,
    })
}
