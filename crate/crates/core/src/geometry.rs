//! Convex bodies: boxes, balls and finite intersections of those.
//!
//! Everything downstream only needs indicator evaluation, volumes and the
//! distance to the boundary, so intersections are kept as lazy lists of
//! parts rather than being resolved into polytopes.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::SeedPath;

/// Default hit-or-miss budget for volumes that have no closed form.
pub const DEFAULT_MC_BUDGET: u64 = 1_000_000;

/// Volume of the unit ball in ℝ^d, `π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidDimension(d));
    }
    // κ_d = κ_{d-2} · 2π / d with κ_0 = 1, κ_1 = 2
    let (mut k, mut n) = if d % 2 == 0 { (1.0, 0) } else { (2.0, 1) };
    while n < d {
        n += 2;
        k *= 2.0 * PI / n as f64;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConvexBody {
    Box { bounds: Vec<[f64; 2]> },
    Ball { center: Vec<f64>, radius: f64 },
    Intersection { parts: Vec<ConvexBody> },
}

/// A volume together with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_err: f64,
}

impl VolumeEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_err: 0.0 }
    }

    pub fn is_exact(&self) -> bool {
        self.std_err == 0.0
    }
}

/// `|W ∖ W_ε|` together with the linear majorant `γ_W ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerDeficit {
    pub deficit: VolumeEstimate,
    pub linear_bound: f64,
}

/// Sampling parameters for hit-or-miss estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub samples: u64,
    pub seed: SeedPath,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            samples: DEFAULT_MC_BUDGET,
            seed: SeedPath::new(0, 0),
        }
    }
}

impl McBudget {
    pub fn new(samples: u64, seed: SeedPath) -> Self {
        Self { samples, seed }
    }
}

impl ConvexBody {
    pub fn cuboid(bounds: Vec<[f64; 2]>) -> Result<Self> {
        let b = ConvexBody::Box { bounds };
        b.validate()?;
        Ok(b)
    }

    /// The cube `[lo, hi]^d`.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::cuboid(vec![[lo, hi]; d])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let b = ConvexBody::Ball { center, radius };
        b.validate()?;
        Ok(b)
    }

    pub fn intersection(parts: Vec<ConvexBody>) -> Result<Self> {
        let b = ConvexBody::Intersection { parts };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConvexBody::Box { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::InvalidDimension(0));
                }
                for (k, [lo, hi]) in bounds.iter().enumerate() {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::InvalidBody(format!(
                            "box axis {k} needs finite lo < hi, got [{lo}, {hi}]"
                        )));
                    }
                }
            }
            ConvexBody::Ball { center, radius } => {
                if center.is_empty() {
                    return Err(Error::InvalidDimension(0));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidBody("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidBody(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            ConvexBody::Intersection { parts } => {
                let first = parts
                    .first()
                    .ok_or_else(|| Error::InvalidBody("intersection needs at least one part".into()))?;
                let d = first.dim();
                for p in parts {
                    p.validate()?;
                    if p.dim() != d {
                        return Err(Error::InvalidBody(format!(
                            "intersection parts disagree on dimension ({} vs {d})",
                            p.dim()
                        )));
                    }
                }
                let bb = self.bounding_box();
                if bb.iter().any(|[lo, hi]| lo >= hi) {
                    return Err(Error::InvalidBody(
                        "intersection has an empty bounding box".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Box { bounds } => bounds.len(),
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Intersection { parts } => parts.first().map_or(0, |p| p.dim()),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ConvexBody::Box { bounds } => bounds
                .iter()
                .zip(x)
                .all(|([lo, hi], v)| *lo <= *v && *v <= *hi),
            ConvexBody::Ball { center, radius } => dist2(center, x) <= radius * radius,
            ConvexBody::Intersection { parts } => parts.iter().all(|p| p.contains(x)),
        }
    }

    /// Distance from `x` to the complement of the body; non-positive outside.
    ///
    /// For an intersection this is the minimum over the parts, since
    /// `dist(x, (∩A)ᶜ) = min dist(x, Aᶜ)`.
    pub fn depth(&self, x: &[f64]) -> f64 {
        match self {
            ConvexBody::Box { bounds } => bounds
                .iter()
                .zip(x)
                .map(|([lo, hi], v)| (v - lo).min(hi - v))
                .fold(f64::INFINITY, f64::min),
            ConvexBody::Ball { center, radius } => radius - dist2(center, x).sqrt(),
            ConvexBody::Intersection { parts } => parts
                .iter()
                .map(|p| p.depth(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Tightest axis-aligned box containing the body (for intersections, the
    /// intersection of the parts' boxes).
    pub fn bounding_box(&self) -> Vec<[f64; 2]> {
        match self {
            ConvexBody::Box { bounds } => bounds.clone(),
            ConvexBody::Ball { center, radius } => {
                center.iter().map(|c| [c - radius, c + radius]).collect()
            }
            ConvexBody::Intersection { parts } => {
                let mut it = parts.iter();
                let mut bb = it.next().map(|p| p.bounding_box()).unwrap_or_default();
                for p in it {
                    for (acc, [lo, hi]) in bb.iter_mut().zip(p.bounding_box()) {
                        acc[0] = acc[0].max(lo);
                        acc[1] = acc[1].min(hi);
                    }
                }
                bb
            }
        }
    }

    /// Closed-form volume when one exists (boxes and balls).
    pub fn exact_volume(&self) -> Option<f64> {
        match self {
            ConvexBody::Box { bounds } => Some(box_volume(bounds)),
            ConvexBody::Ball { center, radius } => {
                Some(unit_ball_volume(center.len()).ok()? * radius.powi(center.len() as i32))
            }
            ConvexBody::Intersection { parts } if parts.len() == 1 => parts[0].exact_volume(),
            ConvexBody::Intersection { .. } => None,
        }
    }

    /// Exact for boxes and balls; hit-or-miss on the bounding box otherwise.
    pub fn volume(&self, budget: &McBudget) -> Result<VolumeEstimate> {
        if let Some(v) = self.exact_volume() {
            return Ok(VolumeEstimate::exact(v));
        }
        if budget.samples == 0 {
            return Err(Error::InsufficientBudget(
                "hit-or-miss volume needs at least one sample".into(),
            ));
        }
        let bb = self.bounding_box();
        let (hits, n) = self.hit_or_miss(&bb, budget, |x| self.contains(x));
        Ok(scale_fraction(box_volume(&bb), hits, n))
    }

    /// Surface-type constant `γ_W` with `|W ∖ W_ε| ≤ γ_W ε` for every ε > 0.
    ///
    /// Boxes and balls use their own surface area; intersections use the
    /// surface area of their bounding box, which dominates that of any convex
    /// subset.
    pub fn gamma(&self) -> f64 {
        match self {
            ConvexBody::Box { bounds } => box_surface(bounds),
            ConvexBody::Ball { center, radius } => {
                let d = center.len();
                d as f64 * unit_ball_volume(d).unwrap_or(0.0) * radius.powi(d as i32 - 1)
            }
            ConvexBody::Intersection { parts } if parts.len() == 1 => parts[0].gamma(),
            ConvexBody::Intersection { .. } => box_surface(&self.bounding_box()),
        }
    }

    /// Largest ε for which the inner parallel set is non-empty (exact for
    /// boxes and balls, an upper bound for intersections).
    pub fn inradius_bound(&self) -> f64 {
        match self {
            ConvexBody::Box { bounds } => bounds
                .iter()
                .map(|[lo, hi]| (hi - lo) / 2.0)
                .fold(f64::INFINITY, f64::min),
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Intersection { parts } => parts
                .iter()
                .map(|p| p.inradius_bound())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `|W ∖ W_ε|` (exact for boxes and balls) and the linear bound `γ_W ε`.
    pub fn inner_deficit(&self, eps: f64, budget: &McBudget) -> Result<InnerDeficit> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
        }
        let linear_bound = self.gamma() * eps;
        let deficit = match self.exact_inner_volume(eps) {
            Some(inner) => VolumeEstimate::exact(self.exact_volume().unwrap() - inner),
            None => {
                if budget.samples == 0 {
                    return Err(Error::InsufficientBudget(
                        "hit-or-miss deficit needs at least one sample".into(),
                    ));
                }
                let bb = self.bounding_box();
                let (hits, n) = self.hit_or_miss(&bb, budget, |x| {
                    let depth = self.depth(x);
                    self.contains(x) && depth <= eps
                });
                scale_fraction(box_volume(&bb), hits, n)
            }
        };
        Ok(InnerDeficit {
            deficit,
            linear_bound,
        })
    }

    /// `|W_ε|` in closed form for boxes and balls.
    pub fn exact_inner_volume(&self, eps: f64) -> Option<f64> {
        match self {
            ConvexBody::Box { bounds } => Some(
                bounds
                    .iter()
                    .map(|[lo, hi]| (hi - lo - 2.0 * eps).max(0.0))
                    .product(),
            ),
            ConvexBody::Ball { center, radius } => {
                let d = center.len();
                Some(unit_ball_volume(d).ok()? * (radius - eps).max(0.0).powi(d as i32))
            }
            ConvexBody::Intersection { parts } if parts.len() == 1 => {
                parts[0].exact_inner_volume(eps)
            }
            ConvexBody::Intersection { .. } => None,
        }
    }

    /// Intersection with another body, simplified where possible.
    ///
    /// Returns `None` when the intersection is provably null (disjoint
    /// boxes or balls, or boxes meeting only in a face).
    pub fn intersect(&self, other: &ConvexBody) -> Option<ConvexBody> {
        if self == other {
            return Some(self.clone());
        }
        match (self, other) {
            (ConvexBody::Box { bounds: a }, ConvexBody::Box { bounds: b }) => {
                let bounds: Vec<[f64; 2]> = a
                    .iter()
                    .zip(b)
                    .map(|([l1, h1], [l2, h2])| [l1.max(*l2), h1.min(*h2)])
                    .collect();
                if bounds.iter().all(|[lo, hi]| lo < hi) {
                    Some(ConvexBody::Box { bounds })
                } else {
                    None
                }
            }
            (
                ConvexBody::Ball { center: c1, radius: r1 },
                ConvexBody::Ball { center: c2, radius: r2 },
            ) => {
                let dist = dist2(c1, c2).sqrt();
                if dist >= r1 + r2 {
                    None
                } else if dist + r1 <= *r2 {
                    Some(self.clone())
                } else if dist + r2 <= *r1 {
                    Some(other.clone())
                } else {
                    Some(ConvexBody::Intersection {
                        parts: vec![self.clone(), other.clone()],
                    })
                }
            }
            _ => {
                let mut parts = Vec::new();
                for body in [self, other] {
                    match body {
                        ConvexBody::Intersection { parts: p } => parts.extend(p.iter().cloned()),
                        b => parts.push(b.clone()),
                    }
                }
                let candidate = ConvexBody::Intersection { parts };
                let bb = candidate.bounding_box();
                if bb.iter().any(|[lo, hi]| lo >= hi) {
                    None
                } else {
                    Some(candidate)
                }
            }
        }
    }

    /// Rejection sample from the bounding box; gives up after `cap`
    /// consecutive misses.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        bb: &[[f64; 2]],
        rng: &mut R,
        cap: u64,
    ) -> Result<Vec<f64>> {
        let mut x = vec![0.0; bb.len()];
        for _ in 0..cap {
            for (xi, [lo, hi]) in x.iter_mut().zip(bb) {
                *xi = lo + (hi - lo) * rng.random::<f64>();
            }
            if self.contains(&x) {
                return Ok(x);
            }
        }
        Err(Error::RejectionCap { attempts: cap })
    }

    fn hit_or_miss(
        &self,
        bb: &[[f64; 2]],
        budget: &McBudget,
        mut accept: impl FnMut(&[f64]) -> bool,
    ) -> (u64, u64) {
        let mut rng = budget.seed.rng();
        let mut x = vec![0.0; bb.len()];
        let mut hits = 0;
        for _ in 0..budget.samples {
            for (xi, [lo, hi]) in x.iter_mut().zip(bb) {
                *xi = lo + (hi - lo) * rng.random::<f64>();
            }
            if accept(&x) {
                hits += 1;
            }
        }
        (hits, budget.samples)
    }
}

/// Inner parallel set `W_ε = {x ∈ W : dist(x, ∂W) > ε}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerParallelSet {
    pub parent: ConvexBody,
    pub epsilon: f64,
}

impl InnerParallelSet {
    pub fn new(parent: ConvexBody, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { parent, epsilon })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.parent.contains(x) && self.parent.depth(x) > self.epsilon
    }

    pub fn exact_volume(&self) -> Option<f64> {
        self.parent.exact_inner_volume(self.epsilon)
    }
}

/// Smallest axis-aligned box containing all the given bodies.
pub fn union_bounding_box(bodies: &[ConvexBody]) -> Vec<[f64; 2]> {
    let mut it = bodies.iter();
    let mut bb = it.next().map(|b| b.bounding_box()).unwrap_or_default();
    for b in it {
        for (acc, [lo, hi]) in bb.iter_mut().zip(b.bounding_box()) {
            acc[0] = acc[0].min(lo);
            acc[1] = acc[1].max(hi);
        }
    }
    bb
}

pub fn box_volume(bounds: &[[f64; 2]]) -> f64 {
    bounds.iter().map(|[lo, hi]| (hi - lo).max(0.0)).product()
}

fn box_surface(bounds: &[[f64; 2]]) -> f64 {
    let lens: Vec<f64> = bounds.iter().map(|[lo, hi]| (hi - lo).max(0.0)).collect();
    (0..lens.len())
        .map(|k| {
            2.0 * lens
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, l)| l)
                .product::<f64>()
        })
        .sum()
}

fn scale_fraction(box_vol: f64, hits: u64, n: u64) -> VolumeEstimate {
    let p = hits as f64 / n as f64;
    VolumeEstimate {
        value: box_vol * p,
        std_err: box_vol * (p * (1.0 - p) / n as f64).sqrt(),
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
