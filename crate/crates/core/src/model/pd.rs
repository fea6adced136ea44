//! Positive-definiteness certificates for intersection-volume Gram matrices.
//!
//! `C_ij = |W_i ∩ W_j| = ⟨1_{W_i}, 1_{W_j}⟩_{L²}` is positive definite
//! exactly when the indicators are linearly independent. Two certificates
//! are tried:
//!
//! * an ordering `W_{σ1}, …, W_{σm}` in which every window contains a point
//!   lying in none of the windows after it (sufficient, not necessary);
//! * the minimum eigenvalue of the Gram matrix itself.

use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{box_volume, union_bounding_box, ConvexBody, McBudget};
use crate::linalg::Matrix;
use crate::model::{spectral, SpectralReport, PD_TOLERANCE};
use crate::seed::{tags, SeedPath};

/// Random interior candidates drawn per window when searching for witnesses.
pub const WITNESS_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdVerdict {
    Pd,
    Singular,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCertificate {
    pub verdict: PdVerdict,
    /// Whether an ordering with private witness points was found.
    pub ordering_condition_holds: bool,
    pub ordering: Option<Vec<usize>>,
    /// `witnesses[k]` lies in window `ordering[k]` and in none of the
    /// windows `ordering[k+1..]`.
    pub witnesses: Vec<Vec<f64>>,
    pub gram: Matrix,
    pub gram_std_err: Matrix,
    pub spectral: SpectralReport,
    /// `3·‖SE‖_F`, the eigenvalue slack attributable to Monte Carlo volumes.
    pub noise_margin: f64,
}

/// `|W_i ∩ W_j|` with per-entry standard errors.
///
/// Exact when every window is a box. Otherwise all entries are estimated
/// from one shared uniform sample of the union's bounding box, which makes
/// the estimate the Gram matrix of empirical indicators and hence positive
/// semidefinite.
pub fn intersection_gram(windows: &[ConvexBody], budget: &McBudget) -> Result<(Matrix, Matrix)> {
    let m = windows.len();
    let mut c = Matrix::zeros(m);
    let mut se = Matrix::zeros(m);
    if windows.iter().all(|w| matches!(w, ConvexBody::Box { .. })) {
        for i in 0..m {
            for j in i..m {
                let v = windows[i]
                    .intersect(&windows[j])
                    .and_then(|w| w.exact_volume())
                    .unwrap_or(0.0);
                c.set(i, j, v);
                c.set(j, i, v);
            }
        }
        return Ok((c, se));
    }
    if budget.samples == 0 {
        return Err(Error::InsufficientBudget("intersection volumes need a positive sample budget".into()));
    }
    let bb = union_bounding_box(windows);
    let vbb = box_volume(&bb);
    let n = budget.samples;
    let mut rng = budget.seed.derive(tags::GEOMETRY).rng();
    let mut hits = vec![0u64; m * m];
    let mut x = vec![0.0; bb.len()];
    let mut inside = vec![false; m];
    for _ in 0..n {
        for (v, [lo, hi]) in x.iter_mut().zip(&bb) {
            *v = lo + (hi - lo) * rng.random::<f64>();
        }
        for (f, w) in inside.iter_mut().zip(windows) {
            *f = w.contains(&x);
        }
        for i in 0..m {
            if inside[i] {
                for j in i..m {
                    if inside[j] {
                        hits[i * m + j] += 1;
                    }
                }
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let frac = hits[i * m + j] as f64 / n as f64;
            let v = vbb * frac;
            let e = vbb * (frac * (1.0 - frac) / n as f64).sqrt();
            c.set(i, j, v);
            c.set(j, i, v);
            se.set(i, j, e);
            se.set(j, i, e);
        }
    }
    Ok((c, se))
}

fn candidates(w: &ConvexBody, seed: SeedPath) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    match w {
        ConvexBody::Box { bounds } => {
            let d = bounds.len();
            for mask in 0u32..(1 << d) {
                out.push(
                    (0..d)
                        .map(|k| bounds[k][((mask >> k) & 1) as usize])
                        .collect(),
                );
            }
            let centre: Vec<f64> = bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect();
            for k in 0..d {
                for side in 0..2 {
                    let mut p = centre.clone();
                    p[k] = bounds[k][side];
                    out.push(p);
                }
            }
            out.push(centre);
        }
        ConvexBody::Ball { center, radius } => {
            out.push(center.clone());
            for k in 0..center.len() {
                for s in [-1.0, 1.0] {
                    let mut p = center.clone();
                    p[k] += s * radius;
                    out.push(p);
                }
            }
        }
        ConvexBody::Intersection { .. } => {}
    }
    let mut rng = seed.rng();
    let bb = w.bounding_box();
    for _ in 0..WITNESS_SAMPLES {
        match w.sample_uniform(&bb, &mut rng, crate::process::REJECTION_CAP) {
            Ok(p) => out.push(p),
            Err(_) => break,
        }
    }
    out.retain(|p| w.contains(p));
    out
}

/// Greedy search for an ordering with private witnesses.
///
/// Removing a window that already has a point outside all remaining windows
/// never invalidates the rest of an admissible ordering, so the greedy
/// choice succeeds whenever an ordering exists and the candidate sets
/// contain the needed points.
fn witness_ordering(windows: &[ConvexBody], seed: SeedPath) -> Option<(Vec<usize>, Vec<Vec<f64>>)> {
    let m = windows.len();
    let cands: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| candidates(&windows[i], seed.derive(tags::WITNESS).with_replica(i as u64)))
        .collect();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    let mut witnesses = Vec::with_capacity(m);
    while !remaining.is_empty() {
        let mut found = None;
        'search: for (pos, &i) in remaining.iter().enumerate() {
            for p in &cands[i] {
                if remaining.iter().all(|&j| j == i || !windows[j].contains(p)) {
                    found = Some((pos, p.clone()));
                    break 'search;
                }
            }
        }
        let (pos, p) = found?;
        order.push(remaining.remove(pos));
        witnesses.push(p);
    }
    Some((order, witnesses))
}

pub fn pd_certificate(windows: &[ConvexBody], budget: &McBudget) -> Result<PdCertificate> {
    for w in windows {
        w.validate()?;
    }
    let (gram, gram_std_err) = intersection_gram(windows, budget)?;
    let spectral = spectral(&gram)?;
    let noise_margin = 3.0
        * gram_std_err
            .0
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
    let ordering = witness_ordering(windows, budget.seed);
    let threshold = PD_TOLERANCE * spectral.op_norm;
    let verdict = if ordering.is_some() || spectral.min_eigenvalue > threshold + noise_margin {
        PdVerdict::Pd
    } else if spectral.min_eigenvalue.abs() <= threshold {
        PdVerdict::Singular
    } else {
        PdVerdict::Inconclusive
    };
    let (ordering, witnesses) = match ordering {
        Some((o, w)) => (Some(o), w),
        None => (None, Vec::new()),
    };
    Ok(PdCertificate {
        verdict,
        ordering_condition_holds: ordering.is_some(),
        ordering,
        witnesses,
        gram,
        gram_std_err,
        spectral,
        noise_margin,
    })
}
