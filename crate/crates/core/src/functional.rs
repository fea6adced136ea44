//! Vector-valued Poisson functionals with add-one costs.
//!
//! A functional is evaluated through an index built once per configuration,
//! so that repeated add-one-cost queries can use a fast path. Functionals
//! without one can be wrapped in [`ReEvaluated`], which obtains
//! `D_xF = F(η + δ_x) − F(η)` and `D²_{x,y}F` by re-evaluation.

use crate::error::Result;
use crate::geometry::ConvexBody;
use crate::gilbert::{Components, EdgeFunctionalSpec, EdgeVector, IndexedVectorConfig};
use crate::process::PointConfiguration;

pub trait PoissonFunctional: Sync {
    type Index: Sync + Send;

    fn components(&self) -> usize;

    fn index(&self, config: &PointConfiguration) -> Result<Self::Index>;

    fn value(&self, idx: &Self::Index) -> Vec<f64>;

    /// `D_xF(η)` for the indexed configuration `η`.
    fn add_one_cost(&self, idx: &Self::Index, x: &[f64]) -> Vec<f64>;

    /// `D²_{x,y}F(η)`.
    fn second_difference(&self, idx: &Self::Index, x: &[f64], y: &[f64]) -> Vec<f64>;

    fn evaluate(&self, config: &PointConfiguration) -> Result<Vec<f64>> {
        Ok(self.value(&self.index(config)?))
    }
}

/// Wraps any evaluation closure; costs are obtained by re-evaluation.
pub struct ReEvaluated<F> {
    pub m: usize,
    pub f: F,
}

impl<F> ReEvaluated<F>
where
    F: Fn(&PointConfiguration) -> Vec<f64> + Sync,
{
    pub fn new(m: usize, f: F) -> Self {
        Self { m, f }
    }
}

impl<F> PoissonFunctional for ReEvaluated<F>
where
    F: Fn(&PointConfiguration) -> Vec<f64> + Sync,
{
    type Index = (PointConfiguration, Vec<f64>);

    fn components(&self) -> usize {
        self.m
    }

    fn index(&self, config: &PointConfiguration) -> Result<Self::Index> {
        Ok((config.clone(), (self.f)(config)))
    }

    fn value(&self, idx: &Self::Index) -> Vec<f64> {
        idx.1.clone()
    }

    fn add_one_cost(&self, idx: &Self::Index, x: &[f64]) -> Vec<f64> {
        let plus = (self.f)(&idx.0.with_point(x));
        plus.iter().zip(&idx.1).map(|(a, b)| a - b).collect()
    }

    fn second_difference(&self, idx: &Self::Index, x: &[f64], y: &[f64]) -> Vec<f64> {
        let eta = &idx.0;
        let fxy = (self.f)(&eta.with_point(x).with_point(y));
        let fx = (self.f)(&eta.with_point(x));
        let fy = (self.f)(&eta.with_point(y));
        (0..self.m).map(|k| fxy[k] - fx[k] - fy[k] + idx.1[k]).collect()
    }
}

/// Number of points in a window: `D_xF = 1{x ∈ W}`, `D²F = 0`.
#[derive(Debug, Clone)]
pub struct PointCount {
    pub window: ConvexBody,
}

impl PoissonFunctional for PointCount {
    type Index = f64;

    fn components(&self) -> usize {
        1
    }

    fn index(&self, config: &PointConfiguration) -> Result<f64> {
        Ok(config.count_in(&self.window) as f64)
    }

    fn value(&self, idx: &f64) -> Vec<f64> {
        vec![*idx]
    }

    fn add_one_cost(&self, _: &f64, x: &[f64]) -> Vec<f64> {
        vec![if self.window.contains(x) { 1.0 } else { 0.0 }]
    }

    fn second_difference(&self, _: &f64, _: &[f64], _: &[f64]) -> Vec<f64> {
        vec![0.0]
    }
}

/// Raw edge-length vector with grid-based add-one costs and the
/// configuration-free second difference.
#[derive(Debug, Clone)]
pub struct Gilbert {
    pub vector: EdgeVector,
}

impl Gilbert {
    pub fn new(components: Components, epsilon: f64) -> Result<Self> {
        Ok(Self {
            vector: EdgeVector::new(components, epsilon)?,
        })
    }

    /// Single-component `L^α(W)`.
    pub fn scalar(spec: &EdgeFunctionalSpec) -> Result<Self> {
        Self::new(
            Components::Exponents {
                window: spec.window.clone(),
                alphas: vec![spec.alpha],
            },
            spec.epsilon,
        )
    }

    /// Number of Gilbert-graph edges inside `W`.
    pub fn edge_count(window: ConvexBody, epsilon: f64) -> Result<Self> {
        Self::new(
            Components::Exponents {
                window,
                alphas: vec![0.0],
            },
            epsilon,
        )
    }
}

impl PoissonFunctional for Gilbert {
    type Index = IndexedVectorConfig;

    fn components(&self) -> usize {
        self.vector.m()
    }

    fn index(&self, config: &PointConfiguration) -> Result<IndexedVectorConfig> {
        self.vector.index(config)
    }

    fn value(&self, idx: &IndexedVectorConfig) -> Vec<f64> {
        self.vector.indexed_values(idx)
    }

    fn add_one_cost(&self, idx: &IndexedVectorConfig, x: &[f64]) -> Vec<f64> {
        self.vector.add_one_costs(idx, x)
    }

    fn second_difference(&self, _: &IndexedVectorConfig, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.vector.second_differences(x, y)
    }
}

/// `(F − μ)/s` componentwise. Add-one costs scale by `1/s`.
#[derive(Debug, Clone)]
pub struct Normalized<F> {
    pub inner: F,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl<F: PoissonFunctional> Normalized<F> {
    pub fn new(inner: F, means: Vec<f64>, scales: Vec<f64>) -> Self {
        assert_eq!(means.len(), inner.components());
        assert_eq!(scales.len(), inner.components());
        Self { inner, means, scales }
    }

    fn rescale(&self, v: Vec<f64>) -> Vec<f64> {
        v.into_iter().zip(&self.scales).map(|(a, s)| a / s).collect()
    }
}

impl<F: PoissonFunctional> PoissonFunctional for Normalized<F> {
    type Index = F::Index;

    fn components(&self) -> usize {
        self.inner.components()
    }

    fn index(&self, config: &PointConfiguration) -> Result<F::Index> {
        self.inner.index(config)
    }

    fn value(&self, idx: &F::Index) -> Vec<f64> {
        self.inner
            .value(idx)
            .into_iter()
            .zip(self.means.iter().zip(&self.scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn add_one_cost(&self, idx: &F::Index, x: &[f64]) -> Vec<f64> {
        self.rescale(self.inner.add_one_cost(idx, x))
    }

    fn second_difference(&self, idx: &F::Index, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.rescale(self.inner.second_difference(idx, x, y))
    }
}

/// The normalized edge-length vector of a model at intensity `t`.
pub fn normalized_model(
    spec: &crate::model::ModelSpec,
    t: f64,
    budget: &crate::geometry::McBudget,
) -> Result<Normalized<Gilbert>> {
    let g = Gilbert {
        vector: spec.edge_vector(t)?,
    };
    Ok(Normalized::new(g, spec.centering(t, budget)?, spec.scales(t)?))
}
