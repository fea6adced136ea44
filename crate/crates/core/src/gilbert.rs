//! Gilbert graphs and power-weighted edge-length functionals.
//!
//! Two points are joined when `0 < ‖x − y‖ < ε`. The functional
//! `L = ½ Σ_{x≠y ∈ η∩W} 1{0<‖x−y‖<ε} ‖x−y‖^α` is accumulated with
//! [`ExactSum`], so values are independent of edge enumeration order and
//! differences of functionals are exact up to one final rounding.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::numerics::ExactSum;
use crate::process::PointConfiguration;

/// Uniform grid over a point set with cell side `cell_size`.
///
/// Points are bucketed by `floor(x / cell_size)` and stored in CSR form
/// (sorted unique cell keys, per-cell offsets, member indices), so a
/// fixed-radius query with radius `≤ cell_size` inspects exactly the `3^d`
/// cells around the query point.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size: f64,
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<i64>,
    starts: Vec<usize>,
    members: Vec<usize>,
}

impl GridIndex {
    pub fn new(config: &PointConfiguration, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid cell size must be positive, got {cell_size}"
            )));
        }
        let dim = config.dim();
        let n = config.len();
        let coords = config.coords().to_vec();
        let mut keys = vec![0i64; n * dim];
        for i in 0..n {
            for k in 0..dim {
                keys[i * dim + k] = (coords[i * dim + k] / cell_size).floor() as i64;
            }
        }
        let key = |i: usize| &keys[i * dim..(i + 1) * dim];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).cmp(key(b)).then(a.cmp(&b)));

        let mut cells = Vec::new();
        let mut starts = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            if pos == 0 || key(order[pos - 1]) != key(i) {
                cells.extend_from_slice(key(i));
                starts.push(pos);
            }
        }
        starts.push(n);
        Ok(Self {
            cell_size,
            dim,
            coords,
            cells,
            starts,
            members: order,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn n_cells(&self) -> usize {
        self.starts.len() - 1
    }

    fn cell_key(&self, c: usize) -> &[i64] {
        &self.cells[c * self.dim..(c + 1) * self.dim]
    }

    fn find_cell(&self, key: &[i64]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.n_cells());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.cell_key(mid).cmp(key) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Calls `f(j, ‖x − y_j‖)` for every indexed point with
    /// `0 < ‖x − y_j‖ < radius`, in a deterministic order.
    pub fn for_each_neighbor(&self, x: &[f64], radius: f64, mut f: impl FnMut(usize, f64)) {
        assert!(
            radius <= self.cell_size,
            "query radius {radius} exceeds the grid cell size {}",
            self.cell_size
        );
        if self.is_empty() {
            return;
        }
        let d = self.dim;
        let base: Vec<i64> = x.iter().map(|v| (v / self.cell_size).floor() as i64).collect();
        let mut key = base.clone();
        let stencil = 3usize.pow(d as u32);
        for code in 0..stencil {
            let mut c = code;
            for k in 0..d {
                key[k] = base[k] + (c % 3) as i64 - 1;
                c /= 3;
            }
            let Some(cell) = self.find_cell(&key) else { continue };
            for &j in &self.members[self.starts[cell]..self.starts[cell + 1]] {
                let len = distance(x, self.point(j));
                if len > 0.0 && len < radius {
                    f(j, len);
                }
            }
        }
    }

    /// Indices `j` with `0 < ‖x − y_j‖ < radius`, sorted ascending.
    pub fn query(&self, x: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_neighbor(x, radius, |j, _| out.push(j));
        out.sort_unstable();
        out
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `‖x − y‖^α` as used by every functional in this crate.
#[inline]
pub fn edge_weight(len: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if alpha == 1.0 {
        len
    } else {
        len.powf(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub length: f64,
}

/// All unordered pairs `i < j` with `0 < ‖x_i − x_j‖ < eps`, sorted by `(i, j)`.
pub fn build_edges(config: &PointConfiguration, eps: f64) -> Result<Vec<Edge>> {
    let grid = GridIndex::new(config, eps)?;
    let mut edges = Vec::new();
    for i in 0..config.len() {
        grid.for_each_neighbor(config.point(i), eps, |j, length| {
            if j > i {
                edges.push(Edge { i, j, length });
            }
        });
    }
    edges.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
    Ok(edges)
}

/// Writes `i,j,length` rows with a header.
pub fn write_edges_csv<W: std::io::Write>(edges: &[Edge], mut w: W) -> Result<()> {
    writeln!(w, "i,j,length")?;
    for e in edges {
        writeln!(w, "{},{},{}", e.i, e.j, e.length)?;
    }
    Ok(())
}

/// Exponent, connection radius and window for `L_t^α(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFunctionalSpec {
    pub alpha: f64,
    pub epsilon: f64,
    pub window: ConvexBody,
}

impl EdgeFunctionalSpec {
    pub fn new(alpha: f64, epsilon: f64, window: ConvexBody) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "connection radius must be positive, got {epsilon}"
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidExponents(format!("non-finite exponent {alpha}")));
        }
        Ok(Self {
            alpha,
            epsilon,
            window,
        })
    }
}

/// `L_t^α(W)` evaluated on `config ∩ W`.
pub fn edge_power_sum(config: &PointConfiguration, spec: &EdgeFunctionalSpec) -> Result<f64> {
    Ok(IndexedGilbert::new(config, spec.clone())?.value())
}

/// Closed-form second difference `D²_{x,y} L = 1{0<‖x−y‖<ε} ‖x−y‖^α`,
/// which does not depend on the configuration. Zero if either point lies
/// outside the window, matching the functional's restriction to `W`.
pub fn second_difference(spec: &EdgeFunctionalSpec, x: &[f64], y: &[f64]) -> f64 {
    if !(spec.window.contains(x) && spec.window.contains(y)) {
        return 0.0;
    }
    let len = distance(x, y);
    if len > 0.0 && len < spec.epsilon {
        edge_weight(len, spec.alpha)
    } else {
        0.0
    }
}

/// A configuration restricted to the window with its grid built once, for
/// repeated add-one-cost queries.
#[derive(Debug, Clone)]
pub struct IndexedGilbert {
    spec: EdgeFunctionalSpec,
    points: PointConfiguration,
    grid: GridIndex,
}

impl IndexedGilbert {
    pub fn new(config: &PointConfiguration, spec: EdgeFunctionalSpec) -> Result<Self> {
        let points = config.restrict(&spec.window);
        let grid = GridIndex::new(&points, spec.epsilon)?;
        Ok(Self { spec, points, grid })
    }

    pub fn spec(&self) -> &EdgeFunctionalSpec {
        &self.spec
    }

    pub fn points(&self) -> &PointConfiguration {
        &self.points
    }

    pub fn value(&self) -> f64 {
        let mut sum = ExactSum::new();
        for i in 0..self.points.len() {
            self.grid
                .for_each_neighbor(self.points.point(i), self.spec.epsilon, |j, len| {
                    if j > i {
                        sum.add(edge_weight(len, self.spec.alpha));
                    }
                });
        }
        sum.value()
    }

    /// `D_x L = Σ_{y ∈ η∩W, 0<‖x−y‖<ε} ‖x−y‖^α`.
    pub fn add_one_cost(&self, x: &[f64]) -> Result<f64> {
        if !self.spec.window.contains(x) {
            return Err(Error::Domain(format!("{x:?} is not in the window")));
        }
        let mut sum = ExactSum::new();
        self.grid
            .for_each_neighbor(x, self.spec.epsilon, |_, len| sum.add(edge_weight(len, self.spec.alpha)));
        Ok(sum.value())
    }
}

/// One-shot `D_x L` on a configuration.
pub fn add_one_cost(config: &PointConfiguration, spec: &EdgeFunctionalSpec, x: &[f64]) -> Result<f64> {
    IndexedGilbert::new(config, spec.clone())?.add_one_cost(x)
}

/// Which family of edge-length vectors is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Components {
    /// `(L^{α_1}(W), …, L^{α_m}(W))`.
    Exponents { window: ConvexBody, alphas: Vec<f64> },
    /// `(L^α(W_1), …, L^α(W_m))`.
    Domains { windows: Vec<ConvexBody>, alpha: f64 },
}

impl Components {
    pub fn len(&self) -> usize {
        match self {
            Components::Exponents { alphas, .. } => alphas.len(),
            Components::Domains { windows, .. } => windows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Window and exponent of component `i`.
    pub fn component(&self, i: usize) -> (&ConvexBody, f64) {
        match self {
            Components::Exponents { window, alphas } => (window, alphas[i]),
            Components::Domains { windows, alpha } => (&windows[i], *alpha),
        }
    }
}

/// Vector of raw (unnormalized) edge-length functionals sharing one
/// Poisson configuration and one connection radius.
#[derive(Debug, Clone)]
pub struct EdgeVector {
    pub components: Components,
    pub epsilon: f64,
}

/// A configuration with its grid and per-point window memberships.
#[derive(Debug, Clone)]
pub struct IndexedVectorConfig {
    grid: GridIndex,
    n: usize,
    /// `member[i * m + k]`: point `i` lies in the window of component `k`.
    member: Vec<bool>,
}

impl IndexedVectorConfig {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl EdgeVector {
    pub fn new(components: Components, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "connection radius must be positive, got {epsilon}"
            )));
        }
        if components.is_empty() {
            return Err(Error::validation("components", "at least one component is required"));
        }
        Ok(Self { components, epsilon })
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn index(&self, config: &PointConfiguration) -> Result<IndexedVectorConfig> {
        let m = self.m();
        let grid = GridIndex::new(config, self.epsilon)?;
        let mut member = Vec::with_capacity(config.len() * m);
        for p in config.points() {
            for k in 0..m {
                member.push(self.components.component(k).0.contains(p));
            }
        }
        Ok(IndexedVectorConfig {
            grid,
            n: config.len(),
            member,
        })
    }

    pub fn values(&self, config: &PointConfiguration) -> Result<Vec<f64>> {
        Ok(self.indexed_values(&self.index(config)?))
    }

    pub fn indexed_values(&self, idx: &IndexedVectorConfig) -> Vec<f64> {
        let m = self.m();
        let mut sums = vec![ExactSum::new(); m];
        for i in 0..idx.n {
            let mi = &idx.member[i * m..(i + 1) * m];
            if !mi.iter().any(|&b| b) {
                continue;
            }
            idx.grid.for_each_neighbor(idx.grid.point(i), self.epsilon, |j, len| {
                if j <= i {
                    return;
                }
                let mj = &idx.member[j * m..(j + 1) * m];
                for k in 0..m {
                    if mi[k] && mj[k] {
                        sums[k].add(edge_weight(len, self.components.component(k).1));
                    }
                }
            });
        }
        sums.iter().map(ExactSum::value).collect()
    }

    /// `D_x L_k` for every component; zero for components whose window
    /// does not contain `x`.
    pub fn add_one_costs(&self, idx: &IndexedVectorConfig, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        let inside: Vec<bool> = (0..m).map(|k| self.components.component(k).0.contains(x)).collect();
        let mut sums = vec![ExactSum::new(); m];
        if inside.iter().any(|&b| b) {
            idx.grid.for_each_neighbor(x, self.epsilon, |j, len| {
                let mj = &idx.member[j * m..(j + 1) * m];
                for k in 0..m {
                    if inside[k] && mj[k] {
                        sums[k].add(edge_weight(len, self.components.component(k).1));
                    }
                }
            });
        }
        sums.iter().map(ExactSum::value).collect()
    }

    pub fn second_differences(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let len = distance(x, y);
        (0..self.m())
            .map(|k| {
                let (w, alpha) = self.components.component(k);
                if len > 0.0 && len < self.epsilon && w.contains(x) && w.contains(y) {
                    edge_weight(len, alpha)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::sample_poisson;
    use crate::seed::SeedPath;

    fn square() -> ConvexBody {
        ConvexBody::cube(2, 0.0, 1.0).unwrap()
    }

    fn pair() -> PointConfiguration {
        PointConfiguration::from_points(square(), &[vec![0.0, 0.0], vec![0.0, 0.5]]).unwrap()
    }

    #[test]
    fn single_edge_examples() {
        let edges = build_edges(&pair(), 1.0).unwrap();
        assert_eq!(edges, vec![Edge { i: 0, j: 1, length: 0.5 }]);
        assert!(build_edges(&pair(), 0.4).unwrap().is_empty());

        let spec = EdgeFunctionalSpec::new(2.0, 1.0, square()).unwrap();
        assert_eq!(edge_power_sum(&pair(), &spec).unwrap(), 0.25);
        let spec = EdgeFunctionalSpec::new(-0.5, 1.0, square()).unwrap();
        assert!((edge_power_sum(&pair(), &spec).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let empty = PointConfiguration::empty(square(), 1.0, SeedPath::new(0, 0));
        assert_eq!(edge_power_sum(&empty, &spec).unwrap(), 0.0);
    }

    #[test]
    fn coincident_points_are_not_edges() {
        let c = PointConfiguration::from_points(square(), &[vec![0.2, 0.2], vec![0.2, 0.2]]).unwrap();
        assert!(build_edges(&c, 0.5).unwrap().is_empty());
        let spec = EdgeFunctionalSpec::new(-1.0, 0.5, square()).unwrap();
        assert_eq!(edge_power_sum(&c, &spec).unwrap(), 0.0);
    }

    #[test]
    fn add_one_cost_examples() {
        let spec = EdgeFunctionalSpec::new(1.0, 0.5, square()).unwrap();
        let empty = PointConfiguration::empty(square(), 1.0, SeedPath::new(0, 0));
        assert_eq!(add_one_cost(&empty, &spec, &[0.5, 0.5]).unwrap(), 0.0);
        let c = PointConfiguration::from_points(square(), &[vec![0.3, 0.0], vec![0.6, 0.0]]).unwrap();
        assert!((add_one_cost(&c, &spec, &[0.0, 0.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(add_one_cost(&c, &spec, &[1.5, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn second_difference_examples() {
        let spec = EdgeFunctionalSpec::new(2.0, 1.0, square()).unwrap();
        assert_eq!(second_difference(&spec, &[0.0, 0.0], &[0.0, 0.5]), 0.25);
        assert_eq!(second_difference(&spec, &[0.0, 0.0], &[1.0, 0.5]), 0.0);
        assert_eq!(
            second_difference(&spec, &[0.1, 0.2], &[0.4, 0.3]),
            second_difference(&spec, &[0.4, 0.3], &[0.1, 0.2])
        );
    }

    #[test]
    fn incremental_add_one_cost_matches_reevaluation() {
        let spec = EdgeFunctionalSpec::new(1.5, 0.2, square()).unwrap();
        for r in 0..20 {
            let c = sample_poisson(&square(), 150.0, SeedPath::new(11, r)).unwrap();
            let x = [0.05 * r as f64, 0.5];
            let inc = add_one_cost(&c, &spec, &x).unwrap();
            let diff = edge_power_sum(&c.with_point(&x), &spec).unwrap() - edge_power_sum(&c, &spec).unwrap();
            assert!((inc - diff).abs() <= 1e-12 * inc.abs().max(1e-300), "{inc} vs {diff}");
        }
    }

    #[test]
    fn vector_values_match_single_component() {
        let windows = vec![square(), ConvexBody::cuboid(vec![[0.5, 1.5], [0.0, 1.0]]).unwrap()];
        let domain = ConvexBody::cuboid(vec![[0.0, 1.5], [0.0, 1.0]]).unwrap();
        let c = sample_poisson(&domain, 200.0, SeedPath::new(5, 0)).unwrap();
        let v = EdgeVector::new(
            Components::Domains {
                windows: windows.clone(),
                alpha: 1.0,
            },
            0.1,
        )
        .unwrap();
        let vals = v.values(&c).unwrap();
        for (k, w) in windows.iter().enumerate() {
            let spec = EdgeFunctionalSpec::new(1.0, 0.1, w.clone()).unwrap();
            assert_eq!(vals[k], edge_power_sum(&c, &spec).unwrap());
        }
        let idx = v.index(&c).unwrap();
        let x = [0.7, 0.4];
        let costs = v.add_one_costs(&idx, &x);
        for (k, w) in windows.iter().enumerate() {
            let spec = EdgeFunctionalSpec::new(1.0, 0.1, w.clone()).unwrap();
            assert_eq!(costs[k], add_one_cost(&c, &spec, &x).unwrap());
        }
    }
}
