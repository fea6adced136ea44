//! Homogeneous Poisson point processes on convex bodies.

use std::io::{self, BufRead, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, McBudget, DEFAULT_MC_BUDGET};
use crate::numerics::mean_and_se;
use crate::seed::{tags, SeedPath, SEED_POLICY};

/// Consecutive rejections tolerated per point before sampling fails.
pub const REJECTION_CAP: u64 = 10_000;

/// A realization of `η^t` restricted to `domain`, stored as a flat array of
/// coordinates (`dim` values per point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    dim: usize,
    coords: Vec<f64>,
    pub domain: ConvexBody,
    pub intensity: f64,
    pub seed: SeedPath,
}

impl PointConfiguration {
    pub fn empty(domain: ConvexBody, intensity: f64, seed: SeedPath) -> Self {
        Self {
            dim: domain.dim(),
            coords: Vec::new(),
            domain,
            intensity,
            seed,
        }
    }

    /// Builds a configuration from explicit points (all must have `domain`'s
    /// dimension; membership in the domain is not enforced).
    pub fn from_points(domain: ConvexBody, points: &[Vec<f64>]) -> Result<Self> {
        let dim = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::InvalidParameter(format!(
                    "point of dimension {} in a {dim}-dimensional configuration",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self {
            dim,
            coords,
            domain,
            intensity: 0.0,
            seed: SeedPath::new(0, 0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "dimension mismatch");
        self.coords.extend_from_slice(x);
    }

    /// `η + δ_x`.
    pub fn with_point(&self, x: &[f64]) -> Self {
        let mut c = self.clone();
        c.push(x);
        c
    }

    /// Points lying in `window`, in their original order.
    pub fn restrict(&self, window: &ConvexBody) -> Self {
        let mut out = Self::empty(window.clone(), self.intensity, self.seed);
        for p in self.points().filter(|p| window.contains(p)) {
            out.coords.extend_from_slice(p);
        }
        out
    }

    pub fn count_in(&self, window: &ConvexBody) -> usize {
        self.points().filter(|p| window.contains(p)).count()
    }

    /// CSV export: `#`-prefixed header lines (seed policy, seed path,
    /// intensity, domain), a column header, then one point per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed_policy: {SEED_POLICY}")?;
        writeln!(
            w,
            "# master_seed: {}, replica: {}",
            self.seed.master_seed, self.seed.replica
        )?;
        writeln!(w, "# intensity: {}", self.intensity)?;
        writeln!(w, "# domain: {}", serde_json::to_string(&self.domain)?)?;
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut seed = SeedPath::new(0, 0);
        let mut intensity = 0.0;
        let mut domain = None;
        let mut coords = Vec::new();
        let mut saw_header = false;
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# ") {
                if let Some(v) = rest.strip_prefix("domain: ") {
                    domain = Some(serde_json::from_str::<ConvexBody>(v)?);
                } else if let Some(v) = rest.strip_prefix("intensity: ") {
                    intensity = parse_f64(v)?;
                } else if let Some(v) = rest.strip_prefix("master_seed: ") {
                    let mut parts = v.split(", replica: ");
                    seed.master_seed = parse_u64(parts.next().unwrap_or(""))?;
                    seed.replica = parse_u64(parts.next().unwrap_or(""))?;
                }
                continue;
            }
            if !saw_header {
                saw_header = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            for v in line.split(',') {
                coords.push(parse_f64(v)?);
            }
        }
        let domain = domain.ok_or_else(|| Error::validation("domain", "missing CSV domain header"))?;
        let dim = domain.dim();
        if coords.len() % dim != 0 {
            return Err(Error::validation("points", "row width does not match dimension"));
        }
        Ok(Self {
            dim,
            coords,
            domain,
            intensity,
            seed,
        })
    }

    /// Compact little-endian dump for replay:
    /// `b"PCFG"`, u32 version, u32 dim, u64 count, f64 intensity,
    /// u64 master seed, u64 replica, u32 domain-JSON length, domain JSON,
    /// then `count * dim` f64 coordinates.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let domain = serde_json::to_vec(&self.domain)?;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.intensity.to_le_bytes())?;
        w.write_all(&self.seed.master_seed.to_le_bytes())?;
        w.write_all(&self.seed.replica.to_le_bytes())?;
        w.write_all(&(domain.len() as u32).to_le_bytes())?;
        w.write_all(&domain)?;
        for v in &self.coords {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads one record written by [`write_binary`](Self::write_binary);
    /// `Ok(None)` at a clean end of stream.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Option<Self>> {
        let mut magic = [0u8; 4];
        match r.read_exact(&mut magic) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        if &magic != BINARY_MAGIC {
            return Err(Error::validation("binary", "bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(Error::validation("binary", format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u64(&mut r)? as usize;
        let intensity = f64::from_le_bytes(read_array(&mut r)?);
        let master_seed = read_u64(&mut r)?;
        let replica = read_u64(&mut r)?;
        let len = read_u32(&mut r)? as usize;
        let mut domain = vec![0u8; len];
        r.read_exact(&mut domain)?;
        let domain: ConvexBody = serde_json::from_slice(&domain)?;
        let mut coords = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            coords.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        Ok(Some(Self {
            dim,
            coords,
            domain,
            intensity,
            seed: SeedPath::new(master_seed, replica),
        }))
    }
}

const BINARY_MAGIC: &[u8; 4] = b"PCFG";
const BINARY_VERSION: u32 = 1;

fn read_array<R: Read>(r: &mut R) -> io::Result<[u8; 8]> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::validation("csv", format!("not a number: {s:?}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::validation("csv", format!("not an integer: {s:?}")))
}

/// Samples `η^t` restricted to `body`.
///
/// Bodies with a closed-form volume draw `N ~ Poisson(t|W|)` and then `N`
/// uniform points (rejection from the bounding box, capped at
/// [`REJECTION_CAP`] consecutive misses). Other bodies thin a Poisson
/// process on their bounding box, which is exact without knowing `|W|`.
pub fn sample_poisson(body: &ConvexBody, t: f64, seed: SeedPath) -> Result<PointConfiguration> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "intensity must be finite and non-negative, got {t}"
        )));
    }
    let mut config = PointConfiguration::empty(body.clone(), t, seed);
    if t == 0.0 {
        return Ok(config);
    }
    let mut rng = seed.rng();
    let bb = body.bounding_box();
    let bb_volume = crate::geometry::box_volume(&bb);
    match body.exact_volume() {
        Some(volume) => {
            let n = poisson_count(&mut rng, t * volume)?;
            config.coords.reserve(n as usize * bb.len());
            let is_box = matches!(body, ConvexBody::Box { .. });
            for _ in 0..n {
                if is_box {
                    for [lo, hi] in &bb {
                        config.coords.push(lo + (hi - lo) * rng.random::<f64>());
                    }
                } else {
                    let x = body.sample_uniform(&bb, &mut rng, REJECTION_CAP)?;
                    config.coords.extend_from_slice(&x);
                }
            }
        }
        None => {
            let n = poisson_count(&mut rng, t * bb_volume)?;
            let mut x = vec![0.0; bb.len()];
            for _ in 0..n {
                for (xi, [lo, hi]) in x.iter_mut().zip(&bb) {
                    *xi = lo + (hi - lo) * rng.random::<f64>();
                }
                if body.contains(&x) {
                    config.coords.extend_from_slice(&x);
                }
            }
        }
    }
    Ok(config)
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::InvalidParameter(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Both sides of the Mecke identity `E Σ_{x∈η} h(x,η) = E ∫ h(x, η+δ_x) λ(dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeckeCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_std_err: f64,
    pub rhs_std_err: f64,
    pub pooled_std_err: f64,
}

impl MeckeCheck {
    /// `|lhs − rhs| ≤ k · pooled_std_err`.
    pub fn agrees_within(&self, k: f64) -> bool {
        (self.lhs - self.rhs).abs() <= k * self.pooled_std_err
    }
}

/// Monte Carlo estimate of both sides of the Mecke formula on `body`.
///
/// The left side sums `h` over the points of each replica; the right side
/// draws one uniform `x ∈ body` per independent replica and scores
/// `t|W| h(x, η + δ_x)`.
pub fn mecke_check<H>(h: &H, body: &ConvexBody, t: f64, replicas: usize, seed: SeedPath) -> Result<MeckeCheck>
where
    H: Fn(&[f64], &PointConfiguration) -> f64 + Sync,
{
    if replicas == 0 {
        return Err(Error::InsufficientBudget("Mecke check needs at least one replica".into()));
    }
    let volume = body
        .volume(&McBudget::new(DEFAULT_MC_BUDGET, seed.derive(tags::GEOMETRY)))?
        .value;
    let rhs_seed = seed.derive(tags::MECKE_RHS);
    let pairs: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64)> {
            let eta = sample_poisson(body, t, seed.with_replica(r))?;
            let lhs: f64 = eta.points().map(|x| h(x, &eta)).sum();
            let rhs = if t == 0.0 {
                0.0
            } else {
                let path = rhs_seed.with_replica(r);
                let eta2 = sample_poisson(body, t, path)?;
                let mut rng = path.derive(tags::X_SAMPLES).rng();
                let x = body.sample_uniform(&body.bounding_box(), &mut rng, REJECTION_CAP)?;
                t * volume * h(&x, &eta2.with_point(&x))
            };
            Ok((lhs, rhs))
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (lm, ls) = mean_and_se(&lhs);
    let (rm, rs) = mean_and_se(&rhs);
    Ok(MeckeCheck {
        lhs: lm,
        rhs: rm,
        lhs_std_err: ls,
        rhs_std_err: rs,
        pooled_std_err: (ls * ls + rs * rs).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ConvexBody {
        ConvexBody::cube(2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_intensity_is_empty() {
        let c = sample_poisson(&square(), 0.0, SeedPath::new(1, 0)).unwrap();
        assert!(c.is_empty());
        assert!(sample_poisson(&square(), -1.0, SeedPath::new(1, 0)).is_err());
    }

    #[test]
    fn deterministic_per_seed_path() {
        let a = sample_poisson(&square(), 50.0, SeedPath::new(4, 2)).unwrap();
        let b = sample_poisson(&square(), 50.0, SeedPath::new(4, 2)).unwrap();
        let c = sample_poisson(&square(), 50.0, SeedPath::new(4, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn points_stay_in_domain() {
        let disk = ConvexBody::ball(vec![0.3, -0.2], 0.7).unwrap();
        let lens = ConvexBody::intersection(vec![
            disk.clone(),
            ConvexBody::ball(vec![0.8, 0.0], 0.6).unwrap(),
        ])
        .unwrap();
        for body in [disk, lens] {
            let c = sample_poisson(&body, 300.0, SeedPath::new(8, 0)).unwrap();
            assert!(!c.is_empty());
            assert!(c.points().all(|p| body.contains(p)));
        }
    }

    #[test]
    fn csv_and_binary_replay() {
        let c = sample_poisson(&square(), 20.0, SeedPath::new(3, 9)).unwrap();
        let mut csv = Vec::new();
        c.write_csv(&mut csv).unwrap();
        let back = PointConfiguration::read_csv(&csv[..]).unwrap();
        assert_eq!(back, c);

        let mut bin = Vec::new();
        c.write_binary(&mut bin).unwrap();
        c.write_binary(&mut bin).unwrap();
        let mut r = &bin[..];
        assert_eq!(PointConfiguration::read_binary(&mut r).unwrap().unwrap(), c);
        assert_eq!(PointConfiguration::read_binary(&mut r).unwrap().unwrap(), c);
        assert!(PointConfiguration::read_binary(&mut r).unwrap().is_none());
    }

    #[test]
    fn mecke_constant_function() {
        let m = mecke_check(&|_: &[f64], _: &PointConfiguration| 1.0, &square(), 30.0, 400, SeedPath::new(2, 0)).unwrap();
        assert_eq!(m.rhs, 30.0);
        assert_eq!(m.rhs_std_err, 0.0);
        assert!(m.agrees_within(3.0), "{m:?}");
        let z = mecke_check(&|_: &[f64], _: &PointConfiguration| 1.0, &square(), 0.0, 10, SeedPath::new(2, 0)).unwrap();
        assert_eq!((z.lhs, z.rhs), (0.0, 0.0));
        assert!(mecke_check(&|_: &[f64], _: &PointConfiguration| 1.0, &square(), 1.0, 0, SeedPath::new(2, 0)).is_err());
    }
}
