//! Reference particle, ε-lattice and the cell decomposition T ∪ C ∪ D ∪ K.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::Section;
use crate::error::{Error, Result};
use crate::harmonics::{sh_index, spherical_harmonics};
use crate::quadrature::{sphere_rule, PolarAxis};

/// Default radius of the spherical reference particle.
pub const DEFAULT_SPHERE_RADIUS: f64 = 0.125;

/// One real spherical-harmonic coefficient of a boundary perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCoeff {
    pub l: usize,
    pub m: i32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParticleShape {
    Sphere {
        radius: f64,
    },
    /// Star-shaped particle with boundary radius `radius · (1 + Σ c_lm Y_lm)`.
    Harmonic {
        radius: f64,
        coeffs: Vec<HarmonicCoeff>,
    },
}

/// Smooth star-shaped particle contained in B_{1/4}(0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParticleRecord")]
pub struct ReferenceParticle {
    shape: ParticleShape,
    inner_radius: f64,
    outer_radius: f64,
}

#[derive(Deserialize)]
struct ParticleRecord {
    shape: ParticleShape,
}

impl TryFrom<ParticleRecord> for ReferenceParticle {
    type Error = Error;
    fn try_from(r: ParticleRecord) -> Result<Self> {
        ReferenceParticle::new(r.shape)
    }
}

impl Default for ReferenceParticle {
    fn default() -> Self {
        ReferenceParticle::sphere(DEFAULT_SPHERE_RADIUS).expect("default sphere is valid")
    }
}

impl ReferenceParticle {
    pub fn sphere(radius: f64) -> Result<Self> {
        ReferenceParticle::new(ParticleShape::Sphere { radius })
    }

    pub fn harmonic(radius: f64, coeffs: Vec<HarmonicCoeff>) -> Result<Self> {
        ReferenceParticle::new(ParticleShape::Harmonic { radius, coeffs })
    }

    pub fn new(shape: ParticleShape) -> Result<Self> {
        let base = match &shape {
            ParticleShape::Sphere { radius } | ParticleShape::Harmonic { radius, .. } => *radius,
        };
        if !(base > 0.0 && base.is_finite()) {
            return Err(Error::Domain(format!(
                "particle radius {base} must be positive"
            )));
        }
        if let ParticleShape::Harmonic { coeffs, .. } = &shape {
            for c in coeffs {
                if c.m.unsigned_abs() as usize > c.l || !c.value.is_finite() {
                    return Err(Error::Domain(format!("invalid harmonic coefficient {c:?}")));
                }
            }
        }
        let mut p = ReferenceParticle {
            shape,
            inner_radius: base,
            outer_radius: base,
        };
        if let ParticleShape::Harmonic { .. } = p.shape {
            let (lo, hi) = p.radius_extremes();
            if lo <= 0.05 * base {
                return Err(Error::Domain(
                    "harmonic perturbation too large: boundary radius must stay positive".into(),
                ));
            }
            p.inner_radius = lo;
            p.outer_radius = hi;
        }
        if p.outer_radius >= 0.25 {
            return Err(Error::Domain(format!(
                "particle must lie inside B_(1/4)(0); outer radius is {}",
                p.outer_radius
            )));
        }
        Ok(p)
    }

    /// Reads keys `kind`, `radius`, `harmonic_coeffs` (`l:m:value, ...`).
    pub fn from_config(section: &mut Section) -> Result<Self> {
        let kind = section.take("kind").unwrap_or_else(|| "sphere".into());
        let radius = section
            .take_parsed::<f64>("radius")?
            .unwrap_or(DEFAULT_SPHERE_RADIUS);
        let coeffs = section.take("harmonic_coeffs");
        match kind.as_str() {
            "sphere" => {
                if coeffs.is_some() {
                    return Err(Error::Config("harmonic_coeffs given for a sphere".into()));
                }
                ReferenceParticle::sphere(radius)
            }
            "harmonic" => {
                let coeffs = parse_coeffs(coeffs.as_deref().unwrap_or(""))?;
                ReferenceParticle::harmonic(radius, coeffs)
            }
            other => Err(Error::Config(format!("unknown particle kind `{other}`"))),
        }
    }

    pub fn shape(&self) -> &ParticleShape {
        &self.shape
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.shape, ParticleShape::Sphere { .. })
    }

    /// Base radius r0 (the sphere radius, or the unperturbed radius).
    pub fn base_radius(&self) -> f64 {
        match &self.shape {
            ParticleShape::Sphere { radius } | ParticleShape::Harmonic { radius, .. } => *radius,
        }
    }

    /// Largest δ with B_δ(0) inside the particle.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Smallest radius of a ball about 0 containing the particle.
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Highest spherical-harmonic order in the boundary description.
    pub fn max_order(&self) -> usize {
        match &self.shape {
            ParticleShape::Sphere { .. } => 0,
            ParticleShape::Harmonic { coeffs, .. } => coeffs.iter().map(|c| c.l).max().unwrap_or(0),
        }
    }

    /// Boundary radius in the unit direction `dir`.
    pub fn radius(&self, dir: &Vector3<f64>) -> f64 {
        match &self.shape {
            ParticleShape::Sphere { radius } => *radius,
            ParticleShape::Harmonic { radius, coeffs } => {
                let y = spherical_harmonics(dir, self.max_order());
                let s: f64 = coeffs.iter().map(|c| c.value * y[sh_index(c.l, c.m)]).sum();
                radius * (1.0 + s)
            }
        }
    }

    /// True for points strictly inside the particle.
    pub fn contains(&self, y: &Vector3<f64>) -> bool {
        let r = y.norm();
        r == 0.0 || r < self.radius(&(y / r))
    }

    /// Boundary point in the unit direction `dir`.
    pub fn boundary_point(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        dir * self.radius(dir)
    }

    fn radius_extremes(&self) -> (f64, f64) {
        let rule = sphere_rule(64, PolarAxis::Z);
        let dir_of = |t: f64, p: f64| Vector3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos());
        let angles = |d: &Vector3<f64>| (d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x));
        let refine = |sign: f64| {
            let f = |t: f64, p: f64| sign * self.radius(&dir_of(t, p));
            let best = rule
                .iter()
                .map(|n| (f(angles(&n.dir).0, angles(&n.dir).1), n.dir))
                .fold(
                    (f64::INFINITY, Vector3::z()),
                    |a, b| if b.0 < a.0 { b } else { a },
                );
            let (mut t, mut p) = angles(&best.1);
            let mut val = best.0;
            let mut step = 0.05;
            while step > 1e-10 {
                let mut moved = false;
                for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let v = f(t + dt, p + dp);
                    if v < val {
                        val = v;
                        t += dt;
                        p += dp;
                        moved = true;
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            sign * val
        };
        (refine(1.0), refine(-1.0))
    }

    /// Particle volume (exact for the sphere, product quadrature otherwise).
    pub fn volume(&self) -> f64 {
        match &self.shape {
            ParticleShape::Sphere { radius } => 4.0 * PI * radius.powi(3) / 3.0,
            ParticleShape::Harmonic { .. } => sphere_rule(48, PolarAxis::Z)
                .iter()
                .map(|n| n.weight * self.radius(&n.dir).powi(3) / 3.0)
                .sum(),
        }
    }
}

fn parse_coeffs(text: &str) -> Result<Vec<HarmonicCoeff>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let bad = || Error::Config(format!("harmonic coefficient `{item}` is not `l:m:value`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok(HarmonicCoeff {
                l: parts[0].parse().map_err(|_| bad())?,
                m: parts[1].parse().map_err(|_| bad())?,
                value: parts[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Region of a lattice cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Particle T_i.
    T,
    /// Inner shell B_{η/4} \ T_i.
    C,
    /// Matching annulus B_{η/2} \ B_{η/4}.
    D,
    /// Far region Q_i \ B_{η/2}.
    K,
}

/// One lattice cell Q_i of side ε with η = ε^β and particle scale ε^α.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDecomposition {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub center: [i64; 3],
}

impl CellDecomposition {
    pub fn new(epsilon: f64, alpha: f64, beta: f64, center: [i64; 3]) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "epsilon = {epsilon} must lie in (0, 1)"
            )));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha = {alpha} must be at least 1")));
        }
        if !(beta >= 1.0 && beta <= alpha) {
            return Err(Error::Domain(format!(
                "beta = {beta} must lie in [1, alpha = {alpha}]"
            )));
        }
        Ok(CellDecomposition {
            epsilon,
            alpha,
            beta,
            center,
        })
    }

    /// η = ε^β.
    pub fn eta(&self) -> f64 {
        self.epsilon.powf(self.beta)
    }

    /// Particle scale ε^α.
    pub fn particle_scale(&self) -> f64 {
        self.epsilon.powf(self.alpha)
    }

    /// Lattice point x_i = ε i.
    pub fn center_point(&self) -> Vector3<f64> {
        Vector3::new(
            self.center[0] as f64,
            self.center[1] as f64,
            self.center[2] as f64,
        ) * self.epsilon
    }

    /// Region of an offset y = x − x_i (no cube check).
    pub fn region_of_offset(&self, y: &Vector3<f64>, particle: &ReferenceParticle) -> Region {
        let r = y.norm();
        let a = self.particle_scale();
        if r == 0.0 || r <= a * particle.radius(&(y / r)) {
            Region::T
        } else if r <= self.eta() / 4.0 {
            Region::C
        } else if r <= self.eta() / 2.0 {
            Region::D
        } else {
            Region::K
        }
    }
}

/// Region label of a point of the cube Q_i; boundaries belong to the inner
/// region.
pub fn region_of(
    x: &Vector3<f64>,
    decomp: &CellDecomposition,
    particle: &ReferenceParticle,
) -> Result<Region> {
    let y = x - decomp.center_point();
    let half = 0.5 * decomp.epsilon * (1.0 + 1e-12);
    if y.iter().any(|c| c.abs() > half) {
        return Err(Error::OutsideDomain(format!(
            "point {:?} lies outside the cube of cell {:?}",
            x.as_slice(),
            decomp.center
        )));
    }
    Ok(decomp.region_of_offset(&y, particle))
}

/// Nearest lattice index i and offset x − εi with components in [−ε/2, ε/2).
pub fn nearest_cell(x: &Vector3<f64>, epsilon: f64) -> ([i64; 3], Vector3<f64>) {
    let mut idx = [0i64; 3];
    let mut off = Vector3::zeros();
    for d in 0..3 {
        let mut i = (x[d] / epsilon + 0.5).floor() as i64;
        let mut o = x[d] - epsilon * i as f64;
        if o >= 0.5 * epsilon {
            i += 1;
            o = x[d] - epsilon * i as f64;
        } else if o < -0.5 * epsilon {
            i -= 1;
            o = x[d] - epsilon * i as f64;
        }
        idx[d] = i;
        off[d] = o;
    }
    (idx, off)
}

/// Product Gauss–Legendre × trapezoid rule on the sphere of radius `r` about
/// `center`; weights sum to 4πr², exact for harmonics of degree ≤ 2n − 1.
pub fn boundary_quadrature(r: f64, center: &Vector3<f64>, n: usize) -> Vec<(Vector3<f64>, f64)> {
    assert!(n >= 1, "quadrature order must be at least 1");
    sphere_rule(n, PolarAxis::Z)
        .into_iter()
        .map(|node| (center + node.dir * r, node.weight * r * r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Section;

    #[test]
    fn sphere_particle_defaults_and_limits() {
        let p = ReferenceParticle::default();
        assert_eq!(p.inner_radius(), 0.125);
        assert!(ReferenceParticle::sphere(0.3).is_err());
        assert!(ReferenceParticle::sphere(0.0).is_err());
    }

    #[test]
    fn harmonic_particle_radii() {
        let p = ReferenceParticle::harmonic(
            0.125,
            vec![HarmonicCoeff {
                l: 2,
                m: 0,
                value: 0.1,
            }],
        )
        .unwrap();
        // Y20 ranges over [−√(5/4π)/2, √(5/4π)].
        let c = (5.0 / (4.0 * PI)).sqrt();
        assert!((p.outer_radius() - 0.125 * (1.0 + 0.1 * c)).abs() < 1e-12);
        assert!((p.inner_radius() - 0.125 * (1.0 - 0.05 * c)).abs() < 1e-12);
        assert!(p.contains(&Vector3::new(0.0, 0.0, 0.13)));
        assert!(!p.contains(&Vector3::new(0.13, 0.0, 0.0)));
    }

    #[test]
    fn particle_from_config() {
        let mut s = Section::from_pairs(
            "particle",
            &[
                ("kind", "harmonic"),
                ("radius", "0.1"),
                ("harmonic_coeffs", "2:0:0.05, 2:2:-0.02"),
            ],
        );
        let p = ReferenceParticle::from_config(&mut s).unwrap();
        s.finish().unwrap();
        assert_eq!(p.max_order(), 2);
        let mut s = Section::from_pairs("particle", &[("kind", "cube")]);
        assert!(ReferenceParticle::from_config(&mut s).is_err());
        let json = serde_json::to_string(&p).unwrap();
        let back: ReferenceParticle = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn regions_worked_examples() {
        let p = ReferenceParticle::default();
        let d = CellDecomposition::new(0.25, 2.0, 1.5, [1, 0, 0]).unwrap();
        let c = d.center_point();
        assert_eq!(region_of(&c, &d, &p).unwrap(), Region::T);
        let eta = d.eta();
        assert_eq!(
            region_of(&(c + Vector3::new(0.3 * eta, 0.0, 0.0)), &d, &p).unwrap(),
            Region::D
        );
        assert_eq!(
            region_of(&(c + Vector3::new(0.125, 0.125, -0.125)), &d, &p).unwrap(),
            Region::K
        );
        assert_eq!(
            region_of(&(c + Vector3::new(0.0, eta / 4.0, 0.0)), &d, &p).unwrap(),
            Region::C
        );
        assert_eq!(
            region_of(&(c + Vector3::new(0.0, 0.0, eta / 2.0)), &d, &p).unwrap(),
            Region::D
        );
        assert!(region_of(&(c + Vector3::new(0.2, 0.0, 0.0)), &d, &p).is_err());
        assert!(CellDecomposition::new(0.25, 2.0, 2.5, [0; 3]).is_err());
        assert!(CellDecomposition::new(0.25, 2.0, 0.5, [0; 3]).is_err());
    }

    #[test]
    fn sphere_regions_radially_monotone() {
        let p = ReferenceParticle::default();
        let d = CellDecomposition::new(0.125, 2.0, 1.0, [0; 3]).unwrap();
        let dir = Vector3::new(1.0, 2.0, -0.5).normalize();
        let order = |r: Region| match r {
            Region::T => 0,
            Region::C => 1,
            Region::D => 2,
            Region::K => 3,
        };
        let mut last = 0;
        for i in 0..=1000 {
            let y = dir * (i as f64 / 1000.0 * 0.0625 * 3f64.sqrt() * 0.999);
            let reg = order(d.region_of_offset(&y, &p));
            assert!(reg >= last);
            last = reg;
        }
        assert_eq!(last, 3);
    }

    #[test]
    fn nearest_cell_examples() {
        let (i, o) = nearest_cell(&Vector3::new(0.1, 0.0, 0.0), 0.25);
        assert_eq!(i, [0, 0, 0]);
        assert!((o - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        let (i, o) = nearest_cell(&Vector3::new(0.13, 0.0, 0.0), 0.25);
        assert_eq!(i, [1, 0, 0]);
        assert!((o.x + 0.12).abs() < 1e-15);
        let (i, o) = nearest_cell(&Vector3::new(0.75, -0.5, 0.25), 0.25);
        assert_eq!(i, [3, -2, 1]);
        assert_eq!(o, Vector3::zeros());
    }

    #[test]
    fn boundary_quadrature_moments() {
        let c = Vector3::new(0.1, 0.2, 0.3);
        let q = boundary_quadrature(0.5, &c, 4);
        let area: f64 = q.iter().map(|(_, w)| w).sum();
        assert!((area - PI).abs() < 1e-13);
        let mut nn = nalgebra::Matrix3::zeros();
        let mut odd = Vector3::zeros();
        for (x, w) in &q {
            let n = (x - c) / 0.5;
            nn += n * n.transpose() * *w;
            odd += n * *w;
        }
        assert!((nn / area - nalgebra::Matrix3::identity() / 3.0).norm() < 1e-14);
        assert!(odd.norm() < 1e-14);
    }
}
