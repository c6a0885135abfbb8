//! Closed-form test fields on the unit torus: trigonometric polynomials,
//! a Lipschitz kink profile, and cutoff fields vanishing on every particle.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_interval;

/// `amplitude · sin(2π k·x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: [f64; 3],
    pub wavevector: [i32; 3],
    pub phase: f64,
}

impl TrigTerm {
    fn a(&self) -> Vector3<f64> {
        Vector3::from(self.amplitude)
    }

    fn k(&self) -> Vector3<f64> {
        Vector3::new(
            self.wavevector[0] as f64,
            self.wavevector[1] as f64,
            self.wavevector[2] as f64,
        ) * TAU
    }
}

/// Vector-valued trigonometric polynomial on the unit torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigField {
    pub terms: Vec<TrigTerm>,
}

/// A smooth or piecewise-smooth vector field with pointwise value and
/// gradient `grad[(i, m)] = ∂_m f_i`.
pub trait TestField: Sync {
    fn value_grad(&self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>);

    fn value(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.value_grad(x).0
    }

    /// Largest integer frequency per coordinate (sizes exact torus grids).
    fn max_frequency(&self) -> usize;
}

/// Precomputed cos/sin of 2π k·y at fixed local offsets.
pub struct LocalTable {
    n_terms: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

/// Per-cell values sin(2π k·c + θ), cos(2π k·c + θ).
pub struct CellPhases {
    sin: Vec<f64>,
    cos: Vec<f64>,
}

impl TrigField {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        TrigField { terms }
    }

    pub fn zero() -> Self {
        TrigField::default()
    }

    pub fn constant(v: [f64; 3]) -> Self {
        TrigField::new(vec![TrigTerm {
            amplitude: v,
            wavevector: [0; 3],
            phase: PI / 2.0,
        }])
    }

    /// `amp · sin(2π y) e_1`.
    pub fn shear(amp: f64) -> Self {
        TrigField::new(vec![TrigTerm {
            amplitude: [amp, 0.0, 0.0],
            wavevector: [0, 1, 0],
            phase: 0.0,
        }])
    }

    pub fn plus(mut self, other: &TrigField) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            for a in &mut t.amplitude {
                *a *= s;
            }
        }
        self
    }

    /// Random divergence-free field with integer frequencies in [−kmax, kmax]
    /// (nonzero wavevectors only), normalized to unit RMS amplitude.
    pub fn random_solenoidal(seed: u64, kmax: i32, n_terms: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::with_capacity(n_terms);
        while terms.len() < n_terms {
            let k = [
                rng.gen_range(-kmax..=kmax),
                rng.gen_range(-kmax..=kmax),
                rng.gen_range(-kmax..=kmax),
            ];
            if k == [0, 0, 0] {
                continue;
            }
            let kv = Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64);
            let r = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let a = r - kv * (r.dot(&kv) / kv.norm_squared());
            terms.push(TrigTerm {
                amplitude: [a.x, a.y, a.z],
                wavevector: k,
                phase: rng.gen_range(0.0..TAU),
            });
        }
        let f = TrigField::new(terms);
        let rms = (f.l2_norm_sq()).sqrt();
        f.scaled(1.0 / rms)
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.terms.iter().fold(Vector3::zeros(), |acc, t| {
            acc + t.a() * (t.k().dot(x) + t.phase).sin()
        })
    }

    pub fn gradient(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.terms.iter().fold(Matrix3::zeros(), |acc, t| {
            let k = t.k();
            acc + t.a() * k.transpose() * (k.dot(x) + t.phase).cos()
        })
    }

    /// max |a·k| / max |a||k| over terms (0 for solenoidal fields).
    pub fn divergence_residual(&self) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for t in &self.terms {
            num = num.max(t.a().dot(&t.k()).abs());
            den = den.max(t.a().norm() * t.k().norm());
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Exact ∫_torus |f|² via a trapezoid grid that resolves all products.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid_integral(|x| self.eval(x).norm_squared())
    }

    /// Exact ∫_torus |∇f|².
    pub fn grad_l2_norm_sq(&self) -> f64 {
        self.grid_integral(|x| self.gradient(x).norm_squared())
    }

    fn grid_integral(&self, f: impl Fn(&Vector3<f64>) -> f64) -> f64 {
        let m = 2 * self.max_frequency() + 2;
        let h = 1.0 / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    s += f(&Vector3::new(i as f64 * h, j as f64 * h, k as f64 * h));
                }
            }
        }
        s * h * h * h
    }

    pub fn local_table(&self, offsets: &[Vector3<f64>]) -> LocalTable {
        let n_terms = self.terms.len();
        let mut cos = Vec::with_capacity(offsets.len() * n_terms);
        let mut sin = Vec::with_capacity(offsets.len() * n_terms);
        for y in offsets {
            for t in &self.terms {
                let a = t.k().dot(y);
                cos.push(a.cos());
                sin.push(a.sin());
            }
        }
        LocalTable { n_terms, cos, sin }
    }

    pub fn cell_phases(&self, center: &Vector3<f64>) -> CellPhases {
        let (mut sin, mut cos) = (Vec::new(), Vec::new());
        for t in &self.terms {
            let a = t.k().dot(center) + t.phase;
            sin.push(a.sin());
            cos.push(a.cos());
        }
        CellPhases { sin, cos }
    }

    /// Value at center + offset[q] from precomputed tables.
    pub fn eval_local(&self, table: &LocalTable, q: usize, ph: &CellPhases) -> Vector3<f64> {
        let base = q * table.n_terms;
        let mut v = Vector3::zeros();
        for (t, term) in self.terms.iter().enumerate() {
            let s = ph.sin[t] * table.cos[base + t] + ph.cos[t] * table.sin[base + t];
            v += term.a() * s;
        }
        v
    }

    /// Value and gradient at center + offset[q].
    pub fn eval_local_grad(
        &self,
        table: &LocalTable,
        q: usize,
        ph: &CellPhases,
    ) -> (Vector3<f64>, Matrix3<f64>) {
        let base = q * table.n_terms;
        let mut v = Vector3::zeros();
        let mut g = Matrix3::zeros();
        for (t, term) in self.terms.iter().enumerate() {
            let (ct, st) = (table.cos[base + t], table.sin[base + t]);
            let s = ph.sin[t] * ct + ph.cos[t] * st;
            let c = ph.cos[t] * ct - ph.sin[t] * st;
            let a = term.a();
            v += a * s;
            g += a * term.k().transpose() * c;
        }
        (v, g)
    }

    /// Parses `ax,ay,az@kx,ky,kz[@phase]` terms separated by `;`, or the
    /// keywords `zero`, `shear[:amp]`, `random:seed[:kmax[:terms]]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let bad = |m: &str| Error::Config(format!("field spec `{spec}`: {m}"));
        if spec == "zero" || spec.is_empty() {
            return Ok(TrigField::zero());
        }
        if let Some(rest) = spec.strip_prefix("shear") {
            let amp = match rest.strip_prefix(':') {
                Some(a) => a.trim().parse().map_err(|_| bad("bad amplitude"))?,
                None if rest.is_empty() => 1.0,
                None => return Err(bad("expected `shear:amp`")),
            };
            return Ok(TrigField::shear(amp));
        }
        if let Some(rest) = spec.strip_prefix("random:") {
            let parts: Vec<&str> = rest.split(':').collect();
            let seed: u64 = parts[0].trim().parse().map_err(|_| bad("bad seed"))?;
            let kmax: i32 = parts
                .get(1)
                .map_or(Ok(2), |s| s.trim().parse())
                .map_err(|_| bad("bad kmax"))?;
            let n: usize = parts
                .get(2)
                .map_or(Ok(8), |s| s.trim().parse())
                .map_err(|_| bad("bad term count"))?;
            if kmax < 1 || n == 0 {
                return Err(bad("kmax and term count must be positive"));
            }
            return Ok(TrigField::random_solenoidal(seed, kmax, n));
        }
        let mut terms = Vec::new();
        for item in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split('@').collect();
            if parts.len() < 2 || parts.len() > 3 {
                return Err(bad("terms look like `ax,ay,az@kx,ky,kz[@phase]`"));
            }
            let a: Vec<f64> = parts[0]
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad amplitude"))?;
            let k: Vec<i32> = parts[1]
                .split(',')
                .map(|s| s.trim().parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad wavevector"))?;
            if a.len() != 3 || k.len() != 3 {
                return Err(bad("amplitude and wavevector need three components"));
            }
            let phase = match parts.get(2) {
                Some(p) => p.trim().parse().map_err(|_| bad("bad phase"))?,
                None => 0.0,
            };
            terms.push(TrigTerm {
                amplitude: [a[0], a[1], a[2]],
                wavevector: [k[0], k[1], k[2]],
                phase,
            });
        }
        Ok(TrigField::new(terms))
    }
}

impl TestField for TrigField {
    fn value_grad(&self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        (self.eval(x), self.gradient(x))
    }

    fn max_frequency(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.wavevector.iter().map(|k| k.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }
}

/// `direction · B₂({x₁})` with the periodic Bernoulli profile
/// B₂(t) = t² − t + 1/6: Lipschitz, with a gradient jump on the planes
/// x₁ ∈ ℤ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinkField {
    pub direction: Vector3<f64>,
}

impl TestField for KinkField {
    fn value_grad(&self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let t = x.x - x.x.floor();
        let b = t * t - t + 1.0 / 6.0;
        let db = 2.0 * t - 1.0;
        (
            self.direction * b,
            self.direction * Vector3::x().transpose() * db,
        )
    }

    fn max_frequency(&self) -> usize {
        0
    }
}

/// ∫_torus φ·Aψ for a constant matrix A, by Gauss–Legendre in x₁ (48
/// nodes on [0, 1], kinks only at the endpoints) and exact trapezoid grids
/// in x₂, x₃.
pub fn torus_pairing(phi: &dyn TestField, psi: &dyn TestField, a: &Matrix3<f64>) -> f64 {
    let m = 2 * (phi.max_frequency() + psi.max_frequency()) + 2;
    let h = 1.0 / m as f64;
    let mut s = 0.0;
    for (x1, w1) in gauss_legendre_interval(48, 0.0, 1.0) {
        for j in 0..m {
            for k in 0..m {
                let x = Vector3::new(x1, j as f64 * h, k as f64 * h);
                s += w1 * psi.value(&x).dot(&(a * phi.value(&x)));
            }
        }
    }
    s * h * h
}

/// Quintic smoothstep cutoff χ(r): 0 for r ≤ r_in, 1 for r ≥ r_out.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub r_in: f64,
    pub r_out: f64,
}

impl Cutoff {
    pub fn value(&self, r: f64) -> f64 {
        if r <= self.r_in {
            0.0
        } else if r >= self.r_out {
            1.0
        } else {
            let s = (r - self.r_in) / (self.r_out - self.r_in);
            s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= self.r_in || r >= self.r_out {
            0.0
        } else {
            let w = self.r_out - self.r_in;
            let s = (r - self.r_in) / w;
            30.0 * s * s * (1.0 - s) * (1.0 - s) / w
        }
    }
}

/// Sample field for perforated-domain estimates: either a plain
/// trigonometric field, or one multiplied in every cell by a radial cutoff
/// vanishing on [0, inner·ε^α] and equal to 1 beyond outer·ε^α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SampleField {
    Plain(TrigField),
    Cutoff {
        base: TrigField,
        inner: f64,
        outer: f64,
    },
}

impl SampleField {
    pub fn base(&self) -> &TrigField {
        match self {
            SampleField::Plain(b) | SampleField::Cutoff { base: b, .. } => b,
        }
    }

    /// Cutoff in physical units for particle scale `a`, if any.
    pub fn cutoff(&self, a: f64) -> Option<Cutoff> {
        match self {
            SampleField::Plain(_) => None,
            SampleField::Cutoff { inner, outer, .. } => Some(Cutoff {
                r_in: inner * a,
                r_out: outer * a,
            }),
        }
    }

    /// Value at center + y for lattice center `center`.
    pub fn value_local(&self, center: &Vector3<f64>, y: &Vector3<f64>, a: f64) -> Vector3<f64> {
        let v = self.base().eval(&(center + y));
        match self.cutoff(a) {
            None => v,
            Some(c) => v * c.value(y.norm()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shear_norms() {
        let f = TrigField::shear(1.0);
        assert!((f.l2_norm_sq() - 0.5).abs() < 1e-15);
        assert!((f.grad_l2_norm_sq() - 2.0 * PI * PI).abs() < 1e-12);
        assert_eq!(f.divergence_residual(), 0.0);
        assert_eq!(
            TrigField::constant([1.0, 2.0, 3.0]).eval(&Vector3::new(0.3, 0.1, 0.7)),
            Vector3::new(1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn local_tables_match_direct_evaluation() {
        let f = TrigField::random_solenoidal(7, 3, 5);
        assert!(f.divergence_residual() < 1e-15);
        let offsets = vec![
            Vector3::new(0.01, -0.02, 0.03),
            Vector3::new(-0.04, 0.0, 0.01),
        ];
        let table = f.local_table(&offsets);
        let c = Vector3::new(0.25, 0.5, 0.875);
        let ph = f.cell_phases(&c);
        for (q, y) in offsets.iter().enumerate() {
            let (v, g) = f.eval_local_grad(&table, q, &ph);
            assert!((v - f.eval(&(c + y))).norm() < 1e-13);
            assert!((g - f.gradient(&(c + y))).norm() < 1e-11);
            assert!((f.eval_local(&table, q, &ph) - v).norm() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = TrigField::random_solenoidal(3, 2, 4);
        let x = Vector3::new(0.1, 0.7, 0.4);
        let h = 1e-6;
        for m in 0..3 {
            let e = Vector3::ith(m, h);
            let d = (f.eval(&(x + e)) - f.eval(&(x - e))) / (2.0 * h);
            assert!((d - f.gradient(&x).column(m)).norm() < 1e-6);
        }
        assert!((f.l2_norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_specs() {
        let f = TrigField::parse("1,0,0@0,1,0; 0,0,0.5@1,0,0@1.5707963267948966").unwrap();
        assert_eq!(f.terms.len(), 2);
        assert_eq!(TrigField::parse("shear:2").unwrap(), TrigField::shear(2.0));
        assert!(TrigField::parse("zero").unwrap().terms.is_empty());
        assert!(TrigField::parse("1,0@0,1,0").is_err());
        assert_eq!(TrigField::parse("random:4:2:3").unwrap().terms.len(), 3);
    }

    #[test]
    fn kink_pairing() {
        // ∫ B₂(x₁) dx = 0 and ∫ B₂(x₁)² dx = 1/180.
        let one = TrigField::constant([1.0, 0.0, 0.0]);
        let kink = KinkField {
            direction: Vector3::x(),
        };
        assert!(torus_pairing(&one, &kink, &Matrix3::identity()).abs() < 1e-15);
        let b = torus_pairing(&kink, &kink, &Matrix3::identity());
        assert!((b - 1.0 / 180.0).abs() < 1e-15);
        let (v, _) = kink.value_grad(&Vector3::new(-1e-12, 0.0, 0.0));
        assert!((v.x - 1.0 / 6.0).abs() < 1e-11);
    }

    #[test]
    fn cutoff_profile() {
        let c = Cutoff {
            r_in: 1.0,
            r_out: 2.0,
        };
        assert_eq!(c.value(0.5), 0.0);
        assert_eq!(c.value(2.5), 1.0);
        assert!((c.value(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        assert!(
            ((c.value(1.3 + h) - c.value(1.3 - h)) / (2.0 * h) - c.derivative(1.3)).abs() < 1e-8
        );
    }
}
