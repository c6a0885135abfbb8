//! One-dimensional and spherical quadrature rules.

use nalgebra::Vector3;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_interval(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| (mid + half * xi, half * wi))
        .collect()
}

/// Direction on the unit sphere with its quadrature weight (weights sum to 4π).
#[derive(Clone, Copy, Debug)]
pub struct SphereNode {
    pub dir: Vector3<f64>,
    pub weight: f64,
}

/// Polar axis used when building product rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolarAxis {
    X,
    Z,
}

/// Product rule: Gauss–Legendre in cos θ (n nodes) × trapezoid in φ (2n
/// nodes). Exact for spherical harmonics of degree ≤ 2n − 1.
pub fn sphere_rule(n: usize, axis: PolarAxis) -> Vec<SphereNode> {
    let (x, w) = gauss_legendre(n);
    let cos_nodes: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    product_rule(&cos_nodes, 2 * n, axis)
}

/// Product rule with Gauss–Legendre applied separately on each hemisphere
/// (n nodes each), so integrands with a kink on the equator of `axis` are
/// integrated to full order.
pub fn sphere_rule_split(n: usize, n_phi: usize, axis: PolarAxis) -> Vec<SphereNode> {
    let mut cos_nodes = gauss_legendre_interval(n, -1.0, 0.0);
    cos_nodes.extend(gauss_legendre_interval(n, 0.0, 1.0));
    product_rule(&cos_nodes, n_phi, axis)
}

fn product_rule(cos_nodes: &[(f64, f64)], n_phi: usize, axis: PolarAxis) -> Vec<SphereNode> {
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(cos_nodes.len() * n_phi);
    for &(c, wc) in cos_nodes {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            let (a, b) = (s * phi.cos(), s * phi.sin());
            let dir = match axis {
                PolarAxis::Z => Vector3::new(a, b, c),
                PolarAxis::X => Vector3::new(c, a, b),
            };
            out.push(SphereNode {
                dir,
                weight: wc * dphi,
            });
        }
    }
    out
}

/// Quasi-uniform Fibonacci points on the unit sphere.
pub fn fibonacci_sphere(n: usize, offset: f64) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64 + offset;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Neumaier-compensated running sum; deterministic for a fixed input order.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a sequence in iteration order.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = KahanSum::default();
    for v in values {
        k.add(v);
    }
    k.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=20 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn interval_rule() {
        let q: f64 = gauss_legendre_interval(5, 1.0, 3.0)
            .iter()
            .map(|(x, w)| w * x.powi(3))
            .sum();
        assert!((q - 20.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_rule_moments() {
        for axis in [PolarAxis::X, PolarAxis::Z] {
            let rule = sphere_rule(6, axis);
            let total: f64 = rule.iter().map(|n| n.weight).sum();
            assert!((total - 4.0 * PI).abs() < 1e-13);
            let mut m = nalgebra::Matrix3::zeros();
            for n in &rule {
                m += n.weight * n.dir * n.dir.transpose();
            }
            let avg = m / (4.0 * PI);
            assert!((avg - nalgebra::Matrix3::identity() / 3.0).norm() < 1e-14);
            let fourth: f64 = rule.iter().map(|n| n.weight * n.dir.x.powi(4)).sum();
            assert!((fourth - 4.0 * PI / 5.0).abs() < 1e-13);
        }
        let split = sphere_rule_split(4, 16, PolarAxis::X);
        let absx: f64 = split.iter().map(|n| n.weight * n.dir.x.abs()).sum();
        assert!((absx - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn kahan_is_order_stable() {
        let v: Vec<f64> = (0..1000)
            .map(|i| 1e-8 * (i as f64).sin() + if i == 0 { 1e8 } else { 0.0 })
            .collect();
        let exact: f64 = 1e8 + (1..1000).map(|i| 1e-8 * (i as f64).sin()).sum::<f64>();
        assert!((kahan_sum(v) - exact).abs() < 1e-7);
    }
}
