//! Real solid spherical harmonics and divergence-free Lamb modes of the
//! Stokes equations, evaluated with exact first and second derivatives.
//!
//! Harmonics are orthonormal on the unit sphere: `R_lm(x) = |x|^l Y_lm(x̂)`
//! with `∫ Y_lm Y_l'm' dΩ = δ`. Index `m > 0` carries cos(mφ), `m < 0`
//! carries sin(|m|φ). A signed degree `n ≥ 0` denotes the regular harmonic
//! `R_nm`; `n = −(l+1)` denotes the singular harmonic `R_lm / |x|^{2l+1}`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Value, gradient and Hessian of a scalar function of three variables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; 3],
            h: [[0.0; 3]; 3],
        }
    }

    pub fn variable(v: f64, index: usize) -> Self {
        let mut j = Jet::constant(v);
        j.g[index] = 1.0;
        j
    }

    /// Composition f(self) given f, f' and f'' at `self.v`.
    pub fn compose(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Jet::constant(f);
        for i in 0..3 {
            out.g[i] = df * self.g[i];
            for k in 0..3 {
                out.h[i][k] = df * self.h[i][k] + d2f * self.g[i] * self.g[k];
            }
        }
        out
    }

    pub fn powf(self, q: f64) -> Self {
        let v = self.v;
        self.compose(
            v.powf(q),
            q * v.powf(q - 1.0),
            q * (q - 1.0) * v.powf(q - 2.0),
        )
    }

    pub fn gradient(&self) -> Vector3<f64> {
        Vector3::new(self.g[0], self.g[1], self.g[2])
    }

    pub fn hessian(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, k| self.h[i][k])
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..3 {
            self.g[i] += o.g[i];
            for k in 0..3 {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..3 {
            out.g[i] = self.g[i] * o.v + o.g[i] * self.v;
            for k in 0..3 {
                out.h[i][k] = self.h[i][k] * o.v
                    + o.h[i][k] * self.v
                    + self.g[i] * o.g[k]
                    + o.g[i] * self.g[k];
            }
        }
        out
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: f64) -> Jet {
        self.v *= s;
        for i in 0..3 {
            self.g[i] *= s;
            for k in 0..3 {
                self.h[i][k] *= s;
            }
        }
        self
    }
}

/// Arithmetic needed by the harmonic recurrences.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Scalar for Jet {
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }
}

/// Flat index of (l, m), m ∈ [−l, l].
pub fn sh_index(l: usize, m: i32) -> usize {
    l * l + (l as i32 + m) as usize
}

/// Number of (l, m) pairs with l ≤ lmax.
pub fn sh_count(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    let base = ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt();
    if m == 0 {
        base
    } else {
        base * 2f64.sqrt()
    }
}

/// Regular solid harmonics `R_lm` for all l ≤ lmax at (x, y, z) with
/// `r2 = x² + y² + z²`.
pub fn solid_harmonics<T: Scalar>(x: T, y: T, z: T, r2: T, lmax: usize) -> Vec<T> {
    let n = lmax + 1;
    let zero = T::from_f64(0.0);
    // a[l][m] ~ r^l P_l^m cos(mφ), b[l][m] ~ r^l P_l^m sin(mφ), unnormalized.
    let mut a = vec![zero; n * n];
    let mut b = vec![zero; n * n];
    let at = |l: usize, m: usize| l * n + m;
    a[at(0, 0)] = T::from_f64(1.0);
    for m in 0..n {
        if m > 0 {
            let (pa, pb) = (a[at(m - 1, m - 1)], b[at(m - 1, m - 1)]);
            let c = (2 * m - 1) as f64;
            a[at(m, m)] = (x * pa - y * pb) * c;
            b[at(m, m)] = (y * pa + x * pb) * c;
        }
        if m + 1 < n {
            let c = (2 * m + 1) as f64;
            a[at(m + 1, m)] = z * a[at(m, m)] * c;
            b[at(m + 1, m)] = z * b[at(m, m)] * c;
        }
        for l in (m + 2)..n {
            let c1 = (2 * l - 1) as f64 / (l - m) as f64;
            let c2 = (l - 1 + m) as f64 / (l - m) as f64;
            a[at(l, m)] = z * a[at(l - 1, m)] * c1 - r2 * a[at(l - 2, m)] * c2;
            b[at(l, m)] = z * b[at(l - 1, m)] * c1 - r2 * b[at(l - 2, m)] * c2;
        }
    }
    let mut out = vec![zero; sh_count(lmax)];
    for l in 0..n {
        for m in 0..=l {
            let nm = normalization(l, m);
            out[sh_index(l, m as i32)] = a[at(l, m)] * nm;
            if m > 0 {
                out[sh_index(l, -(m as i32))] = b[at(l, m)] * nm;
            }
        }
    }
    out
}

/// Orthonormal real spherical harmonics at a unit direction.
pub fn spherical_harmonics(dir: &Vector3<f64>, lmax: usize) -> Vec<f64> {
    solid_harmonics(dir.x, dir.y, dir.z, 1.0, lmax)
}

/// Kind of a divergence-free Stokes mode generated by a harmonic H of signed
/// degree n:
/// pressure `u = A_n r²∇H + B_n x H, p = H`; potential `u = ∇H`;
/// toroidal `u = ∇H × x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Pressure,
    Potential,
    Toroidal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambMode {
    pub kind: ModeKind,
    pub degree: i32,
    pub m: i32,
}

impl LambMode {
    pub fn regular(kind: ModeKind, l: usize, m: i32) -> Self {
        LambMode {
            kind,
            degree: l as i32,
            m,
        }
    }

    pub fn singular(kind: ModeKind, l: usize, m: i32) -> Self {
        LambMode {
            kind,
            degree: -(l as i32) - 1,
            m,
        }
    }

    /// Harmonic order l of the generating harmonic.
    pub fn l(&self) -> usize {
        if self.degree >= 0 {
            self.degree as usize
        } else {
            (-self.degree - 1) as usize
        }
    }

    pub fn is_singular(&self) -> bool {
        self.degree < 0
    }
}

/// Velocity, velocity gradient `grad[(i, m)] = ∂_m u_i`, pressure and its
/// gradient of one mode at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeValue {
    pub u: Vector3<f64>,
    pub grad: Matrix3<f64>,
    pub p: f64,
    pub grad_p: Vector3<f64>,
}

impl ModeValue {
    pub fn zero() -> Self {
        ModeValue {
            u: Vector3::zeros(),
            grad: Matrix3::zeros(),
            p: 0.0,
            grad_p: Vector3::zeros(),
        }
    }

    pub fn add_scaled(&mut self, other: &ModeValue, c: f64) {
        self.u += other.u * c;
        self.grad += other.grad * c;
        self.p += other.p * c;
        self.grad_p += other.grad_p * c;
    }
}

/// Regular and singular harmonic jets at one point, from which any Lamb mode
/// of order ≤ lmax can be evaluated.
pub struct HarmonicTable {
    x: Vector3<f64>,
    r2: f64,
    regular: Vec<Jet>,
    singular: Vec<Jet>,
}

impl HarmonicTable {
    pub fn new(x: &Vector3<f64>, lmax: usize) -> Self {
        let jx = Jet::variable(x.x, 0);
        let jy = Jet::variable(x.y, 1);
        let jz = Jet::variable(x.z, 2);
        let r2 = jx * jx + jy * jy + jz * jz;
        let regular = solid_harmonics(jx, jy, jz, r2, lmax);
        let mut singular = Vec::with_capacity(regular.len());
        for l in 0..=lmax {
            let scale = r2.powf(-(2.0 * l as f64 + 1.0) / 2.0);
            for m in -(l as i32)..=(l as i32) {
                singular.push(regular[sh_index(l, m)] * scale);
            }
        }
        HarmonicTable {
            x: *x,
            r2: r2.v,
            regular,
            singular,
        }
    }

    pub fn harmonic(&self, degree: i32, m: i32) -> Jet {
        if degree >= 0 {
            self.regular[sh_index(degree as usize, m)]
        } else {
            self.singular[sh_index((-degree - 1) as usize, m)]
        }
    }

    pub fn mode(&self, mode: &LambMode) -> ModeValue {
        let h = self.harmonic(mode.degree, mode.m);
        let g = h.gradient();
        let hess = h.hessian();
        let x = self.x;
        match mode.kind {
            ModeKind::Potential => ModeValue {
                u: g,
                grad: hess,
                p: 0.0,
                grad_p: Vector3::zeros(),
            },
            ModeKind::Toroidal => {
                let u = g.cross(&x);
                let mut grad = Matrix3::zeros();
                for mm in 0..3 {
                    let col =
                        hess.column(mm).into_owned().cross(&x) + g.cross(&Vector3::ith(mm, 1.0));
                    grad.set_column(mm, &col);
                }
                ModeValue {
                    u,
                    grad,
                    p: 0.0,
                    grad_p: Vector3::zeros(),
                }
            }
            ModeKind::Pressure => {
                let n = mode.degree as f64;
                let a = (n + 3.0) / (2.0 * (n + 1.0) * (2.0 * n + 3.0));
                let b = -n / ((n + 1.0) * (2.0 * n + 3.0));
                let r2 = self.r2;
                let u = g * (a * r2) + x * (b * h.v);
                let grad = (g * x.transpose() * 2.0 + hess * r2) * a
                    + (Matrix3::identity() * h.v + x * g.transpose()) * b;
                ModeValue {
                    u,
                    grad,
                    p: h.v,
                    grad_p: g,
                }
            }
        }
    }
}

/// Evaluates the Lamb modes at `x` (one entry per mode).
pub fn eval_modes(modes: &[LambMode], x: &Vector3<f64>) -> Vec<ModeValue> {
    let lmax = modes.iter().map(|m| m.l()).max().unwrap_or(0);
    let table = HarmonicTable::new(x, lmax);
    modes.iter().map(|m| table.mode(m)).collect()
}

/// All three kinds of Lamb modes with harmonic order 1..=lmax, either all
/// regular or all singular, ordered by l, then kind, then m.
pub fn mode_family(lmax: usize, singular: bool) -> Vec<LambMode> {
    let mut out = Vec::new();
    for l in 1..=lmax {
        for kind in [ModeKind::Pressure, ModeKind::Potential, ModeKind::Toroidal] {
            for m in -(l as i32)..=(l as i32) {
                out.push(if singular {
                    LambMode::singular(kind, l, m)
                } else {
                    LambMode::regular(kind, l, m)
                });
            }
        }
    }
    out
}

/// The order-one harmonic index m whose real harmonic is proportional to x_k.
pub fn degree_one_m(k: usize) -> i32 {
    match k {
        0 => 1,
        1 => -1,
        _ => 0,
    }
}

/// Normalization of the order-one harmonics: `R_1m = c · x_k`.
pub fn degree_one_norm() -> f64 {
    (3.0 / (4.0 * PI)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{sphere_rule, PolarAxis};

    #[test]
    fn spherical_harmonics_are_orthonormal() {
        let lmax = 6;
        let rule = sphere_rule(10, PolarAxis::Z);
        let n = sh_count(lmax);
        let mut gram = vec![0.0; n * n];
        for node in &rule {
            let y = spherical_harmonics(&node.dir, lmax);
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] += node.weight * y[i] * y[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[i * n + j] - want).abs() < 1e-12,
                    "{i} {j} {}",
                    gram[i * n + j]
                );
            }
        }
    }

    #[test]
    fn degree_one_harmonics_are_coordinates() {
        let x = Vector3::new(0.3, -0.7, 0.2);
        let r = solid_harmonics(x.x, x.y, x.z, x.norm_squared(), 1);
        for k in 0..3 {
            assert!((r[sh_index(1, degree_one_m(k))] - degree_one_norm() * x[k]).abs() < 1e-15);
        }
    }

    fn fd_check(mode: LambMode, x: Vector3<f64>) {
        let h = 1e-5;
        let v = eval_modes(&[mode], &x)[0];
        let mut lap = Vector3::zeros();
        for d in 0..3 {
            let e = Vector3::ith(d, h);
            let vp = eval_modes(&[mode], &(x + e))[0];
            let vm = eval_modes(&[mode], &(x - e))[0];
            let du = (vp.u - vm.u) / (2.0 * h);
            let scale = v.grad.norm().max(1.0);
            assert!(
                (du - v.grad.column(d)).norm() < 1e-7 * scale,
                "{mode:?} grad"
            );
            let dp = (vp.p - vm.p) / (2.0 * h);
            assert!((dp - v.grad_p[d]).abs() < 1e-7 * v.grad_p.norm().max(1.0));
            lap += (vp.grad.column(d) - vm.grad.column(d)) / (2.0 * h);
        }
        // Stokes momentum balance −Δu + ∇p = 0 and incompressibility.
        let residual = -lap + v.grad_p;
        assert!(
            residual.norm() < 1e-6 * (v.grad.norm() + 1.0),
            "{mode:?} momentum {residual}"
        );
        assert!(
            v.grad.trace().abs() < 1e-10 * (v.grad.norm() + 1.0),
            "{mode:?} divergence"
        );
    }

    #[test]
    fn lamb_modes_solve_stokes() {
        let x = Vector3::new(0.6, -0.4, 0.9);
        for singular in [false, true] {
            for mode in mode_family(4, singular) {
                fd_check(mode, x);
            }
        }
    }

    #[test]
    fn sphere_stokeslet_matches_closed_form() {
        let c = degree_one_norm();
        let x = Vector3::new(1.3, 0.4, -0.8);
        let r = x.norm();
        for k in 0..3 {
            let m = degree_one_m(k);
            let p = eval_modes(&[LambMode::singular(ModeKind::Pressure, 1, m)], &x)[0];
            let phi = eval_modes(&[LambMode::singular(ModeKind::Potential, 1, m)], &x)[0];
            let mut w = ModeValue::zero();
            w.add_scaled(&p, 1.5 / c);
            w.add_scaled(&phi, 0.25 / c);
            let e = Vector3::ith(k, 1.0);
            let want = (e / r + x * x[k] / r.powi(3)) * 0.75
                + (e / r.powi(3) - x * (3.0 * x[k] / r.powi(5))) * 0.25;
            assert!((w.u - want).norm() < 1e-14);
            assert!((w.p - 1.5 * x[k] / r.powi(3)).abs() < 1e-14);
        }
    }
}
