//! Local divergence correction on the annuli A_i = C_i ∪ D_i: a field with
//! zero trace on ∂A_i and divergence w^ε : ∇φ, chosen as the minimizer of
//! ∫|curl B|² under the divergence constraint on a spherical-coordinate
//! grid. With zero trace, ‖∇B‖² = ‖curl B‖² + ‖div B‖².
//!
//! Per real spherical harmonic Y_lm the field is
//! B = u(r) Y ŷ + v(r) ∇_Ω Y with div B = (r²u)'/r² − L v/r and
//! |curl B|² integrating to L((rv)' − u)²/r², L = l(l+1). Both are
//! discretized with piecewise-linear u, v on a logarithmic radial grid.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::norms::sum_cells_vec;
use super::{lattice_size, CorrectorField};
use crate::error::{Error, Result};
use crate::fields::TrigField;
use crate::geometry::nearest_cell;
use crate::harmonics::{sh_count, sh_index, solid_harmonics, spherical_harmonics, Jet};
use crate::quadrature::{gauss_legendre_interval, sphere_rule, PolarAxis};

const LMAX: usize = 10;
const N_INNER: usize = 48;
const N_OUTER: usize = 16;
const ANGULAR_ORDER: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BogovskiiReport {
    pub n_annuli: usize,
    pub eta: f64,
    /// ‖∇B‖ over the torus.
    pub grad_norm: f64,
    /// ‖B‖ over the torus.
    pub l2_norm: f64,
    /// ‖w^ε : ∇φ‖ over the annuli.
    pub data_norm: f64,
    /// max over annuli of |∫_A w^ε:∇φ| / (|A|^{1/2} ‖w^ε:∇φ‖_{L²(A)}).
    pub max_compatibility: f64,
    /// max over annuli of the relative residual of the discrete divergence
    /// constraint.
    pub div_residual: f64,
    /// max over annuli of the relative L² mass of the data beyond degree
    /// LMAX.
    pub projection_remainder: f64,
}

/// Radial profiles (u, v) on the grid nodes, one pair per (l, m).
type Profiles = Vec<(Vec<f64>, Vec<f64>)>;

pub struct BogovskiiField {
    pub report: BogovskiiReport,
    epsilon: f64,
    nodes: Vec<f64>,
    phi: TrigField,
    basis: Vec<Profiles>,
}

struct RadialGrid {
    nodes: Vec<f64>,
}

impl RadialGrid {
    fn new(r_in: f64, r_mid: f64, r_out: f64) -> Self {
        let mut nodes = Vec::with_capacity(N_INNER + N_OUTER + 1);
        for j in 0..N_INNER {
            nodes.push(r_in * (r_mid / r_in).powf(j as f64 / N_INNER as f64));
        }
        for j in 0..N_OUTER {
            nodes.push(r_mid * (r_out / r_mid).powf(j as f64 / N_OUTER as f64));
        }
        nodes.push(r_out);
        RadialGrid { nodes }
    }

    fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    fn width(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }
}

/// Per-degree operators: constraint C, curl operator A (rows already
/// weighted), and the solution map d ↦ z of the constrained minimization.
struct DegreeSolver {
    c: DMatrix<f64>,
    a: DMatrix<f64>,
    z: DMatrix<f64>,
}

fn degree_solver(grid: &RadialGrid, l: usize) -> Result<DegreeSolver> {
    let n = grid.n_cells();
    let m = n - 1;
    let ll = (l * (l + 1)) as f64;
    let r = &grid.nodes;
    // Unknowns: u_1..u_{n-1}, then v_1..v_{n-1}.
    let ui = |j: usize| (j >= 1 && j < n).then(|| j - 1);
    let vi = |j: usize| (j >= 1 && j < n).then(|| m + j - 1);
    let mut c = DMatrix::zeros(n, 2 * m);
    let mut a = DMatrix::zeros(n, 2 * m);
    for j in 0..n {
        let dj = grid.width(j);
        let s = (ll * dj).sqrt();
        for (node, sign) in [(j, -1.0), (j + 1, 1.0)] {
            if let Some(i) = ui(node) {
                c[(j, i)] += sign * r[node] * r[node];
                a[(j, i)] -= 0.5 * s;
            }
            if let Some(i) = vi(node) {
                c[(j, i)] -= ll * 0.5 * dj * r[node];
                a[(j, i)] += sign * s * r[node] / dj;
            }
        }
    }
    let z = if l == 0 {
        // Cumulative integration of (r²u)' = r²h for the radial unknowns.
        let mut z = DMatrix::zeros(2 * m, n);
        for j in 1..n {
            for i in 0..j {
                z[(j - 1, i)] = 1.0 / (r[j] * r[j]);
            }
        }
        z
    } else {
        let dim = 2 * m + n;
        let mut kkt = DMatrix::zeros(dim, dim);
        let ata = a.transpose() * &a;
        kkt.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&(ata * 2.0));
        kkt.view_mut((0, 2 * m), (2 * m, n))
            .copy_from(&c.transpose());
        kkt.view_mut((2 * m, 0), (n, 2 * m)).copy_from(&c);
        let inv = kkt
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("divergence-correction system for l = {l}")))?;
        inv.view((0, 2 * m), (2 * m, n)).into_owned()
    };
    Ok(DegreeSolver { c, a, z })
}

/// Corrects the divergence w^ε : ∇φ on every annulus for a divergence-free
/// trigonometric field φ. Spherical particles only.
pub fn bogovskii(w: &CorrectorField, phi: &TrigField) -> Result<BogovskiiField> {
    if !w.cell.particle.is_sphere() {
        return Err(Error::Unsupported(
            "divergence correction needs a spherical inner boundary".into(),
        ));
    }
    if phi.divergence_residual() > 1e-10 {
        return Err(Error::Precondition(format!(
            "test field is not divergence-free (residual {:.3e})",
            phi.divergence_residual()
        )));
    }
    let n_lat = lattice_size(w.epsilon())?;
    let eta = w.eta();
    let r_in = w.particle_scale() * w.cell.particle.base_radius();
    let grid = RadialGrid::new(r_in, eta / 4.0, eta / 2.0);
    let n = grid.n_cells();
    let n_lm = sh_count(LMAX);
    let angular = sphere_rule(ANGULAR_ORDER, PolarAxis::Z);
    let ylm: Vec<Vec<f64>> = angular
        .iter()
        .map(|a| spherical_harmonics(&a.dir, LMAX))
        .collect();
    let nb = 2 * phi.terms.len();

    // Local data: per basis field b, per (l, m), per radial cell, ∫ r² h_lm dr;
    // plus full and projected L² Gram contributions and the total integral.
    let mut data = vec![vec![vec![0.0; n]; n_lm]; nb];
    let mut full_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut proj_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut integral = DVector::<f64>::zeros(nb);
    let mut div_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut volume = 0.0;
    for j in 0..n {
        let cell_vol: f64 = (grid.nodes[j + 1].powi(3) - grid.nodes[j].powi(3)) / 3.0;
        volume += 4.0 * std::f64::consts::PI * cell_vol;
        for (r, wr) in gauss_legendre_interval(3, grid.nodes[j], grid.nodes[j + 1]) {
            let mut lm_vals = vec![vec![0.0; n_lm]; nb];
            for (ia, node) in angular.iter().enumerate() {
                let y = node.dir * r;
                let e = if r <= eta / 4.0 {
                    w.eval_c(&y)
                } else {
                    w.eval_d(&y)
                };
                let mut hb = vec![0.0; nb];
                for (t, term) in phi.terms.iter().enumerate() {
                    let k = Vector3::new(
                        term.wavevector[0] as f64,
                        term.wavevector[1] as f64,
                        term.wavevector[2] as f64,
                    ) * std::f64::consts::TAU;
                    let g = k.dot(&(e.w * Vector3::from(term.amplitude)));
                    let b = k.dot(&y);
                    hb[2 * t] = g * b.cos();
                    hb[2 * t + 1] = g * b.sin();
                }
                let wq = wr * r * r * node.weight;
                for b1 in 0..nb {
                    integral[b1] += wq * hb[b1];
                    for b2 in 0..nb {
                        full_gram[(b1, b2)] += wq * hb[b1] * hb[b2];
                    }
                    for (lm, y) in ylm[ia].iter().enumerate() {
                        lm_vals[b1][lm] += node.weight * hb[b1] * y;
                    }
                }
            }
            for b1 in 0..nb {
                for lm in 0..n_lm {
                    data[b1][lm][j] += wr * r * r * lm_vals[b1][lm];
                    for b2 in 0..nb {
                        proj_gram[(b1, b2)] += wr * r * r * lm_vals[b1][lm] * lm_vals[b2][lm];
                    }
                }
            }
        }
        for b1 in 0..nb {
            for b2 in 0..nb {
                div_gram[(b1, b2)] += (0..n_lm)
                    .map(|lm| data[b1][lm][j] * data[b2][lm][j])
                    .sum::<f64>()
                    / cell_vol;
            }
        }
    }

    // Solve per degree; accumulate quadratic forms of the solution.
    let mut curl_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut mass_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut res_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut rhs_gram = DMatrix::<f64>::zeros(nb, nb);
    let mut basis: Vec<Profiles> = vec![Vec::with_capacity(n_lm); nb];
    for l in 0..=LMAX {
        let ds = degree_solver(&grid, l)?;
        let ll = (l * (l + 1)) as f64;
        for m in -(l as i32)..=(l as i32) {
            let lm = sh_index(l, m);
            let mut sols = Vec::with_capacity(nb);
            for b in 0..nb {
                let d = DVector::from_column_slice(&data[b][lm]);
                let z = &ds.z * &d;
                let res = &ds.c * &z - &d;
                let curl = &ds.a * &z;
                sols.push((z, res, curl, d));
            }
            for b1 in 0..nb {
                for b2 in 0..nb {
                    curl_gram[(b1, b2)] += sols[b1].2.dot(&sols[b2].2);
                    res_gram[(b1, b2)] += sols[b1].1.dot(&sols[b2].1);
                    rhs_gram[(b1, b2)] += sols[b1].3.dot(&sols[b2].3);
                    let (z1, z2) = (&sols[b1].0, &sols[b2].0);
                    let mut s = 0.0;
                    for j in 1..n {
                        let rr = grid.nodes[j] * grid.nodes[j];
                        let h = 0.5 * (grid.width(j - 1) + grid.width(j));
                        s += h
                            * rr
                            * (z1[j - 1] * z2[j - 1] + ll * z1[n - 1 + j - 1] * z2[n - 1 + j - 1]);
                    }
                    mass_gram[(b1, b2)] += s;
                }
            }
            for (b, sol) in sols.iter().enumerate() {
                let mut u = vec![0.0; n + 1];
                let mut v = vec![0.0; n + 1];
                for j in 1..n {
                    u[j] = sol.0[j - 1];
                    v[j] = sol.0[n - 1 + j - 1];
                }
                basis[b].push((u, v));
            }
        }
    }

    let grad_gram = &curl_gram + &div_gram;
    let sums = sum_cells_vec::<_, 3>(n_lat, |c| {
        let coef = cell_coefficients(phi, c);
        let q = |g: &DMatrix<f64>| coef.dot(&(g * &coef));
        [q(&grad_gram), q(&mass_gram), q(&full_gram)]
    });
    let maxima = max_over_cells(n_lat, |c| {
        let coef = cell_coefficients(phi, c);
        let q = |g: &DMatrix<f64>| coef.dot(&(g * &coef));
        let h2 = q(&full_gram);
        let rhs = q(&rhs_gram);
        [
            if h2 > 0.0 {
                coef.dot(&integral).abs() / (volume * h2).sqrt()
            } else {
                0.0
            },
            if rhs > 0.0 {
                (q(&res_gram) / rhs).max(0.0).sqrt()
            } else {
                0.0
            },
            if h2 > 0.0 {
                ((h2 - q(&proj_gram)) / h2).max(0.0)
            } else {
                0.0
            },
        ]
    });
    let report = BogovskiiReport {
        n_annuli: n_lat * n_lat * n_lat,
        eta,
        grad_norm: sums[0].max(0.0).sqrt(),
        l2_norm: sums[1].max(0.0).sqrt(),
        data_norm: sums[2].max(0.0).sqrt(),
        max_compatibility: maxima[0],
        div_residual: maxima[1],
        projection_remainder: maxima[2],
    };
    Ok(BogovskiiField {
        report,
        epsilon: w.epsilon(),
        nodes: grid.nodes,
        phi: phi.clone(),
        basis,
    })
}

/// Coefficients of the local basis fields in the cell centred at c.
fn cell_coefficients(phi: &TrigField, c: &Vector3<f64>) -> DVector<f64> {
    let ph_terms = phi.terms.len();
    let mut coef = DVector::zeros(2 * ph_terms);
    for (t, term) in phi.terms.iter().enumerate() {
        let k = Vector3::new(
            term.wavevector[0] as f64,
            term.wavevector[1] as f64,
            term.wavevector[2] as f64,
        ) * std::f64::consts::TAU;
        let a = k.dot(c) + term.phase;
        coef[2 * t] = a.cos();
        coef[2 * t + 1] = -a.sin();
    }
    coef
}

fn max_over_cells<F, const D: usize>(n: usize, f: F) -> [f64; D]
where
    F: Fn(&Vector3<f64>) -> [f64; D] + Sync,
{
    use rayon::prelude::*;
    let parts: Vec<[f64; D]> = (0..n * n * n)
        .into_par_iter()
        .map(|i| f(&super::cell_center(i, n)))
        .collect();
    std::array::from_fn(|d| parts.iter().map(|p| p[d]).fold(0.0, f64::max))
}

impl BogovskiiField {
    /// Value of the correction at a point of the torus (zero outside the
    /// annuli).
    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let (_, y) = nearest_cell(x, self.epsilon);
        let r = y.norm();
        let (r0, r1) = (self.nodes[0], *self.nodes.last().unwrap());
        if r <= r0 || r >= r1 {
            return Vector3::zeros();
        }
        let center = x - y;
        let coef = cell_coefficients(&self.phi, &center);
        let j = self.nodes.partition_point(|&t| t <= r) - 1;
        let s = (r - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j]);
        let dir = y / r;
        let jet = |i: usize| Jet::variable(dir[i], i);
        let (jx, jy, jz) = (jet(0), jet(1), jet(2));
        let r2 = jx * jx + jy * jy + jz * jz;
        let solid = solid_harmonics(jx, jy, jz, r2, LMAX);
        let mut out = Vector3::zeros();
        for l in 0..=LMAX {
            for m in -(l as i32)..=(l as i32) {
                let lm = sh_index(l, m);
                let yv = solid[lm].v;
                let surf_grad = solid[lm].gradient() - dir * (l as f64 * yv);
                let (mut u, mut v) = (0.0, 0.0);
                for (b, cb) in coef.iter().enumerate() {
                    let (ub, vb) = &self.basis[b][lm];
                    u += cb * (ub[j] * (1.0 - s) + ub[j + 1] * s);
                    v += cb * (vb[j] * (1.0 - s) + vb[j + 1] * s);
                }
                out += dir * (u * yv) + surf_grad * v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::build_corrector;
    use crate::geometry::{HarmonicCoeff, ReferenceParticle};
    use crate::stokes_exterior::solve_exterior;

    fn field(eps: f64) -> CorrectorField {
        let cell = solve_exterior(&ReferenceParticle::default(), 1).unwrap();
        build_corrector(&cell, eps, 2.0, 1.0).unwrap()
    }

    #[test]
    fn constant_field_gives_zero() {
        let b = bogovskii(&field(1.0 / 8.0), &TrigField::constant([1.0, 2.0, 0.0])).unwrap();
        assert_eq!(b.report.grad_norm, 0.0);
        assert_eq!(b.eval(&Vector3::new(0.01, 0.0, 0.0)), Vector3::zeros());
    }

    #[test]
    fn solenoidal_field_report() {
        let phi = TrigField::random_solenoidal(11, 1, 3);
        let b = bogovskii(&field(1.0 / 8.0), &phi).unwrap();
        let r = b.report;
        assert!(r.max_compatibility < 1e-8, "{r:?}");
        assert!(r.div_residual < 1e-6, "{r:?}");
        assert!(r.l2_norm <= 2.0 * r.eta * r.grad_norm, "{r:?}");
        assert!(r.grad_norm > 0.0 && r.data_norm > 0.0);
        let y = Vector3::new(0.3, -0.2, 0.5).normalize() * (0.2 * r.eta);
        assert!(b.eval(&(Vector3::new(0.25, 0.5, 0.125) + y)).norm() > 0.0);
    }

    #[test]
    fn rejects_divergent_field_and_nonspherical_particle() {
        let w = field(1.0 / 8.0);
        let div = TrigField::parse("1,0,0@1,0,0").unwrap();
        assert!(matches!(bogovskii(&w, &div), Err(Error::Precondition(_))));
        let p = ReferenceParticle::harmonic(
            0.125,
            vec![HarmonicCoeff {
                l: 2,
                m: 0,
                value: 0.05,
            }],
        )
        .unwrap();
        let cell = solve_exterior(&p, 4).unwrap();
        let wh = build_corrector(&cell, 1.0 / 8.0, 2.0, 1.0).unwrap();
        assert!(matches!(
            bogovskii(&wh, &TrigField::shear(1.0)),
            Err(Error::Unsupported(_))
        ));
    }
}
