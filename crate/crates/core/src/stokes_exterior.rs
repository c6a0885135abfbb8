//! Exterior Stokes cell problem: for each direction k find (w_k, q_k) with
//! −Δw_k + ∇q_k = 0, div w_k = 0 outside the particle, w_k = e_k on its
//! boundary and w_k → 0 at infinity. Solutions are expansions in singular
//! Lamb modes centered at the origin.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ReferenceParticle;
use crate::harmonics::{
    degree_one_m, degree_one_norm, mode_family, HarmonicTable, LambMode, ModeKind, ModeValue,
};
use crate::quadrature::{fibonacci_sphere, gauss_legendre_interval, sphere_rule, PolarAxis};

/// Condition number above which a collocation system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// max |w_k − e_k| over the collocation points.
    pub max_boundary_residual: f64,
    /// Same maximum over an independent set of boundary points.
    pub validation_residual: f64,
    /// Condition number of the column-scaled collocation matrix (1 for the
    /// closed-form sphere solution).
    pub condition_number: f64,
    pub n_collocation: usize,
    pub n_unknowns: usize,
}

/// Cell solution stored as Lamb-mode coefficients in the scaled variable
/// x / length_scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub particle: ReferenceParticle,
    /// Truncation order requested by the caller.
    pub order: usize,
    pub length_scale: f64,
    pub modes: Vec<LambMode>,
    /// Coefficients of `modes` for directions k = 1, 2, 3.
    pub coeffs: [Vec<f64>; 3],
    pub residual: ResidualReport,
}

/// Values of (w_k, ∇w_k, q_k, ∇q_k) for k = 1, 2, 3 at one point;
/// `gradient[k][(i, m)] = ∂_m (w_k)_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEval {
    pub velocity: [Vector3<f64>; 3],
    pub gradient: [Matrix3<f64>; 3],
    pub pressure: [f64; 3],
    pub pressure_gradient: [Vector3<f64>; 3],
}

impl CellSolution {
    fn lmax(&self) -> usize {
        self.modes.iter().map(|m| m.l()).max().unwrap_or(1)
    }

    /// Evaluates without the exterior check. Used where the caller already
    /// knows the point is outside the particle.
    pub(crate) fn eval_unchecked(&self, x: &Vector3<f64>) -> CellEval {
        let ell = self.length_scale;
        let table = HarmonicTable::new(&(x / ell), self.lmax());
        let values: Vec<ModeValue> = self.modes.iter().map(|m| table.mode(m)).collect();
        let mut out = CellEval {
            velocity: [Vector3::zeros(); 3],
            gradient: [Matrix3::zeros(); 3],
            pressure: [0.0; 3],
            pressure_gradient: [Vector3::zeros(); 3],
        };
        for k in 0..3 {
            let mut acc = ModeValue::zero();
            for (v, &c) in values.iter().zip(&self.coeffs[k]) {
                if c != 0.0 {
                    acc.add_scaled(v, c);
                }
            }
            out.velocity[k] = acc.u;
            out.gradient[k] = acc.grad / ell;
            out.pressure[k] = acc.p / ell;
            out.pressure_gradient[k] = acc.grad_p / (ell * ell);
        }
        out
    }

    /// Coefficient vector c^(k) of the Stokeslet pressure x·c/|x|³ (scaled
    /// variable).
    pub fn stokeslet_strength(&self, k: usize) -> Vector3<f64> {
        let mut c = Vector3::zeros();
        for (mode, &coef) in self.modes.iter().zip(&self.coeffs[k]) {
            if mode.kind == ModeKind::Pressure && mode.degree == -2 {
                for j in 0..3 {
                    if mode.m == degree_one_m(j) {
                        c[j] += coef * degree_one_norm();
                    }
                }
            }
        }
        c
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Solves the exterior cell problem. Spheres use the closed form (Stokeslet
/// plus potential dipole); other particles a least-squares collocation with
/// singular modes of order ≤ `order`.
pub fn solve_exterior(particle: &ReferenceParticle, order: usize) -> Result<CellSolution> {
    if order == 0 {
        return Err(Error::Domain("truncation order must be at least 1".into()));
    }
    if particle.is_sphere() {
        return Ok(sphere_solution(particle, order));
    }
    collocation_solution(particle, order)
}

fn sphere_solution(particle: &ReferenceParticle, order: usize) -> CellSolution {
    let n = degree_one_norm();
    let mut modes = Vec::new();
    for kind in [ModeKind::Pressure, ModeKind::Potential] {
        for k in 0..3 {
            modes.push(LambMode::singular(kind, 1, degree_one_m(k)));
        }
    }
    let mut coeffs = [vec![0.0; 6], vec![0.0; 6], vec![0.0; 6]];
    for (k, c) in coeffs.iter_mut().enumerate() {
        c[k] = 1.5 / n;
        c[3 + k] = 0.25 / n;
    }
    let mut sol = CellSolution {
        particle: particle.clone(),
        order,
        length_scale: particle.base_radius(),
        modes,
        coeffs,
        residual: ResidualReport {
            max_boundary_residual: 0.0,
            validation_residual: 0.0,
            condition_number: 1.0,
            n_collocation: 0,
            n_unknowns: 6,
        },
    };
    let pts = fibonacci_sphere(256, 0.0);
    sol.residual.max_boundary_residual = boundary_residual(&sol, &pts);
    sol.residual.validation_residual = boundary_residual(&sol, &fibonacci_sphere(311, 0.5));
    sol
}

fn boundary_residual(sol: &CellSolution, dirs: &[Vector3<f64>]) -> f64 {
    dirs.iter()
        .map(|d| {
            let e = sol.eval_unchecked(&sol.particle.boundary_point(d));
            (0..3)
                .map(|k| (e.velocity[k] - Vector3::ith(k, 1.0)).amax())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn collocation_solution(particle: &ReferenceParticle, order: usize) -> Result<CellSolution> {
    let ell = particle.base_radius();
    let modes = mode_family(order, true);
    let nu = modes.len();
    let n_pts = 4 * nu;
    let dirs = fibonacci_sphere(n_pts, 0.0);
    let mut a = DMatrix::<f64>::zeros(3 * n_pts, nu);
    for (j, d) in dirs.iter().enumerate() {
        let x = particle.boundary_point(d) / ell;
        let table = HarmonicTable::new(&x, order);
        for (c, mode) in modes.iter().enumerate() {
            let v = table.mode(mode);
            for i in 0..3 {
                a[(3 * j + i, c)] = v.u[i];
            }
        }
    }
    let scales: Vec<f64> = (0..nu).map(|c| 1.0 / a.column(c).norm()).collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(*s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            cond,
            hint: "lower the truncation order or add collocation points".into(),
        });
    }
    let mut rhs = DMatrix::<f64>::zeros(3 * n_pts, 3);
    for j in 0..n_pts {
        for k in 0..3 {
            rhs[(3 * j + k, k)] = 1.0;
        }
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Singular(format!("collocation solve failed: {e}")))?;
    let coeffs: [Vec<f64>; 3] =
        std::array::from_fn(|k| (0..nu).map(|c| sol[(c, k)] * scales[c]).collect());
    let mut out = CellSolution {
        particle: particle.clone(),
        order,
        length_scale: ell,
        modes,
        coeffs,
        residual: ResidualReport {
            max_boundary_residual: 0.0,
            validation_residual: 0.0,
            condition_number: cond,
            n_collocation: n_pts,
            n_unknowns: nu,
        },
    };
    out.residual.max_boundary_residual = boundary_residual(&out, &dirs);
    out.residual.validation_residual = boundary_residual(&out, &fibonacci_sphere(n_pts + 37, 0.5));
    Ok(out)
}

/// Evaluates (w_k, ∇w_k, q_k, ∇q_k) at a point outside the particle.
pub fn eval_cell(sol: &CellSolution, x: &Vector3<f64>) -> Result<CellEval> {
    let r = x.norm();
    if r == 0.0 || r < sol.particle.radius(&(x / r)) * (1.0 - 1e-12) {
        return Err(Error::OutsideDomain(format!(
            "point {:?} lies inside the particle",
            x.as_slice()
        )));
    }
    Ok(sol.eval_unchecked(x))
}

/// Symmetric positive-definite resistance matrix R.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResistanceMatrix {
    pub entries: [[f64; 3]; 3],
}

impl ResistanceMatrix {
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        ResistanceMatrix {
            entries: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])),
        }
    }

    /// r · Id.
    pub fn isotropic(r: f64) -> Self {
        ResistanceMatrix::from_matrix(&(Matrix3::identity() * r))
    }

    pub fn diagonal(d: [f64; 3]) -> Self {
        ResistanceMatrix::from_matrix(&Matrix3::from_diagonal(&Vector3::from(d)))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.entries[i][j])
    }

    /// ‖R − Rᵀ‖ / ‖R‖.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.matrix();
        (m - m.transpose()).norm() / m.norm()
    }

    pub fn eigenvalues(&self) -> Vector3<f64> {
        let m = self.matrix();
        SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    /// Checks symmetry (1e-10 relative) and positive definiteness.
    pub fn validate(&self) -> Result<()> {
        if !self.entries.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Domain(
                "resistance matrix has non-finite entries".into(),
            ));
        }
        if self.symmetry_defect() > 1e-10 {
            return Err(Error::Domain("resistance matrix is not symmetric".into()));
        }
        if self.min_eigenvalue() <= 0.0 {
            return Err(Error::Singular(
                "resistance matrix is not positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// Dirichlet-integral resistance R_jk = ∫ ∇w_k : ∇w_j over the whole
/// exterior, using the substitution |x| = ρ(x̂)/s, s ∈ (0, 1], which turns
/// the unbounded radial integral into a finite one with polynomial
/// integrand in s for every Lamb mode (no radial truncation).
pub fn resistance(sol: &CellSolution) -> ResistanceMatrix {
    let lmax = sol.modes.iter().map(|m| m.l()).max().unwrap_or(1);
    let shape_order = sol.particle.max_order();
    let n_s = 2 * lmax + 8;
    let n_ang = if sol.particle.is_sphere() {
        8
    } else {
        3 * (lmax + shape_order) + 12
    };
    let radial = gauss_legendre_interval(n_s, 0.0, 1.0);
    let ell = sol.length_scale;
    let mut acc = [[0.0f64; 3]; 3];
    for node in sphere_rule(n_ang, PolarAxis::Z) {
        let rho = sol.particle.radius(&node.dir) / ell;
        let mut shell = [[0.0f64; 3]; 3];
        for &(s, ws) in &radial {
            let x = node.dir * (rho / s * ell);
            let e = sol.eval_unchecked(&x);
            // Gradients in the scaled variable.
            let g: [Matrix3<f64>; 3] = std::array::from_fn(|k| e.gradient[k] * ell);
            let jac = ws * rho.powi(3) / s.powi(4);
            for j in 0..3 {
                for k in j..3 {
                    shell[j][k] += jac * g[j].dot(&g[k]);
                }
            }
        }
        for j in 0..3 {
            for k in j..3 {
                acc[j][k] += node.weight * shell[j][k];
            }
        }
    }
    let mut m = Matrix3::zeros();
    for j in 0..3 {
        for k in j..3 {
            m[(j, k)] = ell * acc[j][k];
            m[(k, j)] = m[(j, k)];
        }
    }
    ResistanceMatrix::from_matrix(&m)
}

/// Resistance from the Stokeslet strength: the net force on the particle
/// equals −4π times the Stokeslet pressure coefficient.
pub fn resistance_from_stokeslet(sol: &CellSolution) -> ResistanceMatrix {
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let c = sol.stokeslet_strength(k);
        for j in 0..3 {
            m[(j, k)] = 4.0 * std::f64::consts::PI * sol.length_scale * c[j];
        }
    }
    ResistanceMatrix::from_matrix(&m)
}

/// Resistance from the traction integral R_jk = −e_j · ∫_S σ(w_k, q_k) n dS
/// over a sphere S of radius `radius` enclosing the particle.
pub fn resistance_from_traction(
    sol: &CellSolution,
    radius: f64,
    order: usize,
) -> Result<ResistanceMatrix> {
    if radius <= sol.particle.outer_radius() {
        return Err(Error::Domain(
            "traction sphere must enclose the particle".into(),
        ));
    }
    let mut m = Matrix3::zeros();
    for node in sphere_rule(order, PolarAxis::Z) {
        let e = sol.eval_unchecked(&(node.dir * radius));
        let w = node.weight * radius * radius;
        for k in 0..3 {
            let g = e.gradient[k];
            let sigma = g + g.transpose() - Matrix3::identity() * e.pressure[k];
            let f = sigma * node.dir * w;
            for j in 0..3 {
                m[(j, k)] -= f[j];
            }
        }
    }
    Ok(ResistanceMatrix::from_matrix(&m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HarmonicCoeff;
    use std::f64::consts::PI;

    #[test]
    fn sphere_boundary_and_resistance() {
        let p = ReferenceParticle::sphere(0.125).unwrap();
        let sol = solve_exterior(&p, 3).unwrap();
        assert!(sol.residual.max_boundary_residual < 1e-14);
        let r = resistance(&sol).matrix();
        assert!((r - Matrix3::identity() * 0.75 * PI).norm() < 1e-12);
        let rs = resistance_from_stokeslet(&sol).matrix();
        assert!((rs - Matrix3::identity() * 0.75 * PI).norm() < 1e-13);
    }

    #[test]
    fn eval_cell_rejects_interior() {
        let sol = solve_exterior(&ReferenceParticle::default(), 1).unwrap();
        assert!(eval_cell(&sol, &Vector3::new(0.05, 0.0, 0.0)).is_err());
        assert!(eval_cell(&sol, &Vector3::zeros()).is_err());
        assert!(eval_cell(&sol, &Vector3::new(0.125, 0.0, 0.0)).is_ok());
        assert!(solve_exterior(&ReferenceParticle::default(), 0).is_err());
    }

    #[test]
    fn harmonic_collocation_converges() {
        let p = ReferenceParticle::harmonic(
            0.125,
            vec![HarmonicCoeff {
                l: 2,
                m: 0,
                value: 0.05,
            }],
        )
        .unwrap();
        let coarse = solve_exterior(&p, 3).unwrap();
        let sol = solve_exterior(&p, 6).unwrap();
        assert!(
            sol.residual.max_boundary_residual < 1e-4,
            "{:?}",
            sol.residual
        );
        assert!(sol.residual.validation_residual < 1e-4);
        assert!(coarse.residual.max_boundary_residual > 10.0 * sol.residual.max_boundary_residual);
        let r = resistance(&sol);
        r.validate().unwrap();
        let rs = resistance_from_stokeslet(&sol);
        assert!((r.matrix() - rs.matrix()).norm() / r.matrix().norm() < 1e-4);
    }
}
