//! Oscillating corrector (w^ε, q^ε) on the four-region cell decomposition,
//! the Brinkman density it generates, weighted norms and the local
//! divergence correction.
//!
//! In each cell Q_i with offset y = x − x_i and particle scale a = ε^α:
//! w^ε = 0 in T, w_k^ε = e_k − w_k(y/a) and q_k^ε = −q_k(y/a)/a in C,
//! a Stokes solution matching both neighbours in D, and w^ε = Id, q^ε = 0
//! in K.

mod bogovskii;
mod brinkman;
mod norms;
mod rule;

pub use bogovskii::{bogovskii, BogovskiiField, BogovskiiReport};
pub use brinkman::{brinkman_density, pair_m, surface_average_identity, BrinkmanDensity, PairM};
pub use norms::{
    check_vanishes_on_particles, hardy_pair, perforated_norms, uniform_bound, weighted_norm,
    HardyNorms, PerforatedNorms, UniformBound,
};

use nalgebra::{DMatrix, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_cell, CellDecomposition, Region};
use crate::harmonics::{
    degree_one_m, degree_one_norm, mode_family, HarmonicTable, LambMode, ModeKind, ModeValue,
};
use crate::quadrature::fibonacci_sphere;
use crate::stokes_exterior::{CellSolution, MAX_CONDITION};

/// Lamb expansion of the D-region solution in the variable y / length_scale
/// with length_scale = η/2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusExpansion {
    pub length_scale: f64,
    pub modes: Vec<LambMode>,
    pub coeffs: [Vec<f64>; 3],
    /// Condition number of the matching system.
    pub condition_number: f64,
}

/// Matching residuals of the velocity across region interfaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    /// max |w^ε_C − w^ε_D| on ∂B_{η/4}.
    pub inner: f64,
    /// max |w^ε_D − Id| on ∂B_{η/2}.
    pub outer: f64,
}

impl ContinuityReport {
    pub fn max(&self) -> f64 {
        self.inner.max(self.outer)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorField {
    pub decomp: CellDecomposition,
    pub cell: CellSolution,
    pub annulus: AnnulusExpansion,
    pub continuity: ContinuityReport,
}

/// Corrector values at one point: column k of `w` is w_k^ε,
/// `gradient[k][(i, m)] = ∂_m (w_k^ε)_i`, `pressure[k] = q_k^ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectorEval {
    pub region: Region,
    pub w: Matrix3<f64>,
    pub gradient: [Matrix3<f64>; 3],
    pub pressure: Vector3<f64>,
    pub pressure_gradient: [Vector3<f64>; 3],
}

impl CorrectorEval {
    fn constant(region: Region, w: Matrix3<f64>) -> Self {
        CorrectorEval {
            region,
            w,
            gradient: [Matrix3::zeros(); 3],
            pressure: Vector3::zeros(),
            pressure_gradient: [Vector3::zeros(); 3],
        }
    }
}

impl CorrectorField {
    pub fn epsilon(&self) -> f64 {
        self.decomp.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.decomp.eta()
    }

    pub fn particle_scale(&self) -> f64 {
        self.decomp.particle_scale()
    }

    /// Evaluates at an offset y from the nearest lattice point.
    pub fn eval_offset(&self, y: &Vector3<f64>) -> CorrectorEval {
        let region = self.decomp.region_of_offset(y, &self.cell.particle);
        match region {
            Region::T => CorrectorEval::constant(Region::T, Matrix3::zeros()),
            Region::K => CorrectorEval::constant(Region::K, Matrix3::identity()),
            Region::C => self.eval_c(y),
            Region::D => self.eval_d(y),
        }
    }

    pub(crate) fn eval_c(&self, y: &Vector3<f64>) -> CorrectorEval {
        let a = self.particle_scale();
        let e = self.cell.eval_unchecked(&(y / a));
        let mut out = CorrectorEval::constant(Region::C, Matrix3::identity());
        for k in 0..3 {
            out.w.set_column(k, &(Vector3::ith(k, 1.0) - e.velocity[k]));
            out.gradient[k] = -e.gradient[k] / a;
            out.pressure[k] = -e.pressure[k] / a;
            out.pressure_gradient[k] = -e.pressure_gradient[k] / (a * a);
        }
        out
    }

    pub(crate) fn eval_d(&self, y: &Vector3<f64>) -> CorrectorEval {
        let ann = &self.annulus;
        let ell = ann.length_scale;
        let lmax = ann.modes.iter().map(|m| m.l()).max().unwrap_or(1);
        let table = HarmonicTable::new(&(y / ell), lmax);
        let values: Vec<ModeValue> = ann.modes.iter().map(|m| table.mode(m)).collect();
        let mut out = CorrectorEval::constant(Region::D, Matrix3::zeros());
        for k in 0..3 {
            let mut acc = ModeValue::zero();
            for (v, &c) in values.iter().zip(&ann.coeffs[k]) {
                if c != 0.0 {
                    acc.add_scaled(v, c);
                }
            }
            out.w.set_column(k, &acc.u);
            out.gradient[k] = acc.grad / ell;
            out.pressure[k] = acc.p / ell;
            out.pressure_gradient[k] = acc.grad_p / (ell * ell);
        }
        out
    }

    /// Max |w^ε| over boundary samples of the particle in one cell.
    pub fn trace_residual(&self, n_samples: usize) -> f64 {
        let a = self.particle_scale();
        fibonacci_sphere(n_samples, 0.3)
            .iter()
            .map(|d| {
                let y = self.cell.particle.boundary_point(d) * a;
                let w = self.eval_c(&y).w;
                w.amax()
            })
            .fold(0.0, f64::max)
    }
}

/// Piecewise evaluation at a point of the torus; periodic with period ε.
pub fn eval_corrector(w: &CorrectorField, x: &Vector3<f64>) -> CorrectorEval {
    let (_, y) = nearest_cell(x, w.epsilon());
    w.eval_offset(&y)
}

/// Builds the corrector for lattice spacing ε, particle scale ε^α and
/// cutoff η = ε^β.
pub fn build_corrector(
    cell: &CellSolution,
    epsilon: f64,
    alpha: f64,
    beta: f64,
) -> Result<CorrectorField> {
    let decomp = CellDecomposition::new(epsilon, alpha, beta, [0; 3])?;
    let a = decomp.particle_scale();
    let eta = decomp.eta();
    if a * cell.particle.outer_radius() >= eta / 4.0 * (1.0 - 1e-9) {
        return Err(Error::Singular(format!(
            "scaled particle (radius {:.3e}) touches the matching sphere of radius {:.3e}",
            a * cell.particle.outer_radius(),
            eta / 4.0
        )));
    }
    let annulus = if cell.particle.is_sphere() {
        sphere_annulus(cell, a, eta)?
    } else {
        harmonic_annulus(cell, a, eta)?
    };
    let mut field = CorrectorField {
        decomp,
        cell: cell.clone(),
        annulus,
        continuity: ContinuityReport {
            inner: 0.0,
            outer: 0.0,
        },
    };
    field.continuity = continuity(&field);
    Ok(field)
}

fn continuity(f: &CorrectorField) -> ContinuityReport {
    let eta = f.eta();
    let dirs = fibonacci_sphere(200, 0.17);
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    for d in &dirs {
        let y = d * (eta / 4.0);
        inner = inner.max((f.eval_c(&y).w - f.eval_d(&y).w).amax());
        let y = d * (eta / 2.0);
        outer = outer.max((f.eval_d(&y).w - Matrix3::identity()).amax());
    }
    ContinuityReport { inner, outer }
}

/// Radial/transverse decomposition `u = A(ρ) e_k + B(ρ)(ŷ·e_k)ŷ` of the four
/// order-one modes generated by x_k: regular potential, regular pressure,
/// singular pressure, singular potential.
fn degree_one_profiles(rho: f64) -> [(f64, f64); 4] {
    let r3 = rho * rho * rho;
    [
        (1.0, 0.0),
        (rho * rho / 5.0, -rho * rho / 10.0),
        (0.5 / rho, 0.5 / rho),
        (1.0 / r3, -3.0 / r3),
    ]
}

fn sphere_annulus(cell: &CellSolution, a: f64, eta: f64) -> Result<AnnulusExpansion> {
    let r0 = cell.particle.base_radius();
    let rc = eta / (4.0 * a * r0);
    let inner_data = (
        1.0 - 0.75 / rc - 0.25 / (rc * rc * rc),
        -0.75 / rc + 0.75 / (rc * rc * rc),
    );
    let mut m = Matrix4::zeros();
    for (c, ((ai, bi), (ao, bo))) in degree_one_profiles(0.5)
        .into_iter()
        .zip(degree_one_profiles(1.0))
        .enumerate()
    {
        m[(0, c)] = ai;
        m[(1, c)] = bi;
        m[(2, c)] = ao;
        m[(3, c)] = bo;
    }
    let rhs = Vector4::new(inner_data.0, inner_data.1, 1.0, 0.0);
    let sv = m.singular_values();
    let cond = sv.max() / sv.min();
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("annulus matching system".into()))?;
    let n = degree_one_norm();
    let mut modes = Vec::with_capacity(12);
    let mut coeffs = [vec![0.0; 12], vec![0.0; 12], vec![0.0; 12]];
    for k in 0..3 {
        let mk = degree_one_m(k);
        let base = modes.len();
        modes.push(LambMode::regular(ModeKind::Potential, 1, mk));
        modes.push(LambMode::regular(ModeKind::Pressure, 1, mk));
        modes.push(LambMode::singular(ModeKind::Pressure, 1, mk));
        modes.push(LambMode::singular(ModeKind::Potential, 1, mk));
        for j in 0..4 {
            coeffs[k][base + j] = sol[j] / n;
        }
    }
    Ok(AnnulusExpansion {
        length_scale: eta / 2.0,
        modes,
        coeffs,
        condition_number: cond,
    })
}

/// Least-squares matching with regular and singular modes up to the cell
/// truncation order on both spheres.
fn harmonic_annulus(cell: &CellSolution, a: f64, eta: f64) -> Result<AnnulusExpansion> {
    let order = cell.order.max(1);
    let mut modes = mode_family(order, false);
    modes.extend(mode_family(order, true));
    let nu = modes.len();
    let n_side = 2 * nu;
    let dirs = fibonacci_sphere(n_side, 0.0);
    let ell = eta / 2.0;
    let mut mat = DMatrix::<f64>::zeros(6 * n_side, nu);
    let mut rhs = DMatrix::<f64>::zeros(6 * n_side, 3);
    for (s, radius) in [0.5, 1.0].into_iter().enumerate() {
        for (j, d) in dirs.iter().enumerate() {
            let z = d * radius;
            let table = HarmonicTable::new(&z, order);
            let row = 3 * (s * n_side + j);
            for (c, mode) in modes.iter().enumerate() {
                let v = table.mode(mode);
                for i in 0..3 {
                    mat[(row + i, c)] = v.u[i];
                }
            }
            let data = if s == 0 {
                let e = cell.eval_unchecked(&(z * ell / a));
                std::array::from_fn::<_, 3, _>(|k| Vector3::ith(k, 1.0) - e.velocity[k])
            } else {
                std::array::from_fn(|k| Vector3::ith(k, 1.0))
            };
            for k in 0..3 {
                for i in 0..3 {
                    rhs[(row + i, k)] = data[k][i];
                }
            }
        }
    }
    let scales: Vec<f64> = (0..nu).map(|c| 1.0 / mat.column(c).norm()).collect();
    for (c, s) in scales.iter().enumerate() {
        mat.column_mut(c).scale_mut(*s);
    }
    let svd = mat.svd(true, true);
    let cond = svd.singular_values.max() / svd.singular_values.min();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::IllConditioned {
            cond,
            hint: "annulus matching system; lower the truncation order".into(),
        });
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Singular(format!("annulus matching solve failed: {e}")))?;
    let coeffs = std::array::from_fn(|k| (0..nu).map(|c| sol[(c, k)] * scales[c]).collect());
    Ok(AnnulusExpansion {
        length_scale: ell,
        modes,
        coeffs,
        condition_number: cond,
    })
}

/// Lattice size n with ε = 1/n, or an error for incommensurate ε.
pub(crate) fn lattice_size(epsilon: f64) -> Result<usize> {
    let n = (1.0 / epsilon).round();
    if n < 1.0 || ((n * epsilon) - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} is not the reciprocal of an integer"
        )));
    }
    Ok(n as usize)
}

/// Lattice point ε i for the flat cell index `(i0 * n + i1) * n + i2`.
pub(crate) fn cell_center(index: usize, n: usize) -> Vector3<f64> {
    let h = 1.0 / n as f64;
    Vector3::new(
        (index / (n * n)) as f64 * h,
        ((index / n) % n) as f64 * h,
        (index % n) as f64 * h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{HarmonicCoeff, ReferenceParticle};
    use crate::stokes_exterior::solve_exterior;

    fn sphere_field(eps: f64, alpha: f64, beta: f64) -> CorrectorField {
        let cell = solve_exterior(&ReferenceParticle::default(), 1).unwrap();
        build_corrector(&cell, eps, alpha, beta).unwrap()
    }

    #[test]
    fn sphere_continuity_and_trace() {
        let f = sphere_field(1.0 / 16.0, 2.0, 1.0);
        assert!(f.continuity.inner <= 1e-10, "{:?}", f.continuity);
        assert!(f.continuity.outer <= 1e-10, "{:?}", f.continuity);
        assert!(f.trace_residual(100) <= 1e-12);
    }

    #[test]
    fn far_region_is_identity_and_periodic() {
        let f = sphere_field(1.0 / 8.0, 2.0, 1.5);
        let x = Vector3::new(0.06, 0.06, 0.01);
        let e = eval_corrector(&f, &x);
        assert_eq!(e.region, Region::K);
        assert_eq!(e.w, Matrix3::identity());
        assert_eq!(e.pressure, Vector3::zeros());
        let x = Vector3::new(0.3, 0.26, 0.24);
        let e0 = eval_corrector(&f, &x);
        let e1 = eval_corrector(&f, &(x + Vector3::new(0.125, 0.0, 0.0)));
        assert_eq!(e0.region, e1.region);
        assert!((e0.w - e1.w).amax() < 1e-12);
    }

    #[test]
    fn d_region_is_divergence_free_stokes() {
        let f = sphere_field(1.0 / 16.0, 2.0, 1.0);
        let y = Vector3::new(0.9, -0.2, 0.3).normalize() * (0.45 * f.eta());
        let e = f.eval_offset(&y);
        assert_eq!(e.region, Region::D);
        for k in 0..3 {
            assert!(e.gradient[k].trace().abs() < 1e-9 * e.gradient[k].amax().max(1.0));
        }
        let h = 1e-6 * f.eta();
        for k in 0..3 {
            for m in 0..3 {
                let dy = Vector3::ith(m, h);
                let d =
                    (f.eval_d(&(y + dy)).w.column(k) - f.eval_d(&(y - dy)).w.column(k)) / (2.0 * h);
                assert!(
                    (d - e.gradient[k].column(m)).norm() < 1e-6 * e.gradient[k].amax().max(1.0)
                );
            }
        }
    }

    #[test]
    fn pointwise_bound_in_c_and_d() {
        let f = sphere_field(1.0 / 16.0, 2.0, 1.0);
        let a = f.particle_scale();
        for s in [1.01, 2.0, 10.0, 30.0] {
            let r = s * a * 0.125;
            if r > f.eta() / 2.0 {
                continue;
            }
            let y = Vector3::new(0.3, 0.4, (1.0f64 - 0.25).sqrt()) * r;
            let e = f.eval_offset(&y);
            assert!((Matrix3::identity() - e.w).amax() <= 2.0 * a / r);
        }
    }

    #[test]
    fn harmonic_particle_matching() {
        let p = ReferenceParticle::harmonic(
            0.125,
            vec![HarmonicCoeff {
                l: 2,
                m: 0,
                value: 0.05,
            }],
        )
        .unwrap();
        let cell = solve_exterior(&p, 6).unwrap();
        let f = build_corrector(&cell, 1.0 / 8.0, 2.0, 1.0).unwrap();
        assert!(f.continuity.max() < 1e-8, "{:?}", f.continuity);
        assert!(f.trace_residual(100) < 1e-4);
    }

    #[test]
    fn rejects_invalid_decomposition() {
        let cell = solve_exterior(&ReferenceParticle::default(), 1).unwrap();
        assert!(build_corrector(&cell, 0.5, 1.0, 1.0).is_ok());
        assert!(build_corrector(&cell, 0.5, 2.0, 3.0).is_err());
    }

    #[test]
    fn lattice_checks() {
        assert_eq!(lattice_size(0.125).unwrap(), 8);
        assert!(lattice_size(0.3).is_err());
        assert_eq!(cell_center(8 * 8 + 3, 8), Vector3::new(0.125, 0.0, 0.375));
    }
}
