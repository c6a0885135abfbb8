//! Weighted corrector norms over one period of the torus, computed cell by
//! cell with precomputed local corrector values.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rule::{ball_rule, cell_rule, RuleSpec};
use super::{cell_center, lattice_size, CorrectorField};
use crate::error::{Error, Result};
use crate::fields::{SampleField, TrigField};
use crate::geometry::{ReferenceParticle, Region};
use crate::quadrature::{fibonacci_sphere, kahan_sum};

/// Sums `f(cell center)` over all n³ cells in a fixed order.
pub(crate) fn sum_cells<F>(n: usize, f: F) -> f64
where
    F: Fn(&Vector3<f64>) -> f64 + Sync,
{
    let parts: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|i| f(&cell_center(i, n)))
        .collect();
    kahan_sum(parts)
}

/// Vector-valued variant of [`sum_cells`].
pub(crate) fn sum_cells_vec<F, const D: usize>(n: usize, f: F) -> [f64; D]
where
    F: Fn(&Vector3<f64>) -> [f64; D] + Sync,
{
    let parts: Vec<[f64; D]> = (0..n * n * n)
        .into_par_iter()
        .map(|i| f(&cell_center(i, n)))
        .collect();
    std::array::from_fn(|d| kahan_sum(parts.iter().map(|p| p[d])))
}

/// ‖(Id − w^ε)φ‖_{L^p} over the unit torus for p ∈ (3/2, 3].
pub fn weighted_norm(w: &CorrectorField, p: f64, phi: &TrigField) -> Result<f64> {
    weighted_norm_with(w, p, phi, 1)
}

pub(crate) fn weighted_norm_with(
    w: &CorrectorField,
    p: f64,
    phi: &TrigField,
    refine: usize,
) -> Result<f64> {
    if !(p > 1.5 && p <= 3.0) {
        return Err(Error::Unsupported(format!(
            "exponent p = {p} outside (3/2, 3]"
        )));
    }
    lattice_size(w.epsilon())?;
    if phi.terms.is_empty() {
        return Ok(0.0);
    }
    let mut spec = RuleSpec::new(&[Region::T, Region::C, Region::D]);
    if (p / 2.0).fract() != 0.0 {
        // |(Id − w^ε)φ|^p is then not polynomial: it has kinks where a
        // component of (Id − w^ε)φ vanishes.
        spec.n_half = 8;
        spec.n_radial = 10;
        spec.grading = 6;
    }
    weighted_norm_spec(w, p, phi, &spec.refined(refine))
}

pub(crate) fn weighted_norm_spec(
    w: &CorrectorField,
    p: f64,
    phi: &TrigField,
    spec: &RuleSpec,
) -> Result<f64> {
    let n = lattice_size(w.epsilon())?;
    let nodes = cell_rule(spec, &w.cell.particle, w.particle_scale(), w.eta());
    let defect: Vec<Matrix3<f64>> = nodes
        .iter()
        .map(|q| match q.region {
            Region::T => Matrix3::identity(),
            Region::C => Matrix3::identity() - w.eval_c(&q.y).w,
            _ => Matrix3::identity() - w.eval_d(&q.y).w,
        })
        .collect();
    let offsets: Vec<Vector3<f64>> = nodes.iter().map(|q| q.y).collect();
    let table = phi.local_table(&offsets);
    let total = sum_cells(n, |c| {
        let ph = phi.cell_phases(c);
        let mut s = 0.0;
        for (q, node) in nodes.iter().enumerate() {
            let v = defect[q] * phi.eval_local(&table, q, &ph);
            s += node.weight * v.norm().powf(p);
        }
        s
    });
    Ok(total.powf(1.0 / p))
}

/// Fails unless the sample field vanishes on particle boundary samples.
pub fn check_vanishes_on_particles(
    phi: &SampleField,
    particle: &ReferenceParticle,
    epsilon: f64,
    alpha: f64,
) -> Result<()> {
    let n = lattice_size(epsilon)?;
    let a = epsilon.powf(alpha);
    let scale = 1.0
        + phi
            .base()
            .terms
            .iter()
            .map(|t| t.amplitude.iter().map(|x| x.abs()).sum::<f64>())
            .sum::<f64>();
    let dirs = fibonacci_sphere(64, 0.41);
    for idx in [0, (n * n * n) / 2 + n / 3, n * n * n - 1] {
        let c = cell_center(idx, n);
        for d in &dirs {
            let y = particle.boundary_point(d) * a;
            let v = phi.value_local(&c, &y, a).amax();
            if v > 1e-12 * scale {
                return Err(Error::Precondition(format!(
                    "test field is {v:.3e} on a particle boundary; it must vanish there"
                )));
            }
        }
    }
    Ok(())
}

/// Hardy-type weighted norms for each direction k.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyNorms {
    /// ‖|∇w_k^ε|^{1/2} φ‖_{L²}.
    pub grad_w: [f64; 3],
    /// ‖|∇q_k^ε|^{1/2} φ‖_{L²}.
    pub grad_q: [f64; 3],
    /// ‖|q_k^ε|^{1/2} φ‖_{L²}.
    pub q: [f64; 3],
}

impl HardyNorms {
    pub fn max_grad_w(&self) -> f64 {
        self.grad_w.iter().copied().fold(0.0, f64::max)
    }
}

/// Norms ‖|∇w_k^ε|^{1/2}φ‖ and ‖|∇q_k^ε|^{1/2}φ‖ (plus the |q_k^ε| weight)
/// for a field vanishing on every particle. Region K contributes zero.
pub fn hardy_pair(w: &CorrectorField, phi: &SampleField) -> Result<HardyNorms> {
    let particle = &w.cell.particle;
    check_vanishes_on_particles(phi, particle, w.epsilon(), w.decomp.alpha)?;
    let n = lattice_size(w.epsilon())?;
    let a = w.particle_scale();
    let base = phi.base();
    if base.terms.is_empty() {
        return Ok(HardyNorms {
            grad_w: [0.0; 3],
            grad_q: [0.0; 3],
            q: [0.0; 3],
        });
    }
    let cut = phi.cutoff(a);
    let mut spec = RuleSpec::new(&[Region::C, Region::D]);
    if let Some(c) = cut {
        spec.breaks = vec![c.r_in, c.r_out];
    }
    let nodes = cell_rule(&spec, particle, a, w.eta());
    let weights: Vec<[f64; 9]> = nodes
        .iter()
        .map(|q| {
            let e = if q.region == Region::C {
                w.eval_c(&q.y)
            } else {
                w.eval_d(&q.y)
            };
            let chi = cut.map_or(1.0, |c| c.value(q.y.norm()));
            let s = q.weight * chi * chi;
            let mut out = [0.0; 9];
            for k in 0..3 {
                out[k] = s * e.gradient[k].norm();
                out[3 + k] = s * e.pressure_gradient[k].norm();
                out[6 + k] = s * e.pressure[k].abs();
            }
            out
        })
        .collect();
    let offsets: Vec<Vector3<f64>> = nodes.iter().map(|q| q.y).collect();
    let table = base.local_table(&offsets);
    let sums = sum_cells_vec::<_, 9>(n, |c| {
        let ph = base.cell_phases(c);
        let mut s = [0.0; 9];
        for (q, wq) in weights.iter().enumerate() {
            let v2 = base.eval_local(&table, q, &ph).norm_squared();
            for d in 0..9 {
                s[d] += wq[d] * v2;
            }
        }
        s
    });
    Ok(HardyNorms {
        grad_w: std::array::from_fn(|k| sums[k].sqrt()),
        grad_q: std::array::from_fn(|k| sums[3 + k].sqrt()),
        q: std::array::from_fn(|k| sums[6 + k].sqrt()),
    })
}

/// L² norm and gradient L² norm of a sample field over the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerforatedNorms {
    pub l2: f64,
    pub grad_l2: f64,
}

/// Norms of a sample field with the particle lattice of spacing ε and
/// particle scale ε^α; cutoff fields are corrected cell by cell on the
/// ball where the cutoff differs from 1.
pub fn perforated_norms(phi: &SampleField, epsilon: f64, alpha: f64) -> Result<PerforatedNorms> {
    let base = phi.base();
    let l2 = base.l2_norm_sq();
    let g2 = base.grad_l2_norm_sq();
    let a = epsilon.powf(alpha);
    let Some(cut) = phi.cutoff(a) else {
        return Ok(PerforatedNorms {
            l2: l2.sqrt(),
            grad_l2: g2.sqrt(),
        });
    };
    if !(cut.r_in >= 0.0 && cut.r_out > cut.r_in) {
        return Err(Error::Domain(
            "cutoff radii must satisfy 0 <= inner < outer".into(),
        ));
    }
    if cut.r_out >= 0.5 * epsilon {
        return Err(Error::Domain(format!(
            "cutoff radius {:.3e} does not fit inside a cell of side {epsilon}",
            cut.r_out
        )));
    }
    let n = lattice_size(epsilon)?;
    if base.terms.is_empty() {
        return Ok(PerforatedNorms {
            l2: 0.0,
            grad_l2: 0.0,
        });
    }
    let mut spec = RuleSpec::new(&[]);
    spec.n_radial = 8;
    spec.breaks = vec![cut.r_in];
    let nodes = ball_rule(&spec, cut.r_out);
    let radial: Vec<(f64, f64, Vector3<f64>)> = nodes
        .iter()
        .map(|(y, _)| {
            let r = y.norm();
            let dir = if r > 0.0 { y / r } else { Vector3::zeros() };
            (cut.value(r), cut.derivative(r), dir)
        })
        .collect();
    let offsets: Vec<Vector3<f64>> = nodes.iter().map(|q| q.0).collect();
    let table = base.local_table(&offsets);
    let [dl2, dg2] = sum_cells_vec::<_, 2>(n, |c| {
        let ph = base.cell_phases(c);
        let mut s = [0.0; 2];
        for (q, (_, wq)) in nodes.iter().enumerate() {
            let (v, g) = base.eval_local_grad(&table, q, &ph);
            let (chi, dchi, dir) = radial[q];
            s[0] += wq * v.norm_squared() * (chi * chi - 1.0);
            let gc = g * chi + v * dir.transpose() * dchi;
            s[1] += wq * (gc.norm_squared() - g.norm_squared());
        }
        s
    });
    Ok(PerforatedNorms {
        l2: (l2 + dl2).max(0.0).sqrt(),
        grad_l2: (g2 + dg2).max(0.0).sqrt(),
    })
}

/// Sup norms entering the uniform bound ‖w^ε‖_∞ + ε^α(‖∇w^ε‖_∞ + ‖q^ε‖_∞).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformBound {
    pub sup_w: f64,
    pub scaled_sup_grad: f64,
    pub scaled_sup_q: f64,
}

impl UniformBound {
    pub fn total(&self) -> f64 {
        self.sup_w + self.scaled_sup_grad + self.scaled_sup_q
    }
}

/// Samples the corrector on the C ∪ D quadrature nodes and on the particle
/// boundary of one cell.
pub fn uniform_bound(w: &CorrectorField) -> UniformBound {
    let a = w.particle_scale();
    let mut ys: Vec<Vector3<f64>> = cell_rule(
        &RuleSpec::new(&[Region::C, Region::D]),
        &w.cell.particle,
        a,
        w.eta(),
    )
    .into_iter()
    .map(|q| q.y)
    .collect();
    ys.extend(
        fibonacci_sphere(128, 0.2)
            .iter()
            .map(|d| w.cell.particle.boundary_point(d) * a),
    );
    let mut out = UniformBound {
        sup_w: 1.0,
        scaled_sup_grad: 0.0,
        scaled_sup_q: 0.0,
    };
    for y in &ys {
        let e = if y.norm() <= w.eta() / 4.0 {
            w.eval_c(y)
        } else {
            w.eval_d(y)
        };
        for k in 0..3 {
            out.sup_w = out.sup_w.max(e.w.column(k).norm());
            out.scaled_sup_grad = out.scaled_sup_grad.max(a * e.gradient[k].norm());
            out.scaled_sup_q = out.scaled_sup_q.max(a * e.pressure[k].abs());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::build_corrector;
    use crate::stokes_exterior::solve_exterior;

    fn field(eps: f64) -> CorrectorField {
        let cell = solve_exterior(&ReferenceParticle::default(), 1).unwrap();
        build_corrector(&cell, eps, 2.0, 1.0).unwrap()
    }

    fn test_phi() -> TrigField {
        TrigField::constant([1.0, 0.0, 0.0])
            .plus(&TrigField::parse("0,0.5,0@1,0,0@0.3; 0,0,0.25@0,2,1").unwrap())
    }

    #[test]
    fn weighted_norm_basics() {
        let w = field(1.0 / 8.0);
        assert_eq!(weighted_norm(&w, 2.0, &TrigField::zero()).unwrap(), 0.0);
        assert!(weighted_norm(&w, 1.5, &test_phi()).is_err());
        assert!(weighted_norm(&w, 3.5, &test_phi()).is_err());
        for p in [2.0, 2.5, 3.0] {
            let coarse = weighted_norm(&w, p, &test_phi()).unwrap();
            let fine = weighted_norm_with(&w, p, &test_phi(), 2).unwrap();
            assert!(
                ((coarse - fine) / fine).abs() < 1e-4,
                "p={p}: {coarse} vs {fine}"
            );
        }
    }

    #[test]
    fn hardy_requires_vanishing_field() {
        let w = field(1.0 / 8.0);
        let plain = SampleField::Plain(TrigField::constant([1.0, 0.0, 0.0]));
        assert!(matches!(
            hardy_pair(&w, &plain),
            Err(Error::Precondition(_))
        ));
        let zero = SampleField::Cutoff {
            base: TrigField::zero(),
            inner: 0.125,
            outer: 0.25,
        };
        assert_eq!(hardy_pair(&w, &zero).unwrap().grad_w, [0.0; 3]);
        let cut = SampleField::Cutoff {
            base: test_phi(),
            inner: 0.125,
            outer: 0.25,
        };
        let h = hardy_pair(&w, &cut).unwrap();
        assert!(h.grad_w.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn perforated_norms_of_cutoff_constant() {
        // φ = χ(|y|) e_1: ‖∇φ‖² = n³ 4π ∫ χ'² r² dr.
        let eps = 1.0 / 8.0;
        let phi = SampleField::Cutoff {
            base: TrigField::constant([1.0, 0.0, 0.0]),
            inner: 0.125,
            outer: 0.25,
        };
        let pn = perforated_norms(&phi, eps, 2.0).unwrap();
        let a = eps * eps;
        let c = phi.cutoff(a).unwrap();
        let radial: f64 = crate::quadrature::gauss_legendre_interval(40, c.r_in, c.r_out)
            .iter()
            .map(|(r, w)| w * c.derivative(*r).powi(2) * r * r)
            .sum();
        let expect = (512.0 * 4.0 * std::f64::consts::PI * radial).sqrt();
        assert!(((pn.grad_l2 - expect) / expect).abs() < 1e-10);
        assert!(pn.l2 < 1.0 && pn.l2 > 0.999);
    }

    #[test]
    fn uniform_bound_stable() {
        let b: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
            .iter()
            .map(|&e| uniform_bound(&field(e)).total())
            .collect();
        for v in &b {
            assert!((v / b[0] - 1.0).abs() < 0.1, "{b:?}");
        }
    }
}
