//! Brinkman density M_ε: surface tractions on the spheres ∂B_{η/4}(x_i)
//! plus a divergence-form volume term on the D-regions, tested against
//! products of smooth fields.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::norms::sum_cells_vec;
use super::rule::{cell_rule, RuleSpec};
use super::{lattice_size, CorrectorField};
use crate::error::Result;
use crate::fields::{torus_pairing, TestField, TrigField};
use crate::geometry::Region;
use crate::quadrature::{sphere_rule, sphere_rule_split, PolarAxis};
use crate::stokes_exterior::{resistance, ResistanceMatrix};

/// ⟨M_ε φ, ψ⟩ split into its parts, and the limit ∫ Rφ·ψ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairM {
    pub value: f64,
    pub surface: f64,
    pub volume: f64,
    pub reference: f64,
    /// value − reference.
    pub deviation: f64,
}

/// Local traction a⁻¹(q_k Id − ∇w_k)(y/a)·n on ∂B_{η/4}, scaled by the
/// surface weight.
fn surface_tractions(w: &CorrectorField, n_half: usize) -> Vec<(Vector3<f64>, [Vector3<f64>; 3])> {
    let a = w.particle_scale();
    let rs = w.eta() / 4.0;
    sphere_rule_split(n_half, 4 * n_half, PolarAxis::X)
        .into_iter()
        .map(|node| {
            let y = node.dir * rs;
            let e = w.cell.eval_unchecked(&(y / a));
            let t = std::array::from_fn(|k| {
                (node.dir * e.pressure[k] - e.gradient[k] * node.dir) * (node.weight * rs * rs / a)
            });
            (y, t)
        })
        .collect()
}

/// ⟨M_ε φ, ψ⟩ per unit volume for ε = 1/n:
/// ε^{3−α} Σ_i Σ_k [∫_{∂B_{η/4}} m_k·v_k − ∫_{D_i} (q_k^ε Id − ∇w_k^ε):∇v_k]
/// with v_k = φ_k ψ.
pub fn pair_m(w: &CorrectorField, phi: &TrigField, psi: &dyn TestField) -> Result<PairM> {
    let n = lattice_size(w.epsilon())?;
    let r = resistance(&w.cell);
    let surf = surface_tractions(w, 6);
    let mut spec = RuleSpec::new(&[Region::D]);
    spec.n_half = 6;
    spec.n_phi = 24;
    spec.n_radial = 6;
    let vol: Vec<(Vector3<f64>, [Matrix3<f64>; 3])> =
        cell_rule(&spec, &w.cell.particle, w.particle_scale(), w.eta())
            .into_iter()
            .map(|q| {
                let e = w.eval_d(&q.y);
                let s = std::array::from_fn(|k| {
                    (Matrix3::identity() * e.pressure[k] - e.gradient[k]) * q.weight
                });
                (q.y, s)
            })
            .collect();
    let offsets: Vec<Vector3<f64>> = surf
        .iter()
        .map(|s| s.0)
        .chain(vol.iter().map(|v| v.0))
        .collect();
    let table = phi.local_table(&offsets);
    let ns = surf.len();
    let [s_sum, v_sum] = sum_cells_vec::<_, 2>(n, |c| {
        let ph = phi.cell_phases(c);
        let mut s = 0.0;
        for (q, (y, t)) in surf.iter().enumerate() {
            let f = phi.eval_local(&table, q, &ph);
            let g = psi.value(&(c + y));
            for k in 0..3 {
                s += f[k] * t[k].dot(&g);
            }
        }
        let mut v = 0.0;
        for (q, (y, sk)) in vol.iter().enumerate() {
            let (f, gf) = phi.eval_local_grad(&table, ns + q, &ph);
            let (g, gg) = psi.value_grad(&(c + y));
            for k in 0..3 {
                let grad_v = g * gf.row(k) + gg * f[k];
                v -= sk[k].dot(&grad_v);
            }
        }
        [s, v]
    });
    let pre = w.epsilon().powf(3.0 - w.decomp.alpha);
    let reference = torus_pairing(phi, psi, &r.matrix());
    let (surface, volume) = (pre * s_sum, pre * v_sum);
    Ok(PairM {
        value: surface + volume,
        surface,
        volume,
        reference,
        deviation: surface + volume - reference,
    })
}

/// Max over k of |mean of ½(R_k + 3(R_k·n)n) over the unit sphere − R_k|,
/// relative to the largest entry of R, for a product rule of the given order.
pub fn surface_average_identity(r: &ResistanceMatrix, order: usize) -> f64 {
    let m = r.matrix();
    let rule = sphere_rule(order, PolarAxis::Z);
    let total: f64 = rule.iter().map(|n| n.weight).sum();
    let mut dev: f64 = 0.0;
    for k in 0..3 {
        let rk = m.column(k).into_owned();
        let mean = rule.iter().fold(Vector3::zeros(), |acc, n| {
            acc + (rk + n.dir * (3.0 * rk.dot(&n.dir))) * (0.5 * n.weight)
        }) / total;
        dev = dev.max((mean - rk).amax());
    }
    dev / m.amax()
}

/// Surface part of the Brinkman density on one matching sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrinkmanDensity {
    /// ε^{3−α}.
    pub prefactor: f64,
    /// η/4.
    pub radius: f64,
    /// ε^α/2, the weight of R_k + 3(R_k·n)n in the model density.
    pub surface_weight: f64,
    /// max |measured traction − model| relative to max |R|, with both
    /// normalized per unit of the sphere's mean.
    pub remainder: f64,
}

pub fn brinkman_density(w: &CorrectorField) -> BrinkmanDensity {
    let a = w.particle_scale();
    let rs = w.eta() / 4.0;
    let m = resistance(&w.cell).matrix();
    let rule = sphere_rule(8, PolarAxis::Z);
    let area = 4.0 * std::f64::consts::PI * rs * rs;
    let mut rem: f64 = 0.0;
    for node in &rule {
        let e = w.cell.eval_unchecked(&(node.dir * rs / a));
        for k in 0..3 {
            let t = (node.dir * e.pressure[k] - e.gradient[k] * node.dir) / a;
            let rk = m.column(k).into_owned();
            let model = (rk + node.dir * (3.0 * rk.dot(&node.dir))) * 0.5;
            rem = rem.max((t * area / a - model).amax());
        }
    }
    BrinkmanDensity {
        prefactor: w.epsilon().powf(3.0 - w.decomp.alpha),
        radius: rs,
        surface_weight: 0.5 * a,
        remainder: rem / m.amax(),
    }
}
