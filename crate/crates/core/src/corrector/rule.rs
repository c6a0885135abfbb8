//! Radius–angle product rules on one cell, with radial panels graded
//! geometrically toward the particle.

use nalgebra::Vector3;

use crate::geometry::{ReferenceParticle, Region};
use crate::quadrature::{gauss_legendre_interval, sphere_rule_split, PolarAxis};

#[derive(Clone, Copy, Debug)]
pub(crate) struct RuleNode {
    pub y: Vector3<f64>,
    pub weight: f64,
    pub region: Region,
}

#[derive(Clone, Debug)]
pub(crate) struct RuleSpec {
    /// Gauss–Legendre nodes in cos θ per hemisphere (polar axis e_1).
    pub n_half: usize,
    pub n_phi: usize,
    /// Gauss–Legendre nodes per radial panel.
    pub n_radial: usize,
    /// Regions to cover among T, C, D.
    pub regions: Vec<Region>,
    /// Additional radial breakpoints.
    pub breaks: Vec<f64>,
    /// Largest panel ratio in the graded part of C.
    pub ratio: f64,
    /// Number of panels graded toward the particle and toward ∂B_{η/2}.
    pub grading: usize,
}

impl RuleSpec {
    pub fn new(regions: &[Region]) -> Self {
        RuleSpec {
            n_half: 4,
            n_phi: 12,
            n_radial: 5,
            regions: regions.to_vec(),
            breaks: Vec::new(),
            ratio: 2.0,
            grading: 0,
        }
    }

    pub fn refined(mut self, factor: usize) -> Self {
        self.n_half *= factor;
        self.n_phi *= factor;
        self.n_radial *= factor;
        self
    }
}

/// Nodes covering the selected regions of one cell with particle scale `a`
/// and cutoff `eta`.
pub(crate) fn cell_rule(
    spec: &RuleSpec,
    particle: &ReferenceParticle,
    a: f64,
    eta: f64,
) -> Vec<RuleNode> {
    let dirs = sphere_rule_split(spec.n_half, spec.n_phi, PolarAxis::X);
    let mut out = Vec::new();
    for d in &dirs {
        let rp = a * particle.radius(&d.dir);
        let mut br = vec![0.0, rp, eta / 4.0, eta / 2.0];
        // |Id − w^ε| vanishes at η/2 and |w^ε| on the particle, so
        // non-integer powers lose smoothness there; grade the end panels.
        for j in 1..=spec.grading {
            let s = 0.5f64.powi(j as i32);
            br.push(eta / 2.0 - eta / 4.0 * s);
            br.push(rp * (1.0 + s));
        }
        let mut r = rp * spec.ratio;
        while r < eta / 4.0 {
            br.push(r);
            r *= spec.ratio;
        }
        br.extend(
            spec.breaks
                .iter()
                .copied()
                .filter(|&b| b > 0.0 && b < eta / 2.0),
        );
        br.sort_by(f64::total_cmp);
        br.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * eta);
        for w in br.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let region = if mid < rp {
                Region::T
            } else if mid < eta / 4.0 {
                Region::C
            } else {
                Region::D
            };
            if !spec.regions.contains(&region) {
                continue;
            }
            for (r, wr) in gauss_legendre_interval(spec.n_radial, lo, hi) {
                out.push(RuleNode {
                    y: d.dir * r,
                    weight: d.weight * wr * r * r,
                    region,
                });
            }
        }
    }
    out
}

/// Ball rule on [0, r_max] with the given radial breakpoints (no regions).
pub(crate) fn ball_rule(spec: &RuleSpec, r_max: f64) -> Vec<(Vector3<f64>, f64)> {
    let dirs = sphere_rule_split(spec.n_half, spec.n_phi, PolarAxis::X);
    let mut br = vec![0.0, r_max];
    br.extend(
        spec.breaks
            .iter()
            .copied()
            .filter(|&b| b > 0.0 && b < r_max),
    );
    br.sort_by(f64::total_cmp);
    br.dedup();
    let mut out = Vec::new();
    for d in &dirs {
        for w in br.windows(2) {
            for (r, wr) in gauss_legendre_interval(spec.n_radial, w[0], w[1]) {
                out.push((d.dir * r, d.weight * wr * r * r));
            }
        }
    }
    out
}
