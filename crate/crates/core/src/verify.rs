//! Convergence studies: log-log rate regressions of corrector norms, the
//! Brinkman pairing, Poincaré and Hardy ratios, and limit-system convergence
//! of the whole-space Navier-Stokes-Brinkman surrogate.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{
    build_corrector, check_vanishes_on_particles, hardy_pair, pair_m, perforated_norms,
    weighted_norm,
};
use crate::error::{Error, Result};
use crate::fields::{SampleField, TestField, TrigField};
use crate::geometry::ReferenceParticle;
use crate::limit_solvers::{
    physical_coefficients, solve_darcy, supercritical_coefficients, Forcing, Integrator,
    Simulation, SolverConfig,
};
use crate::regime::{classify, LimitSystem, RegimeLabel, RegimeParams};
use crate::spectral::{PeriodicGrid, VectorField};
use crate::stokes_exterior::{CellSolution, ResistanceMatrix};

/// Lattice ladder commensurate with the unit torus.
pub const DEFAULT_LADDER: [f64; 5] = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0];
/// Ladder for the (sub)critical limit studies, where 4π²ε t must be small.
pub const LIMIT_LADDER: [f64; 5] = [
    1.0 / 256.0,
    1.0 / 512.0,
    1.0 / 1024.0,
    1.0 / 2048.0,
    1.0 / 4096.0,
];
pub const EXPONENT_TOLERANCE: f64 = 0.1;
pub const M_TOLERANCE: f64 = 0.15;
/// Hardy ratios must stay within this factor of their median.
pub const HARDY_FACTOR: f64 = 2.0;

/// Least-squares slope of log(value) against log(ε) and its standard error.
pub fn rate_regression(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::Domain(format!(
            "rate regression needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some((e, v)) = samples.iter().find(|(e, v)| !(*v > 0.0 && *e > 0.0)) {
        return Err(Error::Domain(format!("nonpositive sample ({e}, {v})")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all sample abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let stderr = if xs.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}

/// How a study turns its samples into a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// |fitted − predicted| ≤ tolerance.
    Within { tolerance: f64 },
    /// fitted ≥ predicted − tolerance.
    AtLeast { tolerance: f64 },
    /// max sample ≤ factor · median sample.
    Bounded { factor: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub mu0: Option<f64>,
    pub beta: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub epsilon: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub params: StudyParams,
    pub samples: Vec<Sample>,
    pub fitted: f64,
    pub stderr: f64,
    pub predicted: f64,
    pub criterion: Criterion,
    pub pass: bool,
    /// Auxiliary per-ε series, aligned with `samples`.
    pub series: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl StudyReport {
    pub fn new(
        study: &str,
        params: StudyParams,
        samples: Vec<Sample>,
        predicted: f64,
        criterion: Criterion,
    ) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::Domain(format!(
                "a study needs at least 4 samples, got {}",
                samples.len()
            )));
        }
        if samples.windows(2).any(|w| w[1].epsilon >= w[0].epsilon) {
            return Err(Error::Domain(
                "epsilon ladder must be strictly decreasing".into(),
            ));
        }
        let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.epsilon, s.error)).collect();
        let (fitted, stderr) = rate_regression(&pairs)?;
        let pass = match criterion {
            Criterion::Within { tolerance } => (fitted - predicted).abs() <= tolerance,
            Criterion::AtLeast { tolerance } => fitted >= predicted - tolerance,
            Criterion::Bounded { factor } => {
                let errs: Vec<f64> = samples.iter().map(|s| s.error).collect();
                errs.iter().copied().fold(0.0, f64::max) <= factor * median(&errs)
            }
        };
        Ok(StudyReport {
            study: study.to_string(),
            params,
            samples,
            fitted,
            stderr,
            predicted,
            criterion,
            pass,
            series: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `epsilon,error` rows followed by a `fitted,predicted,verdict` footer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,error\n");
        for p in &self.samples {
            s.push_str(&format!("{:.12e},{:.12e}\n", p.epsilon, p.error));
        }
        s.push_str("fitted,predicted,verdict\n");
        s.push_str(&format!(
            "{:.6},{:.6},{}\n",
            self.fitted,
            self.predicted,
            if self.pass { "pass" } else { "fail" }
        ));
        s
    }
}

fn ladder_map<T: Send>(eps_list: &[f64], f: impl Fn(f64) -> Result<T> + Sync) -> Result<Vec<T>> {
    eps_list.par_iter().map(|&e| f(e)).collect()
}

fn samples_of(eps_list: &[f64], values: &[f64]) -> Vec<Sample> {
    eps_list
        .iter()
        .zip(values)
        .map(|(&epsilon, &error)| Sample { epsilon, error })
        .collect()
}

/// Exponent of ‖φ(Id − w^ε)‖_{L^p} implied by η^{3/p−1} ε^{α−3/p}, η = ε^β.
pub fn predicted_corrector_exponent(alpha: f64, beta: f64, p: f64) -> f64 {
    alpha - 3.0 / p + beta * (3.0 / p - 1.0)
}

/// ‖φ(Id − w^ε)‖_{L^p} over the ladder; the decay must be at least the
/// predicted exponent minus the tolerance.
pub fn study_corrector_rates(
    cell: &CellSolution,
    alpha: f64,
    beta: f64,
    p: f64,
    eps_list: &[f64],
    phi: &TrigField,
) -> Result<StudyReport> {
    let values = ladder_map(eps_list, |e| {
        weighted_norm(&build_corrector(cell, e, alpha, beta)?, p, phi)
    })?;
    StudyReport::new(
        "corrector",
        StudyParams {
            alpha,
            beta: Some(beta),
            p: Some(p),
            ..Default::default()
        },
        samples_of(eps_list, &values),
        predicted_corrector_exponent(alpha, beta, p),
        Criterion::AtLeast {
            tolerance: EXPONENT_TOLERANCE,
        },
    )
}

/// |⟨M_ε φ, ψ⟩ − ∫Rφ·ψ| over the ladder against min(α − β, (3 − β)/2).
pub fn study_m_convergence(
    cell: &CellSolution,
    alpha: f64,
    beta: f64,
    eps_list: &[f64],
    phi: &TrigField,
    psi: &dyn TestField,
) -> Result<StudyReport> {
    let pairs = ladder_map(eps_list, |e| {
        pair_m(&build_corrector(cell, e, alpha, beta)?, phi, psi)
    })?;
    let values: Vec<f64> = pairs.iter().map(|p| p.deviation.abs()).collect();
    let (first, second) = (alpha - beta, (3.0 - beta) / 2.0);
    let mut report = StudyReport::new(
        "m-eps",
        StudyParams {
            alpha,
            beta: Some(beta),
            ..Default::default()
        },
        samples_of(eps_list, &values),
        first.min(second),
        Criterion::AtLeast {
            tolerance: M_TOLERANCE,
        },
    )?;
    report.series.insert(
        "reference".into(),
        pairs.iter().map(|p| p.reference).collect(),
    );
    report
        .series
        .insert("surface".into(), pairs.iter().map(|p| p.surface).collect());
    report
        .series
        .insert("volume".into(), pairs.iter().map(|p| p.volume).collect());
    report
        .notes
        .push(format!("candidate slope eta^-1 eps^alpha: {first}"));
    report
        .notes
        .push(format!("candidate slope eta^-3/2 eps^3/2: {second}"));
    Ok(report)
}

/// max over samples of ‖φ‖/‖∇φ‖ for fields vanishing on every particle,
/// against (3 − α)/2.
pub fn study_poincare(
    particle: &ReferenceParticle,
    alpha: f64,
    eps_list: &[f64],
    sample_fields: &[SampleField],
) -> Result<StudyReport> {
    if sample_fields.is_empty() {
        return Err(Error::Domain(
            "Poincare study needs at least one sample field".into(),
        ));
    }
    let values = ladder_map(eps_list, |e| {
        let mut best = 0.0f64;
        for phi in sample_fields {
            check_vanishes_on_particles(phi, particle, e, alpha)?;
            let n = perforated_norms(phi, e, alpha)?;
            if n.grad_l2 == 0.0 {
                return Err(Error::Precondition("sample field has zero gradient".into()));
            }
            best = best.max(n.l2 / n.grad_l2);
        }
        Ok(best)
    })?;
    StudyReport::new(
        "poincare",
        StudyParams {
            alpha,
            ..Default::default()
        },
        samples_of(eps_list, &values),
        (3.0 - alpha) / 2.0,
        Criterion::AtLeast {
            tolerance: EXPONENT_TOLERANCE,
        },
    )
}

/// ‖|∇w^ε|^{1/2}φ‖ / (η^{1/2}‖∇φ‖) over the ladder; the ratio must stay
/// bounded. The |∇q^ε| and |q^ε| weighted variants are reported alongside.
pub fn study_hardy(
    cell: &CellSolution,
    alpha: f64,
    beta: f64,
    eps_list: &[f64],
    phi: &SampleField,
) -> Result<StudyReport> {
    let rows = ladder_map(eps_list, |e| {
        let w = build_corrector(cell, e, alpha, beta)?;
        let h = hardy_pair(&w, phi)?;
        let g = perforated_norms(phi, e, alpha)?.grad_l2;
        if g == 0.0 {
            return Err(Error::Precondition("sample field has zero gradient".into()));
        }
        let scale = w.eta().sqrt() * g;
        let max = |v: [f64; 3]| v.iter().copied().fold(0.0, f64::max);
        Ok([
            h.max_grad_w() / scale,
            max(h.grad_q) / scale,
            max(h.q) / scale,
        ])
    })?;
    let values: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let mut report = StudyReport::new(
        "hardy",
        StudyParams {
            alpha,
            beta: Some(beta),
            ..Default::default()
        },
        samples_of(eps_list, &values),
        0.0,
        Criterion::Bounded {
            factor: HARDY_FACTOR,
        },
    )?;
    report
        .series
        .insert("grad_q_ratio".into(), rows.iter().map(|r| r[1]).collect());
    report
        .series
        .insert("q_ratio".into(), rows.iter().map(|r| r[2]).collect());
    Ok(report)
}

/// Data of a limit-convergence run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitStudyConfig {
    pub grid: usize,
    pub dt: f64,
    pub t_end: f64,
    pub friction: ResistanceMatrix,
    pub initial: TrigField,
    /// Steady forcing.
    pub forcing: TrigField,
}

impl Default for LimitStudyConfig {
    fn default() -> Self {
        LimitStudyConfig {
            grid: 8,
            dt: 1e-3,
            t_end: 1.0,
            friction: ResistanceMatrix::isotropic(0.75 * PI),
            initial: TrigField::shear(1.0),
            forcing: TrigField::shear(1.0),
        }
    }
}

/// Step-size cap resolving the relaxation time of the friction term.
const RELAXATION_STEPS: f64 = 20.0;

fn run_pair(
    u0: &VectorField,
    forcing: &TrigField,
    a: SolverConfig,
    b: Option<SolverConfig>,
    limit: Option<&VectorField>,
) -> Result<Vec<f64>> {
    let mut sa = Simulation::new(u0, Forcing::steady(forcing.clone()), a)?;
    let mut sb = match b {
        Some(cfg) => Some(Simulation::new(u0, Forcing::steady(forcing.clone()), cfg)?),
        None => None,
    };
    let diff = |sa: &Simulation, sb: &Option<Simulation>| {
        let other = match (sb, limit) {
            (Some(s), _) => s.field(),
            (None, Some(l)) => l.clone(),
            (None, None) => VectorField::zeros(u0.grid),
        };
        sa.field().axpy(-1.0, &other).l2_norm()
    };
    let mut errs = vec![diff(&sa, &sb)];
    for _ in 0..sa.config().n_steps() {
        sa.step()?;
        if let Some(s) = sb.as_mut() {
            s.step()?;
        }
        errs.push(diff(&sa, &sb));
    }
    Ok(errs)
}

/// Single-mode data u0 = a0·S, f = F·S with isotropic friction r, as
/// (a0, F, |k|², ‖S‖², r).
fn single_mode(cfg: &LimitStudyConfig) -> Option<(f64, f64, f64, f64, f64)> {
    let m = cfg.friction.matrix();
    let r = m[(0, 0)];
    if (m - nalgebra::Matrix3::identity() * r).abs().max() > 1e-12 * r.abs()
        || cfg.initial.terms.len() != 1
    {
        return None;
    }
    let s = &cfg.initial.terms[0];
    let sn = s.amplitude.iter().map(|v| v * v).sum::<f64>().sqrt();
    if sn == 0.0 {
        return None;
    }
    let f = match cfg.forcing.terms.as_slice() {
        [] => 0.0,
        [t] if t.wavevector == s.wavevector && t.phase == s.phase => {
            let dot: f64 = (0..3).map(|i| t.amplitude[i] * s.amplitude[i]).sum::<f64>() / sn;
            let tn = t.amplitude.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (dot.abs() - tn).abs() > 1e-14 * tn {
                return None;
            }
            dot / sn
        }
        _ => return None,
    };
    let k2 = s
        .wavevector
        .iter()
        .map(|&k| (2.0 * PI * k as f64).powi(2))
        .sum::<f64>();
    let norm_sq = if s.wavevector == [0; 3] {
        sn * sn
    } else {
        0.5 * sn * sn
    };
    Some((1.0, f, k2, norm_sq, r))
}

/// Space-time L² distance between A' = −κA + λ'F, A(0) = a0, and the Darcy
/// amplitude F/(μ0 r) on [0, T], times ‖S‖.
pub fn supercritical_closed_form(
    params: &RegimeParams,
    epsilon: f64,
    mode: (f64, f64, f64, f64, f64),
    t_end: f64,
) -> Result<f64> {
    let (a0, f, k2, norm_sq, r) = mode;
    let c = supercritical_coefficients(params, epsilon)?;
    let kappa = c.brinkman_scale * r + c.viscosity * k2;
    let a_inf = c.forcing_scale * f / kappa;
    let d = a_inf - f / (params.mu0 * r);
    let b = a0 - a_inf;
    let e1 = -(-kappa * t_end).exp_m1() / kappa;
    let e2 = -(-2.0 * kappa * t_end).exp_m1() / (2.0 * kappa);
    Ok(((d * d * t_end + 2.0 * d * b * e1 + b * b * e2) * norm_sq).sqrt())
}

/// Distance between the whole-space Navier-Stokes-Brinkman surrogate and
/// its formal limit over the ladder. These are surrogate exponents of the
/// formal limit, not of the perforated-domain theorems.
pub fn study_limit_convergence(
    params: &RegimeParams,
    eps_list: &[f64],
    cfg: &LimitStudyConfig,
) -> Result<StudyReport> {
    let class = classify(params)?;
    let (alpha, gamma, mu0) = (params.alpha(), params.gamma(), params.mu0);
    let grid = PeriodicGrid::new(cfg.grid)?;
    let u0 = VectorField::from_trig(grid, &cfg.initial);
    let base = |dt: f64, nu: f64, lambda: f64| SolverConfig {
        grid,
        dt,
        t_end: cfg.t_end,
        integrator: Integrator::Rk4IntegratingFactor,
        friction: cfg.friction,
        viscosity: nu,
        brinkman_scale: lambda,
    };
    let r_max = cfg.friction.eigenvalues().max();
    let mut notes =
        vec!["surrogate check of the formal limit of the whole-space approximation".to_string()];
    let (values, predicted, norm) = match (class.label, class.limit_system) {
        (RegimeLabel::OutOfScope, _) | (_, LimitSystem::None) => {
            return Err(Error::OutOfScope(format!(
                "alpha = {alpha}, gamma = {gamma} has no limit system"
            )))
        }
        (RegimeLabel::Supercritical, _) => {
            let mode = single_mode(cfg);
            let values = ladder_map(eps_list, |e| {
                let c = supercritical_coefficients(params, e)?;
                let dt = cfg
                    .dt
                    .min(1.0 / (RELAXATION_STEPS * c.brinkman_scale * r_max));
                let steps = (cfg.t_end / dt).ceil();
                let dt = cfg.t_end / steps;
                let f = cfg.forcing.clone().scaled(c.forcing_scale);
                let (ud, _) = solve_darcy(
                    &VectorField::from_trig(grid, &cfg.forcing.clone().scaled(1.0 / mu0)),
                    &cfg.friction,
                )?;
                let errs = run_pair(
                    &u0,
                    &f,
                    base(dt, c.viscosity, c.brinkman_scale),
                    None,
                    Some(&ud),
                )?;
                let integral: f64 = errs
                    .windows(2)
                    .map(|w| 0.5 * dt * (w[0] * w[0] + w[1] * w[1]))
                    .sum();
                Ok(integral.sqrt())
            })?;
            let predicted = match mode {
                Some(m) => {
                    let exact = eps_list
                        .iter()
                        .map(|&e| Ok((e, supercritical_closed_form(params, e, m, cfg.t_end)?)))
                        .collect::<Result<Vec<_>>>()?;
                    notes.push(format!(
                        "closed-form single-mode prediction; nominal exponent 3-alpha-gamma = {}",
                        3.0 - alpha - gamma
                    ));
                    rate_regression(&exact)?.0
                }
                None => {
                    notes.push("data is not a single mode; predicted exponent is the nominal 3-alpha-gamma".into());
                    3.0 - alpha - gamma
                }
            };
            notes.push("time variable of the rescaled system".into());
            (values, predicted, "space-time L2")
        }
        (_, limit) => {
            let lim_lambda = if limit == LimitSystem::EulerBrinkman {
                mu0
            } else {
                0.0
            };
            let values = ladder_map(eps_list, |e| {
                let (nu, lambda) = physical_coefficients(params, e);
                let errs = run_pair(
                    &u0,
                    &cfg.forcing,
                    base(cfg.dt, nu, lambda),
                    Some(base(cfg.dt, 0.0, lim_lambda)),
                    None,
                )?;
                Ok(errs.into_iter().fold(0.0, f64::max))
            })?;
            let predicted = if class.label == RegimeLabel::Critical {
                gamma
            } else {
                gamma.min(alpha + gamma - 3.0)
            };
            (values, predicted, "L-infinity in time of L2")
        }
    };
    notes.push(format!("error norm: {norm}"));
    let mut report = StudyReport::new(
        "limits",
        StudyParams {
            alpha,
            gamma: Some(gamma),
            mu0: Some(mu0),
            ..Default::default()
        },
        samples_of(eps_list, &values),
        predicted,
        Criterion::Within {
            tolerance: EXPONENT_TOLERANCE,
        },
    )?;
    report.notes = notes;
    Ok(report)
}
