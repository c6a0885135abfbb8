//! Time integration of the macroscopic limit systems on the periodic box:
//! Euler-Brinkman, Euler, the whole-space Navier-Stokes-Brinkman
//! approximation, the algebraic Darcy law, and the supercritical rescaling.
//!
//! All runs evolve Fourier coefficients. The nonlinear term enters in the
//! rotational form P(ω × u), which equals P((u·∇)u).

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::TrigField;
use crate::regime::{classify, RegimeLabel, RegimeParams};
use crate::spectral::{
    rotational_advection_map, PeriodicGrid, ScalarField, ScalarSpectrum, VectorField,
    VectorSpectrum,
};
use crate::stokes_exterior::ResistanceMatrix;

/// Largest admissible advective CFL number dt·max|u|·N/L.
pub const MAX_CFL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    /// Classical explicit RK4 on the full right-hand side.
    Rk4,
    /// Lawson RK4 with the exact exponential of νΔ − λPRP per mode.
    Rk4IntegratingFactor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub grid: PeriodicGrid,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub friction: ResistanceMatrix,
    /// ν (μ0 ε^γ in physical variables).
    pub viscosity: f64,
    /// λ (μ0 ε^{α+γ−3} in physical variables).
    pub brinkman_scale: f64,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Domain(format!(
                "time step {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Domain(format!(
                "final time {} must be nonnegative",
                self.t_end
            )));
        }
        if !(self.viscosity >= 0.0 && self.brinkman_scale >= 0.0) {
            return Err(Error::Domain(
                "viscosity and Brinkman scale must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps reaching t_end (the last step may not be shortened).
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// (ν, λ) = (μ0 ε^γ, μ0 ε^{α+γ−3}) of the whole-space approximation.
pub fn physical_coefficients(params: &RegimeParams, epsilon: f64) -> (f64, f64) {
    let (a, g) = (params.alpha(), params.gamma());
    (
        params.mu0 * epsilon.powf(g),
        params.mu0 * epsilon.powf(a + g - 3.0),
    )
}

/// Coefficients of the rescaled supercritical system written in standard
/// form ∂_t u + u·∇u − ν'Δu + λ'Ru + ∇p = s_f f.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledCoefficients {
    /// ν' = μ0 ε^{α+2γ−3}.
    pub viscosity: f64,
    /// λ' = μ0 ε^{2α+2γ−6}.
    pub brinkman_scale: f64,
    /// s_f = ε^{2α+2γ−6}.
    pub forcing_scale: f64,
}

pub fn supercritical_coefficients(
    params: &RegimeParams,
    epsilon: f64,
) -> Result<RescaledCoefficients> {
    let (a, g) = (params.alpha(), params.gamma());
    if a + g >= 3.0 {
        return Err(Error::Domain(format!(
            "rescaling needs alpha + gamma < 3, got {}",
            a + g
        )));
    }
    let s = epsilon.powf(2.0 * a + 2.0 * g - 6.0);
    Ok(RescaledCoefficients {
        viscosity: params.mu0 * epsilon.powf(a + 2.0 * g - 3.0),
        brinkman_scale: params.mu0 * s,
        forcing_scale: s,
    })
}

/// Forcing `cos(ω t) · field(x / L)`; ω = 0 gives steady forcing.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Forcing {
    pub field: TrigField,
    pub omega: f64,
}

impl Forcing {
    pub fn steady(field: TrigField) -> Self {
        Forcing { field, omega: 0.0 }
    }

    pub fn zero() -> Self {
        Forcing::default()
    }

    fn factor(&self, t: f64) -> f64 {
        if self.omega == 0.0 {
            1.0
        } else {
            (self.omega * t).cos()
        }
    }
}

/// Time series of the energy budget.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// ∫₀ᵗ λ⟨Ru, u⟩.
    pub friction_dissipation: Vec<f64>,
    /// ∫₀ᵗ ν‖∇u‖².
    pub viscous_dissipation: Vec<f64>,
    /// ∫₀ᵗ ⟨f, u⟩.
    pub work: Vec<f64>,
}

impl TrajectoryReport {
    /// E(t) − E(0) + friction + viscous − work at every recorded time.
    pub fn balance_residual(&self) -> Vec<f64> {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        (0..self.times.len())
            .map(|i| {
                self.energies[i] - e0 + self.friction_dissipation[i] + self.viscous_dissipation[i]
                    - self.work[i]
            })
            .collect()
    }

    /// max |balance residual| / E(0) divided by the final time.
    pub fn relative_drift_rate(&self) -> f64 {
        let e0 = self.energies.first().copied().unwrap_or(0.0);
        let t = self.times.last().copied().unwrap_or(0.0);
        if e0 == 0.0 || t == 0.0 {
            return 0.0;
        }
        self.balance_residual()
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()))
            / e0
            / t
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,energy,friction_dissipation,viscous_dissipation,work\n");
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[i],
                self.energies[i],
                self.friction_dissipation[i],
                self.viscous_dissipation[i],
                self.work[i]
            ));
        }
        s
    }
}

fn mat_apply(m: &Matrix3<f64>, v: [Complex64; 3]) -> [Complex64; 3] {
    std::array::from_fn(|i| v[0] * m[(i, 0)] + v[1] * m[(i, 1)] + v[2] * m[(i, 2)])
}

fn is_isotropic(r: &Matrix3<f64>) -> bool {
    *r == Matrix3::identity() * r[(0, 0)]
}

/// The three velocity coefficients of one Fourier mode.
#[derive(Clone, Copy)]
struct Mode([Complex64; 3]);

impl std::ops::Add for Mode {
    type Output = Mode;

    #[inline]
    fn add(self, o: Mode) -> Mode {
        Mode(std::array::from_fn(|c| self.0[c] + o.0[c]))
    }
}

impl std::ops::Mul<f64> for Mode {
    type Output = Mode;

    #[inline]
    fn mul(self, s: f64) -> Mode {
        Mode(self.0.map(|v| v * s))
    }
}

/// Per-mode exponentials of the linear operator for dt/2 and dt.
enum Propagator {
    Scalar {
        half: Vec<f64>,
        full: Vec<f64>,
    },
    Matrix {
        half: Vec<Matrix3<f64>>,
        full: Vec<Matrix3<f64>>,
    },
}

impl Propagator {
    fn new(grid: &PeriodicGrid, r: &Matrix3<f64>, nu: f64, lambda: f64, dt: f64) -> Self {
        let iso = is_isotropic(r);
        if iso {
            let rate: Vec<f64> = (0..grid.len())
                .map(|idx| nu * grid.wavevector(idx).norm_squared() + lambda * r[(0, 0)])
                .collect();
            return Propagator::Scalar {
                half: rate.iter().map(|a| (-a * 0.5 * dt).exp()).collect(),
                full: rate.iter().map(|a| (-a * dt).exp()).collect(),
            };
        }
        let mut half = Vec::with_capacity(grid.len());
        let mut full = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let k = grid.wavevector(idx);
            let k2 = k.norm_squared();
            let p = if k2 == 0.0 {
                Matrix3::identity()
            } else {
                Matrix3::identity() - k * k.transpose() / k2
            };
            let a = Matrix3::identity() * (nu * k2) + (p * r * p) * lambda;
            let eig = SymmetricEigen::new(0.5 * (a + a.transpose()));
            let q = eig.eigenvectors;
            let ex = |tau: f64| {
                let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| (-l * tau).exp()));
                q * d * q.transpose()
            };
            half.push(ex(0.5 * dt));
            full.push(ex(dt));
        }
        Propagator::Matrix { half, full }
    }

    /// exp(−A·dt) (full) or exp(−A·dt/2) applied to one mode.
    #[inline]
    fn apply_mode(&self, idx: usize, v: Mode, full_step: bool) -> Mode {
        match self {
            Propagator::Scalar { half, full } => v * if full_step { full[idx] } else { half[idx] },
            Propagator::Matrix { half, full } => Mode(mat_apply(
                if full_step { &full[idx] } else { &half[idx] },
                v.0,
            )),
        }
    }

    /// dst = f(ex, inputs) mode by mode, where ex.at(v, full) applies the
    /// propagator of that mode; missing inputs read as zero.
    fn stage(
        &self,
        dst: &mut VectorSpectrum,
        inputs: &[&VectorSpectrum],
        f: impl Fn(ModeExp, [Mode; 5]) -> Mode,
    ) {
        let zero = Complex64::new(0.0, 0.0);
        let len = dst.grid.len();
        for idx in 0..len {
            let mut vs = [Mode([zero; 3]); 5];
            for (v, s) in vs.iter_mut().zip(inputs) {
                *v = Mode([s.comps[0][idx], s.comps[1][idx], s.comps[2][idx]]);
            }
            let Mode(o) = f(ModeExp { prop: self, idx }, vs);
            (dst.comps[0][idx], dst.comps[1][idx], dst.comps[2][idx]) = (o[0], o[1], o[2]);
        }
    }
}

/// The propagator restricted to one mode.
#[derive(Clone, Copy)]
struct ModeExp<'a> {
    prop: &'a Propagator,
    idx: usize,
}

impl ModeExp<'_> {
    #[inline]
    fn at(self, v: Mode, full_step: bool) -> Mode {
        self.prop.apply_mode(self.idx, v, full_step)
    }
}

/// dst = Σ wᵢ · sᵢ, accumulated left to right in one pass.
fn combine<const M: usize>(dst: &mut VectorSpectrum, terms: [(f64, &VectorSpectrum); M]) {
    for (c, d) in dst.comps.iter_mut().enumerate() {
        let len = d.len();
        let srcs: [&[Complex64]; M] = terms.map(|(_, s)| &s.comps[c][..len]);
        for (idx, o) in d.iter_mut().enumerate() {
            let mut acc = srcs[0][idx] * terms[0].0;
            for t in 1..M {
                acc += srcs[t][idx] * terms[t].0;
            }
            *o = acc;
        }
    }
}

/// A trajectory of one of the limit systems on the periodic box.
pub struct Simulation {
    cfg: SolverConfig,
    r: Matrix3<f64>,
    forcing: Forcing,
    forcing_hat: VectorSpectrum,
    propagator: Option<Propagator>,
    state: VectorSpectrum,
    t: f64,
    report: TrajectoryReport,
    /// Stage buffers reused across steps.
    work: Vec<VectorSpectrum>,
}

impl Simulation {
    pub fn new(u0: &VectorField, forcing: Forcing, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if u0.grid != cfg.grid {
            return Err(Error::Precondition(
                "initial field lives on a different grid".into(),
            ));
        }
        let state = u0.spectrum();
        let norm = (2.0 * state.energy()).sqrt();
        if state.divergence_norm() > 1e-10 * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Precondition(format!(
                "initial field is not divergence-free (relative residual {:.3e})",
                state.divergence_norm() / norm
            )));
        }
        let r = cfg.friction.matrix();
        let propagator = match cfg.integrator {
            Integrator::Rk4 => None,
            Integrator::Rk4IntegratingFactor => Some(Propagator::new(
                &cfg.grid,
                &r,
                cfg.viscosity,
                cfg.brinkman_scale,
                cfg.dt,
            )),
        };
        let mut forcing_hat = VectorField::from_trig(cfg.grid, &forcing.field).spectrum();
        forcing_hat.project();
        let mut sim = Simulation {
            cfg,
            r,
            forcing,
            forcing_hat,
            propagator,
            state,
            t: 0.0,
            report: TrajectoryReport::default(),
            work: Vec::new(),
        };
        sim.record(0.0, [0.0; 3]);
        Ok(sim)
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn spectrum(&self) -> &VectorSpectrum {
        &self.state
    }

    pub fn field(&self) -> VectorField {
        self.state.to_field()
    }

    pub fn report(&self) -> &TrajectoryReport {
        &self.report
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Writes P(f − ω×u) and, for the explicit integrator, − P(λRu) + νΔu
    /// into `out`. Returns max |u| on the grid and the budget rates at s.
    fn rhs(
        &self,
        s: &VectorSpectrum,
        t: f64,
        include_linear: bool,
        out: &mut VectorSpectrum,
    ) -> (f64, [f64; 3]) {
        let ff = self.forcing.factor(t);
        let forced = !self.forcing.field.terms.is_empty();
        let (nu, lambda) = (self.cfg.viscosity, self.cfg.brinkman_scale);
        let lin = if include_linear { 1.0 } else { 0.0 };
        let r = &self.r;
        let iso = is_isotropic(r).then_some(r[(0, 0)]);
        let mut acc = [0.0; 3];
        let [s0, s1, s2] = &s.comps;
        let [f0, f1, f2] = &self.forcing_hat.comps;
        let (cl, cn) = (lambda * lin, nu * lin);
        let umax = rotational_advection_map(s, out, |idx, k, a, mult| {
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let v = [s0[idx], s1[idx], s2[idx]];
            let v2 = v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr();
            acc[1] += mult * k2 * v2;
            let mut o = match iso {
                Some(r0) => {
                    acc[0] += mult * r0 * v2;
                    let c = cl * r0 + cn * k2;
                    [-a[0] - v[0] * c, -a[1] - v[1] * c, -a[2] - v[2] * c]
                }
                None => {
                    let rv = mat_apply(r, v);
                    acc[0] +=
                        mult * (rv[0] * v[0].conj() + rv[1] * v[1].conj() + rv[2] * v[2].conj()).re;
                    let c = cn * k2;
                    std::array::from_fn(|i| -a[i] - rv[i] * cl - v[i] * c)
                }
            };
            if forced {
                let f = [f0[idx] * ff, f1[idx] * ff, f2[idx] * ff];
                acc[2] += mult * (f[0] * v[0].conj() + f[1] * v[1].conj() + f[2] * v[2].conj()).re;
                o.iter_mut().zip(f).for_each(|(x, fc)| *x += fc);
            }
            if k2 != 0.0 {
                let kv = (o[0] * k[0] + o[1] * k[1] + o[2] * k[2]) / k2;
                o.iter_mut().zip(k).for_each(|(x, kc)| *x -= kv * kc);
            }
            o
        });
        let vol = self.cfg.grid.length().powi(3);
        (
            umax,
            [lambda * acc[0] * vol, nu * acc[1] * vol, acc[2] * vol],
        )
    }

    fn check_cfl(&self, umax: f64) -> Result<()> {
        let n = self.cfg.grid.n() as f64;
        let l = self.cfg.grid.length();
        let number = self.cfg.dt * umax * n / l;
        if number > MAX_CFL {
            return Err(Error::Cfl {
                number,
                suggested_dt: MAX_CFL * l / (n * umax),
            });
        }
        Ok(())
    }

    /// Advances by one step of size dt.
    pub fn step(&mut self) -> Result<()> {
        let (h, t) = (self.cfg.dt, self.t);
        let mut w = std::mem::take(&mut self.work);
        if w.len() != 5 {
            w = vec![VectorSpectrum::zeros(self.cfg.grid); 5];
        }
        let [k1, k2, k3, k4, st] = &mut w[..] else {
            unreachable!()
        };
        let u = &self.state;
        let (umax, r1) = self.rhs(u, t, self.propagator.is_none(), k1);
        if let Err(e) = self.check_cfl(umax) {
            self.work = w;
            return Err(e);
        }
        // The budget integrals ride along as extra RK4 components.
        let [r2, r3, r4] = match &self.propagator {
            None => {
                combine(st, [(1.0, u), (0.5 * h, k1)]);
                let (_, r2) = self.rhs(st, t + 0.5 * h, true, k2);
                combine(st, [(1.0, u), (0.5 * h, k2)]);
                let (_, r3) = self.rhs(st, t + 0.5 * h, true, k3);
                combine(st, [(1.0, u), (h, k3)]);
                let (_, r4) = self.rhs(st, t + h, true, k4);
                combine(
                    st,
                    [
                        (1.0, u),
                        (h / 6.0, k1),
                        (h / 3.0, k2),
                        (h / 3.0, k3),
                        (h / 6.0, k4),
                    ],
                );
                [r2, r3, r4]
            }
            Some(e) => {
                e.stage(st, &[u, k1], |ex, [v, a, ..]| {
                    ex.at(v + a * (0.5 * h), false)
                });
                let (_, r2) = self.rhs(st, t + 0.5 * h, false, k2);
                e.stage(st, &[u, k2], |ex, [v, b, ..]| {
                    ex.at(v, false) + b * (0.5 * h)
                });
                let (_, r3) = self.rhs(st, t + 0.5 * h, false, k3);
                e.stage(st, &[u, k3], |ex, [v, c, ..]| {
                    ex.at(v, true) + ex.at(c, false) * h
                });
                let (_, r4) = self.rhs(st, t + h, false, k4);
                e.stage(st, &[u, k1, k2, k3, k4], |ex, [v, a, b, c, d]| {
                    ex.at(v + a * (h / 6.0), true) + ex.at(b + c, false) * (h / 3.0) + d * (h / 6.0)
                });
                [r2, r3, r4]
            }
        };
        let inc: [f64; 3] =
            std::array::from_fn(|i| h / 6.0 * (r1[i] + 2.0 * r2[i] + 2.0 * r3[i] + r4[i]));
        std::mem::swap(&mut self.state, st);
        self.work = w;
        self.t = t + h;
        self.record(self.t, inc);
        Ok(())
    }

    /// Runs to t_end, calling `observer(t, spectrum)` after every step.
    pub fn run(&mut self, mut observer: impl FnMut(f64, &VectorSpectrum)) -> Result<()> {
        for _ in 0..self.cfg.n_steps() {
            self.step()?;
            observer(self.t, &self.state);
        }
        Ok(())
    }

    fn record(&mut self, t: f64, inc: [f64; 3]) {
        let r = &mut self.report;
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        let (f, v, w) = (
            last(&r.friction_dissipation),
            last(&r.viscous_dissipation),
            last(&r.work),
        );
        r.times.push(t);
        r.energies.push(self.state.energy());
        r.friction_dissipation.push(f + inc[0]);
        r.viscous_dissipation.push(v + inc[1]);
        r.work.push(w + inc[2]);
    }
}

fn one_step(u: &VectorField, forcing: &Forcing, t: f64, cfg: SolverConfig) -> Result<VectorField> {
    let mut sim = Simulation::new(u, forcing.clone(), cfg)?;
    sim.t = t;
    sim.step()?;
    Ok(sim.field())
}

/// One RK4 step of du/dt = P(f − (u·∇)u − Ru) from time t.
pub fn step_euler_brinkman(
    u: &VectorField,
    forcing: &Forcing,
    t: f64,
    friction: &ResistanceMatrix,
    dt: f64,
) -> Result<VectorField> {
    let cfg = SolverConfig {
        grid: u.grid,
        dt,
        t_end: dt,
        integrator: Integrator::Rk4,
        friction: *friction,
        viscosity: 0.0,
        brinkman_scale: 1.0,
    };
    one_step(u, forcing, t, cfg)
}

/// One RK4 step of du/dt = P(f − (u·∇)u).
pub fn step_euler(u: &VectorField, forcing: &Forcing, t: f64, dt: f64) -> Result<VectorField> {
    step_euler_brinkman(u, forcing, t, &ResistanceMatrix::diagonal([0.0; 3]), dt)
}

/// One integrating-factor RK4 step of du/dt = P(f − (u·∇)u) + νΔu − λRu.
pub fn step_ns_brinkman(
    u: &VectorField,
    forcing: &Forcing,
    t: f64,
    cfg: &SolverConfig,
) -> Result<VectorField> {
    let mut cfg = cfg.clone();
    cfg.integrator = Integrator::Rk4IntegratingFactor;
    one_step(u, forcing, t, cfg)
}

/// Darcy law Ru + ∇p = f, div u = 0, solved mode by mode. Modes whose
/// derivative wavevector vanishes carry no pressure.
pub fn solve_darcy(
    f: &VectorField,
    friction: &ResistanceMatrix,
) -> Result<(VectorField, ScalarField)> {
    friction
        .validate()
        .map_err(|e| Error::Singular(format!("friction matrix: {e}")))?;
    let rinv = friction
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::Singular("friction matrix is not invertible".into()))?;
    let grid = f.grid;
    let fs = f.spectrum();
    let mut us = VectorSpectrum::zeros(grid);
    let mut ps = vec![Complex64::new(0.0, 0.0); grid.len()];
    let i = Complex64::new(0.0, 1.0);
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let rf = mat_apply(&rinv, fs.at(idx));
        if k.norm_squared() == 0.0 {
            us.set(idx, rf);
            continue;
        }
        let rk = rinv * k;
        let p = -i * (rf[0] * k[0] + rf[1] * k[1] + rf[2] * k[2]) / k.dot(&rk);
        ps[idx] = p;
        us.set(idx, std::array::from_fn(|c| rf[c] - i * rk[c] * p));
    }
    Ok((
        us.to_field(),
        ScalarSpectrum { grid, coeffs: ps }.to_field(),
    ))
}

/// ‖Ru + ∇p − f‖ / ‖f‖ and ‖div u‖ / ‖f‖, both spectral.
pub fn darcy_residual(
    u: &VectorField,
    p: &ScalarField,
    f: &VectorField,
    friction: &ResistanceMatrix,
) -> (f64, f64) {
    let grid = f.grid;
    let (us, ps, fs) = (u.spectrum(), p.spectrum(), f.spectrum());
    let r = friction.matrix();
    let i = Complex64::new(0.0, 1.0);
    let (mut res, mut div, mut fn2) = (0.0, 0.0, 0.0);
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let ru = mat_apply(&r, us.at(idx));
        let fv = fs.at(idx);
        let uv = us.at(idx);
        for c in 0..3 {
            res += (ru[c] + i * k[c] * ps.coeffs[idx] - fv[c]).norm_sqr();
            fn2 += fv[c].norm_sqr();
        }
        div += (uv[0] * k[0] + uv[1] * k[1] + uv[2] * k[2]).norm_sqr();
    }
    let fnorm = fn2.sqrt().max(f64::MIN_POSITIVE);
    (res.sqrt() / fnorm, div.sqrt() / fnorm)
}

/// Velocity snapshots at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<VectorField>,
}

fn supercritical_factor(alpha: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    if alpha + gamma >= 3.0 {
        return Err(Error::Domain(format!(
            "supercritical rescaling needs alpha + gamma < 3, got {}",
            alpha + gamma
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} must lie in (0, 1]"
        )));
    }
    Ok(epsilon.powf(alpha + gamma - 3.0))
}

/// u(t, x) = s û(s t, x) with s = ε^{α+γ−3}: a snapshot of û at time τ
/// becomes a snapshot of u at time τ/s with amplitude multiplied by s.
pub fn rescale_supercritical(
    u_hat: &Trajectory,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<Trajectory> {
    let s = supercritical_factor(alpha, gamma, epsilon)?;
    Ok(Trajectory {
        times: u_hat.times.iter().map(|t| t / s).collect(),
        fields: u_hat.fields.iter().map(|f| f.scaled(s)).collect(),
    })
}

/// Inverse of [`rescale_supercritical`].
pub fn unscale_supercritical(
    u: &Trajectory,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<Trajectory> {
    let s = supercritical_factor(alpha, gamma, epsilon)?;
    Ok(Trajectory {
        times: u.times.iter().map(|t| t * s).collect(),
        fields: u.fields.iter().map(|f| f.scaled(1.0 / s)).collect(),
    })
}

/// Solver coefficients for a regime point: physical (ν, λ) for the critical
/// and subcritical regimes, the standard form of the rescaled system for the
/// supercritical regime. Returns (ν, λ, forcing scale).
pub fn regime_coefficients(params: &RegimeParams, epsilon: f64) -> Result<(f64, f64, f64)> {
    let class = classify(params)?;
    match class.label {
        RegimeLabel::Supercritical => {
            let c = supercritical_coefficients(params, epsilon)?;
            Ok((c.viscosity, c.brinkman_scale, c.forcing_scale))
        }
        RegimeLabel::OutOfScope => Err(Error::OutOfScope(format!(
            "alpha = {}, gamma = {} lies outside every theorem regime",
            params.alpha(),
            params.gamma()
        ))),
        _ => {
            let (nu, lambda) = physical_coefficients(params, epsilon);
            Ok((nu, lambda, 1.0))
        }
    }
}
