//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use homog_core::corrector::{bogovskii, build_corrector, eval_corrector, surface_average_identity};
use homog_core::fields::{KinkField, SampleField, TrigField};
use homog_core::geometry::{HarmonicCoeff, ReferenceParticle, Region};
use homog_core::limit_solvers::{
    darcy_residual, solve_darcy, Forcing, Integrator, Simulation, SolverConfig,
};
use homog_core::regime::{
    classify, predicted_rate, regime_diagram, Exponent, LimitSystem, RegimeLabel, RegimeParams,
};
use homog_core::spectral::{PeriodicGrid, VectorField};
use homog_core::stokes_exterior::{
    resistance, resistance_from_traction, solve_exterior, ResistanceMatrix,
};
use homog_core::verify::{
    study_corrector_rates, study_hardy, study_limit_convergence, study_m_convergence,
    study_poincare, LimitStudyConfig, DEFAULT_LADDER, LIMIT_LADDER,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn matrix_rel(r: &ResistanceMatrix, expect: f64) -> f64 {
    (r.matrix() - Matrix3::identity() * expect).abs().max() / expect
}

fn sphere_cell() -> homog_core::stokes_exterior::CellSolution {
    solve_exterior(&ReferenceParticle::default(), 1).unwrap()
}

fn phi_smooth() -> TrigField {
    TrigField::constant([1.0, 0.0, 0.0])
        .plus(&TrigField::parse("0,0.5,0@1,0,0@0.3;0,0,0.25@0,2,1").unwrap())
}

fn c1_resistance() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for r0 in [0.125, 0.05, 0.2] {
        let cell = solve_exterior(&ReferenceParticle::sphere(r0).unwrap(), 1).unwrap();
        let dirichlet = resistance(&cell);
        let traction = resistance_from_traction(&cell, 2.0 * r0, 24).unwrap();
        // R(r0) = r0 R(1) with R(1) = 6π Id.
        worst = worst
            .max(matrix_rel(&dirichlet, 6.0 * PI * r0))
            .max(matrix_rel(&traction, 6.0 * PI * r0));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 1.0,
        format!("max relative deviation from r0*6pi*Id {worst:.2e} over r0 in {{1/8, 0.05, 0.2}}; {secs:.3} s"),
    )
}

fn c2_boundary() -> Outcome {
    let sphere = sphere_cell().residual;
    let p = ReferenceParticle::harmonic(
        0.125,
        vec![HarmonicCoeff {
            l: 2,
            m: 0,
            value: 0.05,
        }],
    )
    .unwrap();
    let harm = solve_exterior(&p, 6).unwrap().residual;
    let s = sphere.max_boundary_residual.max(sphere.validation_residual);
    let h = harm.max_boundary_residual.max(harm.validation_residual);
    outcome(
        s <= 1e-8 && h <= 1e-4,
        format!("sphere {s:.2e} (<= 1e-8), harmonic degree 6 {h:.2e} (<= 1e-4)"),
    )
}

fn c3_corrector_structure() -> Outcome {
    let cell = sphere_cell();
    let (mut trace, mut cont, mut k_exact, mut k_count) = (0.0f64, 0.0f64, true, 0);
    for &eps in &DEFAULT_LADDER {
        let w = build_corrector(&cell, eps, 2.0, 1.0).unwrap();
        trace = trace.max(w.trace_residual(200));
        cont = cont.max(w.continuity.max());
        for i in 0..400 {
            let t = i as f64 / 400.0;
            let x = Vector3::new(
                (7.31 * t).fract(),
                (3.17 * t + 0.21).fract(),
                (5.53 * t + 0.47).fract(),
            );
            let e = eval_corrector(&w, &x);
            if e.region == Region::K {
                k_count += 1;
                k_exact &= e.w == Matrix3::identity()
                    && e.pressure == Vector3::zeros()
                    && e.gradient.iter().all(|g| *g == Matrix3::zeros());
            }
        }
    }
    outcome(
        trace <= 1e-8 && cont <= 1e-10 && k_exact && k_count > 0,
        format!("trace {trace:.2e} (<= 1e-8), C/D continuity {cont:.2e} (<= 1e-10), K identity exact at {k_count} points: {k_exact}"),
    )
}

fn c4_l2_rate() -> Outcome {
    let start = Instant::now();
    let r = study_corrector_rates(
        &sphere_cell(),
        2.0,
        1.0,
        2.0,
        &DEFAULT_LADDER,
        &phi_smooth(),
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (r.fitted - 1.0).abs() <= 0.1 && secs < 60.0,
        format!(
            "fitted {:.4} +- {:.4} (target 1.0 +- 0.1); {secs:.1} s",
            r.fitted, r.stderr
        ),
    )
}

fn cutoff_sample(base: TrigField) -> SampleField {
    SampleField::Cutoff {
        base,
        inner: 0.125,
        outer: 0.25,
    }
}

fn c5_hardy() -> Outcome {
    let r = study_hardy(
        &sphere_cell(),
        2.0,
        1.0,
        &DEFAULT_LADDER,
        &cutoff_sample(phi_smooth()),
    )
    .unwrap();
    let v: Vec<f64> = r.samples.iter().map(|s| s.error).collect();
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[sorted.len() - 1];
    let median = sorted[sorted.len() / 2];
    outcome(
        max <= 2.0 * median,
        format!("ratios {v:.4?}; max {max:.4} <= 2 x median {median:.4}"),
    )
}

fn c6_brinkman() -> Outcome {
    let start = Instant::now();
    let cell = sphere_cell();
    let mut identity: f64 = 0.0;
    for r in [
        resistance(&cell),
        ResistanceMatrix::diagonal([1.0, 2.0, 3.0]),
        ResistanceMatrix::from_matrix(&Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0)),
    ] {
        identity = identity.max(surface_average_identity(&r, 8));
    }
    let (alpha, beta) = (2.0, 1.0);
    let report = study_m_convergence(
        &cell,
        alpha,
        beta,
        &DEFAULT_LADDER,
        &TrigField::constant([1.0, 0.0, 0.0]),
        &KinkField {
            direction: Vector3::x(),
        },
    )
    .unwrap();
    let bound = (alpha - beta).min((3.0 - beta) / 2.0) - 0.15;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        identity <= 1e-12 && report.fitted >= bound && secs < 120.0,
        format!(
            "surface-average identity {identity:.2e} (<= 1e-12); exponent {:.4} >= {bound:.2}; {secs:.1} s",
            report.fitted
        ),
    )
}

fn c7_bogovskii() -> Outcome {
    let cell = sphere_cell();
    let phi = TrigField::parse("0,0.5,0@1,0,0@0.3;0,0,0.25@1,2,0;0.3,0,0@0,1,1@0.7").unwrap();
    let (mut comp, mut div, mut ratio_ok) = (0.0f64, 0.0f64, true);
    let mut worst_ratio: f64 = 0.0;
    for &eps in &DEFAULT_LADDER {
        let w = build_corrector(&cell, eps, 2.0, 1.0).unwrap();
        let b = bogovskii(&w, &phi).unwrap().report;
        comp = comp.max(b.max_compatibility);
        div = div.max(b.div_residual);
        let ratio = b.l2_norm / (b.eta * b.grad_norm);
        worst_ratio = worst_ratio.max(ratio);
        ratio_ok &= ratio <= 2.0;
    }
    outcome(
        comp <= 1e-8 && div <= 1e-6 && ratio_ok,
        format!("compatibility {comp:.2e} (<= 1e-8), divergence residual {div:.2e} (<= 1e-6), max |B|/(eta |grad B|) {worst_ratio:.3} (<= 2)"),
    )
}

fn c8_poincare() -> Outcome {
    let cell = sphere_cell();
    let samples = [
        cutoff_sample(phi_smooth()),
        cutoff_sample(TrigField::constant([1.0, 0.0, 0.0])),
    ];
    let r = study_poincare(&cell.particle, 2.0, &DEFAULT_LADDER, &samples).unwrap();
    outcome(
        r.fitted >= 0.4,
        format!("fitted {:.4} >= (3-alpha)/2 - 0.1 = 0.4", r.fitted),
    )
}

fn shear_run(integrator: Integrator, nu: f64, lambda: f64, r: f64) -> (f64, f64, f64) {
    let grid = PeriodicGrid::new(32).unwrap();
    let shear = VectorField::from_trig(grid, &TrigField::shear(1.0));
    let cfg = SolverConfig {
        grid,
        dt: 1e-3,
        t_end: 1.0,
        integrator,
        friction: ResistanceMatrix::isotropic(r),
        viscosity: nu,
        brinkman_scale: lambda,
    };
    let start = Instant::now();
    let mut sim = Simulation::new(&shear, Forcing::zero(), cfg).unwrap();
    sim.run(|_, _| {}).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let decay = (-(4.0 * PI * PI * nu + lambda * r) * sim.time()).exp();
    (sim.field().axpy(-decay, &shear).max_abs(), sim.time(), secs)
}

fn c9_shear() -> Outcome {
    let r = 0.75 * PI;
    let (eb, t1, s1) = shear_run(Integrator::Rk4, 0.0, 1.0, r);
    let (ns, t2, s2) = shear_run(Integrator::Rk4IntegratingFactor, 0.05, 2.0, r);
    outcome(
        eb <= 1e-8 && ns <= 1e-10 && (t1 - 1.0).abs() < 1e-12 && (t2 - 1.0).abs() < 1e-12 && s1 < 10.0 && s2 < 10.0,
        format!("Euler-Brinkman {eb:.2e} (<= 1e-8, {s1:.2} s), NS-Brinkman {ns:.2e} (<= 1e-10, {s2:.2} s)"),
    )
}

fn c10_energy() -> Outcome {
    let grid = PeriodicGrid::new(64).unwrap();
    let u0 = VectorField::from_trig(grid, &TrigField::random_solenoidal(7, 3, 24));
    let cfg = SolverConfig {
        grid,
        dt: 1e-3,
        t_end: 0.1,
        integrator: Integrator::Rk4,
        friction: ResistanceMatrix::diagonal([0.0; 3]),
        viscosity: 0.0,
        brinkman_scale: 0.0,
    };
    let start = Instant::now();
    let mut sim = Simulation::new(&u0, Forcing::zero(), cfg).unwrap();
    sim.run(|_, _| {}).unwrap();
    let rep = sim.report();
    let e0 = rep.energies[0];
    let t = sim.time();
    let drift = rep
        .energies
        .iter()
        .map(|e| (e - e0).abs())
        .fold(0.0, f64::max)
        / e0
        / t;
    let balance = rep
        .balance_residual()
        .iter()
        .map(|b| b.abs())
        .fold(0.0, f64::max)
        / e0
        / t;
    outcome(
        drift <= 1e-8 && balance <= 1e-8,
        format!(
            "relative drift {drift:.2e}/time, energy-identity residual {balance:.2e}/time (<= 1e-8) over t = {t:.3}; {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn c11_darcy() -> Outcome {
    let grid = PeriodicGrid::new(16).unwrap();
    let r = ResistanceMatrix::diagonal([1.0, 2.0, 3.0]);
    let f = VectorField::from_fn(grid, |x| Vector3::new(0.0, (TAU * x.x).sin(), 0.0)).axpy(
        1.0,
        &VectorField::from_trig(
            grid,
            &TrigField::parse("1,-0.5,0.2@1,2,-1@0.4;0,0,1@0,1,0").unwrap(),
        ),
    );
    let (u, p) = solve_darcy(&f, &r).unwrap();
    let (res, div) = darcy_residual(&u, &p, &f, &r);
    let (us, ps, fs) = (u.spectrum(), p.spectrum(), f.spectrum());
    let i = Complex64::new(0.0, 1.0);
    let mut oracle: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for idx in 0..grid.len() {
        let k = grid.wavevector(idx);
        let fv = fs.at(idx);
        scale = scale.max(fv.iter().map(|c| c.norm()).fold(0.0, f64::max));
        if k.norm_squared() == 0.0 {
            continue;
        }
        let mut m = Matrix4::<Complex64>::zeros();
        for a in 0..3 {
            for b in 0..3 {
                m[(a, b)] = Complex64::new(r.entries[a][b], 0.0);
            }
            m[(a, 3)] = i * k[a];
            m[(3, a)] = i * k[a];
        }
        let sol = m
            .lu()
            .solve(&Vector4::new(fv[0], fv[1], fv[2], Complex64::new(0.0, 0.0)))
            .unwrap();
        let uv = us.at(idx);
        for c in 0..3 {
            oracle = oracle.max((sol[c] - uv[c]).norm());
        }
        oracle = oracle.max((sol[3] - ps.coeffs[idx]).norm());
    }
    let oracle = oracle / scale;
    outcome(
        res <= 1e-12 && div <= 1e-12 && oracle <= 1e-12,
        format!("residual {res:.2e}, divergence {div:.2e} (<= 1e-12 |f|), saddle-oracle deviation {oracle:.2e}"),
    )
}

fn c12_limits() -> Outcome {
    let start = Instant::now();
    let cfg = LimitStudyConfig::default();
    let run = |a: Exponent, g: Exponent, ladder: &[f64]| {
        study_limit_convergence(&RegimeParams::new(a, g, 1.0).unwrap(), ladder, &cfg).unwrap()
    };
    let eb = run(2.0.into(), 1.0.into(), &LIMIT_LADDER);
    let eu = run(3.0.into(), 1.0.into(), &LIMIT_LADDER);
    let sc = run(2.0.into(), "1/2".parse().unwrap(), &DEFAULT_LADDER);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (eb.fitted - 1.0).abs() <= 0.1 && (eu.fitted - 1.0).abs() <= 0.1 && (sc.fitted - sc.predicted).abs() <= 0.1 && secs < 300.0,
        format!(
            "surrogate exponents: Euler-Brinkman {:.4}, Euler {:.4} (1.0 +- 0.1); supercritical {:.4} vs closed form {:.4} (+- 0.1); {secs:.1} s",
            eb.fitted, eu.fitted, sc.fitted, sc.predicted
        ),
    )
}

/// Exact predicate on nodes α = A/200, γ = G/200.
fn oracle(a: i64, g: i64) -> (RegimeLabel, LimitSystem) {
    if a + g == 600 && a > 300 && a < 600 {
        (RegimeLabel::Critical, LimitSystem::EulerBrinkman)
    } else if a > 300 && g > 600 - a && g <= a {
        if g == a {
            (
                RegimeLabel::SubcriticalNeedsLargeViscosity,
                LimitSystem::Euler,
            )
        } else {
            (RegimeLabel::Subcritical, LimitSystem::Euler)
        }
    } else if a > 200 && a < 600 && g > 0 && g < 300.min(600 - a) {
        (RegimeLabel::Supercritical, LimitSystem::Darcy)
    } else {
        (RegimeLabel::OutOfScope, LimitSystem::None)
    }
}

fn c13_regimes() -> Outcome {
    let nodes = regime_diagram(
        ("1".parse().unwrap(), "4".parse().unwrap()),
        ("0".parse().unwrap(), "3".parse().unwrap()),
        200,
        200,
    )
    .unwrap();
    let mut mismatches = 0;
    for (idx, node) in nodes.iter().enumerate() {
        let (i, j) = ((idx / 200) as i64, (idx % 200) as i64);
        let (label, limit) = oracle(200 + 3 * (i + 1), 3 * (j + 1));
        if node.class.label != label || node.class.limit_system != limit {
            mismatches += 1;
        }
    }
    let rate = |a: Exponent, g: Exponent| {
        predicted_rate(&RegimeParams::new(a, g, 1.0).unwrap())
            .unwrap()
            .exponent
    };
    let rates = [
        rate(2.0.into(), 1.0.into()),
        rate(3.0.into(), 1.0.into()),
        rate(2.0.into(), "1/2".parse().unwrap()),
    ];
    let labels_ok = classify(&RegimeParams::new(2.0, 1.0, 1.0).unwrap())
        .unwrap()
        .label
        == RegimeLabel::Critical;
    outcome(
        nodes.len() == 40_000 && mismatches == 0 && rates == [1.0, 2.0, 1.0] && labels_ok,
        format!(
            "{} nodes, {mismatches} mismatches; predicted rates {rates:?} (exactly [1, 2, 1])",
            nodes.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 13] = [
        ("resistance oracle", c1_resistance),
        ("cell-problem boundary fidelity", c2_boundary),
        ("corrector structure", c3_corrector_structure),
        ("corrector L2 rate", c4_l2_rate),
        ("Hardy-pair boundedness", c5_hardy),
        ("Brinkman density", c6_brinkman),
        ("Bogovskii operator", c7_bogovskii),
        ("Poincare scaling", c8_poincare),
        ("shear closed forms", c9_shear),
        ("Euler energy conservation", c10_energy),
        ("Darcy residual", c11_darcy),
        ("limit-convergence surrogate", c12_limits),
        ("regime classifier", c13_regimes),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let o = check();
        println!(
            "criterion {:2} {}: {} - {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
