use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use homog_core::config::{ConfigText, Section};
use homog_core::fields::{KinkField, SampleField, TestField, TrigField};
use homog_core::geometry::ReferenceParticle;
use homog_core::limit_solvers::{
    darcy_residual, physical_coefficients, solve_darcy, Forcing, Integrator, Simulation,
    SolverConfig,
};
use homog_core::regime::{
    classify, diagram_csv, regime_diagram, Exponent, RegimeLabel, RegimeParams,
};
use homog_core::spectral::{PeriodicGrid, VectorField};
use homog_core::stokes_exterior::{
    resistance, resistance_from_stokeslet, resistance_from_traction, solve_exterior, CellSolution,
    ResistanceMatrix,
};
use homog_core::verify::{self, LimitStudyConfig, StudyReport, DEFAULT_LADDER, LIMIT_LADDER};
use homog_core::{Error, Result};
use serde_json::json;

use crate::options::{Cli, Command, Globals, Study, System};

pub enum Outcome {
    Pass,
    VerdictFailed(Vec<String>),
}

const SECTIONS: [&str; 5] = ["particle", "regime", "regimes", "solve", "study"];

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let text = match &cli.globals.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = ConfigText::parse(&text)?;
    let g = &cli.globals;
    let outcome = match cli.command {
        Command::Resistance => cmd_resistance(&mut cfg, g)?,
        Command::Regimes => cmd_regimes(&mut cfg, g)?,
        Command::Solve { system } => cmd_solve(&mut cfg, g, system)?,
        Command::Study { study } => cmd_study(&mut cfg, g, study)?,
    };
    // Sections belonging to other commands may share the file.
    for name in SECTIONS {
        cfg.take_section(name);
    }
    cfg.take_section("").finish()?;
    cfg.finish()?;
    Ok(outcome)
}

fn pick<T: FromStr>(flag: Option<T>, section: &mut Section, key: &str, default: T) -> Result<T> {
    let from_cfg = section.take_parsed::<T>(key)?;
    Ok(flag.or(from_cfg).unwrap_or(default))
}

fn pick_exponent(
    flag: &Option<String>,
    section: &mut Section,
    key: &str,
    default: &str,
) -> Result<Exponent> {
    let from_cfg = section.take(key);
    let text = flag
        .clone()
        .or(from_cfg)
        .unwrap_or_else(|| default.to_string());
    text.parse::<Exponent>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{text}`")))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut s = std::io::stdout().lock();
            match s.write_all(text.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn particle_and_cell(cfg: &mut ConfigText) -> Result<(CellSolution, usize)> {
    let mut sec = cfg.take_section("particle");
    let order = sec.take_parsed::<usize>("order")?;
    let particle = ReferenceParticle::from_config(&mut sec)?;
    sec.finish()?;
    let order = order.unwrap_or(if particle.is_sphere() { 1 } else { 6 });
    Ok((solve_exterior(&particle, order)?, order))
}

fn cmd_resistance(cfg: &mut ConfigText, g: &Globals) -> Result<Outcome> {
    let (cell, order) = particle_and_cell(cfg)?;
    let r = resistance(&cell);
    r.validate()?;
    let traction = resistance_from_traction(&cell, 2.0 * cell.particle.outer_radius(), 24)?;
    let stokeslet = resistance_from_stokeslet(&cell);
    let report = json!({
        "particle": cell.particle,
        "order": order,
        "resistance": r.entries,
        "resistance_traction": traction.entries,
        "resistance_stokeslet": stokeslet.entries,
        "eigenvalues": r.eigenvalues().as_slice(),
        "symmetry_defect": r.symmetry_defect(),
        "residual": cell.residual,
    });
    emit(
        &g.out,
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;
    Ok(Outcome::Pass)
}

fn cmd_regimes(cfg: &mut ConfigText, g: &Globals) -> Result<Outcome> {
    let mut sec = cfg.take_section("regimes");
    let a0 = pick_exponent(&None, &mut sec, "alpha_min", "1")?;
    let a1 = pick_exponent(&None, &mut sec, "alpha_max", "4")?;
    let g0 = pick_exponent(&None, &mut sec, "gamma_min", "0")?;
    let g1 = pick_exponent(&None, &mut sec, "gamma_max", "3")?;
    let na = pick(None, &mut sec, "n_alpha", 200usize)?;
    let ng = pick(None, &mut sec, "n_gamma", 200usize)?;
    sec.finish()?;
    let nodes = regime_diagram((a0, a1), (g0, g1), na, ng)?;
    emit(&g.out, &diagram_csv(&nodes))?;
    Ok(Outcome::Pass)
}

/// `cell` (resistance of the configured particle), `r`, `r1,r2,r3`, or
/// nine row-major entries.
fn friction(spec: &str, cfg: &mut ConfigText) -> Result<ResistanceMatrix> {
    if spec == "cell" {
        let (cell, _) = particle_and_cell(cfg)?;
        return Ok(resistance(&cell));
    }
    let vals: Vec<f64> = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("friction: cannot parse `{spec}`")))?;
    let r = match vals.as_slice() {
        [r] => ResistanceMatrix::isotropic(*r),
        [a, b, c] => ResistanceMatrix::diagonal([*a, *b, *c]),
        v if v.len() == 9 => ResistanceMatrix::from_matrix(&Matrix3::from_row_slice(v)),
        _ => {
            return Err(Error::Config(format!(
                "friction: expected 1, 3 or 9 values, got `{spec}`"
            )))
        }
    };
    Ok(r)
}

fn regime_params(
    sec: &mut Section,
    g: &Globals,
    need_epsilon: bool,
) -> Result<(RegimeParams, Option<f64>)> {
    let alpha = pick_exponent(&g.alpha, sec, "alpha", "2")?;
    let gamma = pick_exponent(&g.gamma, sec, "gamma", "1")?;
    let mu0 = pick(g.mu0, sec, "mu0", 1.0)?;
    let eps_cfg = sec.take_parsed::<f64>("epsilon")?;
    let epsilon = g.epsilon.or(eps_cfg);
    let mut params = RegimeParams::new(alpha, gamma, mu0)?;
    if let Some(e) = epsilon {
        params = params.with_epsilon(e)?;
    } else if need_epsilon {
        return Err(Error::Config(
            "epsilon is required (`--epsilon` or [regime] epsilon)".into(),
        ));
    }
    Ok((params, epsilon))
}

fn write_snapshot(dir: &Path, step: usize, u: &VectorField) -> Result<()> {
    let f = fs::File::create(dir.join(format!("snapshot_{step:06}.phfld")))?;
    u.write_snapshot(std::io::BufWriter::new(f))
}

fn cmd_solve(cfg: &mut ConfigText, g: &Globals, system: System) -> Result<Outcome> {
    let mut reg = cfg.take_section("regime");
    let mut sec = cfg.take_section("solve");
    let n = pick(g.grid, &mut sec, "grid", 32usize)?;
    let dt = pick(g.dt, &mut sec, "dt", 1e-3)?;
    let t_end = pick(g.t_end, &mut sec, "t_end", 1.0)?;
    let initial = TrigField::parse(&sec.take("initial").unwrap_or_else(|| "shear".into()))?;
    let forcing_field = TrigField::parse(&sec.take("forcing").unwrap_or_else(|| "zero".into()))?;
    let omega = pick(None, &mut sec, "forcing_omega", 0.0)?;
    let every = pick(None, &mut sec, "snapshot_every", 0usize)?;
    let friction_spec = sec.take("friction").unwrap_or_else(|| "cell".into());
    sec.finish()?;
    let grid = PeriodicGrid::new(n)?;

    let (params, _) = regime_params(&mut reg, g, system == System::NsBrinkman)?;
    reg.take("beta");
    reg.finish()?;
    let r = if system == System::Euler {
        ResistanceMatrix::diagonal([0.0; 3])
    } else {
        friction(&friction_spec, cfg)?
    };
    if let Some(dir) = &g.snapshots {
        fs::create_dir_all(dir)?;
    }

    if system == System::Darcy {
        let f = VectorField::from_trig(grid, &forcing_field);
        let (u, p) = solve_darcy(&f, &r)?;
        let (res, div) = darcy_residual(&u, &p, &f, &r);
        if let Some(dir) = &g.snapshots {
            write_snapshot(dir, 0, &u)?;
        }
        let report = json!({
            "system": "darcy",
            "grid": n,
            "friction": r.entries,
            "residual": res,
            "divergence": div,
            "energy": homog_core::spectral::energy(&u),
        });
        emit(
            &g.out,
            &format!("{}\n", serde_json::to_string_pretty(&report)?),
        )?;
        return Ok(Outcome::Pass);
    }

    let (integrator, nu, lambda) = match system {
        System::Euler => (Integrator::Rk4, 0.0, 0.0),
        System::EulerBrinkman => (Integrator::Rk4, 0.0, params.mu0),
        _ => {
            let eps = params.epsilon.unwrap_or_default();
            let class = classify(&params)?;
            if class.label == RegimeLabel::OutOfScope {
                eprintln!("warning: (alpha, gamma) lies outside every theorem regime");
            }
            let (nu, lambda) = physical_coefficients(&params, eps);
            eprintln!("regime {}: nu = {nu:e}, lambda = {lambda:e}", class.label);
            (Integrator::Rk4IntegratingFactor, nu, lambda)
        }
    };
    let solver = SolverConfig {
        grid,
        dt,
        t_end,
        integrator,
        friction: r,
        viscosity: nu,
        brinkman_scale: lambda,
    };
    let u0 = VectorField::from_trig(grid, &initial);
    let mut sim = Simulation::new(
        &u0,
        Forcing {
            field: forcing_field,
            omega,
        },
        solver,
    )?;
    let steps = sim.config().n_steps();
    if let Some(dir) = &g.snapshots {
        write_snapshot(dir, 0, &sim.field())?;
    }
    for step in 1..=steps {
        sim.step()?;
        if let Some(dir) = &g.snapshots {
            if step == steps || (every > 0 && step % every == 0) {
                write_snapshot(dir, step, &sim.field())?;
            }
        }
    }
    eprintln!(
        "relative energy-balance drift per unit time: {:e}",
        sim.report().relative_drift_rate()
    );
    emit(&g.out, &sim.report().to_csv())?;
    Ok(Outcome::Pass)
}

fn ladder(sec: &mut Section, default: &[f64]) -> Result<Vec<f64>> {
    match sec.take("ladder") {
        None => Ok(default.to_vec()),
        Some(text) => text
            .split(',')
            .map(|v| {
                let v = v.trim();
                match v.split_once('/') {
                    Some((a, b)) => Ok(a.trim().parse::<f64>()? / b.trim().parse::<f64>()?),
                    None => v.parse::<f64>(),
                }
            })
            .collect::<std::result::Result<Vec<f64>, std::num::ParseFloatError>>()
            .map_err(|_| Error::Config(format!("ladder: cannot parse `{text}`"))),
    }
}

fn default_phi() -> TrigField {
    TrigField::constant([1.0, 0.0, 0.0])
        .plus(&TrigField::parse("0,0.5,0@1,0,0@0.3;0,0,0.25@0,2,1").expect("valid literal"))
}

fn sample_field(
    sec: &mut Section,
    particle: &ReferenceParticle,
    phi: TrigField,
) -> Result<SampleField> {
    let inner = pick(None, sec, "cutoff_inner", particle.outer_radius())?;
    let outer = pick(None, sec, "cutoff_outer", 2.0 * particle.outer_radius())?;
    if !(outer > inner) {
        return Err(Error::Config(
            "cutoff_outer must exceed cutoff_inner".into(),
        ));
    }
    Ok(SampleField::Cutoff {
        base: phi,
        inner,
        outer,
    })
}

fn cmd_study(cfg: &mut ConfigText, g: &Globals, study: Study) -> Result<Outcome> {
    let mut reg = cfg.take_section("regime");
    let mut sec = cfg.take_section("study");
    let (params, _) = regime_params(&mut reg, g, false)?;
    let beta = pick(g.beta, &mut reg, "beta", 1.0)?;
    reg.finish()?;
    let alpha = params.alpha();
    let phi = match sec.take("phi") {
        Some(s) => TrigField::parse(&s)?,
        None => default_phi(),
    };
    let report: StudyReport = match study {
        Study::Limits => {
            let class = classify(&params)?;
            let default = if class.label == RegimeLabel::Supercritical {
                &DEFAULT_LADDER
            } else {
                &LIMIT_LADDER
            };
            let eps = ladder(&mut sec, default)?;
            let mut lc = LimitStudyConfig {
                grid: pick(g.grid, &mut sec, "grid", 8usize)?,
                dt: pick(g.dt, &mut sec, "dt", 1e-3)?,
                t_end: pick(g.t_end, &mut sec, "t_end", 1.0)?,
                ..Default::default()
            };
            if let Some(s) = sec.take("initial") {
                lc.initial = TrigField::parse(&s)?;
            }
            if let Some(s) = sec.take("forcing") {
                lc.forcing = TrigField::parse(&s)?;
            }
            let spec = sec.take("friction").unwrap_or_else(|| "cell".into());
            sec.finish()?;
            lc.friction = friction(&spec, cfg)?;
            verify::study_limit_convergence(&params, &eps, &lc)?
        }
        _ => {
            let eps = ladder(&mut sec, &DEFAULT_LADDER)?;
            let p = pick(None, &mut sec, "p", 2.0)?;
            let psi = sec.take("psi").unwrap_or_else(|| "kink".into());
            let (cell, _) = particle_and_cell(cfg)?;
            let sample = sample_field(&mut sec, &cell.particle, phi.clone())?;
            sec.finish()?;
            match study {
                Study::Corrector => {
                    verify::study_corrector_rates(&cell, alpha, beta, p, &eps, &phi)?
                }
                Study::MEps => {
                    let trig;
                    let kink = KinkField {
                        direction: Vector3::x(),
                    };
                    let psi: &dyn TestField = if psi == "kink" {
                        &kink
                    } else {
                        trig = TrigField::parse(&psi)?;
                        &trig
                    };
                    let phi_m = if phi == default_phi() {
                        TrigField::constant([1.0, 0.0, 0.0])
                    } else {
                        phi.clone()
                    };
                    verify::study_m_convergence(&cell, alpha, beta, &eps, &phi_m, psi)?
                }
                Study::Poincare => {
                    let SampleField::Cutoff { inner, outer, .. } = sample else {
                        unreachable!("sample_field always builds a cutoff field")
                    };
                    let constant = SampleField::Cutoff {
                        base: TrigField::constant([1.0, 0.0, 0.0]),
                        inner,
                        outer,
                    };
                    verify::study_poincare(&cell.particle, alpha, &eps, &[sample, constant])?
                }
                Study::Hardy => verify::study_hardy(&cell, alpha, beta, &eps, &sample)?,
                Study::Limits => unreachable!(),
            }
        }
    };
    let json = report.to_json()?;
    match &g.out {
        Some(path) => {
            fs::write(path, format!("{json}\n"))?;
            fs::write(path.with_extension("csv"), report.to_csv())?;
        }
        None => println!("{json}"),
    }
    if report.pass {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::VerdictFailed(vec![report.study.clone()]))
    }
}
