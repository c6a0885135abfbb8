use homog_core::limit_solvers::solve_darcy;
use homog_core::regime::{classify, Exponent, RegimeLabel, RegimeParams};
use homog_core::spectral::{
    divergence, gradient, leray_project, PeriodicGrid, ScalarField, VectorField,
};
use homog_core::stokes_exterior::ResistanceMatrix;
use homog_core::verify::rate_regression;
use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(seed: u64, n: usize) -> VectorField {
    let grid = PeriodicGrid::new(n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps =
        std::array::from_fn(|_| (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    VectorField { grid, comps }
}

fn max_diff(a: &VectorField, b: &VectorField) -> f64 {
    (0..3)
        .flat_map(|c| {
            a.comps[c]
                .iter()
                .zip(&b.comps[c])
                .map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max)
}

fn grid_energy(u: &VectorField) -> f64 {
    let h3 = u.grid.spacing().powi(3);
    0.5 * h3 * u.comps.iter().flatten().map(|x| x * x).sum::<f64>()
}

/// Independent point classifier for points away from every boundary line.
fn oracle_label(a: f64, g: f64) -> RegimeLabel {
    if a > 1.5 && a + g > 3.0 && g < a {
        RegimeLabel::Subcritical
    } else if a < 3.0 && a + g < 3.0 && g < 1.5 {
        RegimeLabel::Supercritical
    } else {
        RegimeLabel::OutOfScope
    }
}

fn spd(d: [f64; 3], off: [f64; 3]) -> Matrix3<f64> {
    let l = Matrix3::new(d[0], 0.0, 0.0, off[0], d[1], 0.0, off[1], off[2], d[2]);
    l * l.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_round_trip_recovers_field(seed in any::<u64>(), log_n in 3u32..5) {
        let u = random_field(seed, 1 << log_n);
        let back = u.spectrum().to_field();
        prop_assert!(max_diff(&u, &back) < 1e-12);
    }

    #[test]
    fn spectral_energy_matches_grid_sum(seed in any::<u64>()) {
        let u = random_field(seed, 8);
        let e_grid = grid_energy(&u);
        let e_spec = u.spectrum().energy();
        prop_assert!((e_grid - e_spec).abs() < 1e-12 * e_grid);
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal(seed in any::<u64>()) {
        let u = random_field(seed, 8);
        let p = leray_project(&u);
        let pp = leray_project(&p);
        prop_assert!(max_diff(&p, &pp) < 1e-12);
        let div = divergence(&p);
        prop_assert!(div.values.iter().all(|d| d.abs() < 1e-10));
        prop_assert!(grid_energy(&p) <= grid_energy(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn projection_removes_gradients(seed in any::<u64>()) {
        let grid = PeriodicGrid::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = gradient(&ScalarField { grid, values });
        let p = leray_project(&g);
        prop_assert!(p.comps.iter().flatten().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn darcy_is_linear_and_satisfies_its_equations(
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        d in prop::array::uniform3(0.5..2.0f64),
        off in prop::array::uniform3(-0.4..0.4f64),
    ) {
        let r = ResistanceMatrix::from_matrix(&spd(d, off));
        let (f1, f2) = (random_field(s1, 8), random_field(s2, 8));
        let f = f1.scaled(a).axpy(b, &f2);
        let (u1, _) = solve_darcy(&f1, &r).unwrap();
        let (u2, _) = solve_darcy(&f2, &r).unwrap();
        let (u, p) = solve_darcy(&f, &r).unwrap();
        let combo = u1.scaled(a).axpy(b, &u2);
        let scale = u.max_abs().max(1.0);
        prop_assert!(max_diff(&u, &combo) < 1e-11 * scale);

        let gp = gradient(&p);
        let m = r.matrix();
        let mut res = 0.0f64;
        for idx in 0..f.grid.len() {
            let ru = m * u.at(idx);
            for c in 0..3 {
                res = res.max((ru[c] + gp.comps[c][idx] - f.comps[c][idx]).abs());
            }
        }
        prop_assert!(res < 1e-10 * scale, "momentum residual {}", res);
        let div = divergence(&u);
        prop_assert!(div.values.iter().all(|x| x.abs() < 1e-9 * scale));
    }

    #[test]
    fn regression_recovers_power_laws(
        rate in -1.0..4.0f64,
        c in 0.01..100.0f64,
        e0 in 0.05..0.5f64,
        ratio in 1.3..3.0f64,
        n in 3usize..8,
    ) {
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let e = e0 / ratio.powi(i as i32);
                (e, c * e.powf(rate))
            })
            .collect();
        let (slope, stderr) = rate_regression(&samples).unwrap();
        prop_assert!((slope - rate).abs() < 1e-9);
        prop_assert!(stderr < 1e-9);
    }

    #[test]
    fn classifier_agrees_with_independent_oracle(a in 1.0..5.0f64, g in 0.0..3.0f64) {
        let margin = 1e-3;
        prop_assume!((a + g - 3.0).abs() > margin);
        prop_assume!((a - 1.5).abs() > margin && (a - 3.0).abs() > margin);
        prop_assume!((g - 1.5).abs() > margin && (g - a).abs() > margin);
        prop_assume!(a > 1.0 + margin && g > margin);
        let params = RegimeParams::new(a, g, 1.0).unwrap();
        let class = classify(&params).unwrap();
        prop_assert_eq!(class.label, oracle_label(a, g));
    }

    #[test]
    fn critical_line_is_detected_exactly(num in 31i64..59) {
        // α = num/20 on the open interval (3/2, 3), γ = 3 − α.
        let alpha: Exponent = format!("{num}/20").parse().unwrap();
        let gamma: Exponent = format!("{}/20", 60 - num).parse().unwrap();
        let params = RegimeParams::new(alpha, gamma, 1.0).unwrap();
        prop_assert_eq!(classify(&params).unwrap().label, RegimeLabel::Critical);
    }

    #[test]
    fn fraction_and_float_exponents_agree(p in -50i64..50, q in 1i64..40) {
        let from_str: Exponent = format!("{p}/{q}").parse().unwrap();
        let from_float = Exponent::new(p as f64 / q as f64);
        prop_assert_eq!(from_str.exact(), from_float.exact());
        prop_assert!((from_str.value() - p as f64 / q as f64).abs() < 1e-15);
    }
}
