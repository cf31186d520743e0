use proptest::prelude::*;

use dampwave::charpoly::{backward_error, log_real_roots, residual, roots, CharRoots, DampingParams};
use dampwave::counterexamples::unbounded_schedule;
use dampwave::duhamel::{forced_response, forced_solve, ForcingSpec, ModeForcing};
use dampwave::numeric::{linear_grid, log_grid};
use dampwave::oracle::{integrate_mode, OracleConfig};
use dampwave::probe::{energy_check, fit_growth, GrowthFit, ProbeThresholds};
use dampwave::propagator::{homogeneous_mode, ModeIC};
use dampwave::spectrum::{geometric_spectrum, partition_interleave};

fn params() -> impl Strategy<Value = DampingParams> {
    (0.0..2.0f64, 0.1..3.0f64).prop_map(|(s, d)| DampingParams::new(s, d).unwrap())
}

fn sinusoid() -> impl Strategy<Value = ModeForcing> {
    (-1.0..1.0f64, 0.0..8.0f64, 0.0..6.3f64, 0.0..1.0f64, 1.5..4.0f64).prop_map(|(amplitude, omega, phase, start, end)| {
        ModeForcing::WindowedSinusoid { amplitude, omega, phase, start, end, ramp: 0.1 }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn roots_satisfy_vieta(p in params(), e in 0.0..12.0f64) {
        let lambda = 10f64.powf(e);
        let f = p.half_friction(lambda);
        match roots(&p, lambda) {
            CharRoots::Real { x1, x2 } => {
                prop_assert!(x1 >= x2 && x2 > 0.0);
                prop_assert!(((x1 * x2 - lambda) / lambda).abs() <= 1e-12);
                prop_assert!(((x1 + x2 - 2.0 * f) / (2.0 * f)).abs() <= 1e-12);
            }
            CharRoots::Double { r } => prop_assert!(((r - f) / f).abs() <= 1e-12),
            CharRoots::Oscillatory { a, b } => {
                prop_assert!(((a * a + b * b - lambda) / lambda).abs() <= 1e-12);
                prop_assert!(((a - f) / f).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn real_roots_are_backward_stable(p in params(), e in 0.0..12.0f64) {
        let lambda = 10f64.powf(e);
        if let CharRoots::Real { x1, x2 } = roots(&p, lambda) {
            prop_assert!(backward_error(&p, lambda, x1) <= 1e-15);
            prop_assert!(backward_error(&p, lambda, x2) <= 1e-15);
            // the slow root is also accurate in the absolute sense
            prop_assert!(residual(&p, lambda, x2).abs() <= 1e-9 * lambda.max(1.0));
        }
    }

    #[test]
    fn log_roots_agree_with_direct_roots(p in params(), e in 0.0..8.0f64) {
        let lambda = 10f64.powf(e);
        if let (Some(lr), CharRoots::Real { x1, x2 }) = (log_real_roots(&p, lambda.ln()), roots(&p, lambda)) {
            prop_assert!((lr.ln_x1 - x1.ln()).abs() <= 1e-10);
            prop_assert!((lr.ln_x2 - x2.ln()).abs() <= 1e-8 * x2.ln().abs().max(1.0));
            prop_assert!((lr.ratio() - x2 / x1).abs() <= 1e-9);
        }
    }

    #[test]
    fn semigroup_property(p in params(), lambda in 0.5..200.0f64, u0 in -1.0..1.0f64, u1 in -1.0..1.0f64,
                          s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let r = roots(&p, lambda);
        let ic = ModeIC::new(u0, u1);
        let (a, b) = homogeneous_mode(&r, ic, s + t).unwrap();
        let (mu, mv) = homogeneous_mode(&r, ic, s).unwrap();
        let (c, d) = homogeneous_mode(&r, ModeIC::new(mu, mv), t).unwrap();
        let scale = 1.0 + a.abs() + b.abs();
        prop_assert!((a - c).abs() <= 1e-10 * scale && (b - d).abs() <= 1e-10 * lambda.sqrt() * scale);
    }

    #[test]
    fn growth_fit_recovers_power(exponent in 0.1..2.0f64, c in 0.1..10.0f64) {
        let times = log_grid(1.0, 1e4, 80);
        let norms: Vec<f64> = times.iter().map(|t| c * t.powf(exponent)).collect();
        match fit_growth(&times, &norms, &ProbeThresholds::default()).unwrap() {
            GrowthFit::PowerLaw { exponent: e, .. } => prop_assert!((e - exponent).abs() <= 1e-9),
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn schedule_bounds_lie_in_window(factors in prop::collection::vec(1.1..4.0f64, 40)) {
        let alphas: Vec<f64> = factors.iter().scan(1.0, |a, f| { *a /= f; Some(*a) }).collect();
        let sched = unbounded_schedule(&alphas, 4).unwrap();
        let cap = -(-1.0f64).exp_m1();
        for w in sched.windows(2) {
            prop_assert!(w[1].index > w[0].index && w[1].ln_end > w[0].ln_end);
            prop_assert!((-w[1].ln_rate) >= w[0].ln_end - 1e-12);
        }
        for e in &sched {
            prop_assert!(e.bound <= cap * (1.0 + 1e-12));
            prop_assert!(e.bound >= cap * (-1.0f64).exp() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn forcing_sup_bound_dominates_samples(modes in prop::collection::vec(sinusoid(), 1..6), s in 0.0..5.0f64) {
        let f = ForcingSpec::new(modes, 1.0).unwrap();
        prop_assert!(f.norm_at(s) <= f.sup_bound() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_response_matches_oracle(p in params(), lambda in 0.5..50.0f64, f in sinusoid(),
                                     u0 in -1.0..1.0f64, u1 in -1.0..1.0f64) {
        let grid = linear_grid(0.0, 5.0, 41);
        let ic = ModeIC::new(u0, u1);
        let exact = forced_response(&roots(&p, lambda), &f, ic, &grid).unwrap();
        let o = integrate_mode(&p, lambda, &f, ic, &grid, &OracleConfig::default()).unwrap();
        for i in 0..grid.len() {
            prop_assert!((exact.u[i] - o.trajectory.u[i]).abs() <= 1e-7);
            prop_assert!((exact.uprime[i] - o.trajectory.uprime[i]).abs() <= 1e-7);
        }
    }

    #[test]
    fn energy_inequality_holds(p in params(), modes in prop::collection::vec(sinusoid(), 8)) {
        let m = geometric_spectrum(8, 2.0, 1.0).unwrap();
        let f = ForcingSpec::new(modes, 1.0).unwrap();
        let mut grid = vec![0.0];
        grid.extend(log_grid(1e-8, 1e-2, 200));
        grid.extend(linear_grid(1e-2, 4.0, 800).into_iter().skip(1));
        let tr = forced_solve(&m, &p, &f, &grid).unwrap();
        let led = energy_check(&tr, &m, &f, &p).unwrap();
        for (i, (mg, src)) in led.margin.iter().zip(&led.source_integral).enumerate() {
            prop_assert!(*mg >= -1e-9 * src - led.quadrature_error, "t={} margin={mg:e} src={src:e} q={:e}", grid[i], led.quadrature_error);
        }
    }

    #[test]
    fn modes_evolve_independently(p in params(), modes in prop::collection::vec(sinusoid(), 12)) {
        let m = geometric_spectrum(12, 2.0, 1.0).unwrap();
        let grid = linear_grid(0.0, 3.0, 31);
        let full = forced_solve(&m, &p, &ForcingSpec::new(modes.clone(), 1.0).unwrap(), &grid).unwrap();
        let part = &partition_interleave(12, 3).unwrap()[1];
        let sub = m.restrict(part).unwrap();
        let fs = ForcingSpec::new(part.iter().map(|&k| modes[k].clone()).collect(), 1.0).unwrap();
        let restricted = forced_solve(&sub, &p, &fs, &grid).unwrap();
        for (j, &k) in part.iter().enumerate() {
            prop_assert_eq!(&full.modes[k].u, &restricted.modes[j].u);
            prop_assert_eq!(&full.modes[k].uprime, &restricted.modes[j].uprime);
        }
    }
}
