use std::f64::consts::PI;

use approx::assert_relative_eq;
use she_moments::asymptotics::{phase_classify, theta, Verdict};
use she_moments::moments::{compute_h_family, ln_h_closed_form, HOptions};
use she_moments::sim::{simulate, Rho, SimConfig, Target};
use she_moments::special::erfc;
use she_moments::spectral::{h1_limit, iff2_integral, upsilon, upsilon_zero, Limit};
use she_moments::{CorrelationKernel, HeatParams, InitialMeasure, TimeGrid};

// In d = 3 the Brownian Green function is 1/(2πν|x|), so
// Υ(0) = (ν/2)∫k = (1/4π)∫ f(x)|x|^{-1} dx.
#[test]
fn upsilon_zero_matches_green_function_in_d3() {
    let p = HeatParams::new(1.0, 3).unwrap();
    let cases = [
        (CorrelationKernel::ou(1.0, 1.0, 3).unwrap(), 1.0),
        (CorrelationKernel::ou(1.0, 2.0, 3).unwrap(), 0.25),
        (CorrelationKernel::ou(2.0, 1.0, 3).unwrap(), 0.5),
        (CorrelationKernel::poisson(3).unwrap(), 0.5),
    ];
    for (k, want) in cases {
        let u0 = upsilon_zero(&k, &p).unwrap().value().unwrap();
        assert_relative_eq!(u0, want, max_relative = 1e-6);
        let iff2 = iff2_integral(&k).unwrap().value().unwrap();
        assert_relative_eq!(iff2 / (4.0 * PI), want, max_relative = 1e-6);
    }
}

#[test]
fn upsilon_zero_does_not_depend_on_nu_in_d3() {
    let k = CorrelationKernel::cauchy(3).unwrap();
    let a = upsilon_zero(&k, &HeatParams::new(0.5, 3).unwrap())
        .unwrap()
        .value()
        .unwrap();
    let b = upsilon_zero(&k, &HeatParams::new(2.0, 3).unwrap())
        .unwrap()
        .value()
        .unwrap();
    assert_relative_eq!(a, b, max_relative = 1e-6);
}

#[test]
fn h1_limit_is_two_over_nu_times_upsilon_zero() {
    let p = HeatParams::new(0.7, 3).unwrap();
    let k = CorrelationKernel::ou(1.0, 1.0, 3).unwrap();
    let h = h1_limit(&k, &p).unwrap().value().unwrap();
    assert_relative_eq!(h, 2.0 / 0.7, max_relative = 1e-6);
}

#[test]
fn ou_gaussian_upsilon_by_hand() {
    // k(t) = (1 + 2cνt)^{-3/2}; (ν/2)∫ e^{-νβt/2} k dt in closed form
    let (nu, c, beta) = (1.3, 0.8, 0.6);
    let p = HeatParams::new(nu, 3).unwrap();
    let k = CorrelationKernel::ou(2.0, c, 3).unwrap();
    let a = beta / (4.0 * c);
    let integral = (1.0 / (c * nu)) * (1.0 - (PI * a).sqrt() * a.exp() * erfc(a.sqrt()));
    let want = 0.5 * nu * integral;
    assert_relative_eq!(
        upsilon(&k, &p, beta).unwrap().value().unwrap(),
        want,
        max_relative = 1e-8
    );
}

#[test]
fn divergent_cases() {
    let p1 = HeatParams::new(1.0, 1).unwrap();
    for k in [
        CorrelationKernel::white_noise(),
        CorrelationKernel::box_indicator(1.0, 1).unwrap(),
        CorrelationKernel::ou(1.0, 1.0, 1).unwrap(),
    ] {
        assert_eq!(upsilon_zero(&k, &p1).unwrap(), Limit::Divergent, "{}", k.name());
        assert_eq!(h1_limit(&k, &p1).unwrap(), Limit::Divergent, "{}", k.name());
    }
}

#[test]
fn white_noise_h_family_sums_to_mittag_leffler() {
    let p = HeatParams::new(1.0, 1).unwrap();
    let k = CorrelationKernel::white_noise();
    let grid = TimeGrid::new(4.0, 1024).unwrap();
    let mut fam = compute_h_family(&k, &p, &[0.0], &grid, 64).unwrap();
    for gamma in [0.5, 1.0, 2.0] {
        let h = fam.h_series(gamma, 4.0, &HOptions::default()).unwrap().value;
        let exact = ln_h_closed_form(&k, &p, gamma, 4.0).unwrap().exp();
        assert_relative_eq!(h, exact, max_relative = 1e-4);
    }
}

#[test]
fn white_noise_theta_is_gamma_squared_over_two_nu() {
    for (gamma, nu) in [(1.0, 1.0), (2.0, 0.5), (0.3, 3.0)] {
        let p = HeatParams::new(nu, 1).unwrap();
        let th = theta(&p, gamma, &CorrelationKernel::white_noise()).unwrap();
        assert_relative_eq!(th, gamma * gamma / (2.0 * nu), max_relative = 1e-8);
    }
}

#[test]
fn ou_phase_threshold() {
    let p = HeatParams::new(1.0, 3).unwrap();
    let r = phase_classify(&CorrelationKernel::ou(2.0, 1.0, 3).unwrap(), &p, 0.5, 0.5).unwrap();
    assert!(matches!(r.verdict, Verdict::PhaseTransition { .. }));
    // (ν / (4Υ(0)))^{1/2} with Υ(0) = 1/2
    assert_relative_eq!(r.lambda_c_lower.unwrap(), 0.5f64.sqrt(), max_relative = 1e-6);
    assert!(r.bounded_regime);
}

#[test]
fn riesz_is_fully_intermittent() {
    let p = HeatParams::new(1.0, 3).unwrap();
    let r = phase_classify(&CorrelationKernel::riesz(1.0, 3).unwrap(), &p, 0.1, 0.1).unwrap();
    assert_eq!(r.verdict, Verdict::FullyIntermittentAllLambda);
    assert!(r.lambda_c_lower.is_none());
}

#[test]
fn simulated_mean_stays_at_one() {
    // E u = J_0 = 1 for flat data and linear ρ
    let cfg = SimConfig {
        kernel: CorrelationKernel::ou(2.0, 1.0, 1).unwrap(),
        p: HeatParams::new(1.0, 1).unwrap(),
        rho: Rho::Linear(1.0),
        mu: InitialMeasure::lebesgue(1.0, 1).unwrap(),
        half_width: 3.0,
        n_x: 31,
        t_max: 0.5,
        n_t: 100,
        n_paths: 400,
        seed: 11,
        antithetic: true,
        targets: vec![Target {
            t: 0.5,
            x: 0.0,
            xp: 0.0,
        }],
    };
    let r = simulate(&cfg).unwrap();
    let mid = cfg.n_x / 2;
    let (m, se) = (r.first_moment[mid], r.first_moment_stderr[mid]);
    assert!((m - 1.0).abs() <= 4.0 * se + 1e-12, "{m} +/- {se}");
    assert_eq!(r.n_paths, 400);
}
