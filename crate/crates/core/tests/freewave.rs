use std::sync::Arc;

use pointwave::freewave::*;
use pointwave::geometry::SphereRule;
use pointwave::{norm, sub, Vec3};

const A: f64 = 1.3;
const R: f64 = 0.4;
const N: i32 = 8;

// Closed forms for P(s) = A (1 − s²/R²)^N.
fn p(s: f64) -> f64 {
    if s >= R {
        0.0
    } else {
        A * (1.0 - s * s / (R * R)).powi(N)
    }
}

fn dp(s: f64) -> f64 {
    if s >= R {
        0.0
    } else {
        let n = N as f64;
        A * n * (1.0 - s * s / (R * R)).powi(N - 1) * (-2.0 * s / (R * R))
    }
}

fn lap_p(s: f64) -> f64 {
    if s >= R {
        0.0
    } else {
        let n = N as f64;
        let q = 1.0 - s * s / (R * R);
        A * (4.0 * n * (n - 1.0) * s * s / R.powi(4) * q.powi(N - 2) - 6.0 * n / (R * R) * q.powi(N - 1))
    }
}

// ∫ s P ds.
fn moment(s: f64) -> f64 {
    let s = s.min(R);
    -A * R * R / (2.0 * (N as f64 + 1.0)) * (1.0 - s * s / (R * R)).powi(N + 1)
}

// ∫ s ΔP ds = s P' + P.
fn lap_moment(s: f64) -> f64 {
    if s >= R {
        0.0
    } else {
        s * dp(s) + p(s)
    }
}

fn value_oracle(c: Vec3, t: f64, x: Vec3) -> f64 {
    let r = norm(sub(x, c));
    ((r + t) * p(r + t) + (r - t) * p((r - t).abs())) / (2.0 * r)
}

fn velocity_oracle(c: Vec3, t: f64, x: Vec3) -> f64 {
    let r = norm(sub(x, c));
    (moment(r + t) - moment((r - t).abs())) / (2.0 * r)
}

fn ball(center: Vec3) -> Datum {
    Datum::bumps(&[BumpSpec::Ball {
        center,
        radius: R,
        amplitude: A,
        order: N as u32,
    }])
    .unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

const C1: Vec3 = [0.9, 0.3, -0.2];
const C2: Vec3 = [-0.5, 0.7, 0.4];

#[test]
fn kirchhoff_matches_dalembert_oracle() {
    let data = CauchyBundle::new(ball(C1), ball(C2), None).unwrap();
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    let mut worst: f64 = 0.0;
    for &t in &[0.3, 0.7, 1.0, 1.4] {
        for &x in &[[0.1, 0.0, 0.0], [0.5, 0.5, 0.0], [-0.2, 0.3, 0.6], [0.9, 0.3, -0.2]] {
            let u = kirchhoff_eval(&data, t, x, &rule).unwrap();
            let oracle = value_oracle(C1, t, x) + velocity_oracle(C2, t, x);
            worst = worst.max((u - oracle).abs());
        }
    }
    assert!(worst < 1e-3 * A, "max error {worst}");
}

#[test]
fn radial_path_matches_dalembert_oracle() {
    let data = CauchyBundle::new(ball(C1), ball(C2), None).unwrap();
    for &t in &[0.0, 0.3, 0.7, 1.0, 1.4, 2.5] {
        for &x in &[[0.1, 0.0, 0.0], [0.5, 0.5, 0.0], [-0.2, 0.3, 0.6], [1.0, 0.35, -0.2]] {
            let u = free_field_radial(&data, t, x).unwrap();
            let oracle = value_oracle(C1, t, x) + velocity_oracle(C2, t, x);
            assert!((u - oracle).abs() < 1e-12, "t={t} x={x:?}: {u} vs {oracle}");
        }
    }
}

#[test]
fn fields_vanish_outside_the_light_cone() {
    let data = CauchyBundle::new(ball(C1), ball(C2), None).unwrap();
    let rule = SphereRule::new(23).unwrap();
    let x = [0.0, 0.0, 0.0];
    let first = data.distance_from(x);
    for k in 0..20 {
        let t = first * k as f64 / 20.0;
        assert_eq!(kirchhoff_eval(&data, t, x, &rule).unwrap(), 0.0);
        assert_eq!(free_field_radial(&data, t, x).unwrap(), 0.0);
    }
    assert!(free_field_radial(&data, first + 0.1, x).unwrap().abs() > 0.0);
}

#[test]
fn kirchhoff_is_linear() {
    let rule = SphereRule::new(31).unwrap();
    let a = CauchyBundle::new(ball(C1), Datum::Zero, None).unwrap();
    let b = CauchyBundle::new(Datum::Zero, ball(C2), None).unwrap();
    let sum = a.plus(&b).unwrap();
    let twice = a.plus(&a).unwrap();
    for &t in &[0.5, 0.9, 1.3] {
        let x = [0.2, -0.1, 0.3];
        let ua = kirchhoff_eval(&a, t, x, &rule).unwrap();
        let ub = kirchhoff_eval(&b, t, x, &rule).unwrap();
        assert!((kirchhoff_eval(&sum, t, x, &rule).unwrap() - ua - ub).abs() < 1e-13);
        assert!((kirchhoff_eval(&twice, t, x, &rule).unwrap() - 2.0 * ua).abs() < 1e-13);
    }
}

#[test]
fn duhamel_is_a_superposition_of_velocity_problems() {
    let time = TimeProfile::Pulse {
        center: 0.4,
        half_width: 0.3,
        amplitude: 2.0,
    };
    let data = CauchyBundle::new(
        Datum::Zero,
        Datum::Zero,
        Some(SourceTerm {
            space: ball(C1),
            time,
        }),
    )
    .unwrap();
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    for &(t, x) in &[(1.2, [0.1, 0.0, 0.0]), (1.6, [-0.2, 0.4, 0.1]), (0.5, [0.9, 0.3, 0.0])] {
        let oracle = simpson(|s| time.eval(s) * velocity_oracle(C1, t - s, x), 0.0, t, 4000);
        let quad = duhamel_eval(&data, t, x, 2e-3, &rule).unwrap();
        let radial = free_field_radial(&data, t, x).unwrap();
        assert!((quad - oracle).abs() < 1e-4, "{quad} vs {oracle}");
        assert!((radial - oracle).abs() < 1e-8, "{radial} vs {oracle}");
    }
}

#[test]
fn velocity_forcing_matches_radial_quadrature() {
    let data = CauchyBundle::new(Datum::Zero, ball(C2), None).unwrap();
    let d = norm(C2);
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    for &t in &[0.6, 0.8, 1.0, 1.2] {
        let oracle = (lap_moment(t + d) - lap_moment((t - d).abs())) / (2.0 * d);
        let got = t * origin_mean(&data.psi, 1, t, &rule).unwrap();
        assert!((got - oracle).abs() < 1e-4 * oracle.abs().max(1.0), "t={t}: {got} vs {oracle}");
    }
}

fn forcing_oracle_phi(c: Vec3, t: f64) -> f64 {
    let d = norm(c);
    ((t + d) * lap_p(t + d) - (t - d) * lap_p((t - d).abs())) / (2.0 * d)
}

#[test]
fn forcing_signal_matches_oracle() {
    let time = TimeProfile::Sine {
        omega: 3.0,
        amplitude: 0.7,
    };
    let data = CauchyBundle::new(
        ball(C1),
        ball(C2),
        Some(SourceTerm {
            space: ball(C1),
            time,
        }),
    )
    .unwrap();
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    let dt = 0.01;
    let sig = forcing_signal(&data, dt, 2.0, &rule).unwrap();
    assert_eq!(sig.values.len(), 201);
    let d2 = norm(C2);
    let oracle = |t: f64| {
        let psi = (lap_moment(t + d2) - lap_moment((t - d2).abs())) / (2.0 * d2);
        let d1 = norm(C1);
        let src = simpson(
            |s| {
                let tau = t - s;
                if tau <= 0.0 {
                    return 0.0;
                }
                time.eval(s) * (lap_moment(tau + d1) - lap_moment((tau - d1).abs())) / (2.0 * d1)
            },
            0.0,
            t,
            2000,
        );
        forcing_oracle_phi(C1, t) + psi + src
    };
    let scale = sig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for (i, h) in sig.values.iter().enumerate() {
        let t = i as f64 * dt;
        worst = worst.max((h - oracle(t)).abs());
        let closed = forcing_radial(&data, t).unwrap();
        assert!((closed - oracle(t)).abs() < 1e-6 * scale, "t={t}: {closed} vs {}", oracle(t));
    }
    assert!(worst < 1e-3 * scale, "max error {worst} against scale {scale}");
}

#[test]
fn forcing_respects_clearance_step_limit() {
    let data = CauchyBundle::new(ball(C1), Datum::Zero, None).unwrap();
    let rule = SphereRule::new(11).unwrap();
    let too_big = data.clearance() / 8.0 * 1.01;
    assert!(forcing_signal(&data, too_big, 1.0, &rule).is_err());
}

#[test]
fn ball_form_agrees_with_derivative_form() {
    let data = CauchyBundle::new(ball(C1), ball(C2), None).unwrap();
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    for &t in &[0.7, 1.0, 1.3] {
        let ball_form = forcing_ball_form(&data, t, 64, &rule).unwrap();
        let oracle = forcing_oracle_phi(C1, t)
            + (lap_moment(t + norm(C2)) - lap_moment((t - norm(C2)).abs())) / (2.0 * norm(C2));
        assert!((ball_form - oracle).abs() < 1e-3 * oracle.abs().max(1.0), "t={t}: {ball_form} vs {oracle}");
    }
}

#[test]
fn free_field_solves_the_wave_equation() {
    let data = CauchyBundle::new(ball(C1), ball(C2), None).unwrap();
    let u = |t: f64, x: Vec3| free_field_radial(&data, t, x).unwrap();
    let residual = |eta: f64| {
        let (t, x) = (0.8, [0.3, 0.2, -0.1]);
        let utt = (u(t + eta, x) - 2.0 * u(t, x) + u(t - eta, x)) / (eta * eta);
        let mut lap = -6.0 * u(t, x);
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += eta;
            xm[a] -= eta;
            lap += u(t, xp) + u(t, xm);
        }
        (utt - lap / (eta * eta)).abs()
    };
    let (r1, r2) = (residual(0.02), residual(0.01));
    assert!(r2 < r1 / 3.0, "{r1} -> {r2}");
    assert!(r2 < 1e-2, "{r2}");
}

fn custom_ball(center: Vec3) -> Datum {
    Datum::Custom(CustomField {
        value: Arc::new(move |y| p(norm(sub(y, center)))),
        laplacians: vec![Arc::new(move |y| lap_p(norm(sub(y, center))))],
        clearance: norm(center) - R,
        reach: norm(center) + R,
    })
}

#[test]
fn custom_fields_use_the_sphere_rule() {
    // Error of the product sphere rule on a bump of radius 0.4 seen from
    // distance ~1; bump data bypass this through the exact cap rule.
    let data = CauchyBundle::new(custom_ball(C1), Datum::Zero, None).unwrap();
    let x = [0.05, -0.1, 0.0];
    let ts = [0.65, 0.8, 0.95, 1.1, 1.25];
    let mut errs = Vec::new();
    for order in [11, 17, 23, 31, 47, 63, 95] {
        let rule = SphereRule::new(order).unwrap();
        let e = ts
            .iter()
            .map(|&t| (kirchhoff_eval(&data, t, x, &rule).unwrap() - value_oracle(C1, t, x)).abs())
            .fold(0.0f64, f64::max);
        println!("order {order:3}  nodes {:5}  max error {:.3e}", rule.len(), e / A);
        errs.push(e);
    }
    assert!(errs[4] < 1e-3 * A, "{errs:?}");
    assert!(errs[6] < 1e-5 * A, "{errs:?}");
    assert!(errs[6] <= errs[0]);

    let bumps = CauchyBundle::new(ball(C1), Datum::Zero, None).unwrap();
    let rule = SphereRule::new(3).unwrap();
    for &t in &ts {
        let u = kirchhoff_eval(&bumps, t, x, &rule).unwrap();
        assert!((u - value_oracle(C1, t, x)).abs() < 1e-12);
    }
}

#[test]
fn custom_field_needs_laplacian_stack_for_forcing() {
    let mut d = custom_ball(C1);
    if let Datum::Custom(c) = &mut d {
        c.laplacians.clear();
    }
    let data = CauchyBundle::new(Datum::Zero, d, None).unwrap();
    let rule = SphereRule::new(11).unwrap();
    let err = forcing_signal(&data, 0.01, 1.0, &rule).unwrap_err();
    assert!(matches!(err, pointwave::Error::Capability(_)), "{err}");
}
