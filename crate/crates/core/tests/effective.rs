use std::f64::consts::PI;
use std::sync::Arc;

use pointwave::effective::*;
use pointwave::freewave::*;
use pointwave::geometry::SphereRule;
use pointwave::newton::SpectralDecomposition;
use pointwave::{norm, Error};

// Radial modes of the unit ball: λ = 1/k², c = 8π/k⁴ with k = (2m+1)π/2.
fn ball_modes(k: usize) -> SpectralDecomposition {
    let (mut l, mut c) = (Vec::new(), Vec::new());
    for m in 0..k {
        let kk = (2 * m + 1) as f64 * PI / 2.0;
        l.push(1.0 / (kk * kk));
        c.push(8.0 * PI / kk.powi(4));
    }
    SpectralDecomposition::from_modes(l, c, 4.0 * PI / 3.0).unwrap()
}

fn ball(center: [f64; 3], radius: f64, amplitude: f64) -> Datum {
    Datum::bumps(&[BumpSpec::Ball {
        center,
        radius,
        amplitude,
        order: 8,
    }])
    .unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[test]
fn constant_forcing_has_closed_form() {
    let dec = ball_modes(3);
    let h0 = 0.7;
    let h = ForcingSignal {
        dt: 0.005,
        values: vec![h0; 801],
    };
    let q = modulation_duhamel(&dec, &h).unwrap();
    for (k, mode) in q.per_mode.iter().enumerate() {
        let (l, c) = (dec.eigenvalues[k], dec.couplings[k]);
        for (i, v) in mode.iter().enumerate() {
            let t = i as f64 * h.dt;
            let exact = c * h0 * (1.0 - (t / l.sqrt()).cos());
            assert!((v - exact).abs() < 1e-12, "mode {k} t={t}: {v} vs {exact}");
        }
    }
    assert_eq!(q.route, Route::DuhamelOde);
}

#[test]
fn zero_forcing_gives_zero() {
    let q = modulation_duhamel(
        &ball_modes(4),
        &ForcingSignal {
            dt: 0.01,
            values: vec![0.0; 50],
        },
    )
    .unwrap();
    assert!(q.total.iter().all(|v| *v == 0.0));
}

#[test]
fn coarse_step_is_a_stability_error() {
    let dec = ball_modes(4);
    let required = dec.eigenvalues[3].sqrt() / 8.0;
    let h = ForcingSignal {
        dt: required * 1.1,
        values: vec![1.0; 10],
    };
    match modulation_duhamel(&dec, &h) {
        Err(Error::Stability { required: r, .. }) => assert!((r - required).abs() < 1e-15),
        other => panic!("{other:?}"),
    }
}

fn sample_bundle(with_psi: bool, with_source: bool) -> CauchyBundle {
    CauchyBundle::new(
        ball([0.8, 0.3, 0.0], 0.4, 1.0),
        if with_psi {
            ball([-0.4, 0.5, 0.6], 0.35, 2.0)
        } else {
            Datum::Zero
        },
        with_source.then(|| SourceTerm {
            space: ball([0.2, -0.9, 0.1], 0.3, 1.5),
            time: TimeProfile::Pulse {
                center: 0.5,
                half_width: 0.4,
                amplitude: 1.0,
            },
        }),
    )
    .unwrap()
}

fn routes(data: &CauchyBundle, dec: &SpectralDecomposition, dt: f64, horizon: f64) -> (ModulationSignal, ModulationSignal) {
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    let h = forcing_signal(data, dt, horizon, &rule).unwrap();
    let ode = modulation_duhamel(dec, &h).unwrap();
    let closed = modulation_closed_form(dec, data, dt, horizon, &ClosedFormOptions::default()).unwrap();
    (closed, ode)
}

#[test]
fn routes_agree_for_initial_value_data() {
    let dec = ball_modes(4);
    let (closed, ode) = routes(&sample_bundle(false, false), &dec, 0.005, 3.0);
    let rel = sup_diff(&closed.total, &ode.total) / sup(&closed.total);
    assert!(rel < 1e-3, "relative sup difference {rel}");
    for k in 0..4 {
        let rel = sup_diff(&closed.per_mode[k], &ode.per_mode[k]) / sup(&closed.per_mode[k]);
        assert!(rel < 1e-3, "mode {k}: {rel}");
    }
}

#[test]
fn routes_agree_for_all_data_families() {
    let dec = ball_modes(4);
    let (closed, ode) = routes(&sample_bundle(true, true), &dec, 0.005, 3.0);
    let rel = sup_diff(&closed.total, &ode.total) / sup(&closed.total);
    assert!(rel < 1e-3, "relative sup difference {rel}");
}

#[test]
fn signal_starts_at_rest() {
    let dec = ball_modes(3);
    let (closed, ode) = routes(&sample_bundle(true, true), &dec, 0.005, 1.0);
    for q in [&closed, &ode] {
        assert_eq!(q.total[0], 0.0);
        assert_eq!(q.total[1], 0.0);
        for i in 0..q.total.len() {
            let s: f64 = q.per_mode.iter().map(|m| m[i]).sum();
            assert_eq!(s, q.total[i]);
        }
    }
    // Nothing reaches the origin before the clearance time.
    let data = sample_bundle(true, true);
    let first = (data.clearance() / 0.005).floor() as usize;
    assert!(closed.total[..=first].iter().all(|v| *v == 0.0));
}

#[test]
fn ode_residual_is_second_order() {
    let dec = ball_modes(2);
    let data = sample_bundle(true, false);
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    let residual = |dt: f64| {
        let h = forcing_signal(&data, dt, 2.0, &rule).unwrap();
        let q = modulation_duhamel(&dec, &h).unwrap();
        let (l, c) = (dec.eigenvalues[1], dec.couplings[1]);
        let m = &q.per_mode[1];
        (1..m.len() - 1)
            .map(|i| (l * (m[i + 1] - 2.0 * m[i] + m[i - 1]) / (dt * dt) + m[i] - c * h.values[i]).abs())
            .fold(0.0, f64::max)
    };
    let (r1, r2) = (residual(0.01), residual(0.005));
    assert!(r2 < r1 / 3.0, "{r1} -> {r2}");
}

#[test]
fn thin_velocity_shell_collapses_onto_its_radius() {
    let (a, delta) = (0.8, 0.01);
    let shell = RadialBump::from_spec(&BumpSpec::Shell {
        center: [0.0; 3],
        inner: a - delta,
        outer: a + delta,
        amplitude: 1.0,
        order: 4,
    })
    .unwrap();
    // ∫ shell dy by radial quadrature.
    let mass = pointwave::geometry::integrate(|r| 4.0 * PI * r * r * shell.profile(0, r), a - delta, a + delta, 16, 8);
    let lap_field = {
        let s = shell.clone();
        Arc::new(move |y: [f64; 3]| s.profile(0, norm(y)))
    };
    let psi = Datum::Custom(CustomField {
        value: Arc::new(|_| 0.0),
        laplacians: vec![lap_field],
        clearance: a - delta,
        reach: a + delta,
    });
    let data = CauchyBundle::new(Datum::Zero, psi, None).unwrap();
    let dec = ball_modes(1);
    let (l, c) = (dec.eigenvalues[0], dec.couplings[0]);
    let q = modulation_closed_form(&dec, &data, 0.01, 2.0, &ClosedFormOptions::default()).unwrap();
    for (i, v) in q.total.iter().enumerate() {
        let t = i as f64 * 0.01;
        if t < a + 2.0 * delta {
            continue;
        }
        let approx = c / l.sqrt() * ((t - a) / l.sqrt()).sin() * mass / (4.0 * PI * a);
        assert!((v - approx).abs() < 1e-3 * c * mass / (4.0 * PI * a * l.sqrt()), "t={t}: {v} vs {approx}");
    }
}

#[test]
fn truncation_tail_is_bounded_by_dropped_coupling() {
    let dec = ball_modes(6);
    let data = sample_bundle(false, false);
    let q = modulation_closed_form(&dec, &data, 0.01, 3.0, &ClosedFormOptions::default()).unwrap();
    // sup over t of ∫_{|y|<t} |Δ²φ|/(4π|y|) dy.
    let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
    let bound = pointwave::geometry::integrate(
        |r| {
            r * pointwave::freewave::spherical_mean(|y| data.phi.eval(2, y).unwrap().abs(), [0.0; 3], r, &rule).unwrap()
        },
        data.clearance(),
        data.reach(),
        12,
        200,
    );
    for (k, kp) in [(1, 3), (2, 6), (4, 5)] {
        let tail: f64 = dec.couplings[k..kp].iter().sum();
        let diff = sup_diff(&q.truncated_total(k), &q.truncated_total(kp));
        assert!(diff <= 2.0 * tail * bound * 1.01, "K={k} K'={kp}: {diff} > {}", 2.0 * tail * bound);
    }
}

fn constant_signal(h0: f64, dt: f64, n: usize) -> (SpectralDecomposition, ModulationSignal) {
    let dec = ball_modes(1);
    let h = ForcingSignal {
        dt,
        values: vec![h0; n],
    };
    let q = modulation_duhamel(&dec, &h).unwrap();
    (dec, q)
}

#[test]
fn correction_by_hand_from_constant_forcing() {
    let (dec, q) = constant_signal(0.5, 0.001, 3001);
    let data = CauchyBundle::new(Datum::Zero, Datum::Zero, None).unwrap();
    let eps = 0.3;
    let field = EffectiveField::new(eps, q, data, 0.0).unwrap();
    let (t, x) = (2.2, [0.6, 0.0, 0.8]);
    let tau = t - 1.0;
    let q_exact = dec.couplings[0] * 0.5 * (1.0 - (tau / dec.eigenvalues[0].sqrt()).cos());
    let expect = eps * (eps * eps - 1.0) * q_exact / (4.0 * PI);
    let got = field.correction(t, x).unwrap();
    assert!((got - expect).abs() < 1e-6 * expect.abs(), "{got} vs {expect}");
    assert_eq!(field.value(t, x).unwrap(), Some(got));
}

#[test]
fn correction_vanishes_before_arrival_and_outside_coverage_fails() {
    let (_, q) = constant_signal(1.0, 0.01, 101);
    let field = EffectiveField::new(0.2, q, CauchyBundle::default(), 0.05).unwrap();
    assert_eq!(field.correction(0.4, [0.5, 0.0, 0.0]).unwrap(), 0.0);
    assert!(field.correction(0.6, [0.5, 0.0, 0.0]).unwrap() != 0.0);
    assert!(matches!(field.correction(2.0, [0.5, 0.0, 0.0]), Err(Error::Coverage { .. })));
    assert_eq!(field.value(0.6, [0.01, 0.0, 0.0]).unwrap(), None);
}

#[test]
fn correction_depends_on_retarded_time_only() {
    let (_, q) = constant_signal(1.0, 0.001, 4001);
    let field = EffectiveField::new(0.2, q, CauchyBundle::default(), 0.0).unwrap();
    let dir = [0.48, 0.6, 0.64];
    for &(t, r, shift) in &[(1.5, 0.5, 0.3), (2.0, 1.0, 0.7), (3.0, 0.2, 0.4)] {
        let x1 = dir.map(|c| c * r);
        let x2 = dir.map(|c| c * (r + shift));
        let a = field.correction(t, x1).unwrap() * r;
        let b = field.correction(t + shift, x2).unwrap() * (r + shift);
        assert!((a - b).abs() < 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
    }
}

#[test]
fn correction_scales_as_eps_cubed_minus_eps() {
    let (_, q) = constant_signal(1.0, 0.001, 3001);
    let data = sample_bundle(false, false);
    let (e1, e2) = (0.3, 0.15);
    let f1 = EffectiveField::new(e1, q.clone(), data.clone(), 0.0).unwrap();
    let f2 = EffectiveField::new(e2, q, data, 0.0).unwrap();
    let ratio = e1 * (e1 * e1 - 1.0) / (e2 * (e2 * e2 - 1.0));
    for x in [[0.3, 0.1, 0.0], [0.0, -0.7, 0.2], [1.0, 1.0, 0.5]] {
        let (a, b) = (f1.correction(2.5, x).unwrap(), f2.correction(2.5, x).unwrap());
        assert!((a / b - ratio).abs() < 1e-12 * ratio.abs());
    }
}

#[test]
fn small_eps_recovers_the_free_field() {
    let data = sample_bundle(true, false);
    let dec = ball_modes(3);
    let q = modulation_closed_form(&dec, &data, 0.01, 3.0, &ClosedFormOptions::default()).unwrap();
    let x = [0.2, 0.3, -0.1];
    let free = free_field_radial(&data, 2.0, x).unwrap();
    let mut last = f64::INFINITY;
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let u = effective_field(&data, &q, eps, 2.0, &[x], 0.0).unwrap()[0].unwrap();
        let gap = (u - free).abs();
        assert!(gap < last);
        last = gap;
    }
    assert!(last < 1e-4 * free.abs().max(1.0));
}

#[test]
fn rejects_bad_parameters() {
    let (_, q) = constant_signal(1.0, 0.01, 11);
    assert!(EffectiveField::new(1.0, q.clone(), CauchyBundle::default(), 0.0).is_err());
    assert!(EffectiveField::new(0.0, q.clone(), CauchyBundle::default(), 0.0).is_err());
    assert!(EffectiveField::new(0.5, q, CauchyBundle::default(), -1.0).is_err());
    let data = CauchyBundle::new(
        Datum::Custom(CustomField {
            value: Arc::new(|_| 0.0),
            laplacians: vec![],
            clearance: 0.5,
            reach: 1.0,
        }),
        Datum::Zero,
        None,
    )
    .unwrap();
    assert!(matches!(
        modulation_closed_form(&ball_modes(1), &data, 0.01, 1.0, &ClosedFormOptions::default()),
        Err(Error::Capability(_))
    ));
}
