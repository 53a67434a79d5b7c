use proptest::prelude::*;

use num_complex::Complex64;
use pointwave::effective::{EffectiveField, ModulationSignal, Route};
use pointwave::fdtd::{build_grid, l2_diff, run, GridOptions, Region, RunOptions, WaveField};
use pointwave::freewave::{free_field, free_field_radial, BumpSpec, CauchyBundle, Datum, DEFAULT_SPHERE_ORDER};
use pointwave::geometry::{voxelize, DomainSpec, Shape, SphereRule};
use pointwave::harness::{fit_slope, ErrorReport, ErrorRow, ExperimentConfig};
use pointwave::newton::{assemble_newton, resolvent_bound, resolvent_norm, SpectralDecomposition};
use pointwave::{norm, Num, Vec3};

fn point(r: f64) -> impl Strategy<Value = Vec3> {
    [-r..r, -r..r, -r..r]
}

fn shape() -> impl Strategy<Value = DomainSpec> {
    let ball = (0.3..2.0f64).prop_map(|radius| Shape::Ball { radius });
    let cuboid = [0.3..2.0f64, 0.3..2.0, 0.3..2.0].prop_map(|sides| Shape::Box { sides });
    let ellipsoid = [0.3..2.0f64, 0.3..2.0, 0.3..2.0].prop_map(|semi_axes| Shape::Ellipsoid { semi_axes });
    (prop_oneof![ball, cuboid, ellipsoid], point(0.5)).prop_map(|(shape, center)| DomainSpec { shape, center })
}

/// Point at distance in `[lo, hi)` from the origin.
fn away(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
    (point(1.0), lo..hi)
        .prop_filter("direction", |(d, _)| norm(*d) > 1e-2)
        .prop_map(|(d, r)| pointwave::scale(d, r / norm(d)))
}

/// Bumps whose support keeps a positive clearance from the origin.
fn bump() -> impl Strategy<Value = BumpSpec> {
    let ball = (0.15..0.6f64, 0.05..1.0f64, -2.0..2.0f64, 4u32..12)
        .prop_flat_map(|(radius, gap, amplitude, order)| {
            (away(radius + gap, radius + gap + 1e-9), Just((radius, amplitude, order)))
        })
        .prop_map(|(center, (radius, amplitude, order))| BumpSpec::Ball {
            center,
            radius,
            amplitude,
            order,
        });
    let shell = (point(0.15), 0.3..0.8f64, 0.1..0.8f64, -2.0..2.0f64, 4u32..12).prop_map(
        |(center, inner, width, amplitude, order)| BumpSpec::Shell {
            center,
            inner,
            outer: inner + width,
            amplitude,
            order,
        },
    );
    prop_oneof![ball, shell]
}

fn scaled(spec: BumpSpec, a: f64) -> BumpSpec {
    match spec {
        BumpSpec::Ball {
            center,
            radius,
            amplitude,
            order,
        } => BumpSpec::Ball {
            center,
            radius,
            amplitude: a * amplitude,
            order,
        },
        BumpSpec::Shell {
            center,
            inner,
            outer,
            amplitude,
            order,
        } => BumpSpec::Shell {
            center,
            inner,
            outer,
            amplitude: a * amplitude,
            order,
        },
    }
}

fn bundle(phi: &[BumpSpec], psi: &[BumpSpec]) -> CauchyBundle {
    CauchyBundle::new(Datum::bumps(phi).unwrap(), Datum::bumps(psi).unwrap(), None).unwrap()
}

fn signal(values: Vec<f64>) -> ModulationSignal {
    ModulationSignal {
        dt: 0.01,
        total: values.clone(),
        per_mode: vec![values],
        route: Route::DuhamelOde,
    }
}

fn field(dims: [usize; 3], values: Vec<f64>) -> WaveField {
    WaveField {
        time: 0.0,
        origin: [-0.5, -0.5, -0.5],
        h: 0.25,
        dims,
        values,
    }
}

fn minimal() -> ExperimentConfig {
    ExperimentConfig::from_toml("eps = [0.3]\n[[data.psi]]\nkind = \"shell\"\ninner = 0.5\nouter = 1.5\namplitude = 1.0\n").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_weights_sum_to_the_volume(spec in shape(), res in 8usize..20) {
        let grid = voxelize(&spec, res).unwrap();
        prop_assert_eq!(grid.weights.iter().sum::<f64>(), grid.volume);
        for c in &grid.centers {
            prop_assert!(spec.contains(*c));
        }
    }

    #[test]
    fn scaled_grid_volume_is_eps_cubed(spec in shape(), res in 8usize..16, eps in 0.01..1.0f64) {
        let grid = voxelize(&spec, res).unwrap();
        let small = grid.scaled(spec.center, eps);
        let expected = eps.powi(3) * grid.volume;
        prop_assert!((small.volume - expected).abs() <= 1e-13 * expected);
    }

    #[test]
    fn sphere_rule_is_a_probability_measure(order in 1usize..40) {
        let rule = SphereRule::new(order).unwrap();
        prop_assert!(rule.weights().iter().all(|w| *w > 0.0));
        prop_assert!((rule.mean(|_| 1.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn resolvent_bound_holds_for_any_nonnegative_spectrum(
        mut lambdas in prop::collection::vec(1e-6..2.0f64, 1..30),
        re in 1e-4..30.0f64,
        im in -100.0..100.0f64,
    ) {
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let couplings = vec![0.0; lambdas.len()];
        let dec = SpectralDecomposition::from_modes(lambdas, couplings, 1.0).unwrap();
        let z = Complex64::new(re, im);
        prop_assert!(resolvent_norm(&dec, z).unwrap() <= resolvent_bound(z));
    }

    #[test]
    fn free_fields_vanish_outside_the_backward_light_cone(
        phi in bump(), psi in bump(), x in point(2.5), frac in 0.0..1.0f64,
    ) {
        let data = bundle(&[phi], &[psi]);
        prop_assume!(data.distance_from(x) > 0.0);
        let t = frac * data.distance_from(x);
        let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
        prop_assert_eq!(free_field_radial(&data, t, x).unwrap(), 0.0);
        prop_assert_eq!(free_field(&data, t, x, 1e-3, &rule).unwrap(), 0.0);
    }

    #[test]
    fn free_fields_are_linear_in_the_data(
        a in bump(), b in bump(), s in -3.0..3.0f64, x in point(1.5), t in 0.0..2.5f64,
    ) {
        let rule = SphereRule::new(DEFAULT_SPHERE_ORDER).unwrap();
        let ua = bundle(&[a], &[b]);
        let ub = bundle(&[b], &[a]);
        let combined = bundle(&[a, scaled(b, s)], &[b, scaled(a, s)]);
        let scale = [a, b].iter().map(|bump| match bump {
            BumpSpec::Ball { amplitude, .. } | BumpSpec::Shell { amplitude, .. } => amplitude.abs(),
        }).fold(0.0, f64::max) * (1.0 + s.abs()) * 10.0;
        for eval in [
            &|d: &CauchyBundle| free_field_radial(d, t, x).unwrap() as f64,
            &|d: &CauchyBundle| free_field(d, t, x, 1e-3, &rule).unwrap(),
        ] as [&dyn Fn(&CauchyBundle) -> f64; 2] {
            let lhs = eval(&combined);
            let rhs = eval(&ua) + s * eval(&ub);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn correction_depends_on_retarded_time_only(
        values in prop::collection::vec(-5.0..5.0f64, 300),
        eps in 0.01..0.99f64,
        dir in point(1.0),
        r in 0.05..1.0f64,
        shift in 0.0..1.0f64,
        lag in 0.0..0.9f64,
    ) {
        prop_assume!(norm(dir) > 1e-3);
        let f = EffectiveField::new(eps, signal(values), CauchyBundle::new(Datum::Zero, Datum::Zero, None).unwrap(), 0.0).unwrap();
        let at = |rr: f64| pointwave::scale(dir, rr / norm(dir));
        let t = r + lag;
        let a = f.correction(t, at(r)).unwrap() * r;
        let b = f.correction(t + shift, at(r + shift)).unwrap() * (r + shift);
        // The two retarded times agree up to a few roundings; q is linearly
        // interpolated, so the gap is bounded by its steepest slope times that.
        let slope = f.signal.total.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max) / f.signal.dt;
        let tol = f.coefficient().abs() / (4.0 * std::f64::consts::PI) * slope * 8.0 * f64::EPSILON * (t + shift + 1.0);
        prop_assert!((a - b).abs() <= tol + 1e-12 * a.abs(), "{} vs {}", a, b);
        // Outside the scatterer's light cone nothing is added.
        prop_assert_eq!(f.correction(0.9 * r, at(r)).unwrap(), 0.0);
    }

    #[test]
    fn correction_scales_with_eps_parity(
        values in prop::collection::vec(-5.0..5.0f64, 300),
        e1 in 0.01..0.99f64,
        e2 in 0.01..0.99f64,
        x in point(1.0),
        t in 0.0..2.0f64,
    ) {
        prop_assume!(norm(x) > 1e-3);
        let q = signal(values);
        let data = CauchyBundle::new(Datum::Zero, Datum::Zero, None).unwrap();
        let f1 = EffectiveField::new(e1, q.clone(), data.clone(), 0.0).unwrap();
        let f2 = EffectiveField::new(e2, q, data, 0.0).unwrap();
        let (c1, c2) = (f1.correction(t, x).unwrap(), f2.correction(t, x).unwrap());
        let ratio = e1 * (e1 * e1 - 1.0) / (e2 * (e2 * e2 - 1.0));
        if c2 == 0.0 {
            prop_assert_eq!(c1, 0.0);
        } else {
            prop_assert!((c1 / c2 - ratio).abs() <= 1e-12 * ratio.abs());
        }
    }

    #[test]
    fn l2_diff_is_a_metric(
        a in prop::collection::vec(-1.0..1.0f64, 64),
        b in prop::collection::vec(-1.0..1.0f64, 64),
        c in prop::collection::vec(-1.0..1.0f64, 64),
        radius in 0.1..2.0f64,
        excl in 0.0..0.5f64,
    ) {
        let (fa, fb, fc) = (field([4; 3], a), field([4; 3], b), field([4; 3], c));
        let region = Region::Ball { radius };
        let d = |x: &WaveField, y: &WaveField| l2_diff(x, y, region, excl).unwrap();
        prop_assert_eq!(d(&fa, &fa), 0.0);
        prop_assert_eq!(d(&fa, &fb), d(&fb, &fa));
        prop_assert!(d(&fa, &fc) <= d(&fa, &fb) + d(&fb, &fc) + 1e-12);
        prop_assert!(d(&fa, &fb) <= l2_diff(&fa, &fb, Region::Everywhere, 0.0).unwrap() + 1e-15);
    }

    #[test]
    fn slope_fit_recovers_power_laws(
        s in -1.0..3.0f64,
        c in 1e-3..1e3f64,
        mut eps in prop::collection::vec(0.01..0.9f64, 3..8),
        k in 1e-4..1e4f64,
    ) {
        eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eps.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-3);
        prop_assume!(eps.len() >= 3);
        let pts: Vec<(f64, f64)> = eps.iter().map(|&e| (e, c * e.powf(s))).collect();
        let fit = fit_slope(&pts).unwrap();
        prop_assert!((fit.slope - s).abs() < 1e-9, "{} vs {}", fit.slope, s);
        prop_assert!(fit.ci_low <= fit.slope + 1e-9 && fit.slope <= fit.ci_high + 1e-9);
        // Rescaling the errors moves only the intercept.
        let moved: Vec<(f64, f64)> = pts.iter().map(|&(e, v)| (e, k * v)).collect();
        let refit = fit_slope(&moved).unwrap();
        prop_assert!((refit.slope - fit.slope).abs() < 1e-9);
        prop_assert!((refit.intercept - fit.intercept - k.ln()).abs() < 1e-9);
    }

    #[test]
    fn report_rows_are_sorted_by_eps(eps in prop::collection::vec(0.01..0.99f64, 0..8)) {
        let rows: Vec<ErrorRow> = eps.iter().map(|&e| ErrorRow {
            eps: e, e_free: e, e_eff: e * e, e_free_excl: e, e_eff_excl: e * e,
            horizon: 3.0, tau: 0.0, h: 0.05, dt: 0.01, modes: 10, captured_mass: 4.1, runtime_seconds: 0.0,
        }).collect();
        let report = ErrorReport::new(minimal(), rows, 0.0).unwrap();
        prop_assert!(report.rows.windows(2).all(|w| w[0].eps >= w[1].eps));
        prop_assert_eq!(report.slopes.is_some(), eps.len() >= 3);
    }

    #[test]
    fn config_survives_a_toml_round_trip(
        eps in prop::collection::vec(0.01..0.99f64, 1..6),
        resolution in 8usize..64,
        horizon in 0.5..10.0f64,
        dt in 1e-4..1e-2f64,
        seed in 0..=i64::MAX as u64,
    ) {
        let mut cfg = minimal();
        cfg.eps = eps;
        cfg.spectrum.resolution = resolution;
        cfg.time.horizon = horizon;
        cfg.signal.dt = dt;
        cfg.seed = seed;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn number_formatting_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let back: f64 = Num(v).to_string().parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn newton_operator_is_symmetric_and_positive(
        spec in shape(),
        u in prop::collection::vec(-1.0..1.0f64, 2000),
        v in prop::collection::vec(-1.0..1.0f64, 2000),
    ) {
        let grid = voxelize(&spec, 10).unwrap();
        let n = grid.len();
        let (u, v) = (&u[..n.min(2000)], &v[..n.min(2000)]);
        prop_assume!(u.len() == n);
        let op = assemble_newton(&grid);
        let (nu, nv) = (op.apply_vec(u), op.apply_vec(v));
        let (a, b) = (grid.dot(&nu, v), grid.dot(u, &nv));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        let rayleigh = grid.dot(&nu, u) / grid.dot(u, u);
        prop_assert!(rayleigh >= -1e-10 * rayleigh.abs());
    }

    #[test]
    fn fdtd_respects_the_light_cone(c in away(0.45, 0.6), probe in point(1.0)) {
        let data = CauchyBundle::new(
            Datum::bumps(&[BumpSpec::Ball { center: c, radius: 0.4, amplitude: 1.0, order: 64 }]).unwrap(),
            Datum::Zero,
            None,
        ).unwrap();
        let h = 0.025;
        let grid = build_grid(&GridOptions::free(1.4, h)).unwrap();
        let mut opts = RunOptions::new(1.0);
        opts.probes = vec![probe, c];
        let out = run(&grid, &data, &opts).unwrap();
        let peak = out.traces.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = data.distance_from(probe);
        for (n, v) in out.traces[0].iter().enumerate() {
            if (n as f64 * out.dt) < d - 2.0 * h {
                prop_assert!(v.abs() <= 1e-12 * peak, "t={} d={} {}", n as f64 * out.dt, d, v.abs() / peak);
            }
        }
    }
}
