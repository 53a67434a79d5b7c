//! Free-space solutions through spherical means: Kirchhoff's formula for
//! the Cauchy data, Duhamel's principle for the source, and the forcing
//! signal `h(t) = Δ(u_free + û_free)(t, 0)`.

use serde::{Deserialize, Serialize};

use super::data::{CauchyBundle, Datum, RadialBump};
use crate::error::{Error, Result};
use crate::geometry::{gauss_legendre_on, SphereRule};
use crate::{norm, sub, Vec3};

/// `(1/4πr²) ∮_{|y−c|=r} u dσ`; the field value at `center` when `r = 0`.
pub fn spherical_mean<F: Fn(Vec3) -> f64>(field: F, center: Vec3, radius: f64, rule: &SphereRule) -> Result<f64> {
    if !(radius >= 0.0) {
        return Err(Error::param(format!("spherical mean radius must be >= 0, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(field(center));
    }
    Ok(rule.mean(|w| {
        field([
            center[0] + radius * w[0],
            center[1] + radius * w[1],
            center[2] + radius * w[2],
        ])
    }))
}

/// Mean over the sphere `|y − x| = r` of an integrand that depends only on
/// `s = |y − c|` and `μ = ω·(c − x)/|c − x|`, for a bump about `c`.
///
/// On the part of the sphere inside the support the integrand is a
/// polynomial in `μ`, so Gauss–Legendre on that cap is exact; `extra` is
/// the degree the integrand adds on top of the profile.
fn bump_cap_mean<F: Fn(f64, f64) -> f64>(b: &RadialBump, lap: usize, x: Vec3, r: f64, extra: usize, g: F) -> f64 {
    let d = norm(sub(b.center, x));
    if r == 0.0 || d < 1e-14 * r.max(1.0) {
        return g(r.max(d), 1.0);
    }
    // s² = r² + d² − 2rdμ.
    let mu_of = |s: f64| (r * r + d * d - s * s) / (2.0 * r * d);
    let hi = mu_of(b.inner).min(1.0);
    let lo = mu_of(b.outer).max(-1.0);
    if hi <= lo {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre_on(b.degree(lap) + extra / 2 + 2, lo, hi);
    let mut acc = 0.0;
    for (mu, w) in nodes.iter().zip(&weights) {
        let s = (r * r + d * d - 2.0 * r * d * mu).max(0.0).sqrt();
        acc += w * g(s, *mu);
    }
    0.5 * acc
}

/// Spherical mean of `Δ^lap` of a datum. Bump data use the exact cap rule,
/// anything else the supplied sphere rule.
fn datum_mean(datum: &Datum, lap: usize, center: Vec3, radius: f64, rule: &SphereRule) -> Result<f64> {
    if datum.is_zero() || datum.distance_from(center) > radius || (radius == 0.0 && datum.distance_from(center) > 0.0) {
        return Ok(0.0);
    }
    datum.require(lap)?;
    if let Some(bumps) = datum.as_bumps() {
        return Ok(bumps
            .iter()
            .map(|b| bump_cap_mean(b, lap, center, radius, 0, |s, _| b.profile(lap, s)))
            .sum());
    }
    spherical_mean(|y| datum.eval(lap, y).unwrap_or(0.0), center, radius, rule)
}

/// `M[φ + t ∇φ·ω]` over the sphere of radius `t` about `x`.
fn phi_kirchhoff_mean(phi: &Datum, lap: usize, t: f64, x: Vec3, rule: &SphereRule) -> Result<f64> {
    if let Some(bumps) = phi.as_bumps() {
        return Ok(bumps
            .iter()
            .map(|b| {
                let d = norm(sub(b.center, x));
                // (y − c)·ω = t − dμ.
                bump_cap_mean(b, lap, x, t, 2, |s, mu| {
                    b.profile(lap, s) + t * b.slope_over_s(lap, s) * (t - d * mu)
                })
            })
            .sum());
    }
    let mut acc = 0.0;
    for (w, wt) in rule.nodes().iter().zip(rule.weights()) {
        let y = [x[0] + t * w[0], x[1] + t * w[1], x[2] + t * w[2]];
        let g = phi.gradient(lap, y)?;
        acc += wt * (phi.eval(lap, y)? + t * (g[0] * w[0] + g[1] * w[1] + g[2] * w[2]));
    }
    Ok(acc)
}

/// `u_free(t, x) = ∂_t(t Mφ) + t Mψ` with the time derivative in gradient
/// form, `∂_t(t Mφ) = Mφ + t M[∇φ·ω]`.
///
/// Bump data are integrated exactly on the spherical cap they occupy;
/// `rule` is used for custom fields.
pub fn kirchhoff_eval(data: &CauchyBundle, t: f64, x: Vec3, rule: &SphereRule) -> Result<f64> {
    kirchhoff_eval_lap(data, 0, t, x, rule)
}

/// Kirchhoff's formula applied to `Δ^lap φ`, `Δ^lap ψ`.
pub fn kirchhoff_eval_lap(data: &CauchyBundle, lap: usize, t: f64, x: Vec3, rule: &SphereRule) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("time must be >= 0, got {t}")));
    }
    let phi_active = !data.phi.is_zero() && data.phi.distance_from(x) <= t;
    let psi_active = !data.psi.is_zero() && data.psi.distance_from(x) <= t;
    if !phi_active && !psi_active {
        return Ok(0.0);
    }
    if t == 0.0 {
        return data.phi.eval(lap, x);
    }
    if phi_active {
        data.phi.require(lap)?;
    }
    if psi_active {
        data.psi.require(lap)?;
    }
    let mut u = 0.0;
    if phi_active {
        u += phi_kirchhoff_mean(&data.phi, lap, t, x, rule)?;
    }
    if psi_active {
        u += t * datum_mean(&data.psi, lap, x, t, rule)?;
    }
    Ok(u)
}

fn simpson<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, step: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut n = ((b - a) / step).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let hstep = (b - a) / n as f64;
    let mut acc = f(a)? + f(b)?;
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * hstep)?;
    }
    Ok(acc * hstep / 3.0)
}

/// `û_free(t, x) = ∫₀ᵗ (t−s) M[f(s)](x; t−s) ds` by composite Simpson with
/// step at most `ds`.
pub fn duhamel_eval(data: &CauchyBundle, t: f64, x: Vec3, ds: f64, rule: &SphereRule) -> Result<f64> {
    duhamel_eval_lap(data, 0, t, x, ds, rule)
}

pub fn duhamel_eval_lap(data: &CauchyBundle, lap: usize, t: f64, x: Vec3, ds: f64, rule: &SphereRule) -> Result<f64> {
    if !(t >= 0.0) || !(ds > 0.0) {
        return Err(Error::param(format!("need t >= 0 and ds > 0, got t={t}, ds={ds}")));
    }
    let Some(src) = &data.source else {
        return Ok(0.0);
    };
    let dist = src.space.distance_from(x);
    if src.space.is_zero() || t < dist {
        return Ok(0.0);
    }
    src.space.require(lap)?;
    // Only s < t − dist contributes.
    simpson(
        |s| {
            let tau = t - s;
            let g = src.time.eval(s);
            if g == 0.0 || tau < dist {
                return Ok(0.0);
            }
            Ok(tau * g * datum_mean(&src.space, lap, x, tau, rule)?)
        },
        0.0,
        t - dist,
        ds,
    )
}

/// `u_free + û_free` at `(t, x)`: closed form for bump data, Kirchhoff and
/// Duhamel quadrature (source step `ds`) otherwise.
pub fn free_field(data: &CauchyBundle, t: f64, x: Vec3, ds: f64, rule: &SphereRule) -> Result<f64> {
    let all_bumps = data.phi.as_bumps().is_some()
        && data.psi.as_bumps().is_some()
        && data.source.as_ref().is_none_or(|s| s.space.as_bumps().is_some());
    if all_bumps {
        return super::radial::free_field_radial(data, t, x);
    }
    Ok(kirchhoff_eval(data, t, x, rule)? + duhamel_eval(data, t, x, ds, rule)?)
}

/// Sampled `h(t)` on `t_i = i·Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSignal {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl ForcingSignal {
    pub fn horizon(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dt)
    }

    /// Piecewise-linear interpolation; zero for `t < 0`.
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if t == 0.0 { self.values[0] } else { 0.0 };
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,h\n");
        for (t, h) in self.times().zip(&self.values) {
            out.push_str(&format!("{},{}\n", crate::Num(t), crate::Num(*h)));
        }
        out
    }
}

/// Number of steps covering `[0, horizon]`.
pub fn step_count(dt: f64, horizon: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Samples `h(t) = d/dt(t MΔφ(t)) + t MΔψ(t) + ∫₀ᵗ (t−s) MΔf(s)(t−s) ds`,
/// spherical means taken about the origin.
///
/// The derivative uses fourth-order central differences at step `Δt/16`.
pub fn forcing_signal(data: &CauchyBundle, dt: f64, horizon: f64, rule: &SphereRule) -> Result<ForcingSignal> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::param(format!("need dt > 0 and horizon >= 0, got dt={dt}, T={horizon}")));
    }
    let clearance = data.clearance();
    if clearance.is_finite() && dt > clearance / 8.0 {
        return Err(Error::param(format!(
            "forcing step {dt} must not exceed clearance/8 = {}",
            clearance / 8.0
        )));
    }
    if !data.phi.is_zero() {
        data.phi.require(1)?;
    }
    if !data.psi.is_zero() {
        data.psi.require(1)?;
    }
    if let Some(s) = &data.source {
        s.space.require(1)?;
    }
    let n = step_count(dt, horizon);
    let delta = dt / 16.0;
    let origin = [0.0; 3];
    let phi_term = |t: f64| -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        Ok(t * datum_mean(&data.phi, 1, origin, t, rule)?)
    };
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = i as f64 * dt;
        let mut h = 0.0;
        if !data.phi.is_zero() && t + 2.0 * delta >= data.phi.clearance() {
            h += (-phi_term(t + 2.0 * delta)? + 8.0 * phi_term(t + delta)? - 8.0 * phi_term(t - delta)?
                + phi_term(t - 2.0 * delta)?)
                / (12.0 * delta);
        }
        if !data.psi.is_zero() && t > 0.0 {
            h += t * datum_mean(&data.psi, 1, origin, t, rule)?;
        }
        h += duhamel_eval_lap(data, 1, t, origin, dt / 2.0, rule)?;
        values.push(h);
    }
    Ok(ForcingSignal { dt, values })
}

/// Ball-integral form of the forcing for the Cauchy data,
/// `∫_{|y|<t} Δ²φ/(4π|y|) dy + t MΔψ(t)`, used to cross-check
/// [`forcing_signal`].
pub fn forcing_ball_form(data: &CauchyBundle, t: f64, radial_order: usize, rule: &SphereRule) -> Result<f64> {
    let mut h = 0.0;
    if !data.phi.is_zero() {
        data.phi.require(2)?;
        let lo = data.phi.clearance();
        let hi = t.min(data.phi.reach());
        if hi > lo {
            let (r, w) = gauss_legendre_on(radial_order, lo, hi);
            for (r, w) in r.iter().zip(&w) {
                h += w * r * datum_mean(&data.phi, 2, [0.0; 3], *r, rule)?;
            }
        }
    }
    if !data.psi.is_zero() && t > 0.0 {
        h += t * datum_mean(&data.psi, 1, [0.0; 3], t, rule)?;
    }
    Ok(h)
}

/// Spherical mean of `Δ^lap` of a datum about the origin.
pub fn origin_mean(datum: &Datum, lap: usize, radius: f64, rule: &SphereRule) -> Result<f64> {
    datum_mean(datum, lap, [0.0; 3], radius, rule)
}
