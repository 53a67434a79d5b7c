//! Cauchy data: radial polynomial bumps with exact Laplacian stacks,
//! user-supplied fields, and separable sources.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{norm, sub, Vec3};

/// Highest Laplacian power carried by a bump (`Δ³` is what the remainder
/// estimate is stated in).
pub const STACK_DEPTH: usize = 4;

pub type FieldFn = Arc<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// Shape parameters of a radial bump, as written in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BumpSpec {
    /// `A (1 − s²/R²)^n` for `s = |y − c| < R`.
    Ball {
        center: Vec3,
        radius: f64,
        amplitude: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
    /// `A [4(s² − a²)(b² − s²)/(b² − a²)²]^n` for `a < s < b`, peak value `A`.
    Shell {
        #[serde(default)]
        center: Vec3,
        inner: f64,
        outer: f64,
        amplitude: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
}

fn default_order() -> u32 {
    8
}

/// Radial profile `P(s)`, `s = |y − c|`, that is a polynomial in `s²` on
/// `[inner, outer]` and zero elsewhere.
///
/// Coefficients are kept in the centred variable `u = (s² − σ₀)/L`, which
/// maps the support onto `[−1, 1]`. For a radial `f(σ)`, `σ = s²`, the
/// Laplacian is `4σ f'' + 6 f'`, so the stack `Δ^m P` stays polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBump {
    pub center: Vec3,
    pub inner: f64,
    pub outer: f64,
    sigma0: f64,
    half: f64,
    /// `stack[m][j]` is the coefficient of `u^j` in `Δ^m P`.
    stack: Vec<Vec<f64>>,
    /// Smoothness order `n`: the bump is `C^{n−1}` across its support edges.
    pub order: u32,
}

fn poly_pow(base: &[f64], n: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; out.len() + base.len() - 1];
        for (i, a) in out.iter().enumerate() {
            for (j, b) in base.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        out = next;
    }
    out
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    (1..c.len()).map(|j| j as f64 * c[j]).collect()
}

impl RadialBump {
    pub fn from_spec(spec: &BumpSpec) -> Result<Self> {
        match *spec {
            BumpSpec::Ball {
                center,
                radius,
                amplitude,
                order,
            } => {
                if !(radius > 0.0) || order < 1 {
                    return Err(Error::param(format!("invalid ball bump {spec:?}")));
                }
                // 1 − s²/R² = (1 − u)/2.
                let coeffs = poly_pow(&[0.5, -0.5], order).into_iter().map(|c| c * amplitude).collect();
                let r2 = radius * radius;
                Ok(Self::from_coeffs(center, 0.0, radius, r2 / 2.0, r2 / 2.0, coeffs, order))
            }
            BumpSpec::Shell {
                center,
                inner,
                outer,
                amplitude,
                order,
            } => {
                if !(inner > 0.0 && outer > inner) || order < 1 {
                    return Err(Error::param(format!("invalid shell bump {spec:?}")));
                }
                // 4(s² − a²)(b² − s²)/(b² − a²)² = 1 − u².
                let (a2, b2) = (inner * inner, outer * outer);
                let coeffs = poly_pow(&[1.0, 0.0, -1.0], order).into_iter().map(|c| c * amplitude).collect();
                Ok(Self::from_coeffs(center, inner, outer, (a2 + b2) / 2.0, (b2 - a2) / 2.0, coeffs, order))
            }
        }
    }

    fn from_coeffs(center: Vec3, inner: f64, outer: f64, sigma0: f64, half: f64, coeffs: Vec<f64>, order: u32) -> Self {
        let mut stack = vec![coeffs];
        for m in 1..STACK_DEPTH {
            // Δg = (4(σ₀ + L u) g'' + 6 L g') / L².
            let d1 = derivative(&stack[m - 1]);
            let d2 = derivative(&d1);
            let mut next = vec![0.0; d1.len().max(d2.len() + 1)];
            for (j, c) in d2.iter().enumerate() {
                next[j] += 4.0 * sigma0 * c / (half * half);
                next[j + 1] += 4.0 * c / half;
            }
            for (j, c) in d1.iter().enumerate() {
                next[j] += 6.0 * c / half;
            }
            stack.push(next);
        }
        RadialBump {
            center,
            inner,
            outer,
            sigma0,
            half,
            stack,
            order,
        }
    }

    pub fn coefficients(&self, lap: usize) -> &[f64] {
        &self.stack[lap]
    }

    fn u(&self, s: f64) -> f64 {
        ((s * s - self.sigma0) / self.half).clamp(-1.0, 1.0)
    }

    /// `Δ^lap P` as a function of `s`.
    pub fn profile(&self, lap: usize, s: f64) -> f64 {
        if s < self.inner || s > self.outer {
            return 0.0;
        }
        horner(&self.stack[lap], self.u(s))
    }

    /// `d/ds Δ^lap P`.
    pub fn profile_derivative(&self, lap: usize, s: f64) -> f64 {
        if s < self.inner || s > self.outer {
            return 0.0;
        }
        2.0 * s * horner(&derivative(&self.stack[lap]), self.u(s)) / self.half
    }

    /// `(1/s) d/ds Δ^lap P`, regular at `s = 0`.
    pub fn slope_over_s(&self, lap: usize, s: f64) -> f64 {
        if s < self.inner || s > self.outer {
            return 0.0;
        }
        2.0 * horner(&derivative(&self.stack[lap]), self.u(s)) / self.half
    }

    /// Polynomial degree of `Δ^lap P` in `s²`.
    pub fn degree(&self, lap: usize) -> usize {
        self.stack[lap].len() - 1
    }

    /// `I(s) = ∫_0^s σ Δ^lap P(σ) dσ`.
    pub fn moment_integral(&self, lap: usize, s: f64) -> f64 {
        // ∫ s P ds = (L/2) ∫ g du.
        let c = &self.stack[lap];
        let prim = |u: f64| -> f64 {
            let mut acc = 0.0;
            for j in (0..c.len()).rev() {
                acc = acc * u + c[j] / (j as f64 + 1.0);
            }
            acc * u
        };
        let s = s.abs();
        if s <= self.inner {
            return 0.0;
        }
        let top = if s >= self.outer { 1.0 } else { self.u(s) };
        0.5 * self.half * (prim(top) - prim(-1.0))
    }

    pub fn value(&self, lap: usize, x: Vec3) -> f64 {
        self.profile(lap, norm(sub(x, self.center)))
    }

    pub fn gradient(&self, lap: usize, x: Vec3) -> Vec3 {
        let d = sub(x, self.center);
        let s = norm(d);
        if s == 0.0 {
            return [0.0; 3];
        }
        let g = self.profile_derivative(lap, s) / s;
        [g * d[0], g * d[1], g * d[2]]
    }

    /// Distance from the origin to the support.
    pub fn clearance(&self) -> f64 {
        let d = norm(self.center);
        if d <= self.inner {
            self.inner - d
        } else if d >= self.outer {
            d - self.outer
        } else {
            0.0
        }
    }

    /// Distance from the origin to the farthest support point.
    pub fn reach(&self) -> f64 {
        norm(self.center) + self.outer
    }

    /// Sup of `|Δ^lap P|` sampled on a fine grid of the support.
    pub fn sup(&self, lap: usize) -> f64 {
        let n = 2000;
        (0..=n)
            .map(|i| {
                let s = self.inner + (self.outer - self.inner) * i as f64 / n as f64;
                self.profile(lap, s).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// A field with optional Laplacian stack, for data outside the bump family.
#[derive(Clone)]
pub struct CustomField {
    pub value: FieldFn,
    /// `laplacians[m-1]` is `Δ^m` of the field.
    pub laplacians: Vec<FieldFn>,
    pub clearance: f64,
    pub reach: f64,
}

/// One Cauchy datum (initial value, velocity, or spatial factor of a source).
#[derive(Clone, Default)]
pub enum Datum {
    #[default]
    Zero,
    Bumps(Vec<RadialBump>),
    Custom(CustomField),
}

impl fmt::Debug for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Zero => write!(f, "Zero"),
            Datum::Bumps(b) => f.debug_tuple("Bumps").field(b).finish(),
            Datum::Custom(c) => write!(f, "Custom(laplacians: {}, clearance: {})", c.laplacians.len(), c.clearance),
        }
    }
}

impl Datum {
    pub fn bumps(specs: &[BumpSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Ok(Datum::Zero);
        }
        Ok(Datum::Bumps(specs.iter().map(RadialBump::from_spec).collect::<Result<_>>()?))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Datum::Zero)
    }

    /// Evaluates `Δ^lap` of the datum at `x`.
    pub fn eval(&self, lap: usize, x: Vec3) -> Result<f64> {
        match self {
            Datum::Zero => Ok(0.0),
            Datum::Bumps(b) => {
                if lap >= STACK_DEPTH {
                    return Err(Error::Capability(format!("Laplacian power {lap} beyond stack depth")));
                }
                Ok(b.iter().map(|b| b.value(lap, x)).sum())
            }
            Datum::Custom(c) => {
                if lap == 0 {
                    Ok((c.value)(x))
                } else {
                    c.laplacians
                        .get(lap - 1)
                        .map(|f| f(x))
                        .ok_or_else(|| Error::Capability(format!("datum has no analytic Laplacian of power {lap}")))
                }
            }
        }
    }

    /// Fails with a capability error unless `Δ^lap` is available.
    pub fn require(&self, lap: usize) -> Result<()> {
        self.eval(lap, [0.0; 3]).map(|_| ())
    }

    /// Gradient of `Δ^lap`; central differences for custom fields.
    pub fn gradient(&self, lap: usize, x: Vec3) -> Result<Vec3> {
        match self {
            Datum::Zero => Ok([0.0; 3]),
            Datum::Bumps(b) => Ok(b.iter().fold([0.0; 3], |acc, b| crate::add(acc, b.gradient(lap, x)))),
            Datum::Custom(_) => {
                let step = 1e-5;
                let mut g = [0.0; 3];
                for a in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[a] += step;
                    xm[a] -= step;
                    g[a] = (self.eval(lap, xp)? - self.eval(lap, xm)?) / (2.0 * step);
                }
                Ok(g)
            }
        }
    }

    pub fn clearance(&self) -> f64 {
        match self {
            Datum::Zero => f64::INFINITY,
            Datum::Bumps(b) => b.iter().map(|b| b.clearance()).fold(f64::INFINITY, f64::min),
            Datum::Custom(c) => c.clearance,
        }
    }

    pub fn reach(&self) -> f64 {
        match self {
            Datum::Zero => 0.0,
            Datum::Bumps(b) => b.iter().map(|b| b.reach()).fold(0.0, f64::max),
            Datum::Custom(c) => c.reach,
        }
    }

    /// Distance from `x` to the support (lower bound for custom fields).
    pub fn distance_from(&self, x: Vec3) -> f64 {
        match self {
            Datum::Zero => f64::INFINITY,
            Datum::Bumps(b) => b
                .iter()
                .map(|b| {
                    let d = norm(sub(x, b.center));
                    if d <= b.inner {
                        b.inner - d
                    } else if d >= b.outer {
                        d - b.outer
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min),
            Datum::Custom(c) => (c.clearance - norm(x)).max(0.0),
        }
    }

    /// Radii about the origin where spherical means of a bump datum lose
    /// smoothness.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        match self {
            Datum::Bumps(b) => b
                .iter()
                .flat_map(|b| {
                    let d = norm(b.center);
                    [d - b.outer, d - b.inner, b.inner - d, d + b.inner, d + b.outer]
                })
                .filter(|r| *r > 0.0)
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn as_bumps(&self) -> Option<&[RadialBump]> {
        match self {
            Datum::Zero => Some(&[]),
            Datum::Bumps(b) => Some(b),
            Datum::Custom(_) => None,
        }
    }
}

/// Time factor `g(s)` of a separable source `f(s, y) = g(s)·F(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    Constant { value: f64 },
    /// `A (1 − ((s − c)/w)²)^4` on `|s − c| < w`.
    Pulse { center: f64, half_width: f64, amplitude: f64 },
    /// `A sin(ω s)`.
    Sine { omega: f64, amplitude: f64 },
}

impl TimeProfile {
    pub fn eval(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Pulse {
                center,
                half_width,
                amplitude,
            } => {
                let x = (s - center) / half_width;
                if x.abs() >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - x * x).powi(4)
                }
            }
            TimeProfile::Sine { omega, amplitude } => amplitude * (omega * s).sin(),
        }
    }

    /// Points where the profile is not smooth, for quadrature splitting.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            TimeProfile::Pulse {
                center, half_width, ..
            } => vec![center - half_width, center + half_width],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceTerm {
    pub space: Datum,
    pub time: TimeProfile,
}

/// Initial value `φ`, initial velocity `ψ`, and source `f`.
#[derive(Debug, Clone, Default)]
pub struct CauchyBundle {
    pub phi: Datum,
    pub psi: Datum,
    pub source: Option<SourceTerm>,
}

impl CauchyBundle {
    pub fn new(phi: Datum, psi: Datum, source: Option<SourceTerm>) -> Result<Self> {
        let b = CauchyBundle { phi, psi, source };
        b.validate()?;
        Ok(b)
    }

    pub fn is_zero(&self) -> bool {
        self.phi.is_zero() && self.psi.is_zero() && self.source.as_ref().is_none_or(|s| s.space.is_zero())
    }

    fn data(&self) -> impl Iterator<Item = &Datum> {
        [&self.phi, &self.psi]
            .into_iter()
            .chain(self.source.as_ref().map(|s| &s.space))
    }

    /// Inner clearance `ρ_min`: distance from the origin to every support.
    pub fn clearance(&self) -> f64 {
        self.data().map(Datum::clearance).fold(f64::INFINITY, f64::min)
    }

    /// Outer radius `ρ_max`.
    pub fn reach(&self) -> f64 {
        self.data().map(Datum::reach).fold(0.0, f64::max)
    }

    /// Distance from `x` to the union of the supports.
    pub fn distance_from(&self, x: Vec3) -> f64 {
        self.data().map(|d| d.distance_from(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_zero() {
            return Ok(());
        }
        let c = self.clearance();
        if !(c > 0.0) {
            return Err(Error::param(format!(
                "data support must stay away from the scatterer (clearance {c})"
            )));
        }
        Ok(())
    }

    /// Checks that the analytic stacks needed by the modulation formulas
    /// exist: `Δ²φ`, `Δψ`, `Δf`.
    pub fn require_stacks(&self) -> Result<()> {
        self.phi.require(2)?;
        self.psi.require(1)?;
        if let Some(s) = &self.source {
            s.space.require(1)?;
        }
        Ok(())
    }

    /// Sum of two bundles; sources must share the time profile.
    pub fn plus(&self, other: &CauchyBundle) -> Result<CauchyBundle> {
        fn join(a: &Datum, b: &Datum) -> Result<Datum> {
            match (a, b) {
                (Datum::Zero, x) | (x, Datum::Zero) => Ok(x.clone()),
                (Datum::Bumps(x), Datum::Bumps(y)) => Ok(Datum::Bumps(x.iter().chain(y).cloned().collect())),
                _ => Err(Error::Capability("only bump data can be added".into())),
            }
        }
        let source = match (&self.source, &other.source) {
            (None, None) => None,
            (Some(s), None) | (None, Some(s)) => Some(s.clone()),
            (Some(a), Some(b)) if a.time == b.time => Some(SourceTerm {
                space: join(&a.space, &b.space)?,
                time: a.time,
            }),
            _ => return Err(Error::Capability("sources with different time profiles".into())),
        };
        Ok(CauchyBundle {
            phi: join(&self.phi, &other.phi)?,
            psi: join(&self.psi, &other.psi)?,
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_laplacian(f: &dyn Fn(Vec3) -> f64, x: Vec3, h: f64) -> f64 {
        let mut acc = -6.0 * f(x);
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            acc += f(xp) + f(xm);
        }
        acc / (h * h)
    }

    #[test]
    fn ball_bump_shape() {
        let b = RadialBump::from_spec(&BumpSpec::Ball {
            center: [0.0; 3],
            radius: 0.5,
            amplitude: 2.0,
            order: 8,
        })
        .unwrap();
        assert!((b.profile(0, 0.0) - 2.0).abs() < 1e-14);
        assert_eq!(b.profile(0, 0.6), 0.0);
        assert!(b.profile(0, 0.4999).abs() < 1e-14);
    }

    #[test]
    fn shell_peak_is_amplitude() {
        let b = RadialBump::from_spec(&BumpSpec::Shell {
            center: [0.0; 3],
            inner: 0.5,
            outer: 1.25,
            amplitude: 1.5,
            order: 8,
        })
        .unwrap();
        let s_peak = ((0.25 + 1.5625) / 2.0f64).sqrt();
        assert!((b.profile(0, s_peak) - 1.5).abs() < 1e-12);
        assert_eq!(b.clearance(), 0.5);
        assert_eq!(b.reach(), 1.25);
    }

    #[test]
    fn laplacian_stack_matches_stencil() {
        let b = RadialBump::from_spec(&BumpSpec::Ball {
            center: [1.0, 0.2, -0.1],
            radius: 0.6,
            amplitude: 1.0,
            order: 8,
        })
        .unwrap();
        let pts = [[1.1, 0.3, 0.0], [0.8, 0.1, -0.3], [1.3, 0.2, 0.1]];
        for lap in 0..3 {
            for x in pts {
                let exact = b.value(lap + 1, x);
                let f = |y: Vec3| b.value(lap, y);
                let e1 = (numeric_laplacian(&f, x, 2e-3) - exact).abs();
                let e2 = (numeric_laplacian(&f, x, 1e-3) - exact).abs();
                // Second order: halving h divides the error by ~4.
                assert!(e2 < 0.3 * e1 + 1e-9 * exact.abs().max(1.0), "lap {lap}: {e1} {e2}");
            }
        }
    }

    #[test]
    fn moment_integral_matches_quadrature() {
        let b = RadialBump::from_spec(&BumpSpec::Shell {
            center: [0.0; 3],
            inner: 0.3,
            outer: 0.9,
            amplitude: 1.0,
            order: 6,
        })
        .unwrap();
        for s in [0.2, 0.5, 0.9, 1.3] {
            let num = crate::geometry::integrate(|x| x * b.profile(1, x), 0.0, s, 10, 200);
            assert!((num - b.moment_integral(1, s)).abs() < 1e-9 * b.sup(1));
        }
    }

    #[test]
    fn bundle_clearance_and_validation() {
        let bundle = CauchyBundle::new(
            Datum::bumps(&[BumpSpec::Ball {
                center: [1.0, 0.0, 0.0],
                radius: 0.4,
                amplitude: 1.0,
                order: 8,
            }])
            .unwrap(),
            Datum::Zero,
            None,
        )
        .unwrap();
        assert!((bundle.clearance() - 0.6).abs() < 1e-15);
        assert!((bundle.reach() - 1.4).abs() < 1e-15);
        let bad = CauchyBundle::new(
            Datum::bumps(&[BumpSpec::Ball {
                center: [0.1, 0.0, 0.0],
                radius: 0.4,
                amplitude: 1.0,
                order: 8,
            }])
            .unwrap(),
            Datum::Zero,
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn custom_field_without_stack_is_a_capability_error() {
        let custom = Datum::Custom(CustomField {
            value: Arc::new(|x: Vec3| x[0]),
            laplacians: vec![],
            clearance: 1.0,
            reach: 2.0,
        });
        let bundle = CauchyBundle::new(custom, Datum::Zero, None).unwrap();
        assert!(matches!(bundle.require_stacks(), Err(Error::Capability(_))));
    }
}
