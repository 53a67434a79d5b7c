//! Modulation signal `q(t) = Σ_k q_k(t)` of the point scatterer and the
//! effective field it radiates.
//!
//! Each mode is the oscillator `λ_k q̈_k = −q_k + c_k h`, `q_k(0) = q̇_k(0) = 0`,
//! computed either from the Cauchy data directly (ball integrals against
//! `Δ²φ`, `Δψ`, `Δf`) or by convolving a sampled forcing `h` with the exact
//! sine kernel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freewave::{free_field, origin_mean, step_count, CauchyBundle, ForcingSignal, DEFAULT_SPHERE_ORDER};
use crate::geometry::{gauss_legendre_on, SphereRule};
use crate::newton::SpectralDecomposition;
use crate::{norm, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ClosedForm,
    DuhamelOde,
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Route::ClosedForm => "closed-form",
            Route::DuhamelOde => "duhamel-ode",
        })
    }
}

/// `q(t_i)` and its modal parts on `t_i = i·Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSignal {
    pub dt: f64,
    pub total: Vec<f64>,
    /// `per_mode[k][i] = q_{k+1}(t_i)`.
    pub per_mode: Vec<Vec<f64>>,
    pub route: Route,
}

impl ModulationSignal {
    fn from_modes(dt: f64, per_mode: Vec<Vec<f64>>, route: Route) -> Self {
        let n = per_mode.first().map_or(0, |m| m.len());
        let total = (0..n).map(|i| per_mode.iter().map(|m| m[i]).sum()).collect();
        ModulationSignal {
            dt,
            total,
            per_mode,
            route,
        }
    }

    pub fn modes(&self) -> usize {
        self.per_mode.len()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.total.len().max(1) - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.total.len()).map(move |i| i as f64 * self.dt)
    }

    /// Linear interpolation of `q`; zero for `t ≤ 0`, `None` past the horizon.
    pub fn at(&self, t: f64) -> Option<f64> {
        if t <= 0.0 {
            return Some(0.0);
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.total.len() {
            return (x <= (self.total.len() - 1) as f64 + 1e-9).then(|| *self.total.last().unwrap());
        }
        let f = x - i as f64;
        Some(self.total[i] * (1.0 - f) + self.total[i + 1] * f)
    }

    /// Sum of the leading `k` modes.
    pub fn truncated_total(&self, k: usize) -> Vec<f64> {
        (0..self.total.len())
            .map(|i| self.per_mode.iter().take(k).map(|m| m[i]).sum())
            .collect()
    }

    /// CSV with columns `t, q_total, q_1, …, q_K`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,q_total");
        for k in 1..=self.modes() {
            out.push_str(&format!(",q_{k}"));
        }
        out.push('\n');
        for (i, t) in self.times().enumerate() {
            out.push_str(&format!("{},{}", crate::Num(t), crate::Num(self.total[i])));
            for m in &self.per_mode {
                out.push_str(&format!(",{}", crate::Num(m[i])));
            }
            out.push('\n');
        }
        out
    }
}

fn check_spectrum(dec: &SpectralDecomposition) -> Result<()> {
    if dec.is_empty() {
        return Err(Error::param("empty spectral decomposition"));
    }
    Ok(())
}

/// Weights `(∫₀¹ (1−θ) e^{a(1−θ)} dθ, ∫₀¹ θ e^{a(1−θ)} dθ)`.
fn linear_kernel_weights(a: Complex64) -> (Complex64, Complex64) {
    if a.norm() < 0.25 {
        // Σ a^m/((m+2)·m!) and Σ a^m/((m+1)(m+2)·m!).
        let (mut w0, mut w1) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut term = Complex64::new(1.0, 0.0);
        for m in 0..20 {
            let mf = m as f64;
            w0 += term / (mf + 2.0);
            w1 += term / ((mf + 1.0) * (mf + 2.0));
            term = term * a / (mf + 1.0);
        }
        return (w0, w1);
    }
    let ea = a.exp();
    let j0 = (ea - 1.0) / a;
    let k1 = ea / a - (ea - 1.0) / (a * a);
    (k1, j0 - k1)
}

/// `q_k = (c_k/√λ_k) ∫₀ᵗ sin((t−s)/√λ_k) h(s) ds` with `h` piecewise linear
/// and the kernel integrated exactly on each step.
pub fn modulation_duhamel(dec: &SpectralDecomposition, h: &ForcingSignal) -> Result<ModulationSignal> {
    check_spectrum(dec)?;
    let lambda_min = *dec.eigenvalues.last().unwrap();
    let required = lambda_min.sqrt() / 8.0;
    if h.dt > required * (1.0 + 1e-12) {
        return Err(Error::Stability { dt: h.dt, required });
    }
    let dt = h.dt;
    let per_mode = dec
        .eigenvalues
        .par_iter()
        .zip(&dec.couplings)
        .map(|(&lambda, &c)| {
            let omega = 1.0 / lambda.sqrt();
            let rot = Complex64::from_polar(1.0, omega * dt);
            let (w0, w1) = linear_kernel_weights(Complex64::new(0.0, omega * dt));
            let mut z = Complex64::new(0.0, 0.0);
            let mut q = Vec::with_capacity(h.values.len());
            q.push(0.0);
            for win in h.values.windows(2) {
                z = rot * z + dt * (w0 * win[0] + w1 * win[1]);
                q.push(c * omega * z.im);
            }
            q
        })
        .collect();
    Ok(ModulationSignal::from_modes(dt, per_mode, Route::DuhamelOde))
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedFormOptions {
    /// Gauss–Legendre points per radial panel.
    pub radial_order: usize,
    /// Largest radial panel width.
    pub max_panel: f64,
    /// Sphere rule for data without closed-form spherical means.
    pub sphere_order: usize,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        ClosedFormOptions {
            radial_order: 12,
            max_panel: 0.05,
            sphere_order: DEFAULT_SPHERE_ORDER,
        }
    }
}

/// Spherical means about the origin needed by the closed form at one radius:
/// `MΔ²φ`, `MΔψ`, `MΔf`.
#[derive(Clone, Copy, Default)]
struct Means {
    phi: f64,
    psi: f64,
    src: f64,
}

struct RadialNodes<'a> {
    data: &'a CauchyBundle,
    rule: SphereRule,
    order: usize,
    edges: Vec<f64>,
    /// Per panel: nodes, weights, means.
    panels: Vec<(Vec<f64>, Vec<f64>, Vec<Means>)>,
}

impl<'a> RadialNodes<'a> {
    fn new(data: &'a CauchyBundle, opts: &ClosedFormOptions, max_width: f64) -> Result<Self> {
        let rule = SphereRule::new(opts.sphere_order)?;
        let (lo, hi) = (data.clearance(), data.reach());
        let mut cuts: Vec<f64> = data
            .phi
            .radial_breakpoints()
            .into_iter()
            .chain(data.psi.radial_breakpoints())
            .chain(data.source.iter().flat_map(|s| s.space.radial_breakpoints()))
            .filter(|r| *r > lo && *r < hi)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut edges = vec![lo];
        for w in cuts.windows(2) {
            let n = ((w[1] - w[0]) / max_width).ceil().max(1.0) as usize;
            for j in 1..=n {
                edges.push(w[0] + (w[1] - w[0]) * j as f64 / n as f64);
            }
        }
        let mut nodes = RadialNodes {
            data,
            rule,
            order: opts.radial_order,
            edges: Vec::new(),
            panels: Vec::new(),
        };
        let panels = edges
            .windows(2)
            .map(|w| nodes.panel(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        nodes.edges = edges;
        nodes.panels = panels;
        Ok(nodes)
    }

    fn means(&self, r: f64) -> Result<Means> {
        let d = self.data;
        Ok(Means {
            phi: origin_mean(&d.phi, 2, r, &self.rule)?,
            psi: origin_mean(&d.psi, 1, r, &self.rule)?,
            src: match &d.source {
                Some(s) => origin_mean(&s.space, 1, r, &self.rule)?,
                None => 0.0,
            },
        })
    }

    fn panel(&self, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<Means>)> {
        let (x, w) = gauss_legendre_on(self.order, a, b);
        let m = x.iter().map(|&r| self.means(r)).collect::<Result<_>>()?;
        Ok((x, w, m))
    }

    /// Calls `f(r, w, means)` for every node in `[lo, t]`.
    fn for_each_below<F: FnMut(f64, f64, &Means)>(&self, t: f64, mut f: F) -> Result<()> {
        for (i, (x, w, m)) in self.panels.iter().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            if a >= t {
                break;
            }
            if b <= t {
                for j in 0..x.len() {
                    f(x[j], w[j], &m[j]);
                }
            } else {
                let (x, w, m) = self.panel(a, t)?;
                for j in 0..x.len() {
                    f(x[j], w[j], &m[j]);
                }
            }
        }
        Ok(())
    }
}

/// `G(τ) = ∫₀^τ g(s) e^{−iωs} ds` tabulated on a fine grid with cubic
/// Hermite interpolation (the derivative is known exactly).
struct SourceKernel {
    omega: f64,
    step: f64,
    values: Vec<Complex64>,
    time: crate::freewave::TimeProfile,
}

impl SourceKernel {
    fn new(time: crate::freewave::TimeProfile, omega: f64, horizon: f64) -> Self {
        let period = 2.0 * PI / omega;
        let step = (period / 64.0).min(2e-3);
        let n = (horizon / step).ceil() as usize + 1;
        let (gx, gw) = crate::geometry::gauss_legendre(6);
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = Complex64::new(0.0, 0.0);
        values.push(acc);
        for j in 0..n {
            let a = j as f64 * step;
            for (x, w) in gx.iter().zip(&gw) {
                let s = a + 0.5 * step * (1.0 + x);
                acc += 0.5 * step * w * time.eval(s) * Complex64::from_polar(1.0, -omega * s);
            }
            values.push(acc);
        }
        SourceKernel {
            omega,
            step,
            values,
            time,
        }
    }

    fn derivative(&self, s: f64) -> Complex64 {
        self.time.eval(s) * Complex64::from_polar(1.0, -self.omega * s)
    }

    fn eval(&self, tau: f64) -> Complex64 {
        if tau <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let x = tau / self.step;
        let j = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - j as f64;
        let (t0, t1) = (j as f64 * self.step, (j + 1) as f64 * self.step);
        let (p0, p1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.derivative(t0) * self.step, self.derivative(t1) * self.step);
        let (f2, f3) = (f * f, f * f * f);
        p0 * (2.0 * f3 - 3.0 * f2 + 1.0) + m0 * (f3 - 2.0 * f2 + f) + p1 * (-2.0 * f3 + 3.0 * f2) + m1 * (f3 - f2)
    }

    /// `∫₀^τ g(s) sin(ω(τ−s)) ds`.
    fn sine_convolution(&self, tau: f64) -> f64 {
        (Complex64::from_polar(1.0, self.omega * tau) * self.eval(tau)).im
    }
}

/// `q_k(t) = c_k ∫_{|y|<t} [(1 − cos((t−|y|)/√λ_k)) Δ²φ + λ_k^{-1/2} sin((t−|y|)/√λ_k) Δψ] / (4π|y|) dy`
/// plus the source double integral, with the ball integral reduced to a
/// radial integral of spherical means over the data shell.
pub fn modulation_closed_form(
    dec: &SpectralDecomposition,
    data: &CauchyBundle,
    dt: f64,
    horizon: f64,
    opts: &ClosedFormOptions,
) -> Result<ModulationSignal> {
    check_spectrum(dec)?;
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::param(format!("need dt > 0 and horizon >= 0, got dt={dt}, T={horizon}")));
    }
    let steps = step_count(dt, horizon);
    let k = dec.len();
    if data.is_zero() {
        return Ok(ModulationSignal::from_modes(dt, vec![vec![0.0; steps + 1]; k], Route::ClosedForm));
    }
    data.validate()?;
    data.require_stacks()?;
    let lambda_min = *dec.eigenvalues.last().unwrap();
    let width = opts.max_panel.min(2.0 * PI * lambda_min.sqrt() / 4.0);
    let nodes = RadialNodes::new(data, opts, width)?;
    let omegas: Vec<f64> = dec.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
    let kernels: Option<Vec<SourceKernel>> = data
        .source
        .as_ref()
        .map(|s| omegas.iter().map(|&w| SourceKernel::new(s.time, w, horizon + dt)).collect());

    let rows = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 * dt;
            let mut q = vec![0.0; k];
            nodes.for_each_below(t, |r, w, m| {
                for (j, q) in q.iter_mut().enumerate() {
                    let om = omegas[j];
                    let arg = om * (t - r);
                    let mut v = (1.0 - arg.cos()) * m.phi + om * arg.sin() * m.psi;
                    if let Some(ks) = &kernels {
                        v += om * m.src * ks[j].sine_convolution(t - r);
                    }
                    *q += w * r * v;
                }
            })?;
            Ok(q.iter().zip(&dec.couplings).map(|(q, c)| q * c).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let per_mode = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Ok(ModulationSignal::from_modes(dt, per_mode, Route::ClosedForm))
}

/// `u_eff = u_free + û_free + ε(ε²−1) H(t−|x|) q(t−|x|)/(4π|x|)`.
#[derive(Debug, Clone)]
pub struct EffectiveField {
    pub eps: f64,
    pub signal: ModulationSignal,
    pub data: CauchyBundle,
    /// Points with `|x| < exclusion` are masked.
    pub exclusion: f64,
    /// Sphere rule and source step for data without closed forms.
    pub sphere_order: usize,
    pub source_step: f64,
}

impl EffectiveField {
    pub fn new(eps: f64, signal: ModulationSignal, data: CauchyBundle, exclusion: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::param(format!("eps must lie in (0,1), got {eps}")));
        }
        if !(exclusion >= 0.0) {
            return Err(Error::param(format!("exclusion radius must be >= 0, got {exclusion}")));
        }
        Ok(EffectiveField {
            eps,
            signal,
            data,
            exclusion,
            sphere_order: DEFAULT_SPHERE_ORDER,
            source_step: 1e-3,
        })
    }

    /// `ε(ε² − 1)`.
    pub fn coefficient(&self) -> f64 {
        self.eps * (self.eps * self.eps - 1.0)
    }

    /// The scattered part `ε(ε²−1) H(t−|x|) q(t−|x|)/(4π|x|)`.
    pub fn correction(&self, t: f64, x: Vec3) -> Result<f64> {
        let r = norm(x);
        if t < r {
            return Ok(0.0);
        }
        if r == 0.0 {
            return Err(Error::param("the effective field is singular at the scatterer"));
        }
        let tau = t - r;
        let q = self.signal.at(tau).ok_or(Error::Coverage {
            requested: tau,
            horizon: self.signal.horizon(),
        })?;
        Ok(self.coefficient() * q / (4.0 * PI * r))
    }

    /// `None` inside the exclusion ball.
    pub fn value(&self, t: f64, x: Vec3) -> Result<Option<f64>> {
        let rule = SphereRule::new(self.sphere_order)?;
        self.value_with(t, x, &rule)
    }

    fn value_with(&self, t: f64, x: Vec3, rule: &SphereRule) -> Result<Option<f64>> {
        if norm(x) < self.exclusion {
            return Ok(None);
        }
        let free = free_field(&self.data, t, x, self.source_step, rule)?;
        Ok(Some(free + self.correction(t, x)?))
    }

    pub fn sample(&self, t: f64, points: &[Vec3]) -> Result<Vec<Option<f64>>> {
        let rule = SphereRule::new(self.sphere_order)?;
        points.par_iter().map(|&x| self.value_with(t, x, &rule)).collect()
    }
}

/// Samples `u_eff(t, ·)` at `points`, masking the exclusion ball.
pub fn effective_field(
    data: &CauchyBundle,
    q: &ModulationSignal,
    eps: f64,
    t: f64,
    points: &[Vec3],
    exclusion: f64,
) -> Result<Vec<Option<f64>>> {
    EffectiveField::new(eps, q.clone(), data.clone(), exclusion)?.sample(t, points)
}
