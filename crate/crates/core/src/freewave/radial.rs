//! Closed-form free solutions for bump data.
//!
//! A radial datum about `c` evolves as a radial wave about `c`, so the
//! three-dimensional problem reduces to the one-dimensional d'Alembert
//! formula in `r = |x − c|`. This is exact up to roundoff and orders of
//! magnitude cheaper than sphere quadrature, which matters when fields are
//! sampled on millions of grid cells.

use super::data::{CauchyBundle, Datum, RadialBump};
use crate::error::{Error, Result};
use crate::geometry::gauss_legendre;
use crate::{norm, sub, Vec3};

const SMALL_R: f64 = 1e-7;

/// Response to initial value `P` (zero velocity) at radius `r`, time `t`.
fn value_response(b: &RadialBump, lap: usize, t: f64, r: f64) -> f64 {
    if r < SMALL_R {
        return b.profile(lap, t) + t * b.profile_derivative(lap, t);
    }
    let fwd = (r + t) * b.profile(lap, r + t);
    let d = r - t;
    let bwd = d * b.profile(lap, d.abs());
    (fwd + bwd) / (2.0 * r)
}

/// Response to initial velocity `P` (zero value).
fn velocity_response(b: &RadialBump, lap: usize, t: f64, r: f64) -> f64 {
    if r < SMALL_R {
        return t * b.profile(lap, t);
    }
    (b.moment_integral(lap, r + t) - b.moment_integral(lap, (r - t).abs())) / (2.0 * r)
}

fn bumps(d: &Datum) -> Result<&[RadialBump]> {
    d.as_bumps()
        .ok_or_else(|| Error::Capability("closed-form evaluation needs bump data".into()))
}

/// `u_free(t, x) + û_free(t, x)` for data `Δ^lap φ, Δ^lap ψ, Δ^lap f`.
pub fn free_field_radial_lap(data: &CauchyBundle, lap: usize, t: f64, x: Vec3) -> Result<f64> {
    let mut u = 0.0;
    for b in bumps(&data.phi)? {
        let r = norm(sub(x, b.center));
        u += value_response(b, lap, t, r);
    }
    for b in bumps(&data.psi)? {
        let r = norm(sub(x, b.center));
        u += velocity_response(b, lap, t, r);
    }
    if let Some(src) = &data.source {
        let space = bumps(&src.space)?;
        for b in space {
            let r = norm(sub(x, b.center));
            // Kinks of the retarded response in τ = t − s.
            let mut cuts: Vec<f64> = [b.inner - r, b.outer - r, r - b.inner, r - b.outer, b.inner + r, b.outer + r]
                .into_iter()
                .map(|tau| t - tau)
                .chain(src.time.breakpoints())
                .filter(|s| *s > 0.0 && *s < t)
                .collect();
            cuts.push(0.0);
            cuts.push(t);
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (gx, gw) = gauss_legendre(12);
            for win in cuts.windows(2) {
                let (a, bnd) = (win[0], win[1]);
                if bnd - a <= 0.0 {
                    continue;
                }
                let panels = ((bnd - a) / 0.05).ceil().max(1.0) as usize;
                let width = (bnd - a) / panels as f64;
                for p in 0..panels {
                    let mid = a + (p as f64 + 0.5) * width;
                    for (xi, wi) in gx.iter().zip(&gw) {
                        let s = mid + 0.5 * width * xi;
                        let g = src.time.eval(s);
                        if g != 0.0 {
                            u += 0.5 * width * wi * g * velocity_response(b, lap, t - s, r);
                        }
                    }
                }
            }
        }
    }
    Ok(u)
}

/// `u_free + û_free` at `(t, x)`.
pub fn free_field_radial(data: &CauchyBundle, t: f64, x: Vec3) -> Result<f64> {
    free_field_radial_lap(data, 0, t, x)
}

/// `h(t) = Δ(u_free + û_free)(t, 0)` in closed form.
pub fn forcing_radial(data: &CauchyBundle, t: f64) -> Result<f64> {
    free_field_radial_lap(data, 1, t, [0.0; 3])
}
