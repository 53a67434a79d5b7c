use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::{ExperimentConfig, RunPlan};
use crate::effective::{
    modulation_closed_form, modulation_duhamel, ClosedFormOptions, EffectiveField, ModulationSignal, Route,
};
use crate::error::{Error, Result};
use crate::fdtd::{build_grid, run_observed, ContrastGrid, GridOptions, RunOptions, WaveField};
use crate::freewave::{forcing_signal, free_field, CauchyBundle, ForcingSignal};
use crate::geometry::{voxelize, DomainGrid, SphereRule};
use crate::newton::{eigensolve_captured_mass_with, eigensolve_with, EigenOptions, MatvecBackend, NewtonOperator, SpectralDecomposition};
use crate::norm;

/// Errors of one ε run, as sup over the sampled times of the discrete L²
/// norm over the comparison ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub eps: f64,
    /// `sup_t ‖u_ε − u_free‖` with only the origin node removed.
    pub e_free: f64,
    pub e_eff: f64,
    /// Same, outside the exclusion ball.
    pub e_free_excl: f64,
    pub e_eff_excl: f64,
    pub horizon: f64,
    pub tau: f64,
    pub h: f64,
    pub dt: f64,
    pub modes: usize,
    pub captured_mass: f64,
    pub runtime_seconds: f64,
}

/// Least-squares fit of `ln E = s ln ε + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval from the t distribution with `n − 2`
    /// degrees of freedom; degenerate when the fit is exact or `n = 2`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
    /// Change of the slope when the smallest ε is dropped (needs four
    /// points so that three remain).
    pub drop_finest_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub free: SlopeFit,
    pub eff: SlopeFit,
    pub free_excl: SlopeFit,
    pub eff_excl: SlopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub version: String,
    pub config: ExperimentConfig,
    /// Sorted by ε descending.
    pub rows: Vec<ErrorRow>,
    /// Present with at least three rows, all errors positive.
    pub slopes: Option<Slopes>,
    pub runtime_seconds: f64,
}

impl ErrorReport {
    pub fn new(config: ExperimentConfig, mut rows: Vec<ErrorRow>, runtime_seconds: f64) -> Result<Self> {
        rows.sort_by(|a, b| b.eps.partial_cmp(&a.eps).unwrap());
        // Fits need positive errors; a zero error leaves the slopes out.
        let slopes = if rows.len() >= 3 {
            let fit = |f: fn(&ErrorRow) -> f64| fit_slope(&rows.iter().map(|r| (r.eps, f(r))).collect::<Vec<_>>()).ok();
            (|| {
                Some(Slopes {
                    free: fit(|r| r.e_free)?,
                    eff: fit(|r| r.e_eff)?,
                    free_excl: fit(|r| r.e_free_excl)?,
                    eff_excl: fit(|r| r.e_eff_excl)?,
                })
            })()
        } else {
            None
        };
        Ok(ErrorReport {
            version: crate::VERSION.to_string(),
            config,
            rows,
            slopes,
            runtime_seconds,
        })
    }

    /// Rows where the effective field does not beat the free field.
    pub fn ordering_failures(&self, excl: bool) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| if excl { r.e_eff_excl >= r.e_free_excl } else { r.e_eff >= r.e_free })
            .map(|r| r.eps)
            .collect()
    }
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    (slope, intercept, (sse / (n - 2.0) / sxx).sqrt())
}

/// Log-log slope of `(ε, E)` pairs.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::param("slope fit needs at least two points"));
    }
    if points.iter().any(|(e, v)| !(*e > 0.0 && *v > 0.0)) {
        return Err(Error::Quality("slope fit needs positive eps and errors".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(e, v)| (e.ln(), v.ln())).collect();
    if logs.iter().all(|p| p.0 == logs[0].0) {
        return Err(Error::param("slope fit needs distinct eps values"));
    }
    let (slope, intercept, se) = least_squares(&logs);
    let dof = points.len() - 2;
    let half = if dof > 0 && se > 0.0 {
        let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Quality(e.to_string()))?;
        t.inverse_cdf(0.975) * se
    } else {
        0.0
    };
    let drop_finest_delta = if points.len() >= 4 {
        let finest = (0..points.len())
            .min_by(|&a, &b| points[a].0.partial_cmp(&points[b].0).unwrap())
            .unwrap();
        let rest: Vec<(f64, f64)> = logs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != finest)
            .map(|(_, p)| *p)
            .collect();
        Some(least_squares(&rest).0 - slope)
    } else {
        None
    };
    Ok(SlopeFit {
        slope,
        intercept,
        ci_low: slope - half,
        ci_high: slope + half,
        points: points.len(),
        drop_finest_delta,
    })
}

fn eigen_options(cfg: &ExperimentConfig) -> EigenOptions {
    EigenOptions {
        seed: cfg.seed,
        ..EigenOptions::default()
    }
}

/// Spectrum of `grid` with the configured mode rule.
pub fn spectrum_of(cfg: &ExperimentConfig, grid: DomainGrid) -> Result<SpectralDecomposition> {
    let op = NewtonOperator::new(Arc::new(grid), MatvecBackend::Auto);
    let s = &cfg.spectrum;
    match s.modes {
        Some(k) => eigensolve_with(&op, k.min(op.len()), eigen_options(cfg)),
        None => eigensolve_captured_mass_with(&op, s.captured_mass_deficit, s.max_modes, eigen_options(cfg)),
    }
}

/// Spectrum of the inclusion voxelized at `spectrum.resolution`.
pub fn reference_spectrum(cfg: &ExperimentConfig) -> Result<SpectralDecomposition> {
    spectrum_of(cfg, voxelize(&cfg.domain, cfg.spectrum.resolution)?)
}

pub fn forcing(cfg: &ExperimentConfig, data: &CauchyBundle, horizon: f64) -> Result<ForcingSignal> {
    let rule = SphereRule::new(cfg.signal.sphere_order)?;
    forcing_signal(data, cfg.signal.dt, horizon + cfg.signal.dt, &rule)
}

/// `q(t)` on `[0, horizon]` by the configured route; with `check_routes`
/// the other route is computed too and must agree.
pub fn modulation(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    data: &CauchyBundle,
    horizon: f64,
) -> Result<ModulationSignal> {
    let opts = ClosedFormOptions {
        sphere_order: cfg.signal.sphere_order,
        ..ClosedFormOptions::default()
    };
    let dt = cfg.signal.dt;
    let closed = || modulation_closed_form(dec, data, dt, horizon + dt, &opts);
    let ode = || -> Result<ModulationSignal> { modulation_duhamel(dec, &forcing(cfg, data, horizon)?) };
    let main = match cfg.signal.route {
        Route::ClosedForm => closed()?,
        Route::DuhamelOde => ode()?,
    };
    if cfg.signal.check_routes {
        let other = match cfg.signal.route {
            Route::ClosedForm => ode()?,
            Route::DuhamelOde => closed()?,
        };
        let gap = route_gap(&main, &other);
        if gap > cfg.signal.route_tolerance {
            return Err(Error::Quality(format!(
                "closed-form and Duhamel signals differ by {gap:.3e} relative sup-norm (tolerance {:.1e})",
                cfg.signal.route_tolerance
            )));
        }
    }
    Ok(main)
}

/// Relative sup-norm gap between two signals on their common samples.
pub fn route_gap(a: &ModulationSignal, b: &ModulationSignal) -> f64 {
    let n = a.total.len().min(b.total.len());
    let scale = a.total[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = a.total[..n]
        .iter()
        .zip(&b.total[..n])
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        gap / scale
    } else {
        gap
    }
}

/// Squared-norm sums `[free, eff, free_excl, eff_excl]` on one snapshot,
/// reduced plane by plane in a fixed order.
fn snapshot_norms(w: &WaveField, eff: &EffectiveField, rule: &SphereRule, radius: f64, exclusion: f64) -> Result<[f64; 4]> {
    let plane = w.dims[1] * w.dims[2];
    let origin_mask = 0.5 * w.h;
    let sums = (0..w.dims[0])
        .into_par_iter()
        .map(|i| {
            let mut s = [0.0; 4];
            for flat in i * plane..(i + 1) * plane {
                let x = w.position(flat);
                let r = norm(x);
                if r > radius || r < origin_mask {
                    continue;
                }
                let u = w.values[flat];
                let free = free_field(&eff.data, w.time, x, eff.source_step, rule)?;
                let corr = eff.correction(w.time, x)?;
                let df = (u - free).powi(2);
                let de = (u - free - corr).powi(2);
                s[0] += df;
                s[1] += de;
                if r >= exclusion {
                    s[2] += df;
                    s[3] += de;
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<[f64; 4]>>>()?;
    let mut total = [0.0; 4];
    for s in sums {
        for k in 0..4 {
            total[k] += s[k];
        }
    }
    let cell = w.h.powi(3);
    Ok(total.map(|v| (v * cell).sqrt()))
}

/// Box plan and grid for the run at `eps`.
pub fn contrast_grid(cfg: &ExperimentConfig, eps: f64) -> Result<(RunPlan, ContrastGrid)> {
    let mut one = cfg.clone();
    one.eps = vec![eps];
    one.fdtd.h = Some(cfg.grid_spacing());
    let plan = one.plan()?[0];
    let grid = build_grid(&GridOptions {
        half_width: plan.half_width,
        h: plan.h,
        eps,
        domain: cfg.domain,
        n_min: cfg.fdtd.n_min,
        cfl: cfg.fdtd.cfl,
        blend: cfg.fdtd.blend,
        boundary: cfg.fdtd.boundary,
    })?;
    Ok((plan, grid))
}

/// Runs the full contrast problem at `eps` and measures it against the
/// free and the effective field.
pub fn compare(cfg: &ExperimentConfig, eps: f64) -> Result<ErrorRow> {
    let start = Instant::now();
    let data = cfg.bundle()?;
    let horizon = cfg.horizon(eps);
    let (_, grid) = contrast_grid(cfg, eps)?;
    let h = grid.h;
    let voxels = if cfg.spectrum.staircase {
        grid.inclusion_voxels()?
    } else {
        voxelize(&cfg.domain, cfg.spectrum.resolution)?
    };
    let dec = spectrum_of(cfg, voxels)?;
    let q = modulation(cfg, &dec.without_vectors(), &data, horizon)?;
    let mut eff = EffectiveField::new(eps, q, data.clone(), 0.0)?;
    eff.sphere_order = cfg.signal.sphere_order;
    let rule = SphereRule::new(cfg.signal.sphere_order)?;

    let c = &cfg.compare;
    let mut opts = RunOptions::new(horizon);
    let samples = (horizon / c.sample_interval - 1e-9).floor() as usize;
    opts.snapshot_times = (1..=samples).map(|k| k as f64 * c.sample_interval).collect();
    if opts.snapshot_times.last().is_none_or(|t| horizon - t > 1e-9) {
        opts.snapshot_times.push(horizon);
    }
    opts.snapshot_half_width = Some(c.radius);
    let mut worst = [0.0f64; 4];
    let out = run_observed(&grid, &data, &opts, &mut |w| {
        let n = snapshot_norms(w, &eff, &rule, c.radius, c.exclusion)?;
        for k in 0..4 {
            worst[k] = worst[k].max(n[k]);
        }
        Ok(())
    })?;
    Ok(ErrorRow {
        eps,
        e_free: worst[0],
        e_eff: worst[1],
        e_free_excl: worst[2],
        e_eff_excl: worst[3],
        horizon,
        tau: cfg.implied_tau(eps),
        h,
        dt: out.dt,
        modes: dec.len(),
        captured_mass: dec.captured_mass / dec.volume,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Validates `cfg`, runs every ε, and fits the slopes.
///
/// Runs go one after another; each one already uses every thread.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    run_sweep_with(cfg, |_| {})
}

/// As [`run_sweep`], reporting each finished row.
pub fn run_sweep_with(cfg: &ExperimentConfig, mut progress: impl FnMut(&ErrorRow)) -> Result<ErrorReport> {
    let start = Instant::now();
    cfg.validate()?;
    let mut order = cfg.eps.clone();
    order.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut rows = Vec::with_capacity(order.len());
    for eps in order {
        let row = compare(cfg, eps)?;
        progress(&row);
        rows.push(row);
    }
    ErrorReport::new(cfg.clone(), rows, start.elapsed().as_secs_f64())
}
