use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::effective::Route;
use crate::error::{Error, Result};
use crate::fdtd::{causal_half_width, required_spacing, Boundary};
use crate::freewave::{BumpSpec, CauchyBundle, Datum, SourceTerm, TimeProfile, DEFAULT_SPHERE_ORDER};
use crate::geometry::DomainSpec;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "POINTWAVE_";

/// One experiment: inclusion, ε list, data, and solver settings.
///
/// Stored as TOML. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "DomainSpec::unit_ball")]
    pub domain: DomainSpec,
    pub eps: Vec<f64>,
    pub data: DataConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub fdtd: FdtdConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Seed of the eigensolver start block.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("pointwave-out")
}

fn default_seed() -> u64 {
    0x5eed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub phi: Vec<BumpSpec>,
    #[serde(default)]
    pub psi: Vec<BumpSpec>,
    pub source: Option<SourceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub bumps: Vec<BumpSpec>,
    pub time: TimeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// Cells across the inclusion for stand-alone spectra.
    pub resolution: usize,
    /// Fixed mode count; otherwise the captured-mass rule picks it.
    pub modes: Option<usize>,
    pub captured_mass_deficit: f64,
    pub max_modes: usize,
    /// In comparisons, take the spectrum of the inclusion as the FDTD grid
    /// resolves it rather than of a separate voxelization.
    pub staircase: bool,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            resolution: 24,
            modes: None,
            captured_mass_deficit: 0.005,
            max_modes: 64,
            staircase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub horizon: f64,
    /// When set, each run uses `T = ε^{−τ}` instead of `horizon`.
    pub tau: Option<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { horizon: 3.0, tau: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub dt: f64,
    pub route: Route,
    /// Compute both routes and fail when they disagree.
    pub check_routes: bool,
    pub route_tolerance: f64,
    pub sphere_order: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            dt: 0.002,
            route: Route::DuhamelOde,
            check_routes: false,
            route_tolerance: 1e-3,
            sphere_order: DEFAULT_SPHERE_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdtdConfig {
    /// Grid spacing; defaults to the resolution rule at the smallest ε.
    pub h: Option<f64>,
    pub cfl: f64,
    pub n_min: usize,
    pub blend: bool,
    pub boundary: Boundary,
    /// Extra box half-width beyond the causal minimum.
    pub margin: f64,
    pub memory_budget_mb: f64,
}

impl Default for FdtdConfig {
    fn default() -> Self {
        FdtdConfig {
            h: None,
            cfl: 0.9,
            n_min: 8,
            blend: false,
            boundary: Boundary::Reflecting,
            margin: 0.1,
            memory_budget_mb: 4096.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    /// Norms are taken over the ball of this radius about the origin.
    pub radius: f64,
    /// Radius of the exclusion ball for the `_excl` norms.
    pub exclusion: f64,
    /// Spacing of the sampled comparison times.
    pub sample_interval: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            radius: 1.5,
            exclusion: 0.5,
            sample_interval: 0.25,
        }
    }
}

/// Box and memory for one ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub eps: f64,
    pub horizon: f64,
    pub h: f64,
    pub half_width: f64,
    pub nodes_per_axis: usize,
    pub memory_bytes: f64,
}

fn nodes_per_axis(half_width: f64, h: f64) -> usize {
    2 * ((half_width / h - 1e-9).ceil() as usize) + 1
}

/// Two time levels of the full box plus the comparison snapshot.
fn run_memory(half_width: f64, radius: f64, h: f64) -> f64 {
    let n = nodes_per_axis(half_width, h) as f64;
    let m = nodes_per_axis(radius, h) as f64;
    8.0 * (2.0 * n * n * n + m * m * m)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, std::iter::empty::<(String, String)>())
    }

    /// Parses `text` after applying `POINTWAVE_*` overrides.
    ///
    /// `POINTWAVE_FDTD__H=0.05` sets `fdtd.h`; sections are separated by a
    /// double underscore. Values are TOML literals; anything that does not
    /// parse as one is taken as a string.
    pub fn from_toml_with_overrides<I, K, V>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut root: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for (key, value) in vars {
            let Some(rest) = key.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest.split("__").map(|p| p.to_ascii_lowercase()).collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(Error::Config(format!("malformed override variable {}", key.as_ref())));
            }
            set_path(&mut root, &path, parse_literal(value.as_ref()))?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads `path`, applying overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, std::env::vars()).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bundle(&self) -> Result<CauchyBundle> {
        let source = match &self.data.source {
            Some(s) => Some(SourceTerm {
                space: Datum::bumps(&s.bumps)?,
                time: s.time,
            }),
            None => None,
        };
        CauchyBundle::new(Datum::bumps(&self.data.phi)?, Datum::bumps(&self.data.psi)?, source)
    }

    /// Horizon used at `eps`.
    pub fn horizon(&self, eps: f64) -> f64 {
        match self.time.tau {
            Some(tau) => eps.powf(-tau),
            None => self.time.horizon,
        }
    }

    /// `τ = −ln T / ln ε`, the exponent the horizon corresponds to.
    pub fn implied_tau(&self, eps: f64) -> f64 {
        -self.horizon(eps).ln() / eps.ln()
    }

    fn smallest_eps(&self) -> f64 {
        self.eps.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Grid spacing shared by every run of the sweep.
    pub fn grid_spacing(&self) -> f64 {
        self.fdtd
            .h
            .unwrap_or_else(|| required_spacing(&self.domain, self.smallest_eps(), self.fdtd.n_min))
    }

    /// Checks every precondition that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.domain.validate()?;
        if self.domain.center != [0.0; 3] {
            return bad("domain.center must be the origin; shift the data instead".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed {} does not fit a TOML integer (max {})", self.seed, i64::MAX));
        }
        if self.eps.is_empty() {
            return bad("eps list is empty".into());
        }
        for &e in &self.eps {
            if !(e > 0.0 && e < 1.0) {
                return bad(format!("eps values must lie in (0,1), got {e}"));
            }
        }
        let mut sorted = self.eps.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("eps list has duplicates".into());
        }
        let data = self.bundle()?;
        if data.is_zero() {
            return bad("data bundle is empty".into());
        }
        data.require_stacks()?;
        let eps_max = sorted[sorted.len() - 1];
        let inclusion = eps_max * self.domain.outer_radius();
        if data.clearance() <= inclusion {
            return bad(format!(
                "data support reaches within {} of the origin, inside Ω_ε of radius {inclusion} at eps={eps_max}",
                data.clearance()
            ));
        }
        if let Some(tau) = self.time.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("time.tau must be > 0, got {tau}"));
            }
        } else if !(self.time.horizon > 0.0 && self.time.horizon.is_finite()) {
            return bad(format!("time.horizon must be > 0, got {}", self.time.horizon));
        }
        let s = &self.spectrum;
        if s.resolution < 2 || s.max_modes == 0 || !(s.captured_mass_deficit > 0.0 && s.captured_mass_deficit < 1.0) {
            return bad("spectrum settings out of range".into());
        }
        if s.modes == Some(0) {
            return bad("spectrum.modes must be positive".into());
        }
        let g = &self.signal;
        if !(g.dt > 0.0) || !(g.route_tolerance > 0.0) || g.sphere_order == 0 {
            return bad("signal settings out of range".into());
        }
        if g.dt > data.clearance() / 8.0 {
            return bad(format!("signal.dt must not exceed clearance/8 = {}", data.clearance() / 8.0));
        }
        let f = &self.fdtd;
        if !(f.cfl > 0.0 && f.cfl <= 0.95) || f.n_min == 0 || !(f.margin >= 0.0) || !(f.memory_budget_mb > 0.0) {
            return bad("fdtd settings out of range".into());
        }
        let h = self.grid_spacing();
        if !(h > 0.0) {
            return bad(format!("fdtd.h must be > 0, got {h}"));
        }
        let need = required_spacing(&self.domain, sorted[0], f.n_min);
        if h > need * (1.0 + 1e-12) {
            return Err(Error::Resolution { h, required: need });
        }
        let c = &self.compare;
        if !(c.radius > 0.0 && c.exclusion >= 0.0 && c.exclusion < c.radius && c.sample_interval > 0.0) {
            return bad("compare settings out of range".into());
        }
        self.plan().map(|_| ())
    }

    /// Box sizes and memory per ε; fails when a run exceeds the budget.
    pub fn plan(&self) -> Result<Vec<RunPlan>> {
        let data = self.bundle()?;
        let h = self.grid_spacing();
        let budget = self.fdtd.memory_budget_mb * 1024.0 * 1024.0;
        let plan_at = |eps: f64, h: f64| {
            let horizon = self.horizon(eps);
            let half_width = causal_half_width(horizon, data.reach(), self.compare.radius, self.fdtd.margin);
            RunPlan {
                eps,
                horizon,
                h,
                half_width,
                nodes_per_axis: nodes_per_axis(half_width, h),
                memory_bytes: run_memory(half_width, self.compare.radius, h),
            }
        };
        let plans: Vec<RunPlan> = self.eps.iter().map(|&e| plan_at(e, h)).collect();
        if let Some(worst) = plans.iter().find(|p| p.memory_bytes > budget) {
            // With the spacing tied to the smallest ε, find how small ε may go.
            let fits = |e: f64| plan_at(e, required_spacing(&self.domain, e, self.fdtd.n_min)).memory_bytes <= budget;
            let feasible = if self.fdtd.h.is_none() && fits(0.999) {
                let (mut lo, mut hi) = (1e-4, 0.999);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if fits(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some((hi, 0.999))
            } else {
                None
            };
            return Err(Error::Planning {
                message: format!(
                    "run at eps={} needs {:.0} MB ({}³ nodes at h={h}), budget is {} MB",
                    worst.eps,
                    worst.memory_bytes / (1024.0 * 1024.0),
                    worst.nodes_per_axis,
                    self.fdtd.memory_budget_mb
                ),
                feasible,
            });
        }
        Ok(plans)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().unwrap();
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {} crosses a non-table key", path.join("."))))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}
