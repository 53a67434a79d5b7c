//! Leapfrog finite differences for `ρ ∂ₜₜu = Δu + f` with
//! `ρ = ε⁻²` inside `Ω_ε` and `1` outside.
//!
//! Nodes sit at `x = −L + i·h`, `i = 0..=N`, with the origin a node and
//! `u = 0` on the faces of the box. The update is
//! `ρ (uⁿ⁺¹ − 2uⁿ + uⁿ⁻¹)/Δt² = Δ_h uⁿ + fⁿ` with the 7-point Laplacian.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freewave::{CauchyBundle, Datum};
use crate::geometry::{scale_membership, DomainGrid, DomainSpec};
use crate::{norm, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Boundary {
    /// `u = 0` on the box faces; the box must be large enough that
    /// reflections miss the region of interest.
    #[default]
    Reflecting,
    /// Damping `σ` ramping up as `(1 − cos)/2` over `width` next to each face.
    Sponge { width: f64, strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Requested half-width `L` of the box; rounded up to whole cells.
    pub half_width: f64,
    pub h: f64,
    /// Contrast scale; `1` switches the inclusion off.
    pub eps: f64,
    pub domain: DomainSpec,
    /// Minimum number of cells across `Ω_ε`.
    pub n_min: usize,
    pub cfl: f64,
    /// Volume-fraction blend of `ρ` on cells cut by `∂Ω_ε`.
    pub blend: bool,
    pub boundary: Boundary,
}

impl GridOptions {
    pub fn new(half_width: f64, h: f64, eps: f64, domain: DomainSpec) -> Self {
        GridOptions {
            half_width,
            h,
            eps,
            domain,
            n_min: 8,
            cfl: 0.9,
            blend: false,
            boundary: Boundary::Reflecting,
        }
    }

    /// Contrast switched off (`ρ ≡ 1`).
    pub fn free(half_width: f64, h: f64) -> Self {
        GridOptions::new(half_width, h, 1.0, DomainSpec::unit_ball())
    }
}

/// Smallest box half-width such that waves leaving data inside radius
/// `reach` and reflected at the faces cannot re-enter the ball of radius
/// `region` before `horizon`: `2L − reach − region > horizon`.
pub fn causal_half_width(horizon: f64, reach: f64, region: f64, margin: f64) -> f64 {
    0.5 * (horizon + reach + region) + margin
}

/// Largest grid spacing resolving `Ω_ε` with `n_min` cells across.
pub fn required_spacing(domain: &DomainSpec, eps: f64, n_min: usize) -> f64 {
    eps * domain.diameter() / n_min as f64
}

/// Dense values on an axis-aligned block of nodes.
#[derive(Debug, Clone, PartialEq)]
struct Block {
    lo: [usize; 3],
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Block {
    fn get(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        let (a, b, c) = (
            i.checked_sub(self.lo[0])?,
            j.checked_sub(self.lo[1])?,
            k.checked_sub(self.lo[2])?,
        );
        if a < self.dims[0] && b < self.dims[1] && c < self.dims[2] {
            Some(self.values[(a * self.dims[1] + b) * self.dims[2] + c])
        } else {
            None
        }
    }

    /// Slice of row `(i, j)` and its first `k`, if the row meets the block.
    fn row(&self, i: usize, j: usize) -> Option<(usize, &[f64])> {
        let a = i.checked_sub(self.lo[0])?;
        let b = j.checked_sub(self.lo[1])?;
        if a >= self.dims[0] || b >= self.dims[1] {
            return None;
        }
        let start = (a * self.dims[1] + b) * self.dims[2];
        Some((self.lo[2], &self.values[start..start + self.dims[2]]))
    }
}

/// Box, spacing, time step, and mass coefficient of one FDTD run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastGrid {
    pub h: f64,
    pub dt: f64,
    /// Nodes per axis, faces included.
    pub n: usize,
    pub eps: f64,
    pub domain: DomainSpec,
    pub boundary: Boundary,
    /// `1/ρ` on the block around the inclusion; `1` elsewhere.
    inv_rho: Option<Block>,
    /// Per-axis damping profile for the sponge.
    sponge: Option<Vec<f64>>,
}

/// Checks `opts` and assigns `ρ` by node membership in `Ω_ε` (or by the
/// volume fraction of the surrounding cell when blending).
pub fn build_grid(opts: &GridOptions) -> Result<ContrastGrid> {
    let GridOptions {
        half_width,
        h,
        eps,
        domain,
        n_min,
        cfl,
        blend,
        boundary,
    } = *opts;
    if !(h > 0.0 && half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::param(format!("need h > 0 and box half-width > 0, got h={h}, L={half_width}")));
    }
    if !(cfl > 0.0 && cfl <= 0.95) {
        return Err(Error::param(format!("CFL number must lie in (0, 0.95], got {cfl}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param(format!("eps must lie in (0,1], got {eps}")));
    }
    domain.validate()?;
    if norm(domain.center) != 0.0 {
        return Err(Error::param("the inclusion must be centred at the origin; shift the data instead"));
    }
    let half = (half_width / h - 1e-9).ceil() as usize;
    let n = 2 * half + 1;
    if half < 2 {
        return Err(Error::param("box must span at least two cells each side"));
    }
    let dt = cfl * h / 3f64.sqrt();
    let pos = |i: usize| (i as f64 - half as f64) * h;

    let inv_rho = if eps < 1.0 {
        let need = required_spacing(&domain, eps, n_min.max(1));
        if h > need * (1.0 + 1e-12) {
            return Err(Error::Resolution { h, required: need });
        }
        let scaled = scale_membership(&domain, eps)?;
        let ext = domain.half_extents();
        let mut lo = [0; 3];
        let mut dims = [0; 3];
        for a in 0..3 {
            let r = ((eps * ext[a]) / h).ceil() as usize + 1;
            if r >= half {
                return Err(Error::param("inclusion does not fit inside the box"));
            }
            lo[a] = half - r;
            dims[a] = 2 * r + 1;
        }
        let rho_in = 1.0 / (eps * eps);
        let sub = 3;
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    let x = [pos(lo[0] + a), pos(lo[1] + b), pos(lo[2] + c)];
                    let frac = if blend {
                        let mut inside = 0;
                        for p in 0..sub {
                            for q in 0..sub {
                                for r in 0..sub {
                                    let off = |m: usize| ((m as f64 + 0.5) / sub as f64 - 0.5) * h;
                                    if scaled.contains([x[0] + off(p), x[1] + off(q), x[2] + off(r)]) {
                                        inside += 1;
                                    }
                                }
                            }
                        }
                        inside as f64 / (sub * sub * sub) as f64
                    } else if scaled.contains(x) {
                        1.0
                    } else {
                        0.0
                    };
                    values.push(1.0 / (frac * rho_in + (1.0 - frac)));
                }
            }
        }
        Some(Block { lo, dims, values })
    } else {
        None
    };

    let sponge = match boundary {
        Boundary::Reflecting => None,
        Boundary::Sponge { width, strength } => {
            if !(width > 0.0 && strength >= 0.0) {
                return Err(Error::param(format!("invalid sponge width {width} or strength {strength}")));
            }
            let profile = (0..n)
                .map(|i| {
                    let d = i.min(n - 1 - i) as f64 * h;
                    if d >= width {
                        0.0
                    } else {
                        strength * 0.5 * (1.0 - (PI * (width - d) / width).cos())
                    }
                })
                .collect();
            Some(profile)
        }
    };

    Ok(ContrastGrid {
        h,
        dt,
        n,
        eps,
        domain,
        boundary,
        inv_rho,
        sponge,
    })
}

impl ContrastGrid {
    pub fn half_width(&self) -> f64 {
        (self.n / 2) as f64 * self.h
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn position(&self, idx: [usize; 3]) -> Vec3 {
        let c = (self.n / 2) as f64;
        [
            (idx[0] as f64 - c) * self.h,
            (idx[1] as f64 - c) * self.h,
            (idx[2] as f64 - c) * self.h,
        ]
    }

    /// Mass coefficient at a node.
    pub fn rho(&self, idx: [usize; 3]) -> f64 {
        1.0 / self.inv_rho_at(idx[0], idx[1], idx[2])
    }

    fn inv_rho_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.inv_rho.as_ref().and_then(|b| b.get(i, j, k)).unwrap_or(1.0)
    }

    /// Replaces the time step without any stability check, for diagnostics.
    pub fn with_time_step(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Bytes of field storage a run needs (two time levels).
    pub fn memory_bytes(&self) -> usize {
        2 * self.node_count() * std::mem::size_of::<f64>()
    }

    /// The nodes carrying `ρ = ε⁻²`, rescaled by `1/ε` into a voxel grid of
    /// `Ω` with pitch `h/ε`. Its Newton spectrum is the one the grid
    /// actually resolves.
    pub fn inclusion_voxels(&self) -> Result<DomainGrid> {
        let block = self
            .inv_rho
            .as_ref()
            .ok_or_else(|| Error::param("contrast is switched off"))?;
        let target = self.eps * self.eps;
        let mut lattice = Vec::new();
        for a in 0..block.dims[0] {
            for b in 0..block.dims[1] {
                for c in 0..block.dims[2] {
                    let v = block.values[(a * block.dims[1] + b) * block.dims[2] + c];
                    if (v - target).abs() <= 1e-12 * target {
                        lattice.push([a, b, c]);
                    }
                }
            }
        }
        let p = self.position(block.lo);
        let scale = 1.0 / self.eps;
        DomainGrid::from_lattice(self.h * scale, [p[0] * scale, p[1] * scale, p[2] * scale], lattice)
    }
}

/// Samples on a block of grid nodes at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveField {
    pub time: f64,
    /// Position of the first node.
    pub origin: Vec3,
    pub h: f64,
    pub dims: [usize; 3],
    /// Row-major, `z` fastest.
    pub values: Vec<f64>,
}

impl WaveField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, flat: usize) -> Vec3 {
        let k = flat % self.dims[2];
        let j = (flat / self.dims[2]) % self.dims[1];
        let i = flat / (self.dims[1] * self.dims[2]);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
            self.origin[2] + k as f64 * self.h,
        ]
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.len()).map(|p| self.position(p)).collect()
    }

    pub fn same_geometry(&self, other: &WaveField) -> bool {
        self.dims == other.dims
            && self.h == other.h
            && self.origin.iter().zip(&other.origin).all(|(a, b)| (a - b).abs() <= 1e-12 * self.h)
    }

    /// Flat binary: three little-endian `u64` dims, `f64` h, `f64` t,
    /// three `f64` origin coordinates, then the samples.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        for d in self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.h.to_le_bytes());
        buf.extend_from_slice(&self.time.to_le_bytes());
        for o in self.origin {
            buf.extend_from_slice(&o.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary(path: &Path) -> Result<WaveField> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Format {
            path: path.into(),
            message: m.into(),
        };
        if buf.len() < 64 {
            return Err(bad("truncated header"));
        }
        let word = |i: usize| <[u8; 8]>::try_from(&buf[8 * i..8 * i + 8]).unwrap();
        let dims = [0, 1, 2].map(|i| u64::from_le_bytes(word(i)) as usize);
        let h = f64::from_le_bytes(word(3));
        let time = f64::from_le_bytes(word(4));
        let origin = [5, 6, 7].map(|i| f64::from_le_bytes(word(i)));
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|x| x.checked_mul(dims[2]))
            .ok_or_else(|| bad("dims overflow"))?;
        if buf.len() != 64 + 8 * count {
            return Err(bad("payload size does not match dims"));
        }
        let values = (0..count).map(|i| f64::from_le_bytes(word(8 + i))).collect();
        Ok(WaveField {
            time,
            origin,
            h,
            dims,
            values,
        })
    }

    /// Binary snapshot plus a JSON sidecar (`<path>.json`) describing the
    /// layout and carrying `meta`.
    pub fn write_snapshot(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        self.write_binary(path)?;
        let side = sidecar_path(path);
        let doc = serde_json::json!({
            "format": "pointwave-snapshot",
            "layout": "u64 dims[3], f64 h, f64 t, f64 origin[3], f64 values (row-major, z fastest), little-endian",
            "dims": self.dims,
            "h": self.h,
            "time": self.time,
            "origin": self.origin,
            "meta": meta,
        });
        let text = serde_json::to_string_pretty(&doc).expect("json");
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Where a norm is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Everywhere,
    /// Ball of the given radius about the origin.
    Ball { radius: f64 },
}

impl Region {
    fn contains(&self, x: Vec3) -> bool {
        match *self {
            Region::Everywhere => true,
            Region::Ball { radius } => norm(x) <= radius,
        }
    }
}

/// Discrete `L²` norm of `a − b` over `region` minus the ball of radius
/// `r_excl`, cell weight `h³`. Points where `b` is `None` are skipped.
pub fn l2_diff_with<F>(a: &WaveField, b: F, region: Region, r_excl: f64) -> Result<f64>
where
    F: Fn(Vec3) -> Result<Option<f64>> + Sync,
{
    let sq: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|p| {
            let x = a.position(p);
            if !region.contains(x) || norm(x) < r_excl {
                return Ok(0.0);
            }
            Ok(match b(x)? {
                Some(v) => (a.values[p] - v).powi(2),
                None => 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok((sq.iter().sum::<f64>() * a.h.powi(3)).sqrt())
}

/// [`l2_diff_with`] against another sampled field on the same nodes.
pub fn l2_diff(a: &WaveField, b: &WaveField, region: Region, r_excl: f64) -> Result<f64> {
    if !a.same_geometry(b) {
        return Err(Error::Geometry(format!(
            "fields differ: dims {:?} vs {:?}, h {} vs {}",
            a.dims, b.dims, a.h, b.h
        )));
    }
    let mut acc = 0.0;
    for p in 0..a.len() {
        let x = a.position(p);
        if region.contains(x) && norm(x) >= r_excl {
            acc += (a.values[p] - b.values[p]).powi(2);
        }
    }
    Ok((acc * a.h.powi(3)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub horizon: f64,
    /// Probe points, trilinearly interpolated.
    pub probes: Vec<Vec3>,
    pub snapshot_times: Vec<f64>,
    /// Snapshots cover the cube of this half-width about the origin.
    pub snapshot_half_width: Option<f64>,
    /// Record the discrete energy every this many steps.
    pub energy_every: Option<usize>,
    /// Sup-norm check interval.
    pub check_every: usize,
}

impl RunOptions {
    pub fn new(horizon: f64) -> Self {
        RunOptions {
            horizon,
            probes: Vec::new(),
            snapshot_times: Vec::new(),
            snapshot_half_width: None,
            energy_every: None,
            check_every: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub dt: f64,
    pub h: f64,
    pub steps: usize,
    pub probes: Vec<Vec3>,
    /// `traces[p][n]` is the probe value at `t = n·Δt`.
    pub traces: Vec<Vec<f64>>,
    /// `Δ_h uⁿ` at the origin node.
    pub origin_laplacian: Vec<f64>,
    /// `(t, E)` at half steps.
    pub energy: Vec<(f64, f64)>,
    pub snapshots: Vec<WaveField>,
}

impl RunOutput {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| n as f64 * self.dt).collect()
    }

    /// CSV with columns `t, u_p0, u_p1, …`.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("t");
        for p in 0..self.probes.len() {
            out.push_str(&format!(",u_p{p}"));
        }
        out.push('\n');
        for (n, t) in self.times().iter().enumerate() {
            out.push_str(&format!("{}", crate::Num(*t)));
            for tr in &self.traces {
                out.push_str(&format!(",{}", crate::Num(tr[n])));
            }
            out.push('\n');
        }
        out
    }
}

fn datum_block(grid: &ContrastGrid, datum: &Datum, lap: usize) -> Result<Option<Block>> {
    if datum.is_zero() {
        return Ok(None);
    }
    datum.require(lap)?;
    let boxes: Vec<(Vec3, Vec3)> = match datum.as_bumps() {
        Some(b) => b
            .iter()
            .map(|b| (b.center.map(|c| c - b.outer), b.center.map(|c| c + b.outer)))
            .collect(),
        None => vec![([-datum.reach(); 3], [datum.reach(); 3])],
    };
    let half = (grid.n / 2) as f64;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (a, b) in &boxes {
        for ax in 0..3 {
            let l = ((a[ax] / grid.h + half).floor().max(1.0)) as usize;
            let u = ((b[ax] / grid.h + half).ceil() as usize).min(grid.n - 2);
            lo[ax] = lo[ax].min(l);
            hi[ax] = hi[ax].max(u);
        }
    }
    if (0..3).any(|ax| lo[ax] > hi[ax]) {
        return Ok(None);
    }
    let dims = [0, 1, 2].map(|ax| hi[ax] - lo[ax] + 1);
    let values = (0..dims[0] * dims[1] * dims[2])
        .into_par_iter()
        .map(|p| {
            let c = p % dims[2];
            let b = (p / dims[2]) % dims[1];
            let a = p / (dims[1] * dims[2]);
            datum.eval(lap, grid.position([lo[0] + a, lo[1] + b, lo[2] + c]))
        })
        .collect::<Result<_>>()?;
    Ok(Some(Block { lo, dims, values }))
}

fn add_block(field: &mut [f64], n: usize, block: &Block, scale: f64) {
    for a in 0..block.dims[0] {
        for b in 0..block.dims[1] {
            let (k0, row) = block.row(block.lo[0] + a, block.lo[1] + b).unwrap();
            let base = ((block.lo[0] + a) * n + block.lo[1] + b) * n + k0;
            for (f, v) in field[base..base + row.len()].iter_mut().zip(row) {
                *f += scale * v;
            }
        }
    }
}

fn laplacian_at(u: &[f64], n: usize, p: usize) -> f64 {
    let nn = n * n;
    u[p - 1] + u[p + 1] + u[p - n] + u[p + n] + u[p - nn] + u[p + nn] - 6.0 * u[p]
}

/// Discrete energy between levels `u0 = uⁿ` and `u1 = uⁿ⁺¹`:
/// `½ Σ ρ ((u1 − u0)/Δt)² h³ + ½ Σ_edges (∇u1·∇u0) h³`, which the scheme
/// conserves exactly on a reflecting box without sources.
pub fn discrete_energy(grid: &ContrastGrid, u0: &[f64], u1: &[f64]) -> f64 {
    let n = grid.n;
    let (h, dt) = (grid.h, grid.dt);
    let strides = [n * n, n, 1];
    // Per-plane partial sums, added in plane order.
    let planes: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut kin = 0.0;
            let mut pot = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let p = (i * n + j) * n + k;
                    let v = (u1[p] - u0[p]) / dt;
                    kin += v * v / grid.inv_rho_at(i, j, k);
                    let idx = [i, j, k];
                    for ax in 0..3 {
                        if idx[ax] + 1 < n {
                            let q = p + strides[ax];
                            pot += (u1[q] - u1[p]) * (u0[q] - u0[p]);
                        }
                    }
                }
            }
            0.5 * kin * h.powi(3) + 0.5 * pot * h
        })
        .collect();
    planes.iter().sum()
}

fn interpolate(u: &[f64], grid: &ContrastGrid, x: Vec3) -> f64 {
    let half = (grid.n / 2) as f64;
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = (x[a] / grid.h + half).clamp(0.0, (grid.n - 1) as f64 - 1e-12);
        base[a] = s.floor() as usize;
        frac[a] = s - base[a] as f64;
    }
    let n = grid.n;
    let mut acc = 0.0;
    for c in 0..8 {
        let off = [c >> 2 & 1, c >> 1 & 1, c & 1];
        let mut w = 1.0;
        let mut idx = [0; 3];
        for a in 0..3 {
            idx[a] = (base[a] + off[a]).min(n - 1);
            w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w != 0.0 {
            acc += w * u[(idx[0] * n + idx[1]) * n + idx[2]];
        }
    }
    acc
}

fn extract(u: &[f64], grid: &ContrastGrid, half_width: Option<f64>, time: f64) -> WaveField {
    let n = grid.n;
    let c = n / 2;
    let r = match half_width {
        Some(w) => ((w / grid.h).floor() as usize).min(c),
        None => c,
    };
    let lo = c - r;
    let m = 2 * r + 1;
    let mut values = Vec::with_capacity(m * m * m);
    for i in lo..lo + m {
        for j in lo..lo + m {
            let base = (i * n + j) * n + lo;
            values.extend_from_slice(&u[base..base + m]);
        }
    }
    WaveField {
        time,
        origin: grid.position([lo, lo, lo]),
        h: grid.h,
        dims: [m; 3],
        values,
    }
}

fn sup_norm(u: &[f64]) -> f64 {
    u.par_iter().map(|v| v.abs()).reduce(|| 0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Runs the scheme to `opts.horizon`, storing snapshots.
pub fn run(grid: &ContrastGrid, data: &CauchyBundle, opts: &RunOptions) -> Result<RunOutput> {
    let mut snaps = Vec::new();
    let mut out = run_observed(grid, data, opts, &mut |w| {
        snaps.push(w.clone());
        Ok(())
    })?;
    out.snapshots = snaps;
    Ok(out)
}

/// Runs the scheme, handing each snapshot to `observer` instead of keeping it.
pub fn run_observed(
    grid: &ContrastGrid,
    data: &CauchyBundle,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&WaveField) -> Result<()>,
) -> Result<RunOutput> {
    if !(opts.horizon >= 0.0) {
        return Err(Error::param(format!("horizon must be >= 0, got {}", opts.horizon)));
    }
    let reach = data.reach();
    if reach >= grid.half_width() - grid.h {
        return Err(Error::param(format!(
            "data reach {reach} does not fit in the box of half-width {}",
            grid.half_width()
        )));
    }
    let n = grid.n;
    let nn = n * n;
    let (h, dt) = (grid.h, grid.dt);
    let steps = crate::freewave::step_count(dt, opts.horizon);
    let lam = dt * dt / (h * h);

    let phi = datum_block(grid, &data.phi, 0)?;
    let psi = datum_block(grid, &data.psi, 0)?;
    let (src, time) = match &data.source {
        Some(s) => (datum_block(grid, &s.space, 0)?, Some(s.time)),
        None => (None, None),
    };

    let mut prev = vec![0.0; grid.node_count()];
    let mut cur = vec![0.0; grid.node_count()];
    if let Some(b) = &phi {
        add_block(&mut prev, n, b, 1.0);
    }
    // u¹ = φ + Δt ψ + (Δt²/2ρ)(Δ_h φ + f⁰).
    cur.copy_from_slice(&prev);
    if let Some(b) = &psi {
        add_block(&mut cur, n, b, dt);
    }
    let mut f0 = vec![0.0; grid.node_count()];
    if let (Some(b), Some(g)) = (&src, time) {
        add_block(&mut f0, n, b, g.eval(0.0));
    }
    if phi.is_some() || src.is_some() {
        let lo = [phi.as_ref(), src.as_ref()]
            .into_iter()
            .flatten()
            .map(|b| b.lo.map(|v| v.saturating_sub(1).max(1)))
            .reduce(|a, b| [0, 1, 2].map(|i| a[i].min(b[i])))
            .unwrap();
        let hi = [phi.as_ref(), src.as_ref()]
            .into_iter()
            .flatten()
            .map(|b| [0, 1, 2].map(|i| (b.lo[i] + b.dims[i]).min(n - 1)))
            .reduce(|a, b| [0, 1, 2].map(|i| a[i].max(b[i])))
            .unwrap();
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    let p = (i * n + j) * n + k;
                    let lap = laplacian_at(&prev, n, p) / (h * h);
                    cur[p] += 0.5 * dt * dt * grid.inv_rho_at(i, j, k) * (lap + f0[p]);
                }
            }
        }
    }
    drop(f0);

    let sup0 = sup_norm(&prev).max(sup_norm(&cur));
    let src_scale = match (&src, time) {
        (Some(b), Some(g)) => {
            let gmax = (0..=1000)
                .map(|i| g.eval(opts.horizon * i as f64 / 1000.0).abs())
                .fold(0.0, f64::max);
            b.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * gmax * (opts.horizon + dt).powi(2)
        }
        _ => 0.0,
    };
    let bound = 1e3 * sup0.max(src_scale).max(1e-300);

    let mut traces = vec![Vec::with_capacity(steps + 1); opts.probes.len()];
    let mut origin_lap = Vec::with_capacity(steps + 1);
    let centre = (n / 2 * n + n / 2) * n + n / 2;
    let mut energy = Vec::new();
    let mut snap_steps: Vec<(usize, f64)> = opts
        .snapshot_times
        .iter()
        .map(|&t| ((t / dt).round() as usize, t))
        .filter(|(s, _)| *s <= steps)
        .collect();
    snap_steps.sort_by_key(|s| s.0);
    if snap_steps.len() != opts.snapshot_times.len() {
        return Err(Error::param("snapshot time beyond the horizon"));
    }
    let mut next_snap = 0;

    let mut record = |level: usize, u: &[f64], traces: &mut Vec<Vec<f64>>, origin_lap: &mut Vec<f64>| -> Result<()> {
        for (p, x) in opts.probes.iter().enumerate() {
            traces[p].push(interpolate(u, grid, *x));
        }
        origin_lap.push(laplacian_at(u, n, centre) / (h * h));
        while next_snap < snap_steps.len() && snap_steps[next_snap].0 == level {
            observer(&extract(u, grid, opts.snapshot_half_width, level as f64 * dt))?;
            next_snap += 1;
        }
        Ok(())
    };
    record(0, &prev, &mut traces, &mut origin_lap)?;
    if steps >= 1 {
        record(1, &cur, &mut traces, &mut origin_lap)?;
    }
    if let Some(every) = opts.energy_every {
        if every > 0 {
            energy.push((0.5 * dt, discrete_energy(grid, &prev, &cur)));
        }
    }

    for level in 1..steps {
        let t = level as f64 * dt;
        let g = time.map_or(0.0, |g| g.eval(t));
        // prev ← uⁿ⁺¹, computed from cur = uⁿ and prev = uⁿ⁻¹.
        let cur_ref = &cur;
        let src_ref = src.as_ref();
        prev.par_chunks_mut(nn).enumerate().for_each(|(i, plane)| {
            if i == 0 || i == n - 1 {
                return;
            }
            for j in 1..n - 1 {
                let row = j * n;
                let p0 = i * nn + row;
                let c = &cur_ref[p0..p0 + n];
                let ym = &cur_ref[p0 - n..p0];
                let yp = &cur_ref[p0 + n..p0 + 2 * n];
                let xm = &cur_ref[p0 - nn..p0 - nn + n];
                let xp = &cur_ref[p0 + nn..p0 + nn + n];
                let out = &mut plane[row..row + n];
                let inv = grid.inv_rho.as_ref().and_then(|b| b.row(i, j));
                let f = src_ref.and_then(|b| b.row(i, j)).filter(|_| g != 0.0);
                // Rows through the inclusion or the source support get a
                // general segment with per-node coefficients.
                let (ks, ke) = match (inv, f) {
                    (Some((a, ra)), Some((b, rb))) => (a.min(b), (a + ra.len()).max(b + rb.len())),
                    (Some((a, ra)), None) => (a, a + ra.len()),
                    (None, Some((b, rb))) => (b, b + rb.len()),
                    (None, None) => (1, 1),
                };
                let (ks, ke) = (ks.clamp(1, n - 1), ke.clamp(1, n - 1));
                let sponge = grid.sponge.as_deref();
                let fast = |out: &mut [f64], range: std::ops::Range<usize>| match sponge {
                    None => {
                        for k in range {
                            let lap = c[k - 1] + c[k + 1] + ym[k] + yp[k] + xm[k] + xp[k] - 6.0 * c[k];
                            out[k] = 2.0 * c[k] - out[k] + lam * lap;
                        }
                    }
                    Some(s) => {
                        let sij = s[i] + s[j];
                        for k in range {
                            let lap = c[k - 1] + c[k + 1] + ym[k] + yp[k] + xm[k] + xp[k] - 6.0 * c[k];
                            let a = 0.5 * (sij + s[k]) * dt;
                            out[k] = (2.0 * c[k] - (1.0 - a) * out[k] + lam * lap) / (1.0 + a);
                        }
                    }
                };
                fast(out, 1..ks);
                for k in ks..ke {
                    let ir = match inv {
                        Some((a, ra)) if k >= a && k < a + ra.len() => ra[k - a],
                        _ => 1.0,
                    };
                    let fk = match f {
                        Some((b, rb)) if k >= b && k < b + rb.len() => g * rb[k - b],
                        _ => 0.0,
                    };
                    let a = sponge.map_or(0.0, |s| 0.5 * (s[i] + s[j] + s[k]) * dt * ir);
                    let lap = c[k - 1] + c[k + 1] + ym[k] + yp[k] + xm[k] + xp[k] - 6.0 * c[k];
                    out[k] = (2.0 * c[k] - (1.0 - a) * out[k] + ir * (lam * lap + dt * dt * fk)) / (1.0 + a);
                }
                fast(out, ke.max(1)..n - 1);
            }
        });
        std::mem::swap(&mut prev, &mut cur);
        // Now cur = uⁿ⁺¹, prev = uⁿ.
        let next = level + 1;
        if let Some(every) = opts.energy_every {
            if every > 0 && level % every == 0 {
                energy.push(((level as f64 + 0.5) * dt, discrete_energy(grid, &prev, &cur)));
            }
        }
        if next % opts.check_every.max(1) == 0 || next == steps {
            let s = sup_norm(&cur);
            if !(s <= bound) {
                return Err(Error::Unstable {
                    step: next,
                    sup_norm: s,
                    bound,
                    dt,
                    h,
                });
            }
        }
        record(next, &cur, &mut traces, &mut origin_lap)?;
    }

    Ok(RunOutput {
        dt,
        h,
        steps,
        probes: opts.probes.clone(),
        traces,
        origin_laplacian: origin_lap,
        energy,
        snapshots: Vec::new(),
    })
}
