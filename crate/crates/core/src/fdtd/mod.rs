//! Two-dimensional TE finite-difference time-domain engine.
//!
//! Fields are Ex, Ey (in plane) and Hz on a Yee grid with pitch `dx`, in
//! units where c = eps0 = mu0 = 1, lengths in nm and time in nm of light
//! travel. Hz(i, j) sits at the centre of permittivity cell (i, j),
//! Ex(i, j) at the middle of its bottom edge and Ey(i, j) at the middle of
//! its left edge.

pub mod cavity;
pub mod layered;
mod monitor;
pub mod pml;
pub mod source;
pub mod tmm;


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PermittivityGrid;
use crate::scalar::Real;

pub use monitor::FluxMonitorSpec;
use monitor::{FieldDft, FluxMonitor};
use pml::AxisProfile;
pub use pml::PmlSpec;
use source::CompiledSource;
pub use source::{Component, LineProfile, Pulse, SourceKind, SourceSpec};

/// Largest stable Courant number `c dt / dx` in 2D, with a 1% guard.
pub const MAX_COURANT: f64 = 0.99 / std::f64::consts::SQRT_2;

const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub x: f64,
    pub y: f64,
    pub component: Component,
}

/// Accumulate the in-plane E field DFT at `frequency` every `stride` steps
/// from `start_step` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotSpec {
    pub frequency: f64,
    pub start_step: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationSpec<T> {
    pub grid: PermittivityGrid,
    /// `c dt / dx`; must not exceed [`MAX_COURANT`].
    pub courant: T,
    pub pml: PmlSpec,
    pub sources: Vec<SourceSpec>,
    pub probes: Vec<ProbeSpec>,
    pub monitors: Vec<FluxMonitorSpec>,
    pub max_steps: usize,
    /// First step recorded by the probes.
    pub record_start: usize,
}

impl<T: Real> SimulationSpec<T> {
    pub fn new(grid: PermittivityGrid) -> Self {
        SimulationSpec {
            grid,
            courant: T::lit(0.5),
            pml: PmlSpec::default(),
            sources: Vec::new(),
            probes: Vec::new(),
            monitors: Vec::new(),
            max_steps: 10_000,
            record_start: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.courant.as_f64() * self.grid.dx
    }
}

/// Field samples of one probe, one per completed step from `t0` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub x: f64,
    pub y: f64,
    pub component: Component,
}

impl TimeTrace {
    pub fn from_samples(samples: Vec<f64>, dt: f64) -> Self {
        TimeTrace {
            samples,
            dt,
            t0: 0.0,
            x: 0.0,
            y: 0.0,
            component: Component::Hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Drops the first `n` samples.
    pub fn skip(&self, n: usize) -> TimeTrace {
        let n = n.min(self.samples.len());
        TimeTrace {
            samples: self.samples[n..].to_vec(),
            t0: self.t0 + n as f64 * self.dt,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectrumKind {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelengths: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

impl Spectrum {
    pub fn new(wavelengths: Vec<f64>, values: Vec<f64>, kind: SpectrumKind) -> Result<Self> {
        let s = Spectrum {
            wavelengths,
            values,
            kind,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths.len() != self.values.len() {
            return Err(Error::Argument("spectrum columns differ in length".into()));
        }
        if self.wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("spectrum wavelengths must be strictly increasing".into()));
        }
        if self.kind == SpectrumKind::Normalized
            && self.values.iter().any(|&v| !(v >= 0.0 && v <= 1.05))
        {
            return Err(Error::Argument("normalized spectrum outside [0, 1.05]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Samples with wavelength inside `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> Spectrum {
        let (w, v) = self
            .wavelengths
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, v)| (*w, *v))
            .unzip();
        Spectrum {
            wavelengths: w,
            values: v,
            kind: self.kind,
        }
    }
}

/// Uniform wavelength grid `lo..=hi` with `n` points, sorted ascending.
pub fn wavelength_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Electric field DFT at one frequency, interpolated to cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub frequency: f64,
    /// |E|^2 at cell centres, row-major.
    pub e_squared: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation<T> {
    nx: usize,
    ny: usize,
    dx: f64,
    dt: f64,
    x0: f64,
    y0: f64,
    step: usize,
    max_steps: usize,
    hz: Vec<T>,
    ex: Vec<T>,
    ey: Vec<T>,
    ch: T,
    cex: Vec<T>,
    cey: Vec<T>,
    px_h: AxisProfile<T>,
    px_e: AxisProfile<T>,
    py_h: AxisProfile<T>,
    py_e: AxisProfile<T>,
    psi_hzx: Vec<T>,
    psi_hzy: Vec<T>,
    psi_exy: Vec<T>,
    psi_eyx: Vec<T>,
    closed: bool,
    sources: Vec<CompiledSource<T>>,
    source_scale: f64,
    probes: Vec<(ProbeSpec, usize)>,
    record_start: usize,
    traces: Vec<Vec<f64>>,
    monitors: Vec<FluxMonitor>,
    snapshot: Option<FieldDft>,
}

impl<T: Real> Simulation<T> {
    pub fn new(spec: &SimulationSpec<T>) -> Result<Self> {
        let g = &spec.grid;
        let (nx, ny, dx) = (g.nx, g.ny, g.dx);
        let courant = spec.courant.as_f64();
        if !(courant > 0.0 && courant <= MAX_COURANT) {
            return Err(Error::Argument(format!(
                "Courant number {courant} outside (0, {MAX_COURANT:.4}]"
            )));
        }
        if nx < 2 || ny < 1 {
            return Err(Error::Argument(format!("grid {nx} x {ny} too small")));
        }
        for (name, cells, n) in [("x", spec.pml.cells_x, nx), ("y", spec.pml.cells_y, ny)] {
            if cells > 0 && cells < 8 {
                return Err(Error::Argument(format!("PML along {name} must be >= 8 cells, got {cells}")));
            }
            if 2 * cells >= n {
                return Err(Error::Argument(format!("PML along {name} fills the grid")));
            }
        }
        let dt = courant * dx;
        let eps_at = |i: usize, j: usize| g.eps[j * nx + i];
        let mut cex = vec![T::zero(); nx * (ny + 1)];
        for j in 0..=ny {
            for i in 0..nx {
                let e = match (j, j == ny) {
                    (0, _) => eps_at(i, 0),
                    (_, true) => eps_at(i, ny - 1),
                    _ => 0.5 * (eps_at(i, j - 1) + eps_at(i, j)),
                };
                cex[j * nx + i] = T::lit(dt / (e * dx));
            }
        }
        let mut cey = vec![T::zero(); (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..=nx {
                let e = if i == 0 {
                    eps_at(0, j)
                } else if i == nx {
                    eps_at(nx - 1, j)
                } else {
                    0.5 * (eps_at(i - 1, j) + eps_at(i, j))
                };
                cey[j * (nx + 1) + i] = T::lit(dt / (e * dx));
            }
        }
        let p = &spec.pml;
        let px_h = AxisProfile::new(p, p.cells_x, nx, (0..nx).map(|i| i as f64 + 0.5), dx, dt);
        let px_e = AxisProfile::new(p, p.cells_x, nx, (0..=nx).map(|i| i as f64), dx, dt);
        let py_h = AxisProfile::new(p, p.cells_y, ny, (0..ny).map(|j| j as f64 + 0.5), dx, dt);
        let py_e = AxisProfile::new(p, p.cells_y, ny, (0..=ny).map(|j| j as f64), dx, dt);

        let mut sim = Simulation {
            nx,
            ny,
            dx,
            dt,
            x0: g.x0,
            y0: g.y0,
            step: 0,
            max_steps: spec.max_steps,
            hz: vec![T::zero(); nx * ny],
            ex: vec![T::zero(); nx * (ny + 1)],
            ey: vec![T::zero(); (nx + 1) * ny],
            ch: T::lit(dt / dx),
            psi_hzx: vec![T::zero(); ny * px_h.len()],
            psi_hzy: vec![T::zero(); py_h.len() * nx],
            psi_exy: vec![T::zero(); py_e.len() * nx],
            psi_eyx: vec![T::zero(); ny * px_e.len()],
            closed: p.cells_x == 0 && p.cells_y == 0,
            cex,
            cey,
            px_h,
            px_e,
            py_h,
            py_e,
            sources: Vec::new(),
            source_scale: 0.0,
            probes: Vec::new(),
            record_start: spec.record_start,
            traces: Vec::new(),
            monitors: Vec::new(),
            snapshot: None,
        };
        for s in &spec.sources {
            let compiled = sim.compile_source(s, g)?;
            sim.source_scale = sim.source_scale.max(s.pulse.amplitude.abs());
            sim.sources.push(compiled);
        }
        for pr in &spec.probes {
            let idx = sim.locate(pr.component, pr.x, pr.y)?;
            sim.probes.push((*pr, idx));
            sim.traces.push(Vec::new());
        }
        for m in &spec.monitors {
            let column = ((m.x - g.x0) / dx).round();
            if !(column >= 1.0 && column <= (nx - 1) as f64) {
                return Err(Error::Argument(format!("monitor at x = {} outside grid", m.x)));
            }
            let j0 = (((m.y_min - g.y0) / dx).floor().max(0.0) as usize).min(ny);
            let j1 = (((m.y_max - g.y0) / dx).ceil().max(0.0) as usize).min(ny);
            if j1 <= j0 {
                return Err(Error::Argument("monitor spans no rows".into()));
            }
            let mut wl = m.wavelengths.clone();
            wl.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sim.monitors
                .push(FluxMonitor::new(column as usize, j0..j1, wl, dx, dt));
        }
        Ok(sim)
    }

    fn compile_source(&self, s: &SourceSpec, g: &PermittivityGrid) -> Result<CompiledSource<T>> {
        if !(s.pulse.bandwidth > 0.0 && s.pulse.f0 > 0.0) {
            return Err(Error::Argument("source pulse needs positive frequency and bandwidth".into()));
        }
        let (nx, ny, dx, dt) = (self.nx, self.ny, self.dx, self.dt);
        match s.kind {
            SourceKind::PointDipole { x, y, component } => {
                let idx = self.locate(component, x, y)?;
                let w = match component {
                    Component::Hz => dt,
                    Component::Ex => self.cex[idx].as_f64() * dx,
                    Component::Ey => self.cey[idx].as_f64() * dx,
                };
                Ok(CompiledSource {
                    component,
                    taps: vec![(idx, T::lit(w))],
                    pulse: s.pulse,
                })
            }
            SourceKind::WaveguideLine { x, profile } => {
                let i = ((x - g.x0) / dx - 0.5).round();
                if !(i >= 0.0 && i < nx as f64) {
                    return Err(Error::Argument(format!("line source at x = {x} outside grid")));
                }
                let ys: Vec<f64> = (0..ny).map(|j| g.y0 + (j as f64 + 0.5) * dx).collect();
                let prof = profile.sample(&ys);
                let taps = prof
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.abs() > 1e-12)
                    .map(|(j, p)| (j * nx + i as usize, T::lit(dt * p)))
                    .collect();
                Ok(CompiledSource {
                    component: Component::Hz,
                    taps,
                    pulse: s.pulse,
                })
            }
        }
    }

    /// Flat index of the component sample nearest to `(x, y)`.
    fn locate(&self, c: Component, x: f64, y: f64) -> Result<usize> {
        let u = (x - self.x0) / self.dx;
        let v = (y - self.y0) / self.dx;
        let (i, j, ni, nj, stride) = match c {
            Component::Hz => ((u - 0.5).round(), (v - 0.5).round(), self.nx, self.ny, self.nx),
            Component::Ex => ((u - 0.5).round(), v.round(), self.nx, self.ny + 1, self.nx),
            Component::Ey => (u.round(), (v - 0.5).round(), self.nx + 1, self.ny, self.nx + 1),
        };
        if !(i >= 0.0 && j >= 0.0 && (i as usize) < ni && (j as usize) < nj) {
            return Err(Error::Argument(format!("point ({x}, {y}) outside grid")));
        }
        Ok(j as usize * stride + i as usize)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Time of the current E field level.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn field(&self, c: Component) -> &[T] {
        match c {
            Component::Hz => &self.hz,
            Component::Ex => &self.ex,
            Component::Ey => &self.ey,
        }
    }

    /// Latest time any source is still emitting.
    pub fn source_end(&self) -> f64 {
        self.sources
            .iter()
            .map(|s| s.pulse.duration())
            .fold(0.0, f64::max)
    }

    /// Starts (or restarts) a single-frequency E field DFT.
    pub fn start_snapshot(&mut self, frequency: f64, stride: usize) {
        self.snapshot = Some(FieldDft::new(
            frequency,
            self.step,
            stride,
            self.ex.len(),
            self.ey.len(),
        ));
    }

    pub fn snapshot(&self) -> Option<FieldSnapshot> {
        let dft = self.snapshot.as_ref()?;
        let (nx, ny) = (self.nx, self.ny);
        let mut e2 = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let ex = 0.5 * (dft.ex[j * nx + i].norm_sqr() + dft.ex[(j + 1) * nx + i].norm_sqr());
                let ey = 0.5
                    * (dft.ey[j * (nx + 1) + i].norm_sqr() + dft.ey[j * (nx + 1) + i + 1].norm_sqr());
                e2[j * nx + i] = ex + ey;
            }
        }
        Some(FieldSnapshot {
            nx,
            ny,
            dx: self.dx,
            frequency: dft.frequency,
            e_squared: e2,
        })
    }

    /// Advances H then E by one time step.
    pub fn step(&mut self) -> Result<()> {
        let nx = self.nx;
        let t_h = (self.step as f64 + 0.5) * self.dt;
        self.update_h();
        for s in &self.sources {
            if s.component == Component::Hz && s.active(t_h) {
                let g = T::lit(s.pulse.value(t_h));
                for &(idx, w) in &s.taps {
                    self.hz[idx] = self.hz[idx] + w * g;
                }
            }
        }
        self.update_e();
        for s in &self.sources {
            if s.component != Component::Hz && s.active(t_h) {
                let g = T::lit(s.pulse.value(t_h));
                let arr = if s.component == Component::Ex { &mut self.ex } else { &mut self.ey };
                for &(idx, w) in &s.taps {
                    arr[idx] = arr[idx] + w * g;
                }
            }
        }
        self.step += 1;

        if self.step >= self.record_start {
            for (k, (pr, idx)) in self.probes.iter().enumerate() {
                let v = match pr.component {
                    Component::Hz => self.hz[*idx],
                    Component::Ex => self.ex[*idx],
                    Component::Ey => self.ey[*idx],
                };
                self.traces[k].push(v.as_f64());
            }
        }
        for m in &mut self.monitors {
            let i = m.column;
            let (ey, hz) = (&self.ey, &self.hz);
            m.accumulate(
                |j| ey[j * (nx + 1) + i].as_f64(),
                |j| 0.5 * (hz[j * nx + i - 1].as_f64() + hz[j * nx + i].as_f64()),
            );
        }
        if let Some(dft) = self.snapshot.as_mut() {
            if dft.wants(self.step) {
                dft.add(&self.ex, &self.ey, self.step as f64 * self.dt);
            }
        }
        if self.step % 64 == 0 {
            self.check_stability()?;
        }
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    fn check_stability(&self) -> Result<()> {
        let mut peak = 0.0_f64;
        for v in self.hz.iter().chain(&self.ex).chain(&self.ey) {
            let a = v.as_f64().abs();
            if !a.is_finite() {
                return Err(Error::NonFinite { step: self.step });
            }
            peak = peak.max(a);
        }
        if peak > DIVERGENCE_FACTOR * self.source_scale.max(1e-30) && self.source_scale > 0.0 {
            return Err(Error::Divergence {
                step: self.step,
                magnitude: peak,
            });
        }
        Ok(())
    }

    fn update_h(&mut self) {
        let nx = self.nx;
        let ch = self.ch;
        let ex = &self.ex;
        let ey = &self.ey;
        let px = &self.px_h;
        let npx = px.len();
        for j in 0..self.ny {
            let hz_row = &mut self.hz[j * nx..(j + 1) * nx];
            let ey_row = &ey[j * (nx + 1)..(j + 1) * (nx + 1)];
            let ex_lo = &ex[j * nx..(j + 1) * nx];
            let ex_hi = &ex[(j + 1) * nx..(j + 2) * nx];
            for i in 0..nx {
                hz_row[i] = hz_row[i] + ch * ((ex_hi[i] - ex_lo[i]) - (ey_row[i + 1] - ey_row[i]));
            }
            let psi_row = &mut self.psi_hzx[j * npx..(j + 1) * npx];
            for k in 0..npx {
                let i = px.index[k];
                let d = ey_row[i + 1] - ey_row[i];
                psi_row[k] = px.b[k] * psi_row[k] + px.c[k] * d;
                hz_row[i] = hz_row[i] - ch * psi_row[k];
            }
        }
        let py = &self.py_h;
        for k in 0..py.len() {
            let j = py.index[k];
            let (b, c) = (py.b[k], py.c[k]);
            for i in 0..nx {
                let d = ex[(j + 1) * nx + i] - ex[j * nx + i];
                let psi = &mut self.psi_hzy[k * nx + i];
                *psi = b * *psi + c * d;
                self.hz[j * nx + i] = self.hz[j * nx + i] + ch * *psi;
            }
        }
    }

    fn update_e(&mut self) {
        let nx = self.nx;
        let ny = self.ny;
        let hz = &self.hz;
        // Ex rows 0 and ny lie on the conducting walls and stay zero.
        for j in 1..ny {
            let c = &self.cex[j * nx..(j + 1) * nx];
            let lo = &hz[(j - 1) * nx..j * nx];
            let hi = &hz[j * nx..(j + 1) * nx];
            let ex_row = &mut self.ex[j * nx..(j + 1) * nx];
            for i in 0..nx {
                ex_row[i] = ex_row[i] + c[i] * (hi[i] - lo[i]);
            }
        }
        let py = &self.py_e;
        for k in 0..py.len() {
            let j = py.index[k];
            if j == 0 || j == ny {
                continue;
            }
            let (b, c) = (py.b[k], py.c[k]);
            for i in 0..nx {
                let d = hz[j * nx + i] - hz[(j - 1) * nx + i];
                let psi = &mut self.psi_exy[k * nx + i];
                *psi = b * *psi + c * d;
                self.ex[j * nx + i] = self.ex[j * nx + i] + self.cex[j * nx + i] * *psi;
            }
        }
        let px = &self.px_e;
        let npx = px.len();
        for j in 0..ny {
            let c = &self.cey[j * (nx + 1)..(j + 1) * (nx + 1)];
            let h = &hz[j * nx..(j + 1) * nx];
            let ey_row = &mut self.ey[j * (nx + 1)..(j + 1) * (nx + 1)];
            for i in 1..nx {
                ey_row[i] = ey_row[i] - c[i] * (h[i] - h[i - 1]);
            }
            let psi_row = &mut self.psi_eyx[j * npx..(j + 1) * npx];
            for k in 0..npx {
                let i = px.index[k];
                if i == 0 || i == nx {
                    continue;
                }
                let d = h[i] - h[i - 1];
                psi_row[k] = px.b[k] * psi_row[k] + px.c[k] * d;
                ey_row[i] = ey_row[i] - c[i] * psi_row[k];
            }
        }
    }

    /// Electromagnetic energy with E and H taken at their own time levels.
    pub fn stored_energy(&self) -> f64 {
        let dx2 = self.dx * self.dx;
        let dt = self.dt;
        let mut e = 0.0;
        for (v, c) in self.ex.iter().zip(&self.cex) {
            let eps = dt / (c.as_f64() * self.dx);
            e += eps * v.as_f64().powi(2);
        }
        for (v, c) in self.ey.iter().zip(&self.cey) {
            let eps = dt / (c.as_f64() * self.dx);
            e += eps * v.as_f64().powi(2);
        }
        let h: f64 = self.hz.iter().map(|v| v.as_f64().powi(2)).sum();
        0.5 * (e + h) * dx2
    }

    /// The quadratic invariant of the leapfrog scheme,
    /// eps E^n . E^n + H^(n-1/2) . H^(n+1/2), exactly conserved in a closed
    /// lossless box without sources. Only defined for closed grids.
    pub fn conserved_energy(&self) -> Option<f64> {
        if !self.closed {
            return None;
        }
        let nx = self.nx;
        let ch = self.ch.as_f64();
        let mut e = 0.0;
        for (v, c) in self.ex.iter().zip(&self.cex) {
            e += self.dt / (c.as_f64() * self.dx) * v.as_f64().powi(2);
        }
        for (v, c) in self.ey.iter().zip(&self.cey) {
            e += self.dt / (c.as_f64() * self.dx) * v.as_f64().powi(2);
        }
        let mut h = 0.0;
        for j in 0..self.ny {
            for i in 0..nx {
                let f = |a: &[T], k: usize| a[k].as_f64();
                let curl = (f(&self.ex, (j + 1) * nx + i) - f(&self.ex, j * nx + i))
                    - (f(&self.ey, j * (nx + 1) + i + 1) - f(&self.ey, j * (nx + 1) + i));
                let now = f(&self.hz, j * nx + i);
                h += now * (now + ch * curl);
            }
        }
        Some(0.5 * (e + h) * self.dx * self.dx)
    }

    pub fn traces(&self) -> Vec<TimeTrace> {
        let t0 = self.record_start.max(1) as f64 * self.dt;
        self.probes
            .iter()
            .zip(&self.traces)
            .map(|((p, _), s)| TimeTrace {
                samples: s.clone(),
                dt: self.dt,
                t0,
                x: p.x,
                y: p.y,
                component: p.component,
            })
            .collect()
    }

    /// Raw spectral flux of every monitor (towards +x).
    pub fn fluxes(&self) -> Vec<Spectrum> {
        self.monitors
            .iter()
            .map(|m| Spectrum {
                wavelengths: m.wavelengths.clone(),
                values: m.flux(),
                kind: SpectrumKind::Raw,
            })
            .collect()
    }

    /// Sum of squared fields along the monitor planes; used to decide when a
    /// transmission run has rung down.
    pub fn monitor_intensity(&self) -> f64 {
        let nx = self.nx;
        self.monitors
            .iter()
            .map(|m| {
                m.rows
                    .clone()
                    .map(|j| {
                        let ey = self.ey[j * (nx + 1) + m.column].as_f64();
                        let hz = self.hz[j * nx + m.column].as_f64();
                        ey * ey + hz * hz
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}
