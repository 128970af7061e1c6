//! Cavity-level runs: ringdown from an interior dipole and normalised
//! waveguide transmission.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    build_geometry, rasterize, CavityDesign, GeometryDescription, IndexModel, PermittivityGrid,
    RasterOptions,
};
use crate::scalar::Real;

use super::{
    wavelength_grid, Component, FieldSnapshot, FluxMonitorSpec, LineProfile, PmlSpec, ProbeSpec,
    Pulse, Simulation, SimulationSpec, SourceKind, SourceSpec, Spectrum, SpectrumKind, TimeTrace,
};

/// How a cavity design is turned into a simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOptions {
    /// Grid cells per mirror period.
    pub resolution: f64,
    /// Free space between the widest beam edge and the PML (nm).
    pub y_margin: f64,
    /// Unpatterned beam added at both ends before the PML (nm).
    pub padding: f64,
    pub pml_cells: usize,
    pub index: IndexModel,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            resolution: 20.0,
            y_margin: 700.0,
            padding: 800.0,
            pml_cells: 12,
            index: IndexModel::default(),
        }
    }
}

impl GridOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution >= 4.0) {
            return Err(Error::Argument(format!("resolution {} below 4 cells per period", self.resolution)));
        }
        if !(self.y_margin > 0.0 && self.padding >= 0.0) {
            return Err(Error::Argument("margins must be positive".into()));
        }
        if self.pml_cells < 8 {
            return Err(Error::Argument(format!("PML must be >= 8 cells, got {}", self.pml_cells)));
        }
        Ok(())
    }

    /// Geometry and grid for `design`, with the PML region included in the
    /// grid and filled with unpatterned beam / background.
    pub fn cavity_grid(&self, design: &CavityDesign) -> Result<(GeometryDescription, PermittivityGrid)> {
        self.validate()?;
        let dx = design.mirror.a / self.resolution;
        let pml = self.pml_cells as f64 * dx;
        let geom = build_geometry(design, self.padding + pml)?;
        let grid = self.rasterize(&geom, dx)?;
        Ok((geom, grid))
    }

    pub fn rasterize(&self, geom: &GeometryDescription, dx: f64) -> Result<PermittivityGrid> {
        let pml = self.pml_cells as f64 * dx;
        let (_, w_max) = geom.width_profile.range_over(-geom.extent / 2.0, geom.extent / 2.0);
        let opts = RasterOptions {
            dx,
            y_span: w_max + 2.0 * (self.y_margin + pml),
            index: self.index,
        };
        rasterize(geom, &opts)
    }
}

#[derive(Debug, Clone)]
pub struct RingdownSpec<T> {
    pub grid: PermittivityGrid,
    pub pml: PmlSpec,
    pub courant: T,
    /// Dipole position and pulse.
    pub source: (f64, f64),
    pub pulse: Pulse,
    pub probes: Vec<(f64, f64)>,
    /// Samples recorded after the source has switched off.
    pub record_steps: usize,
    /// Steps spent accumulating the field DFT at the resonance; 0 skips it.
    pub snapshot_steps: usize,
}

impl<T: Real> RingdownSpec<T> {
    /// Dipole offset by (0.2 a, 0.15 w) from the cavity centre and probes at
    /// points that lie on none of the structure's mirror planes.
    pub fn centred(grid: PermittivityGrid, a: f64, w: f64, band: (f64, f64), pml_cells: usize) -> Self {
        RingdownSpec {
            grid,
            pml: PmlSpec::with_cells(pml_cells),
            courant: T::lit(0.5),
            source: (0.2 * a, 0.15 * w),
            pulse: Pulse::covering(band.0, band.1),
            probes: vec![
                (-0.37 * a, 0.11 * w),
                (0.61 * a, -0.23 * w),
                (1.13 * a, 0.07 * w),
            ],
            record_steps: 8000,
            snapshot_steps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ringdown {
    pub traces: Vec<TimeTrace>,
    pub snapshot: Option<FieldSnapshot>,
    pub grid_hash: String,
    pub steps: usize,
    pub dt: f64,
    pub warnings: Vec<String>,
}

/// Excites the structure, waits for the source to switch off and records
/// the free decay at every probe. If `snapshot_frequency` returns a
/// frequency for the recorded traces, the run continues for
/// `snapshot_steps` more steps while accumulating the E-field DFT at that
/// frequency; for a single dominant resonance this is its mode profile.
pub fn run_ringdown<T: Real>(
    spec: &RingdownSpec<T>,
    snapshot_frequency: impl FnOnce(&[TimeTrace]) -> Option<f64>,
) -> Result<Ringdown> {
    if spec.probes.is_empty() {
        return Err(Error::Argument("ringdown needs at least one probe".into()));
    }
    let dt = spec.courant.as_f64() * spec.grid.dx;
    let settle = (spec.pulse.duration() / dt).ceil() as usize + 1;
    let mut sim_spec = SimulationSpec::new(spec.grid.clone());
    sim_spec.pml = spec.pml;
    sim_spec.courant = spec.courant;
    sim_spec.sources.push(SourceSpec {
        kind: SourceKind::PointDipole {
            x: spec.source.0,
            y: spec.source.1,
            component: Component::Hz,
        },
        pulse: spec.pulse,
    });
    sim_spec.probes = spec
        .probes
        .iter()
        .map(|&(x, y)| ProbeSpec {
            x,
            y,
            component: Component::Hz,
        })
        .collect();
    sim_spec.record_start = settle + 1;
    sim_spec.max_steps = settle + spec.record_steps + spec.snapshot_steps;
    let mut sim = Simulation::new(&sim_spec)?;
    sim.run(settle + spec.record_steps)?;
    let traces = sim.traces();

    let mut warnings = Vec::new();
    let injected = spec.pulse.amplitude.powi(2);
    if traces.iter().all(|t| t.power() < 1e-20 * injected) {
        warnings.push("all probes sit at field nodes: trace power below 1e-20 of injected".into());
    }
    let mut snapshot = None;
    if spec.snapshot_steps > 0 {
        if let Some(f) = snapshot_frequency(&traces) {
            let per_period = 1.0 / (f * dt);
            let stride = ((per_period / 10.0).floor() as usize).max(1);
            sim.start_snapshot(f, stride);
            sim.run(spec.snapshot_steps)?;
            snapshot = sim.snapshot();
        }
    }
    Ok(Ringdown {
        traces,
        snapshot,
        grid_hash: spec.grid.content_hash(),
        steps: sim.steps_taken(),
        dt,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct TransmissionSpec<T> {
    pub device: PermittivityGrid,
    /// Same grid with the holes removed; its flux normalises the device.
    pub reference: PermittivityGrid,
    pub pml: PmlSpec,
    pub courant: T,
    /// Beam width, beam index and background index used for the guided
    /// source profile.
    pub beam: (f64, f64, f64),
    pub band: (f64, f64),
    pub n_wavelengths: usize,
    pub source_x: f64,
    pub monitor_x: f64,
    /// Half height of the output flux plane (nm).
    pub monitor_half_height: f64,
    pub max_steps: usize,
    /// Stop once the monitor-plane intensity falls below this fraction of
    /// its peak.
    pub decay: f64,
}

impl<T: Real> TransmissionSpec<T> {
    /// Source and monitor in the unpatterned ends of a cavity built with
    /// `opts`; the reference is the same beam without holes at the mirror
    /// width.
    pub fn for_cavity(
        design: &CavityDesign,
        opts: &GridOptions,
        band: (f64, f64),
        n_wavelengths: usize,
    ) -> Result<Self> {
        let (geom, device) = opts.cavity_grid(design)?;
        let reference = opts.rasterize(&geom.unpatterned(design.mirror.w), device.dx)?;
        let n_core = opts.index.beam_index(&design.mirror.stack)?;
        let n_bg = opts.index.background_index(&design.mirror.stack);
        let dx = device.dx;
        let first_hole = geom.holes.first().map_or(0.0, |h| h.x - h.r);
        let edge = -geom.extent / 2.0 + (opts.pml_cells as f64 + 4.0) * dx;
        let source_x = (0.5 * (edge + first_hole)).min(first_hole - 2.0 * dx);
        Ok(TransmissionSpec {
            device,
            reference,
            pml: PmlSpec::with_cells(opts.pml_cells),
            courant: T::lit(0.5),
            beam: (design.mirror.w, n_core, n_bg),
            band,
            n_wavelengths,
            source_x,
            monitor_x: -source_x,
            monitor_half_height: design.mirror.w / 2.0 + 0.5 * band.1 / n_bg,
            max_steps: 400_000,
            decay: 1e-8,
        })
    }

    fn sim_spec(&self, grid: &PermittivityGrid) -> SimulationSpec<T> {
        let (width, n_core, n_clad) = self.beam;
        let lambda0 = 2.0 / (1.0 / self.band.0 + 1.0 / self.band.1);
        let mut s = SimulationSpec::new(grid.clone());
        s.pml = self.pml;
        s.courant = self.courant;
        s.max_steps = self.max_steps;
        s.sources.push(SourceSpec {
            kind: SourceKind::WaveguideLine {
                x: self.source_x,
                profile: LineProfile::GuidedMode {
                    width,
                    n_core,
                    n_clad,
                    wavelength: lambda0,
                },
            },
            pulse: Pulse::covering(self.band.0, self.band.1),
        });
        s.monitors.push(FluxMonitorSpec {
            x: self.monitor_x,
            y_min: -self.monitor_half_height,
            y_max: self.monitor_half_height,
            wavelengths: wavelength_grid(self.band.0, self.band.1, self.n_wavelengths),
        });
        s
    }

    fn flux(&self, grid: &PermittivityGrid) -> Result<Vec<f64>> {
        let mut sim = Simulation::new(&self.sim_spec(grid))?;
        let t_off = sim.source_end();
        let mut peak = 0.0_f64;
        while sim.steps_taken() < self.max_steps {
            sim.run(64)?;
            let now = sim.monitor_intensity();
            peak = peak.max(now);
            if sim.time() > t_off && peak > 0.0 && now < self.decay * peak {
                break;
            }
        }
        Ok(sim.fluxes().remove(0).values)
    }

    fn reference_key(&self) -> String {
        format!(
            "{}|{}|{:?}|{:?}|{:?}|{}|{}|{}|{}|{}|{}",
            std::any::type_name::<T>(),
            self.reference.content_hash(),
            self.pml,
            self.beam,
            self.band,
            self.n_wavelengths,
            self.courant.as_f64(),
            self.source_x,
            self.monitor_x,
            self.monitor_half_height,
            self.decay,
        )
    }
}

fn reference_cache() -> &'static Mutex<HashMap<String, Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Vec<f64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Normalised transmission device / reference. Reference runs are cached
/// per process, keyed by the reference grid hash and run settings.
pub fn run_transmission<T: Real>(spec: &TransmissionSpec<T>) -> Result<Spectrum> {
    let key = spec.reference_key();
    let cached = reference_cache().lock().unwrap().get(&key).cloned();
    let reference = match cached {
        Some(r) => r,
        None => {
            let r = spec.flux(&spec.reference)?;
            reference_cache().lock().unwrap().insert(key, r.clone());
            r
        }
    };
    let wavelengths = wavelength_grid(spec.band.0, spec.band.1, spec.n_wavelengths);
    let peak = reference.iter().cloned().fold(0.0, f64::max);
    let bad: Vec<f64> = wavelengths
        .iter()
        .zip(&reference)
        .filter(|(_, r)| !(**r > 1e-6 * peak))
        .map(|(w, _)| *w)
        .collect();
    if !bad.is_empty() {
        return Err(Error::Bandwidth { wavelengths: bad });
    }
    let device = spec.flux(&spec.device)?;
    let values = device.iter().zip(&reference).map(|(d, r)| d / r).collect();
    Ok(Spectrum {
        wavelengths,
        values,
        kind: SpectrumKind::Normalized,
    })
}
