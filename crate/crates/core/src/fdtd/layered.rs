//! Effectively one-dimensional runs: y-invariant stripes between conducting
//! walls, driven by a uniform line source. Used to validate the engine
//! against transfer matrices and to measure PML reflection.

use crate::error::{Error, Result};
use crate::geometry::PermittivityGrid;
use crate::scalar::Real;

use super::tmm::Layer;
use super::{
    wavelength_grid, Component, FluxMonitorSpec, LineProfile, PmlSpec, ProbeSpec, Pulse,
    Simulation, SimulationSpec, SourceKind, SourceSpec, Spectrum, SpectrumKind,
};

#[derive(Debug, Clone)]
pub struct LayeredSetup {
    pub dx: f64,
    pub n_ambient: f64,
    /// Layer thicknesses are rounded to whole cells.
    pub layers: Vec<Layer<f64>>,
    pub pml_cells: usize,
    /// Free space between source, structure and monitor (nm).
    pub gap: f64,
    pub band: (f64, f64),
    pub n_wavelengths: usize,
}

impl LayeredSetup {
    /// The layers actually represented on the grid.
    pub fn snapped_layers(&self) -> Vec<Layer<f64>> {
        self.layers
            .iter()
            .map(|l| Layer {
                index: l.index,
                thickness: (l.thickness / self.dx).round().max(1.0) * self.dx,
            })
            .collect()
    }

    fn grid(&self, with_layers: bool) -> (PermittivityGrid, f64, f64) {
        let gap_cells = (self.gap / self.dx).round() as usize;
        let layer_cells: Vec<usize> = self
            .snapped_layers()
            .iter()
            .map(|l| (l.thickness / self.dx).round() as usize)
            .collect();
        let stack_cells: usize = layer_cells.iter().sum();
        let nx = 2 * self.pml_cells + 4 * gap_cells + stack_cells;
        let mut g = PermittivityGrid::uniform(nx, 1, self.dx, self.n_ambient.powi(2));
        g.x0 = 0.0;
        g.y0 = 0.0;
        let start = self.pml_cells + 2 * gap_cells;
        if with_layers {
            let mut i = start;
            for (l, n) in self.layers.iter().zip(&layer_cells) {
                for k in i..i + n {
                    g.eps[k] = l.index * l.index;
                }
                i += n;
            }
        }
        let source_x = (self.pml_cells + gap_cells) as f64 * self.dx + 0.5 * self.dx;
        let monitor_x = (start + stack_cells + gap_cells) as f64 * self.dx;
        (g, source_x, monitor_x)
    }

    fn spec<T: Real>(&self, with_layers: bool) -> SimulationSpec<T> {
        let (g, sx, mx) = self.grid(with_layers);
        let mut spec = SimulationSpec::new(g);
        spec.pml = PmlSpec {
            cells_x: self.pml_cells,
            cells_y: 0,
            ..PmlSpec::default()
        };
        spec.sources.push(SourceSpec {
            kind: SourceKind::WaveguideLine {
                x: sx,
                profile: LineProfile::Uniform,
            },
            pulse: Pulse::covering(self.band.0, self.band.1),
        });
        spec.monitors.push(FluxMonitorSpec {
            x: mx,
            y_min: 0.0,
            y_max: self.dx,
            wavelengths: wavelength_grid(self.band.0, self.band.1, self.n_wavelengths),
        });
        spec.probes.push(ProbeSpec {
            x: mx,
            y: 0.5 * self.dx,
            component: Component::Hz,
        });
        spec
    }

    fn run_one<T: Real>(&self, with_layers: bool) -> Result<Spectrum> {
        let spec = self.spec::<T>(with_layers);
        let mut sim = Simulation::new(&spec)?;
        let t_off = sim.source_end();
        let mut peak = 0.0_f64;
        let limit = 2_000_000;
        while sim.steps_taken() < limit {
            sim.run(64)?;
            let now = sim.monitor_intensity();
            peak = peak.max(now);
            if sim.time() > t_off && now < 1e-14 * peak {
                break;
            }
        }
        Ok(sim.fluxes().remove(0))
    }

    /// FDTD transmission normalised by an empty run on the same grid.
    pub fn transmission<T: Real>(&self) -> Result<Spectrum> {
        if self.layers.is_empty() {
            return Err(Error::Argument("no layers".into()));
        }
        let dev = self.run_one::<T>(true)?;
        let reference = self.run_one::<T>(false)?;
        let peak = reference.values.iter().cloned().fold(0.0, f64::max);
        let bad: Vec<f64> = reference
            .wavelengths
            .iter()
            .zip(&reference.values)
            .filter(|(_, v)| **v < 1e-6 * peak)
            .map(|(w, _)| *w)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Bandwidth { wavelengths: bad });
        }
        let values = dev
            .values
            .iter()
            .zip(&reference.values)
            .map(|(d, r)| (d / r).max(0.0))
            .collect();
        Ok(Spectrum {
            wavelengths: dev.wavelengths,
            values,
            kind: SpectrumKind::Normalized,
        })
    }
}

/// Peak amplitude of the wave reflected by an `cells`-thick PML relative to
/// the incident pulse, at `cells_per_wavelength` resolution. The reflected
/// wave is isolated by subtracting a run whose right boundary is far enough
/// away that its echo arrives after the recording window.
pub fn pml_reflection<T: Real>(cells: usize, cells_per_wavelength: f64, wavelength: f64) -> Result<f64> {
    let dx = wavelength / cells_per_wavelength;
    let pulse = Pulse::new(wavelength, 0.25);
    let probe_offset = 5;
    let run = |extra: usize| -> Result<Vec<f64>> {
        let pad = 40 + (pulse.duration() / dx) as usize;
        let nx = 2 * cells + pad + 60 + extra;
        let mut g = PermittivityGrid::uniform(nx, 1, dx, 1.0);
        g.x0 = 0.0;
        g.y0 = 0.0;
        let mut spec = SimulationSpec::<T>::new(g);
        spec.pml = PmlSpec {
            cells_x: cells,
            cells_y: 0,
            ..PmlSpec::default()
        };
        spec.sources.push(SourceSpec {
            kind: SourceKind::WaveguideLine {
                x: (cells + pad) as f64 * dx + 0.5 * dx,
                profile: LineProfile::Uniform,
            },
            pulse,
        });
        let probe_i = cells + pad + 60 - probe_offset;
        spec.probes.push(ProbeSpec {
            x: probe_i as f64 * dx + 0.5 * dx,
            y: 0.5 * dx,
            component: Component::Hz,
        });
        let mut sim = Simulation::new(&spec)?;
        let steps = ((pulse.duration() + 2.0 * (60.0 + 2.0 * cells as f64) * dx) / sim.dt()) as usize;
        sim.run(steps)?;
        Ok(sim.traces().remove(0).samples)
    };
    let short = run(0)?;
    let long = run(20_000)?;
    let incident = long.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let reflected = short
        .iter()
        .zip(&long)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(reflected / incident)
}
