//! Resonance extraction: harmonic inversion of ringdown traces, Lorentzian
//! fits of spectra, mode volume and Purcell factor.

mod lorentzian;
mod pencil;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::{FieldSnapshot, TimeTrace};
use crate::geometry::PermittivityGrid;

pub use lorentzian::{fit_lorentzian, initial_guess, lorentzian_fit, LorentzianFit, LorentzianModel};
pub use pencil::{harmonic_inversion, harmonic_inversion_joint, Inversion, InversionOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    HarmonicInversion,
    LorentzianFit,
}

/// Standard errors, where the method defines them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Uncertainty {
    pub wavelength: Option<f64>,
    pub q: Option<f64>,
    pub amplitude: Option<f64>,
    pub fwhm: Option<f64>,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceResult {
    /// nm
    pub wavelength: f64,
    /// cycles per nm
    pub frequency: f64,
    pub q: f64,
    pub amplitude: f64,
    /// In units of (wavelength / n_core)^3.
    pub mode_volume: Option<f64>,
    pub method: Method,
    pub uncertainty: Uncertainty,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Inversion of every probe of one run. Traces without signal are left
/// out. Poles closer than half a linewidth are one mode seen at several
/// probes: its frequency and Q are the medians over those probes and its
/// amplitude the root sum of squares.
///
/// Probes are inverted separately rather than stacked: each probe sees its
/// own mix of non-resonant content, and a stacked pencil has to spend rank
/// on all of it at once.
pub fn invert_traces(traces: &[TimeTrace], opts: &InversionOptions) -> Result<Vec<ResonanceResult>> {
    let mut found: Vec<(usize, ResonanceResult)> = Vec::new();
    for (k, t) in traces.iter().enumerate().filter(|(_, t)| t.power() > 0.0) {
        found.extend(harmonic_inversion(t, opts)?.modes.into_iter().map(|m| (k, m)));
    }
    found.sort_by(|a, b| b.1.amplitude.partial_cmp(&a.1.amplitude).unwrap());
    let mut clusters: Vec<Vec<(usize, ResonanceResult)>> = Vec::new();
    for (k, m) in found {
        let same = |o: &ResonanceResult| {
            let width = 0.5 * (o.frequency / o.q).min(m.frequency / m.q);
            (o.frequency - m.frequency).abs() < width.max(1e-4 * m.frequency)
        };
        match clusters.iter_mut().find(|c| same(&c[0].1)) {
            // A weaker pole of the same probe is a split of the same line.
            Some(c) if c.iter().any(|(j, _)| *j == k) => {}
            Some(c) => c.push((k, m)),
            None => clusters.push(vec![(k, m)]),
        }
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let mut all: Vec<ResonanceResult> = clusters
        .into_iter()
        .map(|c| {
            let f = median(c.iter().map(|(_, m)| m.frequency).collect());
            let q = median(c.iter().map(|(_, m)| m.q).collect());
            let amplitude = c.iter().map(|(_, m)| m.amplitude.powi(2)).sum::<f64>().sqrt();
            let mut r = c[0].1.clone();
            r.frequency = f;
            r.wavelength = 1.0 / f;
            r.q = q;
            r.amplitude = amplitude;
            r.notes.push(format!("seen at {} of {} probes", c.len(), traces.len()));
            r
        })
        .collect();
    all.sort_by(|a, b| b.amplitude.partial_cmp(&a.amplitude).unwrap());
    Ok(all)
}

/// Mode carrying the most energy through the ringdown (amplitude^2 * Q),
/// ties broken by proximity to `lambda_target`. Band-edge states can start
/// out stronger than the cavity mode but die off within a few periods.
pub fn dominant_mode(modes: &[ResonanceResult], lambda_target: f64) -> Option<&ResonanceResult> {
    let energy = |m: &ResonanceResult| m.amplitude * m.amplitude * m.q;
    modes.iter().max_by(|a, b| {
        energy(a)
            .partial_cmp(&energy(b))
            .unwrap()
            .then_with(|| {
                let da = (a.wavelength - lambda_target).abs();
                let db = (b.wavelength - lambda_target).abs();
                db.partial_cmp(&da).unwrap()
            })
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeVolumeOptions {
    pub wavelength: f64,
    pub n_core: f64,
    /// Effective height multiplying the 2D mode area (nm).
    pub t_eff: f64,
    /// Cells excluded at each grid edge (the absorbing layer).
    pub exclude_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVolume {
    /// In (wavelength / n_core)^3.
    pub volume: f64,
    /// Mode area in nm^2.
    pub area: f64,
    /// Largest eps |E|^2 on the boundary of the integration region relative
    /// to the maximum.
    pub edge_fraction: f64,
    pub warnings: Vec<String>,
}

/// V = t_eff * sum(eps |E|^2 dx^2) / max(eps |E|^2), in (lambda / n)^3.
pub fn mode_volume(
    snapshot: &FieldSnapshot,
    grid: &PermittivityGrid,
    opts: &ModeVolumeOptions,
) -> Result<ModeVolume> {
    if snapshot.nx != grid.nx || snapshot.ny != grid.ny {
        return Err(Error::Argument("snapshot and permittivity grid differ in size".into()));
    }
    if !(opts.wavelength > 0.0 && opts.n_core > 0.0 && opts.t_eff > 0.0) {
        return Err(Error::Argument("wavelength, index and height must be positive".into()));
    }
    let e = opts.exclude_cells;
    if 2 * e + 2 >= grid.nx || 2 * e + 2 >= grid.ny {
        return Err(Error::Argument("excluded border leaves no interior".into()));
    }
    let (i0, i1, j0, j1) = (e, grid.nx - e, e, grid.ny - e);
    let mut sum = 0.0;
    let mut peak = 0.0_f64;
    let mut edge = 0.0_f64;
    for j in j0..j1 {
        for i in i0..i1 {
            let u = grid.eps[j * grid.nx + i] * snapshot.e_squared[j * grid.nx + i];
            sum += u;
            peak = peak.max(u);
            if i == i0 || i == i1 - 1 || j == j0 || j == j1 - 1 {
                edge = edge.max(u);
            }
        }
    }
    if !(peak > 0.0) {
        return Err(Error::Argument("snapshot field is zero".into()));
    }
    let area = sum * grid.dx * grid.dx / peak;
    let unit = (opts.wavelength / opts.n_core).powi(3);
    let edge_fraction = edge / peak;
    let mut warnings = Vec::new();
    if edge_fraction > 1e-3 {
        warnings.push(format!(
            "field not decayed at the domain edge ({edge_fraction:.2e} of maximum): volume includes leakage"
        ));
    }
    Ok(ModeVolume {
        volume: area * opts.t_eff / unit,
        area,
        edge_fraction,
        warnings,
    })
}

/// F = 3 Q / (4 pi^2 V) with V in (lambda / n)^3.
pub fn purcell_factor(q: f64, v: f64) -> Result<f64> {
    if !(q > 0.0 && v > 0.0) {
        return Err(Error::Argument(format!("Q and V must be positive, got {q}, {v}")));
    }
    Ok(3.0 / (4.0 * std::f64::consts::PI.powi(2)) * q / v)
}
