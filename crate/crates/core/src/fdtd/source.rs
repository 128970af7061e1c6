use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::slabmode::{Polarization, Slab};

/// Field component on the staggered TE grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Ex,
    Ey,
    Hz,
}

/// Gaussian-enveloped sinusoid. Frequencies are in cycles per nm of light
/// travel (c = 1), so `f0 = 1 / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub f0: f64,
    /// Standard deviation of the spectrum divided by `f0`.
    pub bandwidth: f64,
    pub amplitude: f64,
}

impl Pulse {
    pub fn new(lambda_center: f64, bandwidth: f64) -> Self {
        Pulse {
            f0: 1.0 / lambda_center,
            bandwidth,
            amplitude: 1.0,
        }
    }

    /// Pulse covering the wavelength band `[lambda_min, lambda_max]`
    /// at roughly one spectral standard deviation from the centre.
    pub fn covering(lambda_min: f64, lambda_max: f64) -> Self {
        let (f_lo, f_hi) = (1.0 / lambda_max, 1.0 / lambda_min);
        let f0 = 0.5 * (f_lo + f_hi);
        Pulse {
            f0,
            bandwidth: 0.5 * (f_hi - f_lo) / f0,
            amplitude: 1.0,
        }
    }

    /// Envelope standard deviation in time.
    pub fn width(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.f0 * self.bandwidth)
    }

    /// The pulse peaks at four envelope widths and is switched off after
    /// eight.
    pub fn duration(&self) -> f64 {
        8.0 * self.width()
    }

    pub fn value(&self, t: f64) -> f64 {
        let tau = self.width();
        if !(0.0..=8.0 * tau).contains(&t) {
            return 0.0;
        }
        let s = t - 4.0 * tau;
        self.amplitude
            * (-0.5 * (s / tau).powi(2)).exp()
            * (2.0 * std::f64::consts::PI * self.f0 * s).sin()
    }
}

/// Transverse shape of a line source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LineProfile {
    Uniform,
    /// Fundamental even mode of a symmetric waveguide of the given width
    /// and core/cladding indices at `wavelength`.
    GuidedMode {
        width: f64,
        n_core: f64,
        n_clad: f64,
        wavelength: f64,
    },
}

impl LineProfile {
    pub fn sample(&self, y: &[f64]) -> Vec<f64> {
        match *self {
            LineProfile::Uniform => vec![1.0; y.len()],
            LineProfile::GuidedMode {
                width,
                n_core,
                n_clad,
                wavelength,
            } => {
                let slab = Slab::<f64>::symmetric(n_core, n_clad, width);
                match slab.solve(wavelength, Polarization::TM, 0) {
                    Ok(sol) => {
                        let p = slab.even_profile(sol.n_eff, wavelength);
                        y.iter().map(|&v| p(v)).collect()
                    }
                    // Beam too narrow to guide at this wavelength: fall back
                    // to a Gaussian of the beam width.
                    Err(_) => y
                        .iter()
                        .map(|&v| (-(v / (0.5 * width)).powi(2)).exp())
                        .collect(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceKind {
    PointDipole { x: f64, y: f64, component: Component },
    /// Magnetic line current on Hz along the full grid height at `x`.
    WaveguideLine { x: f64, profile: LineProfile },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub pulse: Pulse,
}

/// Source resolved to grid indices and weights.
#[derive(Debug, Clone)]
pub(crate) struct CompiledSource<T> {
    pub component: Component,
    /// (flat index into the component array, weight)
    pub taps: Vec<(usize, T)>,
    pub pulse: Pulse,
}

impl<T: Real> CompiledSource<T> {
    pub fn active(&self, t: f64) -> bool {
        t <= self.pulse.duration()
    }
}
