use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Vertical flux plane at `x` spanning `[y_min, y_max]`, accumulating a
/// running DFT at each wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxMonitorSpec {
    pub x: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub wavelengths: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct FluxMonitor {
    /// Ey column index (integer x position).
    pub column: usize,
    pub rows: std::ops::Range<usize>,
    pub wavelengths: Vec<f64>,
    e_acc: Vec<Complex64>,
    h_acc: Vec<Complex64>,
    phasor: Vec<Complex64>,
    rotation: Vec<Complex64>,
    half_step: Vec<Complex64>,
    ey_buf: Vec<f64>,
    hz_buf: Vec<f64>,
    dx: f64,
    dt: f64,
}

impl FluxMonitor {
    pub fn new(column: usize, rows: std::ops::Range<usize>, wavelengths: Vec<f64>, dx: f64, dt: f64) -> Self {
        let n = wavelengths.len();
        let len = rows.len();
        let omega: Vec<f64> = wavelengths
            .iter()
            .map(|l| 2.0 * std::f64::consts::PI / l)
            .collect();
        FluxMonitor {
            column,
            rows,
            e_acc: vec![Complex64::default(); n * len],
            h_acc: vec![Complex64::default(); n * len],
            phasor: vec![Complex64::new(1.0, 0.0); n],
            rotation: omega.iter().map(|w| Complex64::from_polar(1.0, w * dt)).collect(),
            half_step: omega
                .iter()
                .map(|w| Complex64::from_polar(1.0, -0.5 * w * dt))
                .collect(),
            ey_buf: vec![0.0; len],
            hz_buf: vec![0.0; len],
            wavelengths,
            dx,
            dt,
        }
    }

    /// Called once per completed step with Ey at the current integer time
    /// level and Hz half a step earlier. The phasor is advanced each call, so
    /// it tracks `exp(i w t_E)`.
    pub fn accumulate(&mut self, ey: impl Fn(usize) -> f64, hz: impl Fn(usize) -> f64) {
        for (k, j) in self.rows.clone().enumerate() {
            self.ey_buf[k] = ey(j);
            self.hz_buf[k] = hz(j);
        }
        let len = self.rows.len();
        for f in 0..self.wavelengths.len() {
            let p = self.phasor[f];
            let ph = p * self.half_step[f];
            let e = &mut self.e_acc[f * len..(f + 1) * len];
            for (acc, v) in e.iter_mut().zip(&self.ey_buf) {
                *acc += p * *v;
            }
            let h = &mut self.h_acc[f * len..(f + 1) * len];
            for (acc, v) in h.iter_mut().zip(&self.hz_buf) {
                *acc += ph * *v;
            }
            self.phasor[f] = p * self.rotation[f];
        }
    }

    /// Net power through the plane towards +x at every wavelength.
    pub fn flux(&self) -> Vec<f64> {
        let len = self.rows.len();
        (0..self.wavelengths.len())
            .map(|f| {
                let e = &self.e_acc[f * len..(f + 1) * len];
                let h = &self.h_acc[f * len..(f + 1) * len];
                e.iter()
                    .zip(h)
                    .map(|(e, h)| (e * h.conj()).re)
                    .sum::<f64>()
                    * self.dx
                    * self.dt
                    * self.dt
            })
            .collect()
    }
}

/// Running DFT of the in-plane electric field over the whole grid at a
/// single frequency.
#[derive(Debug, Clone)]
pub(crate) struct FieldDft {
    pub frequency: f64,
    pub start_step: usize,
    pub stride: usize,
    pub ex: Vec<Complex64>,
    pub ey: Vec<Complex64>,
    pub samples: usize,
}

impl FieldDft {
    pub fn new(frequency: f64, start_step: usize, stride: usize, n_ex: usize, n_ey: usize) -> Self {
        FieldDft {
            frequency,
            start_step,
            stride: stride.max(1),
            ex: vec![Complex64::default(); n_ex],
            ey: vec![Complex64::default(); n_ey],
            samples: 0,
        }
    }

    pub fn wants(&self, step: usize) -> bool {
        step >= self.start_step && (step - self.start_step) % self.stride == 0
    }

    pub fn add<T: crate::Real>(&mut self, ex: &[T], ey: &[T], t: f64) {
        let p = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * self.frequency * t);
        for (acc, v) in self.ex.iter_mut().zip(ex) {
            *acc += p * v.as_f64();
        }
        for (acc, v) in self.ey.iter_mut().zip(ey) {
            *acc += p * v.as_f64();
        }
        self.samples += 1;
    }
}
