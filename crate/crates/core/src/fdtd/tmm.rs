//! Normal-incidence transfer matrices for planar multilayers. Serves as the
//! independent reference for the time-domain solver in 1D geometries.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer<T> {
    pub index: T,
    pub thickness: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multilayer<T> {
    pub n_in: T,
    pub n_out: T,
    pub layers: Vec<Layer<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response<T> {
    pub r: Complex<T>,
    pub t: Complex<T>,
    pub reflectance: T,
    pub transmittance: T,
}

impl<T: Real> Multilayer<T> {
    pub fn new(n_in: T, n_out: T, layers: Vec<Layer<T>>) -> Result<Self> {
        let ok = |n: T| n >= T::one() && n.is_finite();
        if !ok(n_in) || !ok(n_out) || layers.iter().any(|l| !ok(l.index) || l.thickness < T::zero()) {
            return Err(Error::Argument("indices must be >= 1 and thicknesses >= 0".into()));
        }
        Ok(Multilayer { n_in, n_out, layers })
    }

    /// `pairs` repetitions of quarter-wave high/low layers at `lambda0`.
    pub fn quarter_wave(n_h: T, n_l: T, pairs: usize, lambda0: T, n_ambient: T) -> Result<Self> {
        let four = T::lit(4.0);
        let mut layers = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            layers.push(Layer { index: n_h, thickness: lambda0 / (four * n_h) });
            layers.push(Layer { index: n_l, thickness: lambda0 / (four * n_l) });
        }
        Self::new(n_ambient, n_ambient, layers)
    }

    pub fn total_thickness(&self) -> T {
        self.layers.iter().fold(T::zero(), |s, l| s + l.thickness)
    }

    pub fn response(&self, wavelength: T) -> Response<T> {
        let k0 = T::lit(2.0) * T::PI() / wavelength;
        let one = Complex::new(T::one(), T::zero());
        let zero = Complex::new(T::zero(), T::zero());
        let i = Complex::new(T::zero(), T::one());
        let mut m = [[one, zero], [zero, one]];
        for l in &self.layers {
            let d = k0 * l.index * l.thickness;
            let (s, c) = d.sin_cos();
            let c = Complex::new(c, T::zero());
            let a = [[c, i * (s / l.index)], [i * (s * l.index), c]];
            m = [
                [m[0][0] * a[0][0] + m[0][1] * a[1][0], m[0][0] * a[0][1] + m[0][1] * a[1][1]],
                [m[1][0] * a[0][0] + m[1][1] * a[1][0], m[1][0] * a[0][1] + m[1][1] * a[1][1]],
            ];
        }
        let ns = Complex::new(self.n_out, T::zero());
        let n0 = Complex::new(self.n_in, T::zero());
        let b = m[0][0] + m[0][1] * ns;
        let c = m[1][0] + m[1][1] * ns;
        let den = n0 * b + c;
        let r = (n0 * b - c) / den;
        let t = (n0 * T::lit(2.0)) / den;
        Response {
            r,
            t,
            reflectance: r.norm_sqr(),
            transmittance: self.n_out / self.n_in * t.norm_sqr(),
        }
    }

    pub fn transmittance(&self, wavelengths: &[T]) -> Vec<T> {
        wavelengths.iter().map(|&l| self.response(l).transmittance).collect()
    }
}

/// Closed-form peak reflectance of a quarter-wave stack with identical
/// ambient media on both sides.
pub fn bragg_peak_reflectance(n_h: f64, n_l: f64, pairs: usize) -> f64 {
    let rho = (n_h / n_l).powi(2 * pairs as i32);
    ((1.0 - rho) / (1.0 + rho)).powi(2)
}
