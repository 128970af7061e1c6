//! Guided modes of the asymmetric three-layer slab.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MaterialStack;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    TE,
    TM,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabSolution<T> {
    pub n_eff: T,
    pub mode_order: usize,
    pub polarization: Polarization,
    /// Vacuum wavelength in nm.
    pub wavelength: T,
}

/// Indices and thickness of a three-layer slab in the working precision.
#[derive(Debug, Clone, Copy)]
pub struct Slab<T> {
    pub n_core: T,
    pub n_lower: T,
    pub n_upper: T,
    pub thickness: T,
}

impl<T: Real> Slab<T> {
    pub fn from_stack(stack: &MaterialStack) -> Self {
        Slab {
            n_core: T::lit(stack.n_core),
            n_lower: T::lit(stack.n_substrate),
            n_upper: T::lit(stack.n_cladding),
            thickness: T::lit(stack.thickness),
        }
    }

    /// Symmetric slab of width `thickness` in a uniform background.
    pub fn symmetric(n_core: T, n_clad: T, thickness: T) -> Self {
        Slab {
            n_core,
            n_lower: n_clad,
            n_upper: n_clad,
            thickness,
        }
    }

    fn weights(&self, pol: Polarization) -> (T, T) {
        match pol {
            Polarization::TE => (T::one(), T::one()),
            Polarization::TM => (
                (self.n_core / self.n_lower).powi(2),
                (self.n_core / self.n_upper).powi(2),
            ),
        }
    }

    /// Dispersion residual; positive below the root, negative above.
    pub fn residual(&self, n_eff: T, wavelength: T, pol: Polarization, order: usize) -> T {
        let k0 = T::lit(2.0) * T::PI() / wavelength;
        let kappa = (self.n_core * self.n_core - n_eff * n_eff).max(T::zero()).sqrt();
        let g_lo = (n_eff * n_eff - self.n_lower * self.n_lower).max(T::zero()).sqrt();
        let g_up = (n_eff * n_eff - self.n_upper * self.n_upper).max(T::zero()).sqrt();
        let (f_lo, f_up) = self.weights(pol);
        k0 * self.thickness * kappa
            - T::lit(order as f64) * T::PI()
            - (f_lo * g_lo).atan2(kappa)
            - (f_up * g_up).atan2(kappa)
    }

    /// Core thickness below which mode `order` is no longer guided.
    pub fn cutoff_thickness(&self, wavelength: T, pol: Polarization, order: usize) -> T {
        let k0 = T::lit(2.0) * T::PI() / wavelength;
        let n_lo = self.n_lower.max(self.n_upper);
        let n_hi = self.n_lower.min(self.n_upper);
        let kappa = (self.n_core * self.n_core - n_lo * n_lo).sqrt();
        let (f_lo, f_up) = self.weights(pol);
        let f = if self.n_lower >= self.n_upper { f_up } else { f_lo };
        let g = (n_lo * n_lo - n_hi * n_hi).max(T::zero()).sqrt();
        (T::lit(order as f64) * T::PI() + (f * g).atan2(kappa)) / (k0 * kappa)
    }

    pub fn solve(&self, wavelength: T, pol: Polarization, order: usize) -> Result<SlabSolution<T>> {
        if !(wavelength > T::zero()) {
            return Err(Error::Argument(format!("wavelength must be positive, got {wavelength}")));
        }
        let guard = T::lit(1e-9);
        let mut lo = self.n_lower.max(self.n_upper) + guard;
        let mut hi = self.n_core - guard;
        let f_lo = self.residual(lo, wavelength, pol, order);
        if !(f_lo > T::zero()) || lo >= hi {
            return Err(Error::Cutoff {
                order,
                cutoff_thickness: self.cutoff_thickness(wavelength, pol, order).as_f64(),
            });
        }
        let tol = T::root_tolerance();
        let mut mid = (lo + hi) / T::lit(2.0);
        for _ in 0..400 {
            mid = (lo + hi) / T::lit(2.0);
            let f = self.residual(mid, wavelength, pol, order);
            if f.abs() < tol || hi - lo <= T::epsilon() * hi {
                break;
            }
            if f > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(SlabSolution {
            n_eff: mid,
            mode_order: order,
            polarization: pol,
            wavelength,
        })
    }

    /// Transverse profile of the magnetic field of the fundamental even mode
    /// of a symmetric slab, normalised to 1 at the centre. `y` is measured
    /// from the slab centre.
    pub fn even_profile(&self, n_eff: T, wavelength: T) -> impl Fn(T) -> T {
        let k0 = T::lit(2.0) * T::PI() / wavelength;
        let kappa = k0 * (self.n_core * self.n_core - n_eff * n_eff).max(T::zero()).sqrt();
        let gamma = k0 * (n_eff * n_eff - self.n_upper * self.n_upper).max(T::zero()).sqrt();
        let half = self.thickness / T::lit(2.0);
        let edge = (kappa * half).cos();
        move |y: T| {
            let ay = y.abs();
            if ay <= half {
                (kappa * y).cos()
            } else {
                edge * (-gamma * (ay - half)).exp()
            }
        }
    }
}

/// Effective index of the guided mode of `order` for the given stack.
pub fn effective_index<T: Real>(
    stack: &MaterialStack,
    wavelength: f64,
    pol: Polarization,
    order: usize,
) -> Result<SlabSolution<T>> {
    stack.validate()?;
    Slab::<T>::from_stack(stack).solve(T::lit(wavelength), pol, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(n_core: f64, n_sub: f64, n_clad: f64, t: f64) -> MaterialStack {
        MaterialStack {
            n_core,
            n_substrate: n_sub,
            n_cladding: n_clad,
            thickness: t,
        }
    }

    /// Independent root finder: dense scan for the sign change, then
    /// bisection on the bracketing pair.
    fn dense_scan_root(s: &Slab<f64>, lambda: f64, pol: Polarization) -> Option<f64> {
        let lo = s.n_lower.max(s.n_upper) + 1e-9;
        let hi = s.n_core - 1e-9;
        let n = 1_000_000;
        let step = (hi - lo) / n as f64;
        let mut prev = s.residual(lo, lambda, pol, 0);
        for k in 1..=n {
            let x = lo + k as f64 * step;
            let f = s.residual(x, lambda, pol, 0);
            if prev > 0.0 && f <= 0.0 {
                let (mut a, mut b) = (x - step, x);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if s.residual(m, lambda, pol, 0) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev = f;
        }
        None
    }

    #[test]
    fn matches_dense_scan_oracle() {
        let st = stack(2.0, 1.0, 1.0, 200.0);
        let oracle = dense_scan_root(&Slab::from_stack(&st), 637.0, Polarization::TE).unwrap();
        // Frozen from the oracle.
        assert!((oracle - 1.742_529_054).abs() < 1e-8, "oracle {oracle:.10}");
        let sol = effective_index::<f64>(&st, 637.0, Polarization::TE, 0).unwrap();
        assert!((sol.n_eff - oracle).abs() < 1e-10);
        let res = Slab::from_stack(&st).residual(sol.n_eff, 637.0, Polarization::TE, 0);
        assert!(res.abs() < 1e-10);
    }

    #[test]
    fn thin_asymmetric_slab_is_cut_off() {
        let st = stack(2.0, 1.45, 1.0, 20.0);
        assert!(dense_scan_root(&Slab::from_stack(&st), 637.0, Polarization::TE).is_none());
        match effective_index::<f64>(&st, 637.0, Polarization::TE, 0) {
            Err(Error::Cutoff { cutoff_thickness, .. }) => {
                assert!(cutoff_thickness > 20.0);
                // Just above cutoff the mode exists.
                let ok = stack(2.0, 1.45, 1.0, cutoff_thickness * 1.01);
                assert!(effective_index::<f64>(&ok, 637.0, Polarization::TE, 0).is_ok());
            }
            other => panic!("expected cutoff, got {other:?}"),
        }
    }

    #[test]
    fn thick_slab_limit() {
        let st = stack(2.0, 1.0, 1.0, 6370.0);
        let sol = effective_index::<f64>(&st, 637.0, Polarization::TE, 0).unwrap();
        assert!((sol.n_eff - 2.0).abs() < 1e-3);
    }

    #[test]
    fn monotone_in_thickness_and_index() {
        let mut prev = 0.0;
        for k in 0..30 {
            let t = 100.0 + 20.0 * k as f64;
            let n = effective_index::<f64>(&stack(2.0, 1.45, 1.0, t), 637.0, Polarization::TE, 0)
                .unwrap()
                .n_eff;
            assert!(n > prev);
            prev = n;
        }
        let mut prev = 0.0;
        for k in 0..30 {
            let nc = 1.6 + 0.05 * k as f64;
            let n = effective_index::<f64>(&stack(nc, 1.45, 1.0, 200.0), 637.0, Polarization::TE, 0)
                .unwrap()
                .n_eff;
            assert!(n > prev);
            prev = n;
        }
    }

    #[test]
    fn tm_mode_is_below_te_mode() {
        let st = MaterialStack::sin_on_oxide();
        let te = effective_index::<f64>(&st, 637.0, Polarization::TE, 0).unwrap();
        let tm = effective_index::<f64>(&st, 637.0, Polarization::TM, 0).unwrap();
        assert!(tm.n_eff < te.n_eff);
        assert!(tm.n_eff > 1.45 && te.n_eff < 2.0);
    }

    #[test]
    fn single_precision_agrees() {
        let st = MaterialStack::sin_on_oxide();
        let a = effective_index::<f64>(&st, 637.0, Polarization::TE, 0).unwrap().n_eff;
        let b = effective_index::<f32>(&st, 637.0, Polarization::TE, 0).unwrap().n_eff;
        assert!((a - b as f64).abs() < 1e-4);
    }

    #[test]
    fn even_profile_is_continuous() {
        let s = Slab::<f64>::symmetric(1.7, 1.2, 461.0);
        let sol = s.solve(637.0, Polarization::TM, 0).unwrap();
        let p = s.even_profile(sol.n_eff, 637.0);
        assert!((p(230.5 - 1e-9) - p(230.5 + 1e-9)).abs() < 1e-6);
        assert_eq!(p(0.0), 1.0);
        assert!(p(1000.0) < 1e-2);
    }
}
