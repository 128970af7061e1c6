//! Damped least-squares fit of a Lorentzian peak on a constant baseline.

use crate::error::{Error, Result};
use crate::fdtd::Spectrum;
use crate::scalar::Real;

use super::{Method, ResonanceResult, Uncertainty};

/// A (G/2)^2 / ((x - x0)^2 + (G/2)^2) + B with full width G.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianModel<T> {
    pub center: T,
    pub fwhm: T,
    pub amplitude: T,
    pub baseline: T,
}

impl<T: Real> LorentzianModel<T> {
    pub fn eval(&self, x: T) -> T {
        let g = self.fwhm / T::lit(2.0);
        let d = x - self.center;
        self.amplitude * g * g / (d * d + g * g) + self.baseline
    }

    pub fn q(&self) -> T {
        self.center / self.fwhm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit<T> {
    pub model: LorentzianModel<T>,
    /// Standard errors of (center, fwhm, amplitude, baseline).
    pub errors: [T; 4],
    pub q_error: T,
    pub iterations: usize,
    pub rms_residual: T,
}

const MAX_ITER: usize = 200;

/// Parameters are (x0, ln G, A, B); fitting the log width keeps G positive.
fn residuals_and_jacobian<T: Real>(x: &[T], y: &[T], p: &[T; 4], jac: &mut Vec<[T; 4]>) -> Vec<T> {
    let two = T::lit(2.0);
    let g = p[1].exp() / two;
    jac.clear();
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let d = xi - p[0];
            let den = d * d + g * g;
            let l = g * g / den;
            // d l / d x0 and d l / d ln G
            let dl_dx0 = two * d * g * g / (den * den);
            let dl_dlng = two * g * g * d * d / (den * den);
            jac.push([p[2] * dl_dx0, p[2] * dl_dlng, l, T::one()]);
            p[2] * l + p[3] - yi
        })
        .collect()
}

fn solve4<T: Real>(mut a: [[T; 4]; 4], mut b: [T; 4]) -> Option<[T; 4]> {
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if !(a[piv][c].abs() > T::zero()) {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] = a[r][k] - f * a[c][k];
            }
            b[r] = b[r] - f * b[c];
        }
    }
    let mut x = [T::zero(); 4];
    for c in (0..4).rev() {
        let mut s = b[c];
        for k in c + 1..4 {
            s = s - a[c][k] * x[k];
        }
        x[c] = s / a[c][c];
    }
    Some(x)
}

fn invert4<T: Real>(a: [[T; 4]; 4]) -> Option<[[T; 4]; 4]> {
    let mut inv = [[T::zero(); 4]; 4];
    for c in 0..4 {
        let mut e = [T::zero(); 4];
        e[c] = T::one();
        let col = solve4(a, e)?;
        for r in 0..4 {
            inv[r][c] = col[r];
        }
    }
    Some(inv)
}

/// Starting point from the highest sample, the minimum as baseline and the
/// interpolated half-maximum crossings.
pub fn initial_guess<T: Real>(x: &[T], y: &[T]) -> LorentzianModel<T> {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ymin = y.iter().cloned().fold(T::infinity(), T::min);
    let half = (ymax + ymin) / T::lit(2.0);
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<T> {
        let mut prev = imax;
        for i in range {
            if y[i] <= half {
                let t = (y[prev] - half) / (y[prev] - y[i]);
                return Some(x[prev] + t * (x[i] - x[prev]));
            }
            prev = i;
        }
        None
    };
    let left = cross(&mut (0..imax).rev());
    let right = cross(&mut (imax + 1..x.len()));
    let span = x[x.len() - 1] - x[0];
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => T::lit(2.0) * (x[imax] - l),
        (None, Some(r)) => T::lit(2.0) * (r - x[imax]),
        (None, None) => span / T::lit(4.0),
    };
    let fwhm = fwhm.max(span / T::lit(1e4));
    LorentzianModel {
        center: x[imax],
        fwhm,
        amplitude: ymax - ymin,
        baseline: ymin,
    }
}

/// Levenberg-Marquardt fit of `y(x)`. Stops when the relative parameter
/// step drops below 1e-9 or after 200 iterations.
pub fn fit_lorentzian<T: Real>(
    x: &[T],
    y: &[T],
    initial: Option<LorentzianModel<T>>,
) -> Result<LorentzianFit<T>> {
    if x.len() != y.len() || x.len() < 8 {
        return Err(Error::Fit(format!("need >= 8 samples, got {}", x.len())));
    }
    let init = initial.unwrap_or_else(|| initial_guess(x, y));
    if !(init.fwhm > T::zero()) {
        return Err(Error::Fit("initial width must be positive".into()));
    }
    let mut p = [init.center, init.fwhm.ln(), init.amplitude, init.baseline];
    let mut jac = Vec::with_capacity(x.len());
    let cost = |r: &[T]| r.iter().fold(T::zero(), |s, v| s + *v * *v);
    let mut r = residuals_and_jacobian(x, y, &p, &mut jac);
    let mut c = cost(&r);
    let mut lambda = T::lit(1e-3);
    let mut converged = false;
    let mut iter = 0;
    let step_tol = T::lit(1e-9).max(T::lit(16.0) * T::epsilon());
    while iter < MAX_ITER {
        iter += 1;
        let mut jtj = [[T::zero(); 4]; 4];
        let mut jtr = [T::zero(); 4];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..4 {
                jtr[a] = jtr[a] - row[a] * *ri;
                for b in 0..4 {
                    jtj[a][b] = jtj[a][b] + row[a] * row[b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj;
            for a in 0..4 {
                damped[a][a] = damped[a][a] * (T::one() + lambda) + T::min_positive_value();
            }
            let Some(delta) = solve4(damped, jtr) else {
                lambda = lambda * T::lit(10.0);
                continue;
            };
            let trial = [p[0] + delta[0], p[1] + delta[1], p[2] + delta[2], p[3] + delta[3]];
            let mut tj = Vec::with_capacity(x.len());
            let tr = residuals_and_jacobian(x, y, &trial, &mut tj);
            let tc = cost(&tr);
            if tc.is_finite() && tc <= c {
                let amp = p[2].abs().max(T::min_positive_value());
                let rel = (delta[0].abs() / p[0].abs().max(T::min_positive_value()))
                    .max(delta[1].abs())
                    .max(delta[2].abs() / amp)
                    .max(delta[3].abs() / amp);
                p = trial;
                r = tr;
                jac = tj;
                c = tc;
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                accepted = true;
                if rel < step_tol {
                    converged = true;
                }
                break;
            }
            lambda = lambda * T::lit(10.0);
        }
        if !accepted {
            // No downhill step at any damping: the minimum is reached to
            // working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let model = LorentzianModel {
        center: p[0],
        fwhm: p[1].exp(),
        amplitude: p[2],
        baseline: p[3],
    };
    if !converged {
        return Err(Error::Fit(format!(
            "no convergence after {MAX_ITER} iterations; last iterate centre {}, width {}, amplitude {}",
            model.center, model.fwhm, model.amplitude
        )));
    }
    let n = x.len();
    let dof = T::lit((n - 4) as f64);
    let s2 = c / dof;
    let mut jtj = [[T::zero(); 4]; 4];
    for row in &jac {
        for a in 0..4 {
            for b in 0..4 {
                jtj[a][b] = jtj[a][b] + row[a] * row[b];
            }
        }
    }
    let cov = invert4(jtj).ok_or_else(|| Error::Fit("singular normal matrix: no peak in window".into()))?;
    let var = |k: usize| (cov[k][k] * s2).max(T::zero());
    let fwhm = model.fwhm;
    let q = model.q();
    // Q = x0 exp(-lnG): gradient (1/G, -Q) in (x0, lnG).
    let gq = [T::one() / fwhm, -q];
    let q_var = (gq[0] * gq[0] * cov[0][0] + T::lit(2.0) * gq[0] * gq[1] * cov[0][1] + gq[1] * gq[1] * cov[1][1]) * s2;
    Ok(LorentzianFit {
        model,
        errors: [var(0).sqrt(), fwhm * var(1).sqrt(), var(2).sqrt(), var(3).sqrt()],
        q_error: q_var.max(T::zero()).sqrt(),
        iterations: iter,
        rms_residual: (c / T::lit(n as f64)).sqrt(),
    })
}

/// Fits the peak of `spec` inside `[lo, hi]` nm and reports it as a
/// resonance. A fit without a real peak (non-positive amplitude, or Q
/// uncertainty above Q) is rejected.
pub fn lorentzian_fit(
    spec: &Spectrum,
    window: (f64, f64),
    initial: Option<LorentzianModel<f64>>,
) -> Result<ResonanceResult> {
    let w = spec.window(window.0, window.1);
    if w.len() < 8 {
        return Err(Error::Fit(format!("window holds {} samples, need >= 8", w.len())));
    }
    let fit = fit_lorentzian(&w.wavelengths, &w.values, initial)?;
    let m = fit.model;
    if !(m.amplitude > 0.0) || !(fit.q_error < m.q()) || !m.q().is_finite() {
        return Err(Error::Fit(format!(
            "not a resonance: amplitude {:.3e}, Q {:.3e} +/- {:.3e}",
            m.amplitude,
            m.q(),
            fit.q_error
        )));
    }
    let mut notes = Vec::new();
    if m.center < window.0 || m.center > window.1 {
        notes.push("fitted centre lies outside the window".into());
    }
    Ok(ResonanceResult {
        wavelength: m.center,
        frequency: 1.0 / m.center,
        q: m.q(),
        amplitude: m.amplitude,
        mode_volume: None,
        method: Method::LorentzianFit,
        uncertainty: Uncertainty {
            wavelength: Some(fit.errors[0]),
            q: Some(fit.q_error),
            amplitude: Some(fit.errors[2]),
            fwhm: Some(fit.errors[1]),
            baseline: Some(fit.errors[3]),
        },
        notes,
    })
}
