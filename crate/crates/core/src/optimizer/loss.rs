//! Split of 1/Q(N) into a constant scattering part and a transmission part
//! falling exponentially with the hole count:
//! 1/Q = 1/Q_sc + exp(-beta N) / Q0.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SweepResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    /// `None` when 1/Q_sc is consistent with zero.
    pub q_sc: Option<f64>,
    /// Set when Q_sc is not identified by the data.
    pub q_sc_lower_bound: Option<f64>,
    pub inv_q_sc: f64,
    pub inv_q_sc_stderr: f64,
    pub q0: f64,
    pub beta: f64,
    pub beta_stderr: f64,
    /// RMS relative residual of 1/Q.
    pub fit_residual: f64,
    pub notes: Vec<String>,
}

impl LossDecomposition {
    pub fn q_at(&self, n: f64) -> f64 {
        1.0 / (self.inv_q_sc + (-self.beta * n).exp() / self.q0)
    }
}

/// Weighted linear solve for (1/Q_sc, 1/Q0) at fixed beta; the first is
/// clamped at zero. Returns the parameters and the residual sum.
fn project(n: &[f64], u: &[f64], beta: f64) -> (f64, f64, f64) {
    let (mut saa, mut sab, mut sbb, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (ni, ui) in n.iter().zip(u) {
        let a = 1.0 / ui;
        let b = (-beta * ni).exp() / ui;
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sa += a;
        sb += b;
    }
    let det = saa * sbb - sab * sab;
    let (mut x, mut y) = if det.abs() > 1e-300 {
        ((sa * sbb - sb * sab) / det, (saa * sb - sab * sa) / det)
    } else {
        (0.0, sb / sbb)
    };
    if x < 0.0 {
        x = 0.0;
        y = sb / sbb;
    }
    if y < 0.0 {
        y = 0.0;
        x = sa / saa;
    }
    let rss = n
        .iter()
        .zip(u)
        .map(|(ni, ui)| ((x + y * (-beta * ni).exp()) / ui - 1.0).powi(2))
        .sum();
    (x, y, rss)
}

/// Fits the model to (N, Q) pairs.
pub fn fit_loss_model(data: &[(f64, f64)]) -> Result<LossDecomposition> {
    if data.len() < 4 {
        return Err(Error::Fit(format!("need >= 4 points, got {}", data.len())));
    }
    if data.iter().any(|(n, q)| !(n.is_finite() && *q > 0.0 && q.is_finite())) {
        return Err(Error::Fit("hole counts must be finite and Q positive".into()));
    }
    let n: Vec<f64> = data.iter().map(|d| d.0).collect();
    let u: Vec<f64> = data.iter().map(|d| 1.0 / d.1).collect();
    let span = n.iter().cloned().fold(f64::MIN, f64::max) - n.iter().cloned().fold(f64::MAX, f64::min);
    if !(span > 0.0) {
        return Err(Error::Fit("hole counts must differ".into()));
    }

    // beta e^{-beta N} must change over the data: scan a log grid of decay
    // lengths from 1e-3 to 50 spans, then refine by golden section.
    let cost = |b: f64| project(&n, &u, b).2;
    let (lo, hi) = ((1e-3 / span).ln(), (50.0 / span).ln());
    let steps = 400;
    let grid: Vec<f64> = (0..=steps).map(|i| (lo + (hi - lo) * i as f64 / steps as f64).exp()).collect();
    let k = (0..grid.len())
        .min_by(|&i, &j| cost(grid[i]).partial_cmp(&cost(grid[j])).unwrap())
        .unwrap();
    let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(steps)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..200 {
        if cost(c) < cost(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a) <= 1e-14 * b {
            break;
        }
    }
    let beta = 0.5 * (a + b);
    let (x, y, rss) = project(&n, &u, beta);
    if !(y > 0.0) {
        return Err(Error::Fit("no decaying transmission part in the data".into()));
    }

    let dof = data.len().saturating_sub(3).max(1) as f64;
    let sigma2 = rss / dof;
    let mut jtj = Matrix3::zeros();
    for (ni, ui) in n.iter().zip(&u) {
        let e = (-beta * ni).exp();
        let row = [1.0 / ui, e / ui, -y * ni * e / ui];
        for r in 0..3 {
            for c in 0..3 {
                jtj[(r, c)] += row[r] * row[c];
            }
        }
    }
    let cov = jtj.try_inverse().map(|m| m * sigma2);
    let (se_x, se_beta) = cov.map_or((f64::NAN, f64::NAN), |m| (m[(0, 0)].max(0.0).sqrt(), m[(2, 2)].max(0.0).sqrt()));

    let mut notes = Vec::new();
    let q_max = data.iter().map(|d| d.1).fold(0.0, f64::max);
    // Losses a billion times below the smallest observed one are rounding.
    let u_min = u.iter().cloned().fold(f64::MAX, f64::min);
    let identified = x > 2.0 * se_x && x > 1e-9 * u_min;
    let (q_sc, bound) = if identified {
        (Some(1.0 / x), None)
    } else {
        notes.push("scattering Q not identified: 1/Q_sc consistent with zero".into());
        let b = if x + 2.0 * se_x > 0.0 { (1.0 / (x + 2.0 * se_x)).max(q_max) } else { q_max };
        (None, Some(b))
    };
    Ok(LossDecomposition {
        q_sc,
        q_sc_lower_bound: bound,
        inv_q_sc: x,
        inv_q_sc_stderr: se_x,
        q0: 1.0 / y,
        beta,
        beta_stderr: se_beta,
        fit_residual: (rss / data.len() as f64).sqrt(),
        notes,
    })
}

/// Fits a sweep over hole counts, taking N as the total hole count.
pub fn fit_loss_decomposition(sweep: &SweepResult) -> Result<LossDecomposition> {
    let data: Vec<(f64, f64)> = sweep
        .points
        .iter()
        .filter_map(|p| p.q().map(|q| (p.design.n_tot() as f64, q)))
        .collect();
    fit_loss_model(&data)
}
