//! Convolutional PML coefficients (complex-frequency-shifted, kappa = 1).

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmlSpec {
    /// Absorbing cells at each x end; 0 closes the axis with conducting walls.
    pub cells_x: usize,
    pub cells_y: usize,
    /// Polynomial grading order.
    pub order: f64,
    /// Theoretical normal-incidence reflection.
    pub reflection: f64,
    /// Frequency shift alpha at the inner PML interface (1/nm).
    pub alpha_max: f64,
}

impl Default for PmlSpec {
    fn default() -> Self {
        PmlSpec {
            cells_x: 12,
            cells_y: 12,
            order: 3.0,
            reflection: 1e-8,
            alpha_max: 1e-3,
        }
    }
}

impl PmlSpec {
    pub fn closed() -> Self {
        PmlSpec {
            cells_x: 0,
            cells_y: 0,
            ..Default::default()
        }
    }

    pub fn with_cells(cells: usize) -> Self {
        PmlSpec {
            cells_x: cells,
            cells_y: cells,
            ..Default::default()
        }
    }
}

/// Recursive-convolution coefficients at the staggered positions of one
/// axis; only positions with non-zero conductivity are stored.
#[derive(Debug, Clone)]
pub(crate) struct AxisProfile<T> {
    pub index: Vec<usize>,
    pub b: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Real> AxisProfile<T> {
    /// `positions` gives the coordinate (in cells, 0..n) of each staggered
    /// sample along an axis of `n` cells.
    pub fn new(spec: &PmlSpec, cells: usize, n: usize, positions: impl Iterator<Item = f64>, dx: f64, dt: f64) -> Self {
        let mut out = AxisProfile {
            index: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
        };
        if cells == 0 {
            return out;
        }
        let d = cells as f64;
        let thickness = d * dx;
        let sigma_max = -(spec.order + 1.0) * spec.reflection.ln() / (2.0 * thickness);
        for (k, p) in positions.enumerate() {
            let depth = (d - p).max(p - (n as f64 - d)).max(0.0) / d;
            if depth <= 0.0 {
                continue;
            }
            let depth = depth.min(1.0);
            let sigma = sigma_max * depth.powf(spec.order);
            let alpha = spec.alpha_max * (1.0 - depth);
            let b = (-(sigma + alpha) * dt).exp();
            let c = if sigma > 0.0 { sigma / (sigma + alpha) * (b - 1.0) } else { 0.0 };
            out.index.push(k);
            out.b.push(T::lit(b));
            out.c.push(T::lit(c));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }
}
