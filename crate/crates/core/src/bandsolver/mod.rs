//! TE Bloch bands of a mirror unit cell by plane-wave expansion.
//!
//! The cell is collapsed to 2D (beam index inside `|y| < w/2`, background
//! outside and in the hole) and repeated with period `a` along x and with
//! a supercell of height `supercell_width * w` along y. Hz is expanded in
//! plane waves; only the y-even sector is kept, which holds the
//! fundamental beam mode. Because the cell is even in x and y the
//! operator `-div(eta grad)` with `eta = 1/eps` is a real symmetric matrix.
//!
//! Frequencies are reported as a / lambda and wavevectors in units of pi / a.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{disk_overlap_area, IndexModel, MaterialStack, UnitCell};

/// 2D permittivity of one period: a beam of width `w` and index `n_beam`
/// with a centred hole of radius `r`, in a background of index `n_bg`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProfile {
    pub a: f64,
    pub w: f64,
    pub r: f64,
    pub n_beam: f64,
    pub n_bg: f64,
    /// Supercell height along y (nm).
    pub height: f64,
}

impl CellProfile {
    pub fn from_cell(cell: &UnitCell, supercell_width: f64, index: &IndexModel) -> Result<Self> {
        cell.validate()?;
        Ok(CellProfile {
            a: cell.a,
            w: cell.w,
            r: cell.r,
            n_beam: index.beam_index(&cell.stack)?,
            n_bg: index.background_index(&cell.stack),
            height: supercell_width * cell.w,
        })
    }

    /// Homogeneous cell of index `n`.
    pub fn uniform(a: f64, height: f64, n: f64) -> Self {
        CellProfile {
            a,
            w: height,
            r: 0.0,
            n_beam: n,
            n_bg: n,
            height,
        }
    }

    /// Area-averaged inverse permittivity of the rectangle.
    fn eta(&self, xa: f64, xb: f64, ya: f64, yb: f64) -> f64 {
        let area = (xb - xa) * (yb - ya);
        let h = self.w / 2.0;
        let strip = ((yb.min(h) - ya.max(-h)).max(0.0)) * (xb - xa);
        let hole = disk_overlap_area(0.0, 0.0, self.r, xa, xb, ya, yb);
        let frac = ((strip - hole) / area).clamp(0.0, 1.0);
        frac / (self.n_beam * self.n_beam) + (1.0 - frac) / (self.n_bg * self.n_bg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandOptions {
    pub n_k: usize,
    pub n_bands: usize,
    /// Real-space samples per period used for the Fourier coefficients.
    pub resolution: usize,
    /// Supercell height in multiples of the beam width.
    pub supercell_width: f64,
    /// Plane waves along x; the y count follows from the supercell aspect
    /// ratio so the cutoff is isotropic.
    pub plane_waves: usize,
    pub index: IndexModel,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            n_k: 17,
            n_bands: 6,
            resolution: 32,
            supercell_width: 3.0,
            plane_waves: 16,
            index: IndexModel::default(),
        }
    }
}

impl BandOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_k < 2 {
            return Err(Error::Argument(format!("n_k must be >= 2, got {}", self.n_k)));
        }
        if self.n_bands == 0 {
            return Err(Error::Argument("n_bands must be >= 1".into()));
        }
        if self.resolution < 16 {
            return Err(Error::Argument(format!(
                "resolution must be >= 16 cells per period, got {}",
                self.resolution
            )));
        }
        if !(self.supercell_width >= 3.0) {
            return Err(Error::Argument(format!(
                "supercell width must be >= 3 beam widths, got {}",
                self.supercell_width
            )));
        }
        if self.plane_waves < 4 {
            return Err(Error::Argument(format!(
                "need >= 4 plane waves per axis, got {}",
                self.plane_waves
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    /// Bloch wavevectors in units of pi / a.
    pub k_points: Vec<f64>,
    /// Ascending frequencies (a / lambda) per k-point.
    pub bands: Vec<Vec<f64>>,
    /// Index of the cladding that defines the light cone, per k-point.
    pub light_line_index: Vec<f64>,
    /// Set by [`light_cone_filter`]: true below the light line.
    pub guided: Option<Vec<Vec<bool>>>,
    /// Size of the plane-wave basis.
    pub basis_size: usize,
}

/// Plane-wave basis and Fourier coefficients of eta for one cell.
struct Operator {
    a: f64,
    height: f64,
    /// (m, p): x harmonic m, y cosine order p >= 0.
    basis: Vec<(i64, i64)>,
    /// eta_hat[(dm, dp)] for dm in -2mx..=2mx, dp in 0..=2my.
    eta_hat: Vec<f64>,
    mx: i64,
    my: i64,
}

impl Operator {
    fn new(profile: &CellProfile, opts: &BandOptions) -> Result<Self> {
        let (a, height) = (profile.a, profile.height);
        if !(a > 0.0 && height > 0.0 && profile.n_beam >= 1.0 && profile.n_bg >= 1.0) {
            return Err(Error::Argument("cell profile needs positive size and indices >= 1".into()));
        }
        let mx = (opts.plane_waves / 2) as i64;
        let my = ((mx as f64) * height / a).round().max(1.0) as i64;
        let mut basis = Vec::new();
        for m in -mx..=mx {
            for p in 0..=my {
                let (u, v) = (m as f64 / mx as f64, p as f64 / my as f64);
                if u * u + v * v <= 1.0 + 1e-12 {
                    basis.push((m, p));
                }
            }
        }
        // Sampling must resolve harmonics up to twice the basis cutoff
        // without wrap-around.
        let nx = opts.resolution.max(4 * mx as usize + 2);
        let dx = a / nx as f64;
        let ny = ((height / dx).round() as usize).max(4 * my as usize + 2);
        let dy = height / ny as f64;
        let mut grid = vec![Complex64::default(); nx * ny];
        for j in 0..ny {
            let ya = -height / 2.0 + j as f64 * dy;
            for i in 0..nx {
                let xa = -a / 2.0 + i as f64 * dx;
                grid[j * nx + i] = Complex64::new(profile.eta(xa, xa + dx, ya, ya + dy), 0.0);
            }
        }
        let mut planner = FftPlanner::new();
        let fx = planner.plan_fft_forward(nx);
        for row in grid.chunks_mut(nx) {
            fx.process(row);
        }
        let fy = planner.plan_fft_forward(ny);
        let mut col = vec![Complex64::default(); ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = grid[j * nx + i];
            }
            fy.process(&mut col);
            for j in 0..ny {
                grid[j * nx + i] = col[j];
            }
        }
        // Samples sit at cell centres x_i = -a/2 + (i + 1/2) dx; undo that
        // offset so the coefficients refer to the cell centre.
        let coef = |m: i64, p: i64| -> f64 {
            let bi = m.rem_euclid(nx as i64) as usize;
            let bj = p.rem_euclid(ny as i64) as usize;
            let shift = |k: i64, n: usize| {
                let phase = std::f64::consts::PI * k as f64 * (1.0 - 1.0 / n as f64);
                Complex64::from_polar(1.0, phase)
            };
            let c = grid[bj * nx + bi] * shift(m, nx) * shift(p, ny) / (nx * ny) as f64;
            c.re
        };
        let (wx, wy) = (4 * mx + 1, 2 * my + 1);
        let mut eta_hat = vec![0.0; (wx * wy) as usize];
        for dm in -2 * mx..=2 * mx {
            for dp in 0..=2 * my {
                eta_hat[((dm + 2 * mx) * wy + dp) as usize] = coef(dm, dp);
            }
        }
        Ok(Operator {
            a,
            height,
            basis,
            eta_hat,
            mx,
            my,
        })
    }

    fn eta(&self, dm: i64, dp: i64) -> f64 {
        let wy = 2 * self.my + 1;
        self.eta_hat[((dm + 2 * self.mx) * wy + dp.abs()) as usize]
    }

    /// Matrix of -div(eta grad) in the y-even basis at Bloch wavevector
    /// `k` (units of pi / a), scaled so eigenvalues are (a / lambda)^2.
    fn matrix(&self, k: f64) -> DMatrix<f64> {
        let n = self.basis.len();
        // Lengths in units of a; wavevectors divided by 2 pi.
        let qy = self.a / self.height;
        let kx = |m: i64| 0.5 * k + m as f64;
        let norm = |p: i64| if p == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
        DMatrix::from_fn(n, n, |i, j| {
            let (m, p) = self.basis[i];
            let (mm, pp) = self.basis[j];
            let xx = kx(m) * kx(mm);
            let yy = qy * qy * (p * pp) as f64;
            let dm = m - mm;
            let v = (xx + yy) * self.eta(dm, p - pp) + (xx - yy) * self.eta(dm, p + pp);
            // Cosine basis: sqrt2 cos(2 pi p y / h) for p > 0.
            v * norm(p) * norm(pp) / 2.0
        })
    }

    fn frequencies(&self, k: f64, n_bands: usize) -> Result<Vec<f64>> {
        let m = self.matrix(k);
        let asym = (&m - m.transpose()).amax();
        let scale = m.amax().max(f64::MIN_POSITIVE);
        if asym > 1e-9 * scale {
            return Err(Error::Eigen(format!(
                "operator not symmetric at k = {k}: residue {:.3e} of {scale:.3e}",
                asym
            )));
        }
        let ev = m.symmetric_eigenvalues();
        if ev.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(format!(
                "non-finite eigenvalue at k = {k} (basis {})",
                self.basis.len()
            )));
        }
        let mut w2: Vec<f64> = ev.iter().cloned().collect();
        w2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = 1e-12 * scale;
        let mut out = Vec::with_capacity(n_bands);
        for &v in w2.iter().take(n_bands) {
            if v < -tol {
                return Err(Error::Eigen(format!(
                    "negative eigenvalue {v:.3e} at k = {k}: operator not positive"
                )));
            }
            out.push(v.max(0.0).sqrt());
        }
        Ok(out)
    }
}

/// Bands of a general cell profile on a uniform k grid over [0, pi/a].
pub fn compute_profile_bands(profile: &CellProfile, opts: &BandOptions) -> Result<BandStructure> {
    opts.validate()?;
    let op = Operator::new(profile, opts)?;
    if op.basis.len() < opts.n_bands {
        return Err(Error::Argument(format!(
            "basis of {} plane waves cannot hold {} bands",
            op.basis.len(),
            opts.n_bands
        )));
    }
    let k_points: Vec<f64> = (0..opts.n_k).map(|i| i as f64 / (opts.n_k - 1) as f64).collect();
    let bands = k_points
        .par_iter()
        .map(|&k| op.frequencies(k, opts.n_bands))
        .collect::<Result<Vec<_>>>()?;
    Ok(BandStructure {
        light_line_index: vec![profile.n_bg; k_points.len()],
        k_points,
        bands,
        guided: None,
        basis_size: op.basis.len(),
    })
}

pub fn compute_bands(cell: &UnitCell, opts: &BandOptions) -> Result<BandStructure> {
    opts.validate()?;
    let profile = CellProfile::from_cell(cell, opts.supercell_width, &opts.index)?;
    compute_profile_bands(&profile, opts)
}

/// The two lowest frequencies at the zone edge (dielectric and air band).
pub fn band_edges(bs: &BandStructure) -> Result<(f64, f64)> {
    let last = bs.k_points.len().checked_sub(1).ok_or_else(|| Error::Argument("empty band structure".into()))?;
    if (bs.k_points[last] - 1.0).abs() > 1e-12 {
        return Err(Error::Argument("band structure does not reach k = pi/a".into()));
    }
    let edge = &bs.bands[last];
    if edge.len() < 2 {
        return Err(Error::Argument("need two bands at the zone edge".into()));
    }
    let (w1, w2) = (edge[0], edge[1]);
    let separation = w2 - w1;
    if separation <= 1e-6 * w2 {
        return Err(Error::NoGap { separation });
    }
    Ok((w1, w2))
}

/// sqrt(((w2 - w1) / (w2 + w1))^2 - ((w_res - w_mid) / w_mid)^2), or
/// `None` when the target lies outside the gap.
pub fn mirror_strength(w1: f64, w2: f64, w_res: f64) -> Result<Option<f64>> {
    if !(w1 <= w2 && w1 >= 0.0) {
        return Err(Error::Argument(format!("band edges out of order: {w1}, {w2}")));
    }
    let mid = 0.5 * (w1 + w2);
    if !(mid > 0.0) {
        return Ok(None);
    }
    let g = (w2 - w1) / (w2 + w1);
    let d = (w_res - mid) / mid;
    let rad = g * g - d * d;
    // At a band edge the two terms are equal up to rounding.
    if rad < -1e-12 * g * g {
        return Ok(None);
    }
    Ok(Some(rad.max(0.0).sqrt()))
}

/// Marks each (k, omega) as guided when it lies below the light line
/// omega = k (a / 2 pi) / n_background, i.e. omega < k_rel / (2 n).
pub fn light_cone_filter(bs: &BandStructure, n_background: f64) -> Result<BandStructure> {
    if !(n_background >= 1.0) {
        return Err(Error::Argument(format!("background index must be >= 1, got {n_background}")));
    }
    let guided = bs
        .k_points
        .iter()
        .zip(&bs.bands)
        .map(|(&k, ws)| ws.iter().map(|&w| w < 0.5 * k / n_background).collect())
        .collect();
    Ok(BandStructure {
        light_line_index: vec![n_background; bs.k_points.len()],
        guided: Some(guided),
        ..bs.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorAnalysis {
    pub omega1: f64,
    pub omega2: f64,
    pub omega_mid: f64,
    pub omega_res: f64,
    /// `None` when the target frequency lies outside the gap.
    pub gamma: Option<f64>,
    pub gap_fraction: f64,
    /// Light line at the zone edge, 1 / (2 n_bg).
    pub light_line: f64,
}

impl MirrorAnalysis {
    /// Relative distance of the target outside the gap (0 inside).
    pub fn detuning_excess(&self) -> f64 {
        ((self.omega1 - self.omega_res).max(self.omega_res - self.omega2)).max(0.0) / self.omega_mid
    }
}

/// Band edges of `cell` at the zone edge and the mirror strength at the
/// target wavelength (nm).
pub fn analyze_mirror(cell: &UnitCell, lambda_target: f64, opts: &BandOptions) -> Result<MirrorAnalysis> {
    opts.validate()?;
    if !(lambda_target > 0.0) {
        return Err(Error::Argument(format!("target wavelength must be positive, got {lambda_target}")));
    }
    let profile = CellProfile::from_cell(cell, opts.supercell_width, &opts.index)?;
    let op = Operator::new(&profile, opts)?;
    let edge = op.frequencies(1.0, 2)?;
    let bs = BandStructure {
        k_points: vec![0.0, 1.0],
        bands: vec![vec![0.0, 0.0], edge],
        light_line_index: vec![profile.n_bg; 2],
        guided: None,
        basis_size: op.basis.len(),
    };
    let (w1, w2) = band_edges(&bs)?;
    let mid = 0.5 * (w1 + w2);
    let w_res = cell.a / lambda_target;
    Ok(MirrorAnalysis {
        omega1: w1,
        omega2: w2,
        omega_mid: mid,
        omega_res: w_res,
        gamma: mirror_strength(w1, w2, w_res)?,
        gap_fraction: (w2 - w1) / mid,
        light_line: 0.5 / profile.n_bg,
    })
}

/// Inclusive grid `min, ..., max` with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl ParamRange {
    pub fn single(v: f64) -> Self {
        ParamRange { min: v, max: v, steps: 1 }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 || !(self.max >= self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::Argument(format!("invalid range {self:?}")));
        }
        if self.steps == 1 {
            return Ok(vec![self.min]);
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|i| self.min + i as f64 * h).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSearch {
    pub a: ParamRange,
    pub r: ParamRange,
    pub w: ParamRange,
}

/// Exhaustive search for the cell with the largest mirror strength at
/// `lambda_target`. Ties go to the lexicographically smallest (a, r, w).
pub fn optimize_mirror(
    stack: &MaterialStack,
    lambda_target: f64,
    search: &MirrorSearch,
    opts: &BandOptions,
) -> Result<(UnitCell, MirrorAnalysis)> {
    stack.validate()?;
    let mut cells = Vec::new();
    for a in search.a.values()? {
        for r in search.r.values()? {
            for w in search.w.values()? {
                let cell = UnitCell { a, r, w, stack: *stack };
                if cell.validate().is_ok() {
                    cells.push(cell);
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Optimization("no valid cell in the search ranges".into()));
    }
    let results: Vec<(UnitCell, Result<MirrorAnalysis>)> = cells
        .par_iter()
        .map(|c| (*c, analyze_mirror(c, lambda_target, opts)))
        .collect();
    let mut best: Option<(UnitCell, MirrorAnalysis, f64)> = None;
    let mut misses: Vec<(UnitCell, f64)> = Vec::new();
    for (cell, res) in results {
        match res {
            Ok(m) => match m.gamma {
                Some(g) if best.as_ref().map_or(true, |b| g > b.2) => best = Some((cell, m, g)),
                Some(_) => {}
                None => misses.push((cell, m.detuning_excess())),
            },
            Err(Error::NoGap { .. }) => misses.push((cell, f64::INFINITY)),
            Err(e) => return Err(e),
        }
    }
    if let Some((cell, m, _)) = best {
        return Ok((cell, m));
    }
    misses.sort_by(|x, y| x.1.partial_cmp(&y.1).unwrap());
    let list: Vec<String> = misses
        .iter()
        .take(3)
        .map(|(c, d)| format!("(a {}, r {}, w {}): target {:.2}% outside gap", c.a, c.r, c.w, 100.0 * d))
        .collect();
    Err(Error::Optimization(format!(
        "no cell places {lambda_target} nm inside its gap; nearest: {}",
        list.join("; ")
    )))
}
