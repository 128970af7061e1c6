//! Parametric nanobeam cavity geometry and rasterization onto a uniform
//! permittivity grid.
//!
//! Coordinates are in nanometres. The beam runs along x and is centred on
//! y = 0; every cavity is mirror symmetric about x = 0.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::slabmode::{self, Polarization};

/// Vertical material stack of the nanobeam (core film, substrate below,
/// cladding above).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialStack {
    pub n_core: f64,
    pub n_substrate: f64,
    pub n_cladding: f64,
    /// Core thickness in nm.
    pub thickness: f64,
}

impl MaterialStack {
    /// 200 nm silicon nitride on silicon dioxide with air above.
    pub const fn sin_on_oxide() -> Self {
        MaterialStack {
            n_core: 2.0,
            n_substrate: 1.45,
            n_cladding: 1.0,
            thickness: 200.0,
        }
    }

    /// 200 nm silicon nitride membrane suspended in air.
    pub const fn free_standing_sin() -> Self {
        MaterialStack {
            n_core: 2.0,
            n_substrate: 1.0,
            n_cladding: 1.0,
            thickness: 200.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_core > self.n_substrate
            && self.n_substrate >= self.n_cladding
            && self.n_cladding >= 1.0
            && self.n_core.is_finite();
        if !ok {
            return Err(Error::Geometry(format!(
                "stack requires n_core > n_substrate >= n_cladding >= 1, got {} / {} / {}",
                self.n_core, self.n_substrate, self.n_cladding
            )));
        }
        if !(self.thickness > 0.0) {
            return Err(Error::Geometry(format!(
                "stack thickness must be positive, got {}",
                self.thickness
            )));
        }
        Ok(())
    }

    pub fn is_free_standing(&self) -> bool {
        self.n_substrate == self.n_cladding
    }
}

/// How the vertical stack is collapsed onto the 2D simulation plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexModel {
    /// Use the TE0 slab effective index for the beam instead of the bulk
    /// core index.
    pub effective_index: bool,
    /// Wavelength (nm) at which the slab effective index is evaluated.
    pub lambda_ref: f64,
    /// Fraction of the substrate index blended into the in-plane
    /// background: n_bg = n_clad + weight * (n_sub - n_clad).
    pub substrate_weight: f64,
}

impl Default for IndexModel {
    fn default() -> Self {
        IndexModel {
            effective_index: true,
            lambda_ref: 637.0,
            substrate_weight: 0.5,
        }
    }
}

impl IndexModel {
    pub fn beam_index(&self, stack: &MaterialStack) -> Result<f64> {
        if !self.effective_index {
            return Ok(stack.n_core);
        }
        if !(self.lambda_ref > 0.0) {
            return Err(Error::Argument(format!(
                "reference wavelength must be positive, got {}",
                self.lambda_ref
            )));
        }
        let sol = slabmode::effective_index::<f64>(stack, self.lambda_ref, Polarization::TE, 0)?;
        Ok(sol.n_eff)
    }

    pub fn background_index(&self, stack: &MaterialStack) -> f64 {
        stack.n_cladding + self.substrate_weight * (stack.n_substrate - stack.n_cladding)
    }
}

/// One mirror period: hole pitch `a`, radius `r` and beam width `w` (nm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCell {
    pub a: f64,
    pub r: f64,
    pub w: f64,
    pub stack: MaterialStack,
}

impl UnitCell {
    pub fn new(a: f64, r: f64, w: f64, stack: MaterialStack) -> Result<Self> {
        let cell = UnitCell { a, r, w, stack };
        cell.validate()?;
        Ok(cell)
    }

    /// On-substrate mirror cell for the deterministic designs.
    pub fn on_substrate_mirror() -> Self {
        UnitCell {
            a: 205.0,
            r: 60.0,
            w: 461.0,
            stack: MaterialStack::sin_on_oxide(),
        }
    }

    /// On-substrate mirror cell used with the mode-matching taper.
    pub fn mode_matching_mirror() -> Self {
        UnitCell {
            a: 205.0,
            r: 56.0,
            w: 492.0,
            stack: MaterialStack::sin_on_oxide(),
        }
    }

    pub fn free_standing_mirror() -> Self {
        UnitCell {
            a: 250.0,
            r: 70.0,
            w: 300.0,
            stack: MaterialStack::free_standing_sin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        if !(self.a > 0.0 && self.w > 0.0 && self.r >= 0.0) {
            return Err(Error::Geometry(format!(
                "unit cell lengths must be positive (a = {}, r = {}, w = {})",
                self.a, self.r, self.w
            )));
        }
        if 2.0 * self.r >= self.w {
            return Err(Error::Geometry(format!(
                "hole does not fit the beam: 2r < w violated (r = {}, w = {})",
                self.r, self.w
            )));
        }
        if 2.0 * self.r >= self.a {
            return Err(Error::Geometry(format!(
                "hole does not fit the period: 2r < a violated (r = {}, a = {})",
                self.r, self.a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignFamily {
    EpsilonMode,
    AirMode,
    ModeMatching,
}

impl DesignFamily {
    pub const ALL: [DesignFamily; 3] = [
        DesignFamily::EpsilonMode,
        DesignFamily::AirMode,
        DesignFamily::ModeMatching,
    ];

    pub fn is_deterministic(self) -> bool {
        !matches!(self, DesignFamily::ModeMatching)
    }

    pub fn name(self) -> &'static str {
        match self {
            DesignFamily::EpsilonMode => "epsilon-mode",
            DesignFamily::AirMode => "air-mode",
            DesignFamily::ModeMatching => "mode-matching",
        }
    }
}

impl std::fmt::Display for DesignFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A complete cavity: mirror cell, hole counts per side and the taper
/// targets of its family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityDesign {
    pub family: DesignFamily,
    pub mirror: UnitCell,
    pub n_mir: usize,
    pub n_tap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_h: Option<f64>,
}

impl CavityDesign {
    pub fn epsilon_mode(mirror: UnitCell, n_mir: usize, n_tap: usize, w_n: f64) -> Self {
        CavityDesign {
            family: DesignFamily::EpsilonMode,
            mirror,
            n_mir,
            n_tap,
            w_n: Some(w_n),
            a_n: None,
            r_n: None,
            l_h: None,
        }
    }

    pub fn air_mode(mirror: UnitCell, n_mir: usize, n_tap: usize, w_n: f64) -> Self {
        CavityDesign {
            family: DesignFamily::AirMode,
            ..Self::epsilon_mode(mirror, n_mir, n_tap, w_n)
        }
    }

    pub fn mode_matching(
        mirror: UnitCell,
        n_mir: usize,
        n_tap: usize,
        a_n: f64,
        r_n: f64,
        l_h: f64,
    ) -> Self {
        CavityDesign {
            family: DesignFamily::ModeMatching,
            mirror,
            n_mir,
            n_tap,
            w_n: None,
            a_n: Some(a_n),
            r_n: Some(r_n),
            l_h: Some(l_h),
        }
    }

    /// Holes on one side of the cavity centre.
    pub fn holes_per_side(&self) -> usize {
        self.n_mir + self.n_tap
    }

    pub fn n_tot(&self) -> usize {
        2 * self.holes_per_side()
    }

    /// Returns a copy with the hole counts replaced.
    pub fn with_counts(mut self, n_mir: usize, n_tap: usize) -> Self {
        self.n_mir = n_mir;
        self.n_tap = n_tap;
        self
    }

    pub fn with_defect_length(mut self, l_h: f64) -> Self {
        self.l_h = Some(l_h);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.mirror.validate()?;
        if self.n_tap < 1 {
            return Err(Error::Geometry("N_tap must be at least 1".into()));
        }
        let forbid = |name: &str, v: Option<f64>| -> Result<()> {
            match v {
                Some(_) => Err(Error::Geometry(format!(
                    "{name} is not a parameter of the {} family",
                    self.family
                ))),
                None => Ok(()),
            }
        };
        let require = |name: &str, v: Option<f64>, allow_zero: bool| -> Result<f64> {
            match v {
                Some(x) if x > 0.0 || (allow_zero && x == 0.0) => Ok(x),
                Some(x) => Err(Error::Geometry(format!("{name} must be positive, got {x}"))),
                None => Err(Error::Geometry(format!(
                    "{name} is required for the {} family",
                    self.family
                ))),
            }
        };
        match self.family {
            DesignFamily::EpsilonMode | DesignFamily::AirMode => {
                forbid("l_h", self.l_h)?;
                forbid("a_n", self.a_n)?;
                forbid("r_n", self.r_n)?;
                let w_n = require("w_n", self.w_n, false)?;
                if 2.0 * self.mirror.r >= w_n {
                    return Err(Error::Geometry(format!(
                        "hole does not fit the central beam: 2r < w_n violated (r = {}, w_n = {w_n})",
                        self.mirror.r
                    )));
                }
            }
            DesignFamily::ModeMatching => {
                forbid("w_n", self.w_n)?;
                require("a_n", self.a_n, false)?;
                let r_n = require("r_n", self.r_n, true)?;
                require("l_h", self.l_h, true)?;
                if 2.0 * r_n >= self.mirror.w {
                    return Err(Error::Geometry(format!(
                        "central hole does not fit the beam: r_n = {r_n}, w = {}",
                        self.mirror.w
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Quadratic width law of the deterministic tapers. Index 0 is the cavity
/// centre, index `n_tap` joins the mirror.
pub fn quadratic_width(i: usize, n_tap: usize, w_0: f64, w_n: f64) -> Result<f64> {
    if n_tap == 0 || i > n_tap {
        return Err(Error::Argument(format!(
            "taper index {i} outside 0..={n_tap}"
        )));
    }
    if !(w_0 > 0.0 && w_n > 0.0) {
        return Err(Error::Argument("taper widths must be positive".into()));
    }
    if i == n_tap {
        return Ok(w_0);
    }
    let u = i as f64 / n_tap as f64;
    Ok(w_n + (w_0 - w_n) * u * u)
}

/// Linear taper of hole pitch and radius for the mode-matching family.
/// Hole 1 is innermost and carries `(a_n, r_n)`; hole `n_tap` carries
/// `(a_0, r_0)`.
pub fn linear_taper(
    i: usize,
    n_tap: usize,
    a_0: f64,
    a_n: f64,
    r_0: f64,
    r_n: f64,
) -> Result<(f64, f64)> {
    if i < 1 || i > n_tap {
        return Err(Error::Argument(format!(
            "taper index {i} outside 1..={n_tap}"
        )));
    }
    if n_tap == 1 || i == 1 {
        return Ok((a_n, r_n));
    }
    if i == n_tap {
        return Ok((a_0, r_0));
    }
    let u = (i - 1) as f64 / (n_tap - 1) as f64;
    Ok((a_n + (a_0 - a_n) * u, r_n + (r_0 - r_n) * u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub x: f64,
    pub r: f64,
}

/// Beam width as a continuous piecewise-linear function of x. Outside the
/// breakpoint range the end values extend unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthProfile {
    pub breakpoints: Vec<(f64, f64)>,
}

impl WidthProfile {
    pub fn constant(w: f64) -> Self {
        WidthProfile {
            breakpoints: vec![(0.0, w)],
        }
    }

    pub fn width_at(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        if x <= bp[0].0 {
            return bp[0].1;
        }
        let last = bp[bp.len() - 1];
        if x >= last.0 {
            return last.1;
        }
        let k = bp.partition_point(|p| p.0 <= x);
        let (x0, w0) = bp[k - 1];
        let (x1, w1) = bp[k];
        w0 + (w1 - w0) * (x - x0) / (x1 - x0)
    }

    /// Minimum and maximum width over `[x0, x1]`.
    pub fn range_over(&self, x0: f64, x1: f64) -> (f64, f64) {
        let mut lo = self.width_at(x0).min(self.width_at(x1));
        let mut hi = self.width_at(x0).max(self.width_at(x1));
        for &(x, w) in &self.breakpoints {
            if x > x0 && x < x1 {
                lo = lo.min(w);
                hi = hi.max(w);
            }
        }
        (lo, hi)
    }

    /// Breakpoints clipped to `[x0, x1]`, including both ends.
    fn knots(&self, x0: f64, x1: f64) -> Vec<f64> {
        let mut k = vec![x0];
        k.extend(
            self.breakpoints
                .iter()
                .map(|p| p.0)
                .filter(|&x| x > x0 && x < x1),
        );
        k.push(x1);
        k
    }
}

/// Concrete hole list and width profile of a cavity or test structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDescription {
    pub holes: Vec<Hole>,
    pub width_profile: WidthProfile,
    /// Total simulated length along x (nm), centred on x = 0.
    pub extent: f64,
    pub stack: MaterialStack,
    /// Centre-to-centre distance of the two innermost holes, when the
    /// structure has a defect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub central_gap: Option<f64>,
    pub convention: String,
}

const DEFECT_CONVENTION: &str =
    "l_h is added to the innermost pitch: innermost hole centres are a_n + l_h apart";

impl GeometryDescription {
    /// Straight unpatterned waveguide.
    pub fn waveguide(width: f64, extent: f64, stack: MaterialStack) -> Self {
        GeometryDescription {
            holes: Vec::new(),
            width_profile: WidthProfile::constant(width),
            extent,
            stack,
            central_gap: None,
            convention: "unpatterned waveguide".into(),
        }
    }

    /// `n_holes` periods of `cell` centred on x = 0.
    pub fn periodic(cell: &UnitCell, n_holes: usize, padding: f64) -> Result<Self> {
        cell.validate()?;
        let span = n_holes as f64 * cell.a;
        let holes = (0..n_holes)
            .map(|k| Hole {
                x: -span / 2.0 + (k as f64 + 0.5) * cell.a,
                r: cell.r,
            })
            .collect();
        let geom = GeometryDescription {
            holes,
            width_profile: WidthProfile::constant(cell.w),
            extent: span + 2.0 * padding,
            stack: cell.stack,
            central_gap: None,
            convention: "periodic lattice".into(),
        };
        geom.check()?;
        Ok(geom)
    }

    /// Same structure with every hole removed and the beam width fixed to
    /// `width`; used for reference (normalization) runs.
    pub fn unpatterned(&self, width: f64) -> Self {
        GeometryDescription::waveguide(width, self.extent, self.stack)
    }

    pub fn min_radius(&self) -> Option<f64> {
        self.holes
            .iter()
            .map(|h| h.r)
            .filter(|&r| r > 0.0)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.min(r))))
    }

    /// Largest deviation from reflection symmetry about x = 0 (nm).
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.holes.len();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let a = self.holes[k];
            let b = self.holes[n - 1 - k];
            worst = worst.max((a.x + b.x).abs()).max((a.r - b.r).abs());
        }
        for &(x, w) in &self.width_profile.breakpoints {
            worst = worst.max((self.width_profile.width_at(-x) - w).abs());
        }
        worst
    }

    /// Ordering, overlap and beam-containment checks on the hole list.
    pub fn check(&self) -> Result<()> {
        for (k, pair) in self.holes.windows(2).enumerate() {
            let (h0, h1) = (pair[0], pair[1]);
            if h1.x < h0.x {
                return Err(Error::Geometry(format!("holes {k} and {} out of order", k + 1)));
            }
            if h1.x - h0.x <= h0.r + h1.r {
                return Err(Error::Geometry(format!(
                    "holes {k} (x = {:.3}, r = {:.3}) and {} (x = {:.3}, r = {:.3}) overlap",
                    h0.x,
                    h0.r,
                    k + 1,
                    h1.x,
                    h1.r
                )));
            }
        }
        for (k, h) in self.holes.iter().enumerate() {
            let (w_min, _) = self.width_profile.range_over(h.x - h.r, h.x + h.r);
            if 2.0 * h.r >= w_min {
                return Err(Error::Geometry(format!(
                    "hole {k} (x = {:.3}, r = {:.3}) does not fit the local beam width {:.3}",
                    h.x, h.r, w_min
                )));
            }
            if h.x.abs() + h.r > self.extent / 2.0 {
                return Err(Error::Geometry(format!(
                    "hole {k} at x = {:.3} lies outside the simulated extent",
                    h.x
                )));
            }
        }
        Ok(())
    }
}

/// Builds the hole list and width profile of `design`, adding `padding` nm
/// of unpatterned beam at both ends.
pub fn build_geometry(design: &CavityDesign, padding: f64) -> Result<GeometryDescription> {
    design.validate()?;
    if !(padding >= 0.0) {
        return Err(Error::Argument(format!("padding must be >= 0, got {padding}")));
    }
    let m = design.mirror;
    // Positive-side hole centres and radii, innermost first.
    let mut right: Vec<Hole> = Vec::with_capacity(design.holes_per_side());
    let width_profile;
    let central_gap;
    let convention;
    let half_span;
    match design.family {
        DesignFamily::EpsilonMode | DesignFamily::AirMode => {
            let w_n = design.w_n.expect("validated");
            for k in 0..design.holes_per_side() {
                right.push(Hole {
                    x: (k as f64 + 0.5) * m.a,
                    r: m.r,
                });
            }
            let mut bp = Vec::with_capacity(2 * design.n_tap + 1);
            for i in (1..=design.n_tap).rev() {
                bp.push((-(i as f64) * m.a, quadratic_width(i, design.n_tap, m.w, w_n)?));
            }
            for i in 0..=design.n_tap {
                bp.push((i as f64 * m.a, quadratic_width(i, design.n_tap, m.w, w_n)?));
            }
            width_profile = WidthProfile { breakpoints: bp };
            central_gap = Some(m.a);
            convention = "width taper over segment boundaries 0..N_tap; holes at constant (a, r)".to_string();
            half_span = design.holes_per_side() as f64 * m.a;
        }
        DesignFamily::ModeMatching => {
            let (a_n, r_n, l_h) = (
                design.a_n.expect("validated"),
                design.r_n.expect("validated"),
                design.l_h.expect("validated"),
            );
            let mut s = l_h / 2.0;
            for i in 1..=design.n_tap {
                let (a_i, r_i) = linear_taper(i, design.n_tap, m.a, a_n, m.r, r_n)?;
                right.push(Hole { x: s + a_i / 2.0, r: r_i });
                s += a_i;
            }
            for _ in 0..design.n_mir {
                right.push(Hole { x: s + m.a / 2.0, r: m.r });
                s += m.a;
            }
            width_profile = WidthProfile::constant(m.w);
            central_gap = Some(a_n + l_h);
            convention = DEFECT_CONVENTION.to_string();
            half_span = s;
        }
    }
    let mut holes: Vec<Hole> = right
        .iter()
        .rev()
        .map(|h| Hole { x: -h.x, r: h.r })
        .collect();
    holes.extend(right);
    let geom = GeometryDescription {
        holes,
        width_profile,
        extent: 2.0 * (half_span + padding),
        stack: m.stack,
        central_gap,
        convention,
    };
    geom.check()?;
    Ok(geom)
}

/// Relative permittivity sampled on a uniform square grid. Cell `(i, j)`
/// covers `[x0 + i dx, x0 + (i+1) dx] x [y0 + j dx, y0 + (j+1) dx]`;
/// storage is row-major with x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermittivityGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub x0: f64,
    pub y0: f64,
    pub eps: Vec<f64>,
}

impl PermittivityGrid {
    pub fn uniform(nx: usize, ny: usize, dx: f64, eps: f64) -> Self {
        PermittivityGrid {
            nx,
            ny,
            dx,
            x0: -(nx as f64) * dx / 2.0,
            y0: -(ny as f64) * dx / 2.0,
            eps: vec![eps; nx * ny],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.eps[j * self.nx + i]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dx,
        )
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.dx
    }

    pub fn mean(&self) -> f64 {
        self.eps.iter().sum::<f64>() / self.eps.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.eps
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
                (lo.min(e), hi.max(e))
            })
    }

    /// SHA-256 over dimensions, pitch, origin and every sample.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.nx as u64).to_le_bytes());
        h.update((self.ny as u64).to_le_bytes());
        h.update(self.dx.to_bits().to_le_bytes());
        h.update(self.x0.to_bits().to_le_bytes());
        h.update(self.y0.to_bits().to_le_bytes());
        for e in &self.eps {
            h.update(e.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}

/// Options for [`rasterize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterOptions {
    pub dx: f64,
    /// Height of the simulated region along y (nm), centred on the beam.
    pub y_span: f64,
    pub index: IndexModel,
}

/// Samples the geometry onto a grid with area-fraction averaging of the
/// permittivity in every cell crossed by a material boundary.
pub fn rasterize(geom: &GeometryDescription, opts: &RasterOptions) -> Result<PermittivityGrid> {
    let dx = opts.dx;
    if !(dx > 0.0) {
        return Err(Error::Argument(format!("grid pitch must be positive, got {dx}")));
    }
    if let Some(r_min) = geom.min_radius() {
        if dx > r_min / 2.0 {
            return Err(Error::Resolution(format!(
                "dx = {dx} nm exceeds half the smallest hole radius ({r_min} nm)"
            )));
        }
    }
    let n_beam = opts.index.beam_index(&geom.stack)?;
    let n_bg = opts.index.background_index(&geom.stack);
    let eps_beam = n_beam * n_beam;
    let eps_bg = n_bg * n_bg;

    let nx = ((geom.extent / dx).round() as usize).max(1);
    let ny = ((opts.y_span / dx).round() as usize).max(1);
    let mut grid = PermittivityGrid::uniform(nx, ny, dx, eps_bg);
    let profile = &geom.width_profile;

    for i in 0..nx {
        let xa = grid.x0 + i as f64 * dx;
        let xb = xa + dx;
        let (w_lo, w_hi) = profile.range_over(xa, xb);
        let (h_lo, h_hi) = (w_lo / 2.0, w_hi / 2.0);
        let first = geom.holes.partition_point(|h| h.x + h.r < xa);
        for j in 0..ny {
            let ya = grid.y0 + j as f64 * dx;
            let yb = ya + dx;
            let mut frac = if ya >= -h_lo && yb <= h_lo {
                1.0
            } else if yb <= -h_hi || ya >= h_hi {
                0.0
            } else {
                beam_overlap_area(profile, xa, xb, ya, yb) / (dx * dx)
            };
            if frac > 0.0 {
                for h in &geom.holes[first..] {
                    if h.x - h.r > xb {
                        break;
                    }
                    frac -= disk_overlap_area(h.x, 0.0, h.r, xa, xb, ya, yb) / (dx * dx);
                }
            }
            let frac = frac.clamp(0.0, 1.0);
            grid.eps[j * nx + i] = eps_bg + frac * (eps_beam - eps_bg);
        }
    }
    Ok(grid)
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Exact area of `[xa, xb] x [ya, yb]` inside `|y| < w(x)/2`.
fn beam_overlap_area(profile: &WidthProfile, xa: f64, xb: f64, ya: f64, yb: f64) -> f64 {
    let knots = profile.knots(xa, xb);
    let mut area = 0.0;
    for seg in knots.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        if q <= p {
            continue;
        }
        let hp = profile.width_at(p) / 2.0;
        let hq = profile.width_at(q) / 2.0;
        // Split where the half-width crosses |ya| or |yb|; the overlap
        // length is linear in between.
        let mut pts = vec![p, q];
        for c in [ya.abs(), yb.abs()] {
            if (hp - c) * (hq - c) < 0.0 {
                pts.push(p + (c - hp) / (hq - hp) * (q - p));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for s in pts.windows(2) {
            let len = |x: f64| {
                let h = profile.width_at(x) / 2.0;
                interval_overlap(ya, yb, -h, h)
            };
            area += 0.5 * (len(s[0]) + len(s[1])) * (s[1] - s[0]);
        }
    }
    area
}

/// Antiderivative of sqrt(r^2 - u^2).
fn half_chord_integral(u: f64, r: f64) -> f64 {
    let u = u.clamp(-r, r);
    0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).asin())
}

/// Exact area of the rectangle `[xa, xb] x [ya, yb]` inside the disk of
/// radius `r` centred on `(cx, cy)`.
pub(crate) fn disk_overlap_area(cx: f64, cy: f64, r: f64, xa: f64, xb: f64, ya: f64, yb: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let (lo, hi) = ((xa - cx).max(-r), (xb - cx).min(r));
    if hi <= lo {
        return 0.0;
    }
    let (v0, v1) = (ya - cy, yb - cy);
    let mut pts = vec![lo, hi];
    for c in [v0.abs(), v1.abs()] {
        if c < r {
            let u = (r * r - c * c).sqrt();
            for s in [-u, u] {
                if s > lo && s < hi {
                    pts.push(s);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut area = 0.0;
    for seg in pts.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        let mid = 0.5 * (p + q);
        let s_mid = (r * r - mid * mid).max(0.0).sqrt();
        let upper_is_chord = s_mid < v1;
        let lower_is_chord = -s_mid > v0;
        if interval_overlap(v0, v1, -s_mid, s_mid) <= 0.0 {
            continue;
        }
        let chord = half_chord_integral(q, r) - half_chord_integral(p, r);
        let width = q - p;
        let upper = if upper_is_chord { chord } else { v1 * width };
        let lower = if lower_is_chord { -chord } else { v0 * width };
        area += upper - lower;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_width_examples() {
        assert_eq!(quadratic_width(0, 10, 461.0, 338.0).unwrap(), 338.0);
        assert_eq!(quadratic_width(10, 10, 461.0, 338.0).unwrap(), 461.0);
        assert_relative_eq!(quadratic_width(5, 10, 461.0, 625.0).unwrap(), 584.0, epsilon = 1e-12);
        assert!(matches!(quadratic_width(11, 10, 461.0, 338.0), Err(Error::Argument(_))));
    }

    #[test]
    fn linear_taper_examples() {
        assert_eq!(linear_taper(1, 10, 205.0, 175.0, 56.0, 46.0).unwrap(), (175.0, 46.0));
        assert_eq!(linear_taper(10, 10, 205.0, 175.0, 56.0, 46.0).unwrap(), (205.0, 56.0));
        let (a, r) = linear_taper(4, 7, 205.0, 175.0, 56.0, 46.0).unwrap();
        assert_relative_eq!(a, 190.0, epsilon = 1e-12);
        assert_relative_eq!(r, 51.0, epsilon = 1e-12);
        assert_eq!(linear_taper(1, 1, 205.0, 175.0, 56.0, 46.0).unwrap(), (175.0, 46.0));
        assert!(linear_taper(0, 3, 205.0, 175.0, 56.0, 46.0).is_err());
    }

    #[test]
    fn epsilon_mode_geometry_counts_holes() {
        let d = CavityDesign::epsilon_mode(UnitCell::on_substrate_mirror(), 5, 5, 338.0);
        let g = build_geometry(&d, 0.0).unwrap();
        assert_eq!(g.holes.len(), 20);
        assert_eq!(g.width_profile.width_at(0.0), 338.0);
        let min_w = g
            .width_profile
            .breakpoints
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_w, 338.0);
        assert_eq!(g.width_profile.width_at(5.0 * 205.0), 461.0);
        assert_eq!(g.width_profile.width_at(3000.0), 461.0);
        assert!(g.symmetry_defect() < 1e-9);
    }

    #[test]
    fn degenerate_mode_matching_is_a_lattice() {
        let m = UnitCell::mode_matching_mirror();
        let d = CavityDesign::mode_matching(m, 6, 1, m.a, m.r, 0.0);
        let g = build_geometry(&d, 100.0).unwrap();
        let lattice = GeometryDescription::periodic(&m, 14, 100.0).unwrap();
        assert_eq!(g.holes.len(), lattice.holes.len());
        for (h, l) in g.holes.iter().zip(&lattice.holes) {
            assert!((h.x - l.x).abs() < 1e-9 && h.r == l.r);
        }
        assert!((g.extent - lattice.extent).abs() < 1e-9);
    }

    #[test]
    fn defect_length_sets_central_gap() {
        let m = UnitCell::mode_matching_mirror();
        let d = CavityDesign::mode_matching(m, 15, 6, 175.0, 46.0, 85.0);
        let g = build_geometry(&d, 0.0).unwrap();
        let n = g.holes.len();
        assert_eq!(n, 42);
        let gap = g.holes[n / 2].x - g.holes[n / 2 - 1].x;
        assert_relative_eq!(gap, 175.0 + 85.0, epsilon = 1e-9);
        assert_eq!(g.central_gap, Some(260.0));
        assert!(g.symmetry_defect() < 1e-9);
    }

    #[test]
    fn family_fields_are_enforced() {
        let mut d = CavityDesign::epsilon_mode(UnitCell::on_substrate_mirror(), 5, 5, 338.0);
        d.l_h = Some(80.0);
        assert!(matches!(d.validate(), Err(Error::Geometry(m)) if m.contains("l_h")));
        let mut mm = CavityDesign::mode_matching(UnitCell::mode_matching_mirror(), 5, 5, 175.0, 46.0, 80.0);
        mm.w_n = Some(400.0);
        assert!(mm.validate().is_err());
        mm.w_n = None;
        mm.l_h = None;
        assert!(mm.validate().is_err());
    }

    #[test]
    fn overlapping_holes_are_reported() {
        let m = UnitCell::mode_matching_mirror();
        let d = CavityDesign::mode_matching(m, 3, 3, 90.0, 49.0, 0.0);
        match build_geometry(&d, 0.0) {
            Err(Error::Geometry(msg)) => assert!(msg.contains("overlap"), "{msg}"),
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn unit_cell_invariants() {
        let err = UnitCell::new(205.0, 300.0, 461.0, MaterialStack::sin_on_oxide()).unwrap_err();
        assert!(err.to_string().contains("2r < w"));
        assert!(UnitCell::new(205.0, 60.0, 461.0, MaterialStack::sin_on_oxide()).is_ok());
    }

    #[test]
    fn disk_area_matches_closed_form() {
        let r = 3.0;
        let full = disk_overlap_area(0.3, -0.2, r, -10.0, 10.0, -10.0, 10.0);
        assert_relative_eq!(full, std::f64::consts::PI * r * r, epsilon = 1e-12);
        // Quarter disk.
        let q = disk_overlap_area(0.0, 0.0, r, 0.0, 10.0, 0.0, 10.0);
        assert_relative_eq!(q, std::f64::consts::PI * r * r / 4.0, epsilon = 1e-12);
        // Tiling the plane with cells reproduces the full area.
        let mut sum = 0.0;
        let h = 0.37;
        for i in -12..12 {
            for j in -12..12 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                sum += disk_overlap_area(0.11, 0.05, r, x, x + h, y, y + h);
            }
        }
        assert_relative_eq!(sum, std::f64::consts::PI * r * r, epsilon = 1e-10);
    }

    fn bulk() -> IndexModel {
        IndexModel {
            effective_index: false,
            ..IndexModel::default()
        }
    }

    #[test]
    fn uniform_beam_rasterizes_with_sharp_edges() {
        let g = GeometryDescription::waveguide(105.0, 400.0, MaterialStack::sin_on_oxide());
        let opts = RasterOptions { dx: 10.0, y_span: 300.0, index: bulk() };
        let grid = rasterize(&g, &opts).unwrap();
        let n_bg = bulk().background_index(&g.stack);
        let (lo, hi) = (n_bg * n_bg, 4.0);
        let mut edge = 0;
        for e in &grid.eps {
            assert!(*e >= lo - 1e-12 && *e <= hi + 1e-12);
            if *e > lo + 1e-9 && *e < hi - 1e-9 {
                edge += 1;
            }
        }
        // Beam edges at +-52.5 fall mid-cell: one partial row per edge.
        assert_eq!(edge, 2 * grid.nx);
        let (i, j) = (grid.nx / 2, grid.ny / 2);
        assert_eq!(grid.at(i, j), 4.0);
    }

    #[test]
    fn hole_area_is_recovered() {
        let stack = MaterialStack::sin_on_oxide();
        let r = 60.0;
        let geom_holes = GeometryDescription {
            holes: vec![Hole { x: 3.3, r }],
            width_profile: WidthProfile::constant(461.0),
            extent: 400.0,
            stack,
            central_gap: None,
            convention: String::new(),
        };
        let plain = GeometryDescription::waveguide(461.0, 400.0, stack);
        let dx = r / 16.0;
        let opts = RasterOptions { dx, y_span: 600.0, index: bulk() };
        let with = rasterize(&geom_holes, &opts).unwrap();
        let without = rasterize(&plain, &opts).unwrap();
        let n_bg = bulk().background_index(&stack);
        let contrast = 4.0 - n_bg * n_bg;
        let missing: f64 = without
            .eps
            .iter()
            .zip(&with.eps)
            .map(|(a, b)| (a - b) * dx * dx)
            .sum::<f64>()
            / contrast;
        let exact = std::f64::consts::PI * r * r;
        assert!((missing - exact).abs() / exact < 0.01, "{missing} vs {exact}");
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let d = CavityDesign::epsilon_mode(UnitCell::on_substrate_mirror(), 2, 2, 338.0);
        let g = build_geometry(&d, 0.0).unwrap();
        let opts = RasterOptions { dx: 31.0, y_span: 800.0, index: bulk() };
        assert!(matches!(rasterize(&g, &opts), Err(Error::Resolution(_))));
    }
}
