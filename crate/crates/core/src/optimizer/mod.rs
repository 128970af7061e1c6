//! Brute-force parameter studies of cavity designs: defect length, taper
//! and mirror hole counts, loss decomposition and a cross-family table.
//!
//! Every study point is an independent ringdown. Points run on a bounded
//! rayon pool and results are ordered by parameter value, never by
//! completion. An optional checkpoint file keeps every finished evaluation
//! so an interrupted study resumes where it stopped.

mod loss;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandsolver::{analyze_mirror, BandOptions};
use crate::error::{Error, Result};
use crate::fdtd::cavity::{run_ringdown, GridOptions, RingdownSpec};
use crate::geometry::{CavityDesign, DesignFamily};
use crate::resonance::{
    dominant_mode, invert_traces, mode_volume, InversionOptions, ModeVolumeOptions, ResonanceResult,
};

pub use loss::{fit_loss_decomposition, fit_loss_model, LossDecomposition};

/// Grid of defect lengths for the nested scan of mode-matching designs: a
/// coarse pass, then a hill climb in fine steps from the best coarse point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectScan {
    pub min: f64,
    pub max: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
}

impl Default for DefectScan {
    fn default() -> Self {
        DefectScan {
            min: 40.0,
            max: 160.0,
            coarse_step: 30.0,
            fine_step: 10.0,
        }
    }
}

impl DefectScan {
    fn validate(&self) -> Result<()> {
        if !(self.min >= 0.0 && self.max >= self.min && self.coarse_step > 0.0 && self.fine_step > 0.0) {
            return Err(Error::Argument(format!("invalid defect scan {self:?}")));
        }
        Ok(())
    }

    fn coarse(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.coarse_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.min + i as f64 * self.coarse_step).collect()
    }
}

/// Everything a study point needs besides the design itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    pub grid: GridOptions,
    pub bands: BandOptions,
    pub lambda_target: f64,
    /// Analysis band in nm; the mirror gap when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<(f64, f64)>,
    /// Ringdown samples recorded after the source switches off.
    pub record_steps: usize,
    /// Extra steps accumulating the mode profile for V_m.
    pub snapshot_steps: usize,
    /// Height multiplying the 2D mode area (nm).
    pub t_eff: f64,
    pub max_modes: usize,
    /// Holes per side for unsaturated studies (N_mir = this - N_tap).
    pub holes_per_side: usize,
    /// Mirror holes per side for saturated studies.
    pub saturated_mirror: usize,
    pub defect_scan: DefectScan,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            grid: GridOptions::default(),
            bands: BandOptions::default(),
            lambda_target: 637.0,
            band: None,
            record_steps: 12_000,
            snapshot_steps: 4_000,
            t_eff: 200.0,
            max_modes: 4,
            holes_per_side: 14,
            saturated_mirror: 16,
            defect_scan: DefectScan::default(),
        }
    }
}

impl StudySettings {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.bands.validate()?;
        self.defect_scan.validate()?;
        if !(self.lambda_target > 0.0) {
            return Err(Error::Argument(format!("target wavelength must be positive, got {}", self.lambda_target)));
        }
        if let Some((lo, hi)) = self.band {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Argument(format!("invalid band [{lo}, {hi}]")));
            }
        }
        if self.record_steps < 500 {
            return Err(Error::Argument(format!("record_steps {} below 500", self.record_steps)));
        }
        if !(self.t_eff > 0.0) || self.max_modes == 0 {
            return Err(Error::Argument("t_eff and max_modes must be positive".into()));
        }
        Ok(())
    }

    /// The analysis band for cavities built on `design`'s mirror cell.
    pub fn band_for(&self, design: &CavityDesign) -> Result<(f64, f64)> {
        if let Some(b) = self.band {
            return Ok(b);
        }
        let m = analyze_mirror(&design.mirror, self.lambda_target, &self.bands)?;
        Ok((design.mirror.a / m.omega2, design.mirror.a / m.omega1))
    }
}

/// Outcome of one ringdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Dominant in-band mode.
    pub result: Option<ResonanceResult>,
    /// Number of in-band modes found.
    pub modes: usize,
    pub grid_hash: String,
    pub warnings: Vec<String>,
}

/// Ringdown of one design and its dominant in-band resonance; with
/// `volume` the run continues at that frequency to measure V_m.
pub fn evaluate(design: &CavityDesign, s: &StudySettings, band: (f64, f64), volume: bool) -> Result<Evaluation> {
    design.validate()?;
    let (_, grid) = s.grid.cavity_grid(design)?;
    let widen = 0.1 * (band.1 - band.0);
    let mut spec = RingdownSpec::<f64>::centred(
        grid.clone(),
        design.mirror.a,
        design.mirror.w,
        (band.0 - widen, band.1 + widen),
        s.grid.pml_cells,
    );
    spec.record_steps = s.record_steps;
    spec.snapshot_steps = if volume { s.snapshot_steps } else { 0 };
    let opts = InversionOptions::new(band.0, band.1, s.max_modes);
    let pick = |traces: &[crate::fdtd::TimeTrace]| -> Result<(Option<ResonanceResult>, usize)> {
        let modes = invert_traces(traces, &opts)?;
        Ok((dominant_mode(&modes, s.lambda_target).cloned(), modes.len()))
    };
    let mut early = None;
    let rd = run_ringdown(&spec, |traces| {
        let found = pick(traces);
        let f = found.as_ref().ok().and_then(|(m, _)| m.as_ref().map(|m| m.frequency));
        early = Some(found);
        f
    })?;
    let (mut result, modes) = match early {
        Some(found) => found?,
        None => pick(&rd.traces)?,
    };
    let mut warnings = rd.warnings;
    if let (Some(r), Some(snap)) = (result.as_mut(), rd.snapshot.as_ref()) {
        let mv = mode_volume(
            snap,
            &grid,
            &ModeVolumeOptions {
                wavelength: r.wavelength,
                n_core: design.mirror.stack.n_core,
                t_eff: s.t_eff,
                exclude_cells: s.grid.pml_cells,
            },
        )?;
        r.mode_volume = Some(mv.volume);
        warnings.extend(mv.warnings);
    }
    Ok(Evaluation {
        result,
        modes,
        grid_hash: rd.grid_hash,
        warnings,
    })
}

/// How N_mir follows N_tap in a taper sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaperMode {
    /// Holes per side held fixed: N_mir = N_tot - N_tap.
    FixedTotal(usize),
    FixedMirror(usize),
}

impl TaperMode {
    fn mirror_holes(self, n_tap: usize) -> Result<usize> {
        match self {
            TaperMode::FixedMirror(n) => Ok(n),
            TaperMode::FixedTotal(n) if n_tap <= n => Ok(n - n_tap),
            TaperMode::FixedTotal(n) => Err(Error::Argument(format!("N_tap {n_tap} exceeds {n} holes per side"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// The design actually simulated (with the chosen l_h for nested scans).
    pub design: CavityDesign,
    /// `None` marks a point without an in-band resonance.
    pub result: Option<ResonanceResult>,
    pub notes: Vec<String>,
}

impl SweepPoint {
    pub fn q(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.q)
    }

    pub fn wavelength(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.wavelength)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub unit: String,
    pub design: CavityDesign,
    pub band: (f64, f64),
    pub points: Vec<SweepPoint>,
    pub q_sat: Option<f64>,
    pub notes: Vec<String>,
}

impl SweepResult {
    /// Q / Q_sat per point, when Q_sat is known.
    pub fn normalized(&self) -> Option<Vec<Option<f64>>> {
        let sat = self.q_sat?;
        Some(self.points.iter().map(|p| p.q().map(|q| q / sat)).collect())
    }

    /// Point with the highest Q.
    pub fn best(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .filter(|p| p.result.is_some())
            .max_by(|a, b| a.q().partial_cmp(&b.q()).unwrap())
    }
}

/// Relative Q change that still counts as flat.
pub const PLATEAU_TOLERANCE: f64 = 0.02;

/// Mean Q over the trailing run of points whose successive relative change
/// stays below [`PLATEAU_TOLERANCE`]; `None` if the last step is not flat.
pub fn saturated_q(qs: &[Option<f64>]) -> Option<f64> {
    let flat = |i: usize| match (qs[i - 1], qs[i]) {
        (Some(a), Some(b)) => ((b - a) / a).abs() < PLATEAU_TOLERANCE,
        _ => false,
    };
    let last = qs.len().checked_sub(1)?;
    let mut start = last;
    while start > 0 && flat(start) {
        start -= 1;
    }
    if start == last {
        return None;
    }
    let plateau: Vec<f64> = qs[start..].iter().map(|q| q.expect("flat points have Q")).collect();
    Some(plateau.iter().sum::<f64>() / plateau.len() as f64)
}

/// A study: settings, worker count and a memo of finished evaluations,
/// optionally persisted to a checkpoint file.
pub struct Study {
    pub settings: StudySettings,
    pub workers: usize,
    memo: Mutex<Manifest>,
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    settings: StudySettings,
    note: String,
    /// Finished evaluations keyed by design and volume flag.
    evaluations: BTreeMap<String, Evaluation>,
}

const MANIFEST_NOTE: &str = "deterministic: no random seeds; rerunning any key reproduces its evaluation";

/// Worker count from NANOBEAM_WORKERS, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("NANOBEAM_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

impl Study {
    pub fn new(settings: StudySettings) -> Result<Self> {
        settings.validate()?;
        Ok(Study {
            settings,
            workers: default_workers(),
            memo: Mutex::new(Manifest {
                settings,
                note: MANIFEST_NOTE.into(),
                evaluations: BTreeMap::new(),
            }),
            checkpoint: None,
        })
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Keeps every evaluation in `path` and reuses those already there. A
    /// file written under different settings is refused.
    pub fn with_checkpoint(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            if m.settings != self.settings {
                return Err(Error::config(
                    path.display().to_string(),
                    "checkpoint was written with different study settings",
                ));
            }
            self.memo.lock().unwrap().evaluations.extend(m.evaluations);
        }
        self.checkpoint = Some(path);
        Ok(self)
    }

    /// Number of finished evaluations held.
    pub fn evaluations(&self) -> usize {
        self.memo.lock().unwrap().evaluations.len()
    }

    fn key(design: &CavityDesign, volume: bool) -> String {
        format!("{}|{}", serde_json::to_string(design).expect("designs serialize"), volume)
    }

    /// [`evaluate`] through the memo. The band is part of the key only
    /// through the settings, so callers pass `band_for` of the design.
    pub fn evaluate(&self, design: &CavityDesign, band: (f64, f64), volume: bool) -> Result<Evaluation> {
        let key = Self::key(design, volume);
        if let Some(e) = self.memo.lock().unwrap().evaluations.get(&key) {
            return Ok(e.clone());
        }
        let e = evaluate(design, &self.settings, band, volume)?;
        let mut m = self.memo.lock().unwrap();
        m.evaluations.insert(key, e.clone());
        if let Some(path) = &self.checkpoint {
            let text = serde_json::to_string_pretty(&*m).expect("manifest serializes");
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, text)?;
            std::fs::rename(&tmp, path)?;
        }
        Ok(e)
    }

    fn run_points<F>(&self, n: usize, job: F) -> Result<Vec<SweepPoint>>
    where
        F: Fn(usize) -> Result<SweepPoint> + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::Argument(e.to_string()))?;
        pool.install(|| (0..n).into_par_iter().map(&job).collect())
    }

    fn point(&self, value: f64, design: CavityDesign, band: (f64, f64)) -> Result<SweepPoint> {
        let e = self.evaluate(&design, band, false)?;
        let mut notes = e.warnings;
        if e.result.is_none() {
            notes.push("no resonance in band".into());
        }
        Ok(SweepPoint {
            value,
            design,
            result: e.result,
            notes,
        })
    }

    fn finish(
        &self,
        parameter: &str,
        unit: &str,
        design: CavityDesign,
        band: (f64, f64),
        mut points: Vec<SweepPoint>,
    ) -> SweepResult {
        points.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
        let missing = points.iter().filter(|p| p.result.is_none()).count();
        let mut notes = Vec::new();
        if missing > 0 {
            notes.push(format!("{missing} of {} points without an in-band resonance", points.len()));
        }
        SweepResult {
            parameter: parameter.into(),
            unit: unit.into(),
            design,
            band,
            points,
            q_sat: None,
            notes,
        }
    }

    fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
        if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("sweep grid must be non-empty and finite".into()));
        }
        let mut g = grid.to_vec();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        g.dedup();
        Ok(g)
    }

    /// Q and lambda_res against the defect length of a mode-matching
    /// design. N_mir is the saturated count or holes_per_side - N_tap.
    pub fn sweep_defect_length(&self, template: &CavityDesign, grid: &[f64], saturated: bool) -> Result<SweepResult> {
        if template.family != DesignFamily::ModeMatching {
            return Err(Error::Argument("defect length sweeps need a mode-matching design".into()));
        }
        let grid = Self::sorted_grid(grid)?;
        let n_mir = if saturated {
            self.settings.saturated_mirror
        } else {
            TaperMode::FixedTotal(self.settings.holes_per_side).mirror_holes(template.n_tap)?
        };
        let base = template.with_counts(n_mir, template.n_tap);
        let band = self.settings.band_for(&base)?;
        let points = self.run_points(grid.len(), |i| self.point(grid[i], base.with_defect_length(grid[i]), band))?;
        Ok(self.finish("l_h", "nm", base, band, points))
    }

    /// Best defect length for one design: coarse grid, then fine steps
    /// uphill until both fine neighbours are lower.
    pub fn optimize_defect(&self, design: &CavityDesign, band: (f64, f64)) -> Result<SweepPoint> {
        let scan = self.settings.defect_scan;
        let mut tried: Vec<SweepPoint> = Vec::new();
        let eval = |lh: f64, tried: &mut Vec<SweepPoint>| -> Result<Option<f64>> {
            if let Some(p) = tried.iter().find(|p| (p.value - lh).abs() < 1e-9) {
                return Ok(p.q());
            }
            let p = self.point(lh, design.with_defect_length(lh), band)?;
            let q = p.q();
            tried.push(p);
            Ok(q)
        };
        let score = |q: Option<f64>| q.unwrap_or(0.0);
        let mut best = scan.min;
        let mut best_q = 0.0;
        for lh in scan.coarse() {
            let q = score(eval(lh, &mut tried)?);
            if q > best_q {
                best = lh;
                best_q = q;
            }
        }
        if best_q > 0.0 {
            loop {
                let mut moved = false;
                for dir in [-1.0, 1.0] {
                    let lh = best + dir * scan.fine_step;
                    if lh < 0.0 {
                        continue;
                    }
                    let q = score(eval(lh, &mut tried)?);
                    if q > best_q {
                        best = lh;
                        best_q = q;
                        moved = true;
                        break;
                    }
                }
                if !moved {
                    break;
                }
            }
        }
        let mut p = tried
            .iter()
            .find(|p| (p.value - best).abs() < 1e-9)
            .cloned()
            .expect("best point evaluated");
        p.notes.push(format!("l_h {best} nm chosen from {} evaluations", tried.len()));
        Ok(p)
    }

    /// Q and lambda_res against N_tap. Mode-matching points re-optimize l_h.
    pub fn sweep_taper_holes(&self, template: &CavityDesign, grid: &[usize], mode: TaperMode) -> Result<SweepResult> {
        if grid.is_empty() {
            return Err(Error::Argument("sweep grid must be non-empty".into()));
        }
        let mut grid = grid.to_vec();
        grid.sort_unstable();
        grid.dedup();
        for &n in &grid {
            mode.mirror_holes(n)?;
        }
        let band = self.settings.band_for(template)?;
        let points = self.run_points(grid.len(), |i| {
            let n_tap = grid[i];
            let design = template.with_counts(mode.mirror_holes(n_tap)?, n_tap);
            let mut p = if design.family == DesignFamily::ModeMatching {
                self.optimize_defect(&design, band)?
            } else {
                self.point(0.0, design, band)?
            };
            p.value = n_tap as f64;
            Ok(p)
        })?;
        let mut r = self.finish("N_tap", "holes", *template, band, points);
        r.notes.push(format!("{mode:?}"));
        Ok(r)
    }

    /// Q against N_mir at fixed N_tap, with Q_sat from the trailing plateau.
    pub fn sweep_mirror_holes(&self, template: &CavityDesign, grid: &[usize]) -> Result<SweepResult> {
        if grid.is_empty() {
            return Err(Error::Argument("sweep grid must be non-empty".into()));
        }
        let mut grid = grid.to_vec();
        grid.sort_unstable();
        grid.dedup();
        let band = self.settings.band_for(template)?;
        let points = self.run_points(grid.len(), |i| {
            self.point(grid[i] as f64, template.with_counts(grid[i], template.n_tap), band)
        })?;
        let mut r = self.finish("N_mir", "holes", *template, band, points);
        let qs: Vec<Option<f64>> = r.points.iter().map(|p| p.q()).collect();
        r.q_sat = saturated_q(&qs);
        if r.q_sat.is_none() {
            r.notes.push(format!(
                "no plateau: last relative step above {PLATEAU_TOLERANCE}"
            ));
        }
        Ok(r)
    }

    /// Taper sweeps of every family with V_m measured at each best point.
    pub fn compare_designs(&self, budgets: &[FamilyBudget]) -> Result<Comparison> {
        let mut families: Vec<DesignFamily> = budgets.iter().map(|b| b.template.family).collect();
        families.sort();
        families.dedup();
        if families.len() != budgets.len() {
            return Err(Error::Argument("one budget per design family".into()));
        }
        let mut budgets = budgets.to_vec();
        budgets.sort_by_key(|b| b.template.family);
        let mut rows = Vec::new();
        let mut sweeps = Vec::new();
        for b in &budgets {
            let sweep = self.sweep_taper_holes(&b.template, &b.n_tap, b.mode)?;
            let row = match sweep.best() {
                Some(best) => {
                    let e = self.evaluate(&best.design, sweep.band, true)?;
                    let (q, wavelength) = (best.q().unwrap(), best.wavelength().unwrap());
                    let v = e.result.and_then(|r| r.mode_volume);
                    Some(ComparisonRow {
                        family: b.template.family,
                        n_tap: best.design.n_tap,
                        l_h: best.design.l_h,
                        q,
                        wavelength,
                        mode_volume: v,
                        q_over_v: v.map(|v| q / v),
                    })
                }
                None => None,
            };
            if let Some(r) = row {
                rows.push(r);
            }
            sweeps.push(sweep);
        }
        Ok(Comparison { rows, sweeps })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyBudget {
    pub template: CavityDesign,
    pub n_tap: Vec<usize>,
    pub mode: TaperMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: DesignFamily,
    pub n_tap: usize,
    pub l_h: Option<f64>,
    pub q: f64,
    pub wavelength: f64,
    pub mode_volume: Option<f64>,
    pub q_over_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// One row per family that produced a resonance, in family order.
    pub rows: Vec<ComparisonRow>,
    pub sweeps: Vec<SweepResult>,
}

#[cfg(test)]
mod tests;
