//! Project configuration: one TOML document holding the material stack,
//! target wavelength, simulation defaults, named designs and sweep presets.
//!
//! Unknown keys are rejected. Every design is validated at load time and
//! every sweep must name designs that exist.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bandsolver::BandOptions;
use crate::error::{Error, Result};
use crate::fdtd::cavity::GridOptions;
use crate::geometry::{CavityDesign, DesignFamily, MaterialStack, UnitCell};
use crate::optimizer::{DefectScan, FamilyBudget, StudySettings, TaperMode};

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped presets: the published parameter sets and the desk-scale
/// designs used by the trend suite.
pub const BUILTIN_PRESETS: &str = include_str!("../presets/nanobeam.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub schema_version: u32,
    /// nm
    pub lambda_target: f64,
    pub stack: MaterialStack,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub designs: BTreeMap<String, DesignConfig>,
    #[serde(default)]
    pub sweeps: BTreeMap<String, SweepPreset>,
}

/// Study defaults; every key is optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid: GridOptions,
    pub bands: BandOptions,
    /// Analysis band in nm; the mirror gap when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<(f64, f64)>,
    pub record_steps: usize,
    pub snapshot_steps: usize,
    pub t_eff: f64,
    pub max_modes: usize,
    pub holes_per_side: usize,
    pub saturated_mirror: usize,
    pub defect_scan: DefectScan,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let s = StudySettings::default();
        SimulationConfig {
            grid: s.grid,
            bands: s.bands,
            band: s.band,
            record_steps: s.record_steps,
            snapshot_steps: s.snapshot_steps,
            t_eff: s.t_eff,
            max_modes: s.max_modes,
            holes_per_side: s.holes_per_side,
            saturated_mirror: s.saturated_mirror,
            defect_scan: s.defect_scan,
        }
    }
}

/// A named cavity. The project stack applies unless `stack` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub family: DesignFamily,
    pub a: f64,
    pub r: f64,
    pub w: f64,
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
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<MaterialStack>,
}

impl DesignConfig {
    pub fn to_design(&self, project_stack: &MaterialStack) -> CavityDesign {
        CavityDesign {
            family: self.family,
            mirror: UnitCell {
                a: self.a,
                r: self.r,
                w: self.w,
                stack: self.stack.unwrap_or(*project_stack),
            },
            n_mir: self.n_mir,
            n_tap: self.n_tap,
            w_n: self.w_n,
            a_n: self.a_n,
            r_n: self.r_n,
            l_h: self.l_h,
        }
    }

    pub fn from_design(d: &CavityDesign, project_stack: &MaterialStack) -> Self {
        DesignConfig {
            family: d.family,
            a: d.mirror.a,
            r: d.mirror.r,
            w: d.mirror.w,
            n_mir: d.n_mir,
            n_tap: d.n_tap,
            w_n: d.w_n,
            a_n: d.a_n,
            r_n: d.r_n,
            l_h: d.l_h,
            stack: (d.mirror.stack != *project_stack).then_some(d.mirror.stack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepPreset {
    DefectLength {
        design: String,
        l_h: Vec<f64>,
        #[serde(default)]
        saturated: bool,
    },
    TaperHoles {
        design: String,
        n_tap: Vec<usize>,
        mode: TaperMode,
    },
    MirrorHoles {
        design: String,
        n_mir: Vec<usize>,
    },
    Compare {
        designs: Vec<String>,
        n_tap: Vec<usize>,
        mode: TaperMode,
    },
}

impl SweepPreset {
    fn design_names(&self) -> Vec<&str> {
        match self {
            SweepPreset::DefectLength { design, .. }
            | SweepPreset::TaperHoles { design, .. }
            | SweepPreset::MirrorHoles { design, .. } => vec![design.as_str()],
            SweepPreset::Compare { designs, .. } => designs.iter().map(|s| s.as_str()).collect(),
        }
    }
}

/// Re-labels an error with the config key it came from.
fn at(path: String, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

impl ProjectConfig {
    /// A config holding only the stack and target wavelength.
    pub fn minimal(stack: MaterialStack, lambda_target: f64) -> Self {
        ProjectConfig {
            schema_version: SCHEMA_VERSION,
            lambda_target,
            stack,
            simulation: SimulationConfig::default(),
            designs: BTreeMap::new(),
            sweeps: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        parse_config(BUILTIN_PRESETS).expect("shipped presets are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if !(self.lambda_target > 0.0 && self.lambda_target.is_finite()) {
            return Err(Error::config("lambda_target", format!("must be positive, got {}", self.lambda_target)));
        }
        self.stack.validate().map_err(|e| at("stack".into(), e))?;
        self.settings().validate().map_err(|e| at("simulation".into(), e))?;
        for (name, d) in &self.designs {
            d.to_design(&self.stack)
                .validate()
                .map_err(|e| at(format!("designs.{name}"), e))?;
        }
        for (name, s) in &self.sweeps {
            for d in s.design_names() {
                if !self.designs.contains_key(d) {
                    return Err(Error::config(format!("sweeps.{name}"), format!("unknown design `{d}`")));
                }
            }
            let empty = match s {
                SweepPreset::DefectLength { l_h, .. } => l_h.is_empty(),
                SweepPreset::TaperHoles { n_tap, .. } | SweepPreset::Compare { n_tap, .. } => n_tap.is_empty(),
                SweepPreset::MirrorHoles { n_mir, .. } => n_mir.is_empty(),
            };
            if empty {
                return Err(Error::config(format!("sweeps.{name}"), "empty grid"));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> StudySettings {
        let s = &self.simulation;
        StudySettings {
            grid: s.grid,
            bands: s.bands,
            lambda_target: self.lambda_target,
            band: s.band,
            record_steps: s.record_steps,
            snapshot_steps: s.snapshot_steps,
            t_eff: s.t_eff,
            max_modes: s.max_modes,
            holes_per_side: s.holes_per_side,
            saturated_mirror: s.saturated_mirror,
            defect_scan: s.defect_scan,
        }
    }

    pub fn design(&self, name: &str) -> Result<CavityDesign> {
        self.designs
            .get(name)
            .map(|d| d.to_design(&self.stack))
            .ok_or_else(|| {
                let known: Vec<&str> = self.designs.keys().map(|k| k.as_str()).collect();
                Error::config(format!("designs.{name}"), format!("no such design; known: {}", known.join(", ")))
            })
    }

    pub fn sweep(&self, name: &str) -> Result<&SweepPreset> {
        self.sweeps.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.sweeps.keys().map(|k| k.as_str()).collect();
            Error::config(format!("sweeps.{name}"), format!("no such sweep; known: {}", known.join(", ")))
        })
    }

    /// Budgets of a `compare` preset.
    pub fn budgets(&self, preset: &SweepPreset) -> Result<Vec<FamilyBudget>> {
        match preset {
            SweepPreset::Compare { designs, n_tap, mode } => designs
                .iter()
                .map(|d| {
                    Ok(FamilyBudget {
                        template: self.design(d)?,
                        n_tap: n_tap.clone(),
                        mode: *mode,
                    })
                })
                .collect(),
            _ => Err(Error::Argument("not a compare preset".into())),
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ProjectConfig> {
    let cfg: ProjectConfig = toml::from_str(text).map_err(|e| {
        let span = e.span().map(|s| {
            let line = text[..s.start].matches('\n').count() + 1;
            format!("line {line}")
        });
        Error::config(span.unwrap_or_else(|| "document".into()), e.message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn emit_config(cfg: &ProjectConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config("document", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(
            "schema_version = 1\nlambda_target = 637.0\n\n[stack]\nn_core = 2.0\nn_substrate = 1.45\nn_cladding = 1.0\nthickness = 200.0\n",
        )
        .unwrap();
        assert_eq!(cfg, ProjectConfig::minimal(MaterialStack::sin_on_oxide(), 637.0));
        assert_eq!(cfg.settings(), StudySettings::default());
    }

    #[test]
    fn oversized_hole_is_rejected_with_its_key() {
        let text = format!(
            "{}\n[designs.bad]\nfamily = \"air-mode\"\na = 205.0\nr = 300.0\nw = 461.0\nn_mir = 4\nn_tap = 2\nw_n = 625.0\n",
            minimal_text()
        );
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("designs.bad") && err.contains("2r < w"), "{err}");
    }

    fn minimal_text() -> String {
        emit_config(&ProjectConfig::minimal(MaterialStack::sin_on_oxide(), 637.0)).unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = minimal_text().replace("record_steps", "record_stepz");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("record_stepz") && err.contains("line"), "{err}");
        let text = format!("{}\ncolour = 3\n", minimal_text().replace("[stack]", "extra = 1\n[stack]"));
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = minimal_text().replace("schema_version = 1", "schema_version = 9");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");
    }

    #[test]
    fn builtin_presets_parse_and_round_trip() {
        let cfg = ProjectConfig::builtin();
        assert_eq!(cfg.design("nominal-epsilon-mode").unwrap().w_n, Some(338.0));
        assert_eq!(cfg.design("nominal-air-mode").unwrap().w_n, Some(625.0));
        let mm = cfg.design("nominal-mode-matching").unwrap();
        assert_eq!((mm.a_n, mm.r_n), (Some(175.0), Some(46.0)));
        assert_eq!((mm.mirror.a, mm.mirror.r, mm.mirror.w), (205.0, 56.0, 492.0));
        let fs = cfg.design("nominal-free-standing").unwrap();
        assert!(fs.mirror.stack.is_free_standing());
        assert_eq!((fs.mirror.a, fs.mirror.r, fs.mirror.w), (250.0, 70.0, 300.0));
        let text = emit_config(&cfg).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(emit_config(&again).unwrap(), text);
    }

    #[test]
    fn sweeps_must_name_known_designs() {
        let mut cfg = ProjectConfig::builtin();
        cfg.sweeps.insert(
            "x".into(),
            SweepPreset::MirrorHoles {
                design: "nope".into(),
                n_mir: vec![1],
            },
        );
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("sweeps.x") && err.contains("nope"), "{err}");
    }
}
