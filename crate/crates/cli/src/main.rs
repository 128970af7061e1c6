use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nanobeam::bandsolver::{self, MirrorAnalysis, MirrorSearch, ParamRange};
use nanobeam::config::{parse_config, ProjectConfig, SweepPreset, BUILTIN_PRESETS};
use nanobeam::export::{self, num, Format, Provenance, Table, Tabular};
use nanobeam::fdtd::cavity::{run_ringdown, run_transmission};
use nanobeam::geometry::{CavityDesign, UnitCell};
use nanobeam::optimizer::{default_workers, fit_loss_decomposition, Study, StudySettings};
use nanobeam::resonance::{dominant_mode, invert_traces, lorentzian_fit, InversionOptions};
use nanobeam::slabmode::{effective_index, Polarization};
use nanobeam::{Error, ErrorClass, Result, RingdownSpec, TransmissionSpec};

/// Design and simulation of one-dimensional photonic-crystal nanobeam
/// cavities.
///
/// Settings resolve as command-line flag, then config file, then built-in
/// default. Without --config the shipped preset file is used.
#[derive(Parser, Debug)]
#[command(name = "nanobeam", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Project config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "NANOBEAM_WORKERS")]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    /// Target wavelength (nm).
    #[arg(long, global = true)]
    lambda_target: Option<f64>,
    /// FDTD cells per mirror period.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Ringdown samples recorded after the source switches off.
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Pol {
    Te,
    Tm,
}

#[derive(Args, Debug, Default)]
struct CellArgs {
    /// Design whose mirror cell is used.
    #[arg(long)]
    preset: Option<String>,
    /// Lattice constant (nm).
    #[arg(long)]
    a: Option<f64>,
    /// Hole radius (nm).
    #[arg(long)]
    r: Option<f64>,
    /// Beam width (nm).
    #[arg(long)]
    w: Option<f64>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Design name from the config.
    #[arg(long)]
    preset: String,
    #[arg(long)]
    n_mir: Option<usize>,
    #[arg(long)]
    n_tap: Option<usize>,
    /// Central beam width (nm), deterministic designs.
    #[arg(long)]
    w_n: Option<f64>,
    /// Defect length (nm), mode-matching design.
    #[arg(long)]
    l_h: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Band structure of a mirror cell (CSV: k, bands, guided flags).
    Bands {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        plane_waves: Option<usize>,
        #[arg(long)]
        n_k: Option<usize>,
        #[arg(long)]
        n_bands: Option<usize>,
    },
    /// Band edges and mirror strength of a cell, or the strongest cell of a
    /// search grid when any range is given.
    Mirror {
        #[command(flatten)]
        cell: CellArgs,
        /// min:max:steps (nm).
        #[arg(long)]
        a_range: Option<String>,
        #[arg(long)]
        r_range: Option<String>,
        #[arg(long)]
        w_range: Option<String>,
    },
    /// Ringdown of a cavity; writes the probe traces.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Analysis band lo:hi (nm); the mirror gap by default.
        #[arg(long)]
        band: Option<String>,
    },
    /// Normalised transmission of a cavity.
    Transmit {
        #[command(flatten)]
        design: DesignArgs,
        /// lo:hi:n (nm); the mirror gap with 400 points by default.
        #[arg(long)]
        band: Option<String>,
    },
    /// Lorentzian fit of a spectrum CSV (wavelength_nm, value[, reference]).
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// lo:hi (nm); the whole spectrum by default.
        #[arg(long)]
        window: Option<String>,
    },
    /// Harmonic inversion of a trace CSV written by `simulate`.
    Invert {
        #[arg(long)]
        input: PathBuf,
        /// lo:hi (nm).
        #[arg(long)]
        band: String,
        #[arg(long, default_value_t = 4)]
        max_modes: usize,
    },
    /// Parameter sweep preset (defect length, taper holes, mirror holes).
    Sweep {
        /// Sweep name from the config.
        #[arg(long)]
        preset: String,
        /// Evaluation manifest reused across runs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also fit the scattering / transmission loss split (mirror sweeps).
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Best Q per design family under a hole budget.
    Compare {
        /// Compare preset from the config.
        #[arg(long)]
        preset: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Effective index of the slab guided mode.
    Neff {
        /// Design whose stack is used; the project stack by default.
        #[arg(long)]
        preset: Option<String>,
        /// Wavelength (nm); the target wavelength by default.
        #[arg(long)]
        wavelength: Option<f64>,
        #[arg(long, value_enum, default_value_t = Pol::Te)]
        polarization: Pol,
        #[arg(long, default_value_t = 0)]
        order: usize,
    },
    /// Resonance and mode volume of a cavity.
    Modevolume {
        #[command(flatten)]
        design: DesignArgs,
    },
}

struct Ctx {
    cfg: ProjectConfig,
    settings: StudySettings,
    workers: usize,
    hash_input: Vec<u8>,
}

fn range2(s: &str) -> Result<(f64, f64)> {
    let v = floats(s)?;
    match v[..] {
        [lo, hi] if lo < hi => Ok((lo, hi)),
        _ => Err(Error::Argument(format!("expected lo:hi with lo < hi, got `{s}`"))),
    }
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad number `{p}` in `{s}`"))))
        .collect()
}

fn param_range(s: &Option<String>, fallback: f64) -> Result<ParamRange> {
    let Some(s) = s else {
        return Ok(ParamRange::single(fallback));
    };
    match floats(s)?[..] {
        [min, max, steps] if steps >= 1.0 && steps.fract() == 0.0 => Ok(ParamRange {
            min,
            max,
            steps: steps as usize,
        }),
        _ => Err(Error::Argument(format!("expected min:max:steps, got `{s}`"))),
    }
}

impl Ctx {
    fn load(c: &Common, cmd: &Cmd) -> Result<Self> {
        let text = match &c.config {
            Some(p) => std::fs::read_to_string(p)?,
            None => BUILTIN_PRESETS.to_string(),
        };
        let mut cfg = parse_config(&text)?;
        if let Some(l) = c.lambda_target {
            cfg.lambda_target = l;
        }
        let mut settings = cfg.settings();
        if let Some(r) = c.resolution {
            settings.grid.resolution = r;
        }
        if let Some(s) = c.steps {
            settings.record_steps = s;
        }
        settings.validate()?;
        let workers = c.workers.unwrap_or_else(default_workers);
        if workers == 0 {
            return Err(Error::Argument("--workers must be >= 1".into()));
        }
        // Output location and worker count do not change results.
        let mut hash_input = text.into_bytes();
        hash_input.extend(format!("\n{:?}\n{:?}\n", settings, cmd).bytes());
        Ok(Ctx {
            cfg,
            settings,
            workers,
            hash_input,
        })
    }

    fn prov(&self) -> Provenance {
        Provenance::new(&self.hash_input)
    }

    fn cell(&self, args: &CellArgs) -> Result<UnitCell> {
        let base = match &args.preset {
            Some(p) => Some(self.cfg.design(p)?.mirror),
            None => None,
        };
        let pick = |v: Option<f64>, b: Option<f64>, name: &str| {
            v.or(b).ok_or_else(|| Error::Argument(format!("--{name} is required without --preset")))
        };
        let cell = UnitCell {
            a: pick(args.a, base.map(|c| c.a), "a")?,
            r: pick(args.r, base.map(|c| c.r), "r")?,
            w: pick(args.w, base.map(|c| c.w), "w")?,
            stack: base.map_or(self.cfg.stack, |c| c.stack),
        };
        cell.validate()?;
        Ok(cell)
    }

    fn design(&self, args: &DesignArgs) -> Result<CavityDesign> {
        let mut d = self.cfg.design(&args.preset)?;
        if let Some(n) = args.n_mir {
            d.n_mir = n;
        }
        if let Some(n) = args.n_tap {
            d.n_tap = n;
        }
        if args.w_n.is_some() {
            d.w_n = args.w_n;
        }
        if args.l_h.is_some() {
            d.l_h = args.l_h;
        }
        d.validate()?;
        Ok(d)
    }

    fn study(&self, checkpoint: &Option<PathBuf>) -> Result<Study> {
        let s = Study::new(self.settings)?.with_workers(self.workers);
        match checkpoint {
            Some(p) => s.with_checkpoint(p),
            None => Ok(s),
        }
    }
}

#[derive(Serialize)]
struct MirrorRecord {
    a: f64,
    r: f64,
    w: f64,
    lambda_target: f64,
    analysis: MirrorAnalysis,
}

impl Tabular for MirrorRecord {
    fn table(&self) -> Table {
        let mut t = self.analysis.table();
        t.meta = vec![
            ("a_nm".into(), num(self.a)),
            ("r_nm".into(), num(self.r)),
            ("w_nm".into(), num(self.w)),
            ("lambda_target_nm".into(), num(self.lambda_target)),
        ];
        t
    }
}

#[derive(Serialize)]
struct NeffRecord {
    wavelength: f64,
    polarization: Polarization,
    order: usize,
    n_eff: f64,
}

impl Tabular for NeffRecord {
    fn table(&self) -> Table {
        Table {
            columns: ["wavelength_nm", "polarization", "order", "n_eff"].map(String::from).to_vec(),
            rows: vec![vec![
                num(self.wavelength),
                format!("{:?}", self.polarization),
                self.order.to_string(),
                num(self.n_eff),
            ]],
            ..Table::default()
        }
    }
}

fn emit<R: Tabular + Serialize + ?Sized>(
    record: &R,
    common: &Common,
    default: Format,
    prov: &Provenance,
) -> Result<()> {
    let format = match common.format {
        Some(OutFormat::Csv) => Format::Csv,
        Some(OutFormat::Json) => Format::StructuredText,
        None => default,
    };
    match &common.out {
        Some(p) => export::export_results(record, p, format, prov),
        None => {
            let text = export::render(record, format, prov)?;
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn note(msg: &str) {
    eprintln!("{msg}");
}

fn read_input(path: &Path, ctx: &mut Ctx) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    ctx.hash_input.extend(text.bytes());
    Ok(text)
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx::load(&cli.common, &cli.cmd)?;
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Bands {
            cell,
            plane_waves,
            n_k,
            n_bands,
        } => {
            let cell = ctx.cell(cell)?;
            let mut o = ctx.settings.bands;
            o.plane_waves = plane_waves.unwrap_or(o.plane_waves);
            o.n_k = n_k.unwrap_or(o.n_k);
            o.n_bands = n_bands.unwrap_or(o.n_bands);
            let bs = bandsolver::compute_bands(&cell, &o)?;
            let bs = bandsolver::light_cone_filter(&bs, o.index.background_index(&cell.stack))?;
            emit(&bs, c, Format::Csv, &ctx.prov())
        }
        Cmd::Mirror {
            cell,
            a_range,
            r_range,
            w_range,
        } => {
            let cell = ctx.cell(cell)?;
            let lt = ctx.cfg.lambda_target;
            let (cell, analysis) = if a_range.is_some() || r_range.is_some() || w_range.is_some() {
                let search = MirrorSearch {
                    a: param_range(a_range, cell.a)?,
                    r: param_range(r_range, cell.r)?,
                    w: param_range(w_range, cell.w)?,
                };
                bandsolver::optimize_mirror(&cell.stack, lt, &search, &ctx.settings.bands)?
            } else {
                (cell, bandsolver::analyze_mirror(&cell, lt, &ctx.settings.bands)?)
            };
            let rec = MirrorRecord {
                a: cell.a,
                r: cell.r,
                w: cell.w,
                lambda_target: lt,
                analysis,
            };
            emit(&rec, c, Format::StructuredText, &ctx.prov())
        }
        Cmd::Simulate { design, band } => {
            let d = ctx.design(design)?;
            let band = match band {
                Some(b) => range2(b)?,
                None => ctx.settings.band_for(&d)?,
            };
            let (_, grid) = ctx.settings.grid.cavity_grid(&d)?;
            let dx = grid.dx;
            let widen = 0.1 * (band.1 - band.0);
            let mut spec = RingdownSpec::centred(
                grid,
                d.mirror.a,
                d.mirror.w,
                (band.0 - widen, band.1 + widen),
                ctx.settings.grid.pml_cells,
            );
            spec.record_steps = ctx.settings.record_steps;
            let rd = run_ringdown(&spec, |_| None)?;
            for w in &rd.warnings {
                note(&format!("warning: {w}"));
            }
            let modes = invert_traces(&rd.traces, &InversionOptions::new(band.0, band.1, ctx.settings.max_modes))?;
            match dominant_mode(&modes, ctx.cfg.lambda_target) {
                Some(m) => note(&format!("dominant mode: {:.3} nm, Q {:.1}", m.wavelength, m.q)),
                None => note("no resonance in band"),
            }
            let prov = ctx
                .prov()
                .with("dx", num(dx))
                .with("steps", rd.steps)
                .with("geometry_hash", &rd.grid_hash);
            emit(&rd.traces, c, Format::Csv, &prov)
        }
        Cmd::Transmit { design, band } => {
            let d = ctx.design(design)?;
            let (band, n) = match band {
                Some(b) => match floats(b)?[..] {
                    [lo, hi, n] if lo < hi && n >= 2.0 && n.fract() == 0.0 => ((lo, hi), n as usize),
                    _ => return Err(Error::Argument(format!("expected lo:hi:n, got `{b}`"))),
                },
                None => (ctx.settings.band_for(&d)?, 400),
            };
            let spec = TransmissionSpec::for_cavity(&d, &ctx.settings.grid, band, n)?;
            let sp = run_transmission(&spec)?;
            let prov = ctx
                .prov()
                .with("dx", num(spec.device.dx))
                .with("geometry_hash", spec.device.content_hash());
            emit(&sp, c, Format::Csv, &prov)
        }
        Cmd::Fit { input, window } => {
            let text = read_input(input, &mut ctx)?;
            let sp = export::read_spectrum_csv(&text)?;
            let window = match window {
                Some(w) => range2(w)?,
                None => (sp.wavelengths[0], sp.wavelengths[sp.len() - 1]),
            };
            let r = lorentzian_fit(&sp, window, None)?;
            emit(&r, c, Format::StructuredText, &ctx.prov())
        }
        Cmd::Invert { input, band, max_modes } => {
            let text = read_input(input, &mut ctx)?;
            let traces = export::read_traces_csv(&text)?;
            let (lo, hi) = range2(band)?;
            let modes = invert_traces(&traces, &InversionOptions::new(lo, hi, *max_modes))?;
            emit(&modes, c, Format::StructuredText, &ctx.prov())
        }
        Cmd::Sweep {
            preset,
            checkpoint,
            loss,
        } => {
            let study = ctx.study(checkpoint)?;
            let sweep = match ctx.cfg.sweep(preset)? {
                SweepPreset::DefectLength { design, l_h, saturated } => {
                    study.sweep_defect_length(&ctx.cfg.design(design)?, l_h, *saturated)?
                }
                SweepPreset::TaperHoles { design, n_tap, mode } => {
                    study.sweep_taper_holes(&ctx.cfg.design(design)?, n_tap, *mode)?
                }
                SweepPreset::MirrorHoles { design, n_mir } => {
                    study.sweep_mirror_holes(&ctx.cfg.design(design)?, n_mir)?
                }
                SweepPreset::Compare { .. } => {
                    return Err(Error::config(
                        format!("sweeps.{preset}"),
                        "a compare preset; run `nanobeam compare`",
                    ))
                }
            };
            note(&format!("{} evaluations", study.evaluations()));
            if let Some(path) = loss {
                let fit = fit_loss_decomposition(&sweep)?;
                export::export_results(&fit, path, Format::StructuredText, &ctx.prov())?;
            }
            emit(&sweep, c, Format::Csv, &ctx.prov())
        }
        Cmd::Compare { preset, checkpoint } => {
            let study = ctx.study(checkpoint)?;
            let budgets = ctx.cfg.budgets(ctx.cfg.sweep(preset)?)?;
            let cmp = study.compare_designs(&budgets)?;
            note(&format!("{} evaluations", study.evaluations()));
            emit(&cmp, c, Format::Csv, &ctx.prov())
        }
        Cmd::Neff {
            preset,
            wavelength,
            polarization,
            order,
        } => {
            let stack = match preset {
                Some(p) => ctx.cfg.design(p)?.mirror.stack,
                None => ctx.cfg.stack,
            };
            let lambda = wavelength.unwrap_or(ctx.cfg.lambda_target);
            let pol = match polarization {
                Pol::Te => Polarization::TE,
                Pol::Tm => Polarization::TM,
            };
            let sol = effective_index::<f64>(&stack, lambda, pol, *order)?;
            let rec = NeffRecord {
                wavelength: lambda,
                polarization: pol,
                order: *order,
                n_eff: sol.n_eff,
            };
            emit(&rec, c, Format::StructuredText, &ctx.prov())
        }
        Cmd::Modevolume { design } => {
            let d = ctx.design(design)?;
            let study = ctx.study(&None)?;
            let band = ctx.settings.band_for(&d)?;
            let e = study.evaluate(&d, band, true)?;
            for w in &e.warnings {
                note(&format!("warning: {w}"));
            }
            let r = e
                .result
                .ok_or_else(|| Error::Fit(format!("no resonance between {:.1} and {:.1} nm", band.0, band.1)))?;
            emit(&r, c, Format::StructuredText, &ctx.prov().with("geometry_hash", &e.grid_hash))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Io => 4,
            })
        }
    }
}
