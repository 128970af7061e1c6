//! Result files. Every file starts with the toolkit version and a hash of
//! the input that produced it; numbers carry 9 significant digits so the
//! same record always gives the same bytes.
//!
//! CSV metadata and footers are `# key = value` comment lines.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bandsolver::{BandStructure, MirrorAnalysis};
use crate::error::{Error, Result};
use crate::fdtd::{Component, Spectrum, SpectrumKind, TimeTrace};
use crate::geometry::{GeometryDescription, PermittivityGrid};
use crate::optimizer::{Comparison, LossDecomposition, SweepResult};
use crate::resonance::{Method, ModeVolume, ResonanceResult};

pub const TOOLKIT: &str = concat!("nanobeam ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    StructuredText,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" | "structured" => Ok(Format::StructuredText),
            _ => Err(Error::Argument(format!("unknown format `{s}` (csv, json)"))),
        }
    }
}

/// SHA-256 of the input, hex encoded.
pub fn input_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Where a record came from: the input hash plus free-form run metadata
/// (grid spacing, step counts, ...).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub input_hash: String,
    pub meta: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(input: &[u8]) -> Self {
        Provenance {
            input_hash: input_hash(input),
            meta: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }
}

/// 9 significant digits in scientific notation.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn round9(x: f64) -> f64 {
    if x.is_finite() {
        num(x).parse().unwrap()
    } else {
        x
    }
}

/// A record flattened to CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    /// Empty for headerless matrices.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<(String, String)>,
}

pub trait Tabular {
    fn table(&self) -> Table;
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn comment(out: &mut String, key: &str, value: &str) {
    out.push_str(&format!("# {key} = {value}\n"));
}

pub fn to_csv(table: &Table, prov: &Provenance) -> Result<String> {
    let mut out = format!("# {TOOLKIT}\n");
    comment(&mut out, "input_hash", &prov.input_hash);
    for (k, v) in prov.meta.iter().chain(&table.meta) {
        comment(&mut out, k, v);
    }
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    if !table.columns.is_empty() {
        w.write_record(&table.columns).map_err(csv_err)?;
    }
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    for (k, v) in &table.footer {
        comment(&mut out, k, v);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Argument(format!("csv: {e}"))
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round9(n.as_f64().unwrap());
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// JSON document `{toolkit, input_hash, meta, record}` with floats rounded
/// to 9 significant digits.
pub fn to_structured<T: Serialize + ?Sized>(record: &T, prov: &Provenance) -> Result<String> {
    let mut rec = serde_json::to_value(record).map_err(|e| Error::Argument(format!("serialize: {e}")))?;
    round_floats(&mut rec);
    let meta: serde_json::Map<String, Value> =
        prov.meta.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
    let doc = serde_json::json!({
        "toolkit": TOOLKIT,
        "input_hash": prov.input_hash,
        "meta": meta,
        "record": rec,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json value serializes");
    s.push('\n');
    Ok(s)
}

pub fn render<R: Tabular + Serialize + ?Sized>(record: &R, format: Format, prov: &Provenance) -> Result<String> {
    match format {
        Format::Csv => to_csv(&record.table(), prov),
        Format::StructuredText => to_structured(record, prov),
    }
}

/// Renders `record` and writes it to `path`.
pub fn export_results<R: Tabular + Serialize + ?Sized>(
    record: &R,
    path: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<()> {
    let text = render(record, format, prov)?;
    std::fs::write(path, text)?;
    Ok(())
}

impl Tabular for Spectrum {
    fn table(&self) -> Table {
        Table {
            meta: vec![("kind".into(), format!("{:?}", self.kind))],
            columns: cols(&["wavelength_nm", "value"]),
            rows: self.wavelengths.iter().zip(&self.values).map(|(w, v)| vec![num(*w), num(*v)]).collect(),
            footer: Vec::new(),
        }
    }
}

impl Tabular for [TimeTrace] {
    fn table(&self) -> Table {
        let mut meta = Vec::new();
        if let Some(t) = self.first() {
            meta.push(("dt".into(), num(t.dt)));
            meta.push(("t0".into(), num(t.t0)));
        }
        for (k, t) in self.iter().enumerate() {
            meta.push((format!("probe_{k}"), format!("{:?} {} {}", t.component, num(t.x), num(t.y))));
        }
        let mut columns = vec!["t".to_string()];
        columns.extend((0..self.len()).map(|k| format!("probe_{k}")));
        let n = self.iter().map(|t| t.len()).max().unwrap_or(0);
        let rows = (0..n)
            .map(|i| {
                let t = self[0].t0 + i as f64 * self[0].dt;
                let mut row = vec![num(t)];
                row.extend(self.iter().map(|tr| tr.samples.get(i).map(|v| num(*v)).unwrap_or_default()));
                row
            })
            .collect();
        Table {
            meta,
            columns,
            rows,
            footer: Vec::new(),
        }
    }
}

impl Tabular for Vec<TimeTrace> {
    fn table(&self) -> Table {
        self.as_slice().table()
    }
}

impl Tabular for BandStructure {
    fn table(&self) -> Table {
        let nb = self.bands.iter().map(|b| b.len()).min().unwrap_or(0);
        let mut columns = vec!["k_pi_over_a".to_string()];
        columns.extend((1..=nb).map(|b| format!("band_{b}")));
        if self.guided.is_some() {
            columns.extend((1..=nb).map(|b| format!("guided_{b}")));
        }
        let rows = self
            .k_points
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let mut row = vec![num(*k)];
                row.extend(self.bands[i][..nb].iter().map(|f| num(*f)));
                if let Some(g) = &self.guided {
                    row.extend(g[i][..nb].iter().map(|b| (*b as u8).to_string()));
                }
                row
            })
            .collect();
        Table {
            meta: vec![
                ("units".into(), "frequency in a / lambda".into()),
                ("basis_size".into(), self.basis_size.to_string()),
            ],
            columns,
            rows,
            footer: Vec::new(),
        }
    }
}

impl Tabular for MirrorAnalysis {
    fn table(&self) -> Table {
        Table {
            columns: cols(&["omega1", "omega2", "omega_mid", "omega_res", "gamma", "gap_fraction", "light_line"]),
            rows: vec![vec![
                num(self.omega1),
                num(self.omega2),
                num(self.omega_mid),
                num(self.omega_res),
                opt(self.gamma),
                num(self.gap_fraction),
                num(self.light_line),
            ]],
            ..Table::default()
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::HarmonicInversion => "harmonic-inversion",
        Method::LorentzianFit => "lorentzian-fit",
    }
}

impl Tabular for [ResonanceResult] {
    fn table(&self) -> Table {
        Table {
            columns: cols(&["wavelength_nm", "frequency", "q", "amplitude", "mode_volume", "method", "wavelength_err", "q_err"]),
            rows: self
                .iter()
                .map(|r| {
                    vec![
                        num(r.wavelength),
                        num(r.frequency),
                        num(r.q),
                        num(r.amplitude),
                        opt(r.mode_volume),
                        method_name(r.method).into(),
                        opt(r.uncertainty.wavelength),
                        opt(r.uncertainty.q),
                    ]
                })
                .collect(),
            footer: self
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.notes.iter().map(move |n| (format!("note_{i}"), n.clone())))
                .collect(),
            ..Table::default()
        }
    }
}

impl Tabular for Vec<ResonanceResult> {
    fn table(&self) -> Table {
        self.as_slice().table()
    }
}

impl Tabular for ResonanceResult {
    fn table(&self) -> Table {
        std::slice::from_ref(self).table()
    }
}

impl Tabular for SweepResult {
    fn table(&self) -> Table {
        let norm = self.normalized();
        let rows = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                vec![
                    num(p.value),
                    opt(p.wavelength()),
                    opt(p.q()),
                    opt(p.result.as_ref().and_then(|r| r.mode_volume)),
                    opt(norm.as_ref().and_then(|n| n[i])),
                    p.design.n_mir.to_string(),
                    p.design.n_tap.to_string(),
                    opt(p.design.l_h),
                ]
            })
            .collect();
        let mut footer: Vec<(String, String)> = self.notes.iter().map(|n| ("note".into(), n.clone())).collect();
        if let Some(q) = self.q_sat {
            footer.push(("q_sat".into(), num(q)));
        }
        Table {
            meta: vec![
                ("family".into(), self.design.family.name().into()),
                ("band_nm".into(), format!("{} {}", num(self.band.0), num(self.band.1))),
            ],
            columns: vec![
                format!("{}_{}", self.parameter, self.unit).trim_end_matches('_').to_string(),
                "wavelength_nm".into(),
                "q".into(),
                "mode_volume".into(),
                "q_over_q_sat".into(),
                "n_mir".into(),
                "n_tap".into(),
                "l_h_nm".into(),
            ],
            rows,
            footer,
        }
    }
}

impl Tabular for Comparison {
    fn table(&self) -> Table {
        Table {
            columns: cols(&["family", "n_tap", "l_h_nm", "q", "wavelength_nm", "mode_volume", "q_over_v"]),
            rows: self
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.family.name().into(),
                        r.n_tap.to_string(),
                        opt(r.l_h),
                        num(r.q),
                        num(r.wavelength),
                        opt(r.mode_volume),
                        opt(r.q_over_v),
                    ]
                })
                .collect(),
            ..Table::default()
        }
    }
}

impl Tabular for LossDecomposition {
    fn table(&self) -> Table {
        Table {
            columns: cols(&["q_sc", "q_sc_lower_bound", "inv_q_sc", "inv_q_sc_err", "q0", "beta", "beta_err", "fit_residual"]),
            rows: vec![vec![
                opt(self.q_sc),
                opt(self.q_sc_lower_bound),
                num(self.inv_q_sc),
                num(self.inv_q_sc_stderr),
                num(self.q0),
                num(self.beta),
                num(self.beta_stderr),
                num(self.fit_residual),
            ]],
            footer: self.notes.iter().map(|n| ("note".into(), n.clone())).collect(),
            ..Table::default()
        }
    }
}

impl Tabular for ModeVolume {
    fn table(&self) -> Table {
        Table {
            columns: cols(&["mode_volume", "area_nm2", "edge_fraction"]),
            rows: vec![vec![num(self.volume), num(self.area), num(self.edge_fraction)]],
            footer: self.warnings.iter().map(|w| ("warning".into(), w.clone())).collect(),
            ..Table::default()
        }
    }
}

impl Tabular for GeometryDescription {
    fn table(&self) -> Table {
        let mut meta = vec![
            ("extent_nm".into(), num(self.extent)),
            ("convention".into(), self.convention.clone()),
        ];
        meta.extend(self.width_profile.breakpoints.iter().map(|(x, w)| ("width_at".into(), format!("{} {}", num(*x), num(*w)))));
        Table {
            meta,
            columns: cols(&["x_nm", "r_nm"]),
            rows: self.holes.iter().map(|h| vec![num(h.x), num(h.r)]).collect(),
            footer: Vec::new(),
        }
    }
}

/// Row-major: row j holds eps(i, j) for i = 0..nx.
impl Tabular for PermittivityGrid {
    fn table(&self) -> Table {
        Table {
            meta: vec![
                ("nx".into(), self.nx.to_string()),
                ("ny".into(), self.ny.to_string()),
                ("dx".into(), num(self.dx)),
                ("x0".into(), num(self.x0)),
                ("y0".into(), num(self.y0)),
            ],
            columns: Vec::new(),
            rows: self.eps.chunks(self.nx.max(1)).map(|r| r.iter().map(|v| num(*v)).collect()).collect(),
            footer: Vec::new(),
        }
    }
}

/// `# key = value` lines of a file written by [`to_csv`].
pub fn read_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Numeric rows of a CSV; comment lines and a leading header are skipped.
fn numeric_rows(text: &str) -> Result<Vec<Vec<Option<f64>>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parsed: std::result::Result<Vec<Option<f64>>, _> = rec
            .iter()
            .map(|f| if f.is_empty() { Ok(None) } else { f.parse::<f64>().map(Some) })
            .collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 && rows.is_empty() => continue,
            Err(e) => {
                let line = rec.position().map_or(0, |p| p.line());
                return Err(Error::Argument(format!("csv line {line}: {e}")));
            }
        }
    }
    Ok(rows)
}

/// Spectrum from `wavelength_nm, value[, reference]` columns. With a
/// reference column the values are divided by it, as for a measured
/// device normalised by a reference device; the result is marked
/// normalised when it stays within [0, 1.05].
pub fn read_spectrum_csv(text: &str) -> Result<Spectrum> {
    let rows = numeric_rows(text)?;
    if rows.is_empty() {
        return Err(Error::Argument("spectrum file holds no data".into()));
    }
    let width = rows[0].len();
    if !(2..=3).contains(&width) || rows.iter().any(|r| r.len() != width || r.iter().any(|v| v.is_none())) {
        return Err(Error::Argument("spectrum needs 2 or 3 complete columns on every row".into()));
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for r in &rows {
        let (w, v) = (r[0].unwrap(), r[1].unwrap());
        let v = if width == 3 {
            let reference = r[2].unwrap();
            if !(reference > 0.0) {
                return Err(Error::Argument(format!("non-positive reference at {w} nm")));
            }
            v / reference
        } else {
            v
        };
        pairs.push((w, v));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (w, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let declared = read_meta(text).into_iter().find(|(k, _)| k == "kind").map(|(_, v)| v);
    let kind = match declared.as_deref() {
        Some("Normalized") => SpectrumKind::Normalized,
        Some(_) => SpectrumKind::Raw,
        None if width == 3 && v.iter().all(|x| (0.0..=1.05).contains(x)) => SpectrumKind::Normalized,
        None => SpectrumKind::Raw,
    };
    Spectrum::new(w, v, kind)
}

/// Traces from a `t, probe_0, probe_1, ...` table. The time step comes
/// from a `dt` metadata line when present, else from the time column.
pub fn read_traces_csv(text: &str) -> Result<Vec<TimeTrace>> {
    let rows = numeric_rows(text)?;
    if rows.len() < 2 || rows[0].len() < 2 {
        return Err(Error::Argument("trace file needs a time column, >= 1 probe and >= 2 rows".into()));
    }
    let n_probes = rows[0].len() - 1;
    let t0 = rows[0][0].ok_or_else(|| Error::Argument("missing time on first row".into()))?;
    let t1 = rows[1][0].ok_or_else(|| Error::Argument("missing time on second row".into()))?;
    let meta = read_meta(text);
    let dt = match meta.iter().find(|(k, _)| k == "dt") {
        Some((_, v)) => v.parse().map_err(|_| Error::Argument(format!("bad dt `{v}`")))?,
        None => t1 - t0,
    };
    if !(dt > 0.0) {
        return Err(Error::Argument("time step must be positive".into()));
    }
    let mut traces = Vec::with_capacity(n_probes);
    for k in 0..n_probes {
        let samples: Vec<f64> = rows.iter().map_while(|r| r.get(k + 1).copied().flatten()).collect();
        let (mut x, mut y) = (0.0, 0.0);
        if let Some((_, v)) = meta.iter().find(|(key, _)| *key == format!("probe_{k}")) {
            let parts: Vec<&str> = v.split_whitespace().collect();
            if let [_, px, py] = parts[..] {
                x = px.parse().unwrap_or(0.0);
                y = py.parse().unwrap_or(0.0);
            }
        }
        traces.push(TimeTrace {
            samples,
            dt,
            t0,
            x,
            y,
            component: Component::Hz,
        });
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CavityDesign, UnitCell};
    use crate::optimizer::SweepPoint;
    use crate::resonance::Uncertainty;
    use proptest::prelude::*;

    fn prov() -> Provenance {
        Provenance::new(b"input").with("dx", num(10.0))
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(637.0), "6.37000000e2");
        assert_eq!(num(-1.23456789012e-7), "-1.23456789e-7");
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn csv_header_carries_version_and_hash() {
        let s = Spectrum::new(vec![600.0, 610.0], vec![0.1, 0.2], SpectrumKind::Raw).unwrap();
        let text = to_csv(&s.table(), &prov()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), format!("# {TOOLKIT}"));
        assert_eq!(lines.next().unwrap(), format!("# input_hash = {}", input_hash(b"input")));
        assert!(text.contains("# dx = 1.00000000e1"));
        let json = to_structured(&s, &prov()).unwrap();
        let v: Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["toolkit"], TOOLKIT);
        assert_eq!(v["input_hash"], input_hash(b"input"));
    }

    fn point(value: f64, q: Option<f64>) -> SweepPoint {
        let design = CavityDesign::air_mode(UnitCell::on_substrate_mirror(), value as usize, 2, 625.0);
        SweepPoint {
            value,
            design,
            result: q.map(|q| ResonanceResult {
                wavelength: 637.0,
                frequency: 1.0 / 637.0,
                q,
                amplitude: 1.0,
                mode_volume: Some(1.5),
                method: Method::HarmonicInversion,
                uncertainty: Uncertainty::default(),
                notes: Vec::new(),
            }),
            notes: Vec::new(),
        }
    }

    fn sweep(q_sat: Option<f64>) -> SweepResult {
        SweepResult {
            parameter: "n_mir".into(),
            unit: String::new(),
            design: point(4.0, None).design,
            band: (600.0, 680.0),
            points: vec![point(4.0, Some(100.0)), point(8.0, None), point(12.0, Some(400.0))],
            q_sat,
            notes: Vec::new(),
        }
    }

    #[test]
    fn sweep_csv_has_one_row_per_point_and_q_sat_footer() {
        let text = to_csv(&sweep(Some(400.0)).table(), &prov()).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body.len(), 4);
        assert!(body[0].starts_with("n_mir,wavelength_nm,q,"));
        assert!(body[1].starts_with("4.00000000e0,6.37000000e2,1.00000000e2,1.50000000e0,2.50000000e-1,"));
        assert!(body[2].starts_with("8.00000000e0,,,,,"));
        assert_eq!(text.lines().last().unwrap(), "# q_sat = 4.00000000e2");

        let text = to_csv(&sweep(None).table(), &prov()).unwrap();
        assert!(!text.contains("q_sat ="));
    }

    #[test]
    fn exports_are_byte_identical() {
        let s = sweep(Some(400.0));
        for f in [Format::Csv, Format::StructuredText] {
            assert_eq!(render(&s, f, &prov()).unwrap(), render(&s.clone(), f, &prov()).unwrap());
        }
    }

    #[test]
    fn structured_text_rounds_floats() {
        let s = Spectrum::new(vec![600.123456789123], vec![0.1234567891234], SpectrumKind::Raw).unwrap();
        let json = to_structured(&s, &prov()).unwrap();
        assert!(json.contains("600.123457"), "{json}");
        assert!(!json.contains("600.1234567891"), "{json}");
    }

    #[test]
    fn spectrum_with_reference_column_is_normalised() {
        let text = "wavelength_nm,device,reference\n600,0.5,2\n610,1.0,2.0\n620,0.25,1\n";
        let s = read_spectrum_csv(text).unwrap();
        assert_eq!(s.values, vec![0.25, 0.5, 0.25]);
        assert_eq!(s.kind, SpectrumKind::Normalized);
        assert!(read_spectrum_csv("600,1\n610\n").is_err());
        assert!(read_spectrum_csv("600,1,0\n610,1,1\n").is_err());
    }

    #[test]
    fn traces_round_trip() {
        let mut a = TimeTrace::from_samples(vec![1.0, -0.5, 0.25, 0.125], 0.5);
        a.t0 = 3.0;
        a.x = 12.5;
        let b = TimeTrace { samples: vec![0.0, 1.0, 2.0, 3.0], ..a.clone() };
        let text = to_csv(&vec![a.clone(), b.clone()].table(), &prov()).unwrap();
        let back = read_traces_csv(&text).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    proptest! {
        #[test]
        fn spectrum_round_trip_within_formatting_precision(
            v in prop::collection::vec(-1e6..1e6f64, 1..50),
            start in 300.0..900.0f64,
        ) {
            let w: Vec<f64> = (0..v.len()).map(|i| start + 0.37 * i as f64).collect();
            let s = Spectrum::new(w, v, SpectrumKind::Raw).unwrap();
            let text = to_csv(&s.table(), &prov()).unwrap();
            let back = read_spectrum_csv(&text).unwrap();
            prop_assert_eq!(back.kind, SpectrumKind::Raw);
            prop_assert_eq!(back.len(), s.len());
            for (x, y) in s.values.iter().chain(&s.wavelengths).zip(back.values.iter().chain(&back.wavelengths)) {
                prop_assert!((x - y).abs() <= 5e-9 * x.abs(), "{} vs {}", x, y);
            }
            // Re-exporting the imported spectrum changes nothing.
            prop_assert_eq!(to_csv(&back.table(), &prov()).unwrap(), text);
        }
    }
}
