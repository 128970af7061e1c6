//! Acceptance run: criteria 1-9 once, then all of them again to check that
//! every output is byte-identical (criterion 10). One line per criterion
//! goes straight to stderr so it shows without --nocapture.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nanobeam::bandsolver::{
    band_edges, compute_bands, compute_profile_bands, optimize_mirror, BandOptions, CellProfile, MirrorSearch,
    ParamRange,
};
use nanobeam::config::ProjectConfig;
use nanobeam::export::{render, Format, Provenance};
use nanobeam::fdtd::cavity::run_transmission;
use nanobeam::fdtd::layered::{pml_reflection, LayeredSetup};
use nanobeam::fdtd::tmm::{Layer, Multilayer};
use nanobeam::fdtd::{Component, ProbeSpec, Pulse, SourceKind, SourceSpec, Spectrum, SpectrumKind, TimeTrace};
use nanobeam::fdtd::PmlSpec;
use nanobeam::geometry::{MaterialStack, PermittivityGrid, UnitCell};
use nanobeam::optimizer::{default_workers, fit_loss_model, Study, SweepResult};
use nanobeam::resonance::{harmonic_inversion, lorentzian_fit, InversionOptions, LorentzianModel};
use nanobeam::{Simulation, SimulationSpec, TransmissionSpec};

struct Outcome {
    pass: bool,
    detail: String,
    /// Everything the criterion produced, at full precision.
    digest: String,
}

type Run = Result<Outcome, String>;

fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn prov() -> Provenance {
    Provenance::new(b"acceptance")
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn c1_empty_lattice() -> Run {
    let (a, n) = (200.0, 1.5);
    let opts = BandOptions {
        n_k: 3,
        n_bands: 8,
        plane_waves: 64,
        ..BandOptions::default()
    };
    let t = Instant::now();
    let bs = compute_profile_bands(&CellProfile::uniform(a, a, n), &opts).map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    // Folded light lines of the even sector: |(k/2 + m, p)| / n in a / lambda.
    let mut worst = 0.0_f64;
    for (k, got) in bs.k_points.iter().zip(&bs.bands) {
        let mut want: Vec<f64> = (-8i64..=8)
            .flat_map(|m| (0..=8i64).map(move |p| ((0.5 * k + m as f64).powi(2) + (p * p) as f64).sqrt() / n))
            .collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            let err = if *w > 1e-12 { (g / w - 1.0).abs() } else { g.abs() };
            worst = worst.max(err);
        }
    }
    Ok(Outcome {
        pass: worst < 1e-3 && secs < 10.0,
        detail: format!("basis {} max rel err {worst:.2e} (< 1e-3), {secs:.1} s (< 10 s)", bs.basis_size),
        digest: format!("{:?}", bs.bands),
    })
}

fn c2_gap_and_gamma() -> Run {
    let cell = UnitCell::on_substrate_mirror();
    let bs = compute_bands(&cell, &BandOptions::default()).map_err(e)?;
    let (w1, w2) = band_edges(&bs).map_err(e)?;
    let range = |c: f64, d: f64| ParamRange { min: c - d, max: c + d, steps: 5 };
    let search = |stack: MaterialStack, a: f64, r: f64, w: f64| {
        let s = MirrorSearch {
            a: range(a, 10.0),
            r: range(r, 6.0),
            w: range(w, 40.0),
        };
        let t = Instant::now();
        let found = optimize_mirror(&stack, 637.0, &s, &BandOptions::default());
        found.map(|(c, m)| (c, m, t.elapsed().as_secs_f64()))
    };
    let (cs, ms, ts) = search(MaterialStack::sin_on_oxide(), 205.0, 60.0, 461.0).map_err(e)?;
    let (cf, mf, tf) = search(MaterialStack::free_standing_sin(), 250.0, 70.0, 300.0).map_err(e)?;
    let (gs, gf) = (ms.gamma.unwrap_or(0.0), mf.gamma.unwrap_or(0.0));
    let gap = w2 > w1;
    Ok(Outcome {
        pass: gap && gf > gs && ts < 120.0 && tf < 120.0,
        detail: format!(
            "gap {:.1}-{:.1} nm at 205/60/461; gamma on-substrate {gs:.4} at {}/{}/{} ({ts:.0} s), free-standing {gf:.4} at {}/{}/{} ({tf:.0} s); 125 cells each",
            cell.a / w2, cell.a / w1, cs.a, cs.r, cs.w, cf.a, cf.r, cf.w
        ),
        digest: format!("{:?}{w1:?}{w2:?}{cs:?}{ms:?}{cf:?}{mf:?}", bs.bands),
    })
}

fn c3_fdtd_vs_tmm() -> Run {
    let (nh, nl) = (2.0, 1.45);
    let layers: Vec<Layer<f64>> = (0..10)
        .flat_map(|_| {
            [
                Layer { index: nh, thickness: 637.0 / 4.0 / nh },
                Layer { index: nl, thickness: 637.0 / 4.0 / nl },
            ]
        })
        .collect();
    let band = (500.0, 800.0);
    let setup = LayeredSetup {
        // 30 cells per shortest in-material wavelength.
        dx: band.0 / nh / 30.0,
        n_ambient: 1.0,
        layers,
        pml_cells: 12,
        gap: 400.0,
        band,
        n_wavelengths: 61,
    };
    let t = Instant::now();
    let fdtd = setup.transmission::<f64>().map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let m = Multilayer::new(1.0, 1.0, setup.snapped_layers()).map_err(e)?;
    let ss: f64 = fdtd
        .wavelengths
        .iter()
        .zip(&fdtd.values)
        .map(|(w, v)| (v - m.response(*w).transmittance).powi(2))
        .sum();
    let rms = (ss / fdtd.len() as f64).sqrt();
    Ok(Outcome {
        pass: rms < 0.02 && secs < 120.0,
        detail: format!("10-period stack, RMS |T_fdtd - T_tmm| {rms:.4} (< 0.02), {secs:.1} s (< 120 s)"),
        digest: render(&fdtd, Format::Csv, &prov()).map_err(e)? + &format!("{:?}", fdtd.values),
    })
}

fn c4_energy_and_pml() -> Run {
    let mut g = PermittivityGrid::uniform(48, 36, 10.0, 1.0);
    for j in 10..26 {
        for i in 14..30 {
            g.eps[j * 48 + i] = 4.0;
        }
    }
    let mut spec = SimulationSpec::new(g);
    spec.pml = PmlSpec::closed();
    spec.max_steps = 200_000;
    spec.sources.push(SourceSpec {
        kind: SourceKind::PointDipole {
            x: 23.0,
            y: 17.0,
            component: Component::Hz,
        },
        pulse: Pulse::new(120.0, 0.2),
    });
    spec.probes.push(ProbeSpec {
        x: 41.0,
        y: -33.0,
        component: Component::Hz,
    });
    let mut sim = Simulation::new(&spec).map_err(e)?;
    let off = (sim.source_end() / sim.dt()).ceil() as usize + 2;
    sim.run(off).map_err(e)?;
    let w0 = sim.conserved_energy().ok_or("no energy")?;
    let mut drift = 0.0_f64;
    let mut energies = Vec::new();
    for _ in 0..100 {
        sim.run(1000).map_err(e)?;
        let w = sim.conserved_energy().ok_or("no energy")?;
        energies.push(w);
        drift = drift.max((w / w0 - 1.0).abs());
    }
    let refl = pml_reflection::<f64>(12, 20.0, 637.0).map_err(e)?;
    Ok(Outcome {
        pass: w0 > 0.0 && drift < 1e-3 && refl < 1e-4,
        detail: format!(
            "closed box drift {drift:.2e} over 1e5 steps (< 1e-3); 12-cell PML reflection {refl:.2e} at 20 cells/wavelength (< 1e-4)"
        ),
        digest: format!("{w0:?}{energies:?}{refl:?}"),
    })
}

fn lorentz(q: f64, noise: Option<(f64, u64)>) -> Spectrum {
    let model = LorentzianModel {
        center: 637.0,
        fwhm: 637.0 / q,
        amplitude: 1.0,
        baseline: 0.0,
    };
    let wl: Vec<f64> = (0..401).map(|k| 636.0 + k as f64 * 0.005).collect();
    let mut v: Vec<f64> = wl.iter().map(|&w| model.eval(w)).collect();
    if let Some((rel, seed)) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, rel).unwrap();
        v.iter_mut().for_each(|x| *x += nd.sample(&mut rng));
    }
    Spectrum::new(wl, v, SpectrumKind::Raw).unwrap()
}

fn c5_lorentzian() -> Run {
    let q = 4187.0;
    let t = Instant::now();
    let clean = lorentzian_fit(&lorentz(q, None), (636.0, 638.0), None).map_err(e)?;
    let mut worst = 0.0_f64;
    let mut within = 0;
    let mut covered = 0;
    let mut fits = Vec::new();
    for seed in 0..100 {
        let r = lorentzian_fit(&lorentz(q, Some((0.01, seed))), (636.0, 638.0), None).map_err(e)?;
        let err = (r.q / q - 1.0).abs();
        worst = worst.max(err);
        if err < 0.01 {
            within += 1;
        }
        if (r.q - q).abs() <= 3.0 * r.uncertainty.q.unwrap_or(0.0) {
            covered += 1;
        }
        fits.push(r);
    }
    let secs = t.elapsed().as_secs_f64();
    let clean_err = (clean.q / q - 1.0).abs();
    let clean_dl = (clean.wavelength - 637.0).abs();
    let seed0 = (fits[0].q / q - 1.0).abs();
    Ok(Outcome {
        pass: clean_err < 1e-3
            && clean_dl < 0.01
            && seed0 < 0.01
            && within >= 95
            && covered >= 98
            && secs < 5.0,
        detail: format!(
            "Q 4187 noiseless err {clean_err:.1e} (< 1e-3), lambda0 off {clean_dl:.1e} nm (< 0.01); 1% noise seed 0 err {seed0:.2e} (< 1e-2), {within}/100 seeds within 1% (>= 95, worst {worst:.2e}); 3-sigma coverage {covered}/100 (>= 98); {secs:.2} s (< 5 s)"
        ),
        digest: render(&fits, Format::Csv, &prov()).map_err(e)? + &format!("{clean:?}{fits:?}"),
    })
}

const DT: f64 = 5.0;

fn two_modes(n: usize) -> Vec<f64> {
    let modes = [(1.0 / 637.0, 1000.0, 1.0, 0.0), (1.0 / 655.0, 5000.0, 1.0, 0.9)];
    (0..n)
        .map(|k| {
            let t = k as f64 * DT;
            modes
                .iter()
                .map(|&(f, q, a, ph): &(f64, f64, f64, f64)| {
                    let decay = std::f64::consts::PI * f / q;
                    a * (-decay * t).exp() * (2.0 * std::f64::consts::PI * f * t + ph).cos()
                })
                .sum()
        })
        .collect()
}

fn c6_matrix_pencil() -> Run {
    let truth = [(1.0 / 637.0, 1000.0), (1.0 / 655.0, 5000.0)];
    let opts = InversionOptions::new(560.0, 720.0, 4);
    let t = Instant::now();
    let clean = two_modes(40_000);
    let check = |x: Vec<f64>| -> Result<(f64, Vec<nanobeam::resonance::ResonanceResult>), String> {
        let inv = harmonic_inversion(&TimeTrace::from_samples(x, DT), &opts).map_err(e)?;
        let mut worst = 0.0_f64;
        for &(f, q) in &truth {
            let m = inv
                .modes
                .iter()
                .find(|m| (m.frequency / f - 1.0).abs() < 1e-3)
                .ok_or_else(|| format!("no mode near {:.1} nm", 1.0 / f))?;
            worst = worst.max((m.q / q - 1.0).abs()).max((m.frequency / f - 1.0).abs());
        }
        Ok((worst, inv.modes))
    };
    let (clean_err, clean_modes) = check(clean.clone())?;
    let mut noisy_err = 0.0_f64;
    let mut digest = format!("{clean_modes:?}");
    let peak = clean.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 0.03 * peak).unwrap();
        let x: Vec<f64> = clean.iter().map(|v| v + nd.sample(&mut rng)).collect();
        let (err, modes) = check(x)?;
        noisy_err = noisy_err.max(err);
        digest += &format!("{modes:?}");
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: clean_err < 0.01 && noisy_err < 0.05 && secs < 5.0,
        detail: format!(
            "Q 1000 + 5000: noiseless err {clean_err:.1e} (< 1e-2); 3% noise worst err {noisy_err:.2e} over 10 seeds (< 5e-2); {secs:.2} s (< 5 s)"
        ),
        digest,
    })
}

fn sweep_digest(s: &SweepResult) -> Result<String, String> {
    Ok(render(s, Format::Csv, &prov()).map_err(e)? + &format!("{s:?}"))
}

fn strictly(values: &[Option<f64>], increasing: bool) -> bool {
    values.iter().all(|v| v.is_some())
        && values.windows(2).all(|w| {
            let (a, b) = (w[0].unwrap(), w[1].unwrap());
            if increasing {
                b > a
            } else {
                b < a
            }
        })
}

fn fmt_list(v: &[Option<f64>], digits: usize) -> String {
    v.iter()
        .map(|x| x.map_or("-".into(), |x| format!("{x:.digits$}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c7_trends() -> Run {
    let cfg = ProjectConfig::builtin();
    let study = Study::new(cfg.settings()).map_err(e)?.with_workers(default_workers());
    let t = Instant::now();
    let taper = |name: &str| -> Result<SweepResult, String> {
        match cfg.sweep(name).map_err(e)? {
            nanobeam::config::SweepPreset::TaperHoles { design, n_tap, mode } => {
                study.sweep_taper_holes(&cfg.design(design).map_err(e)?, n_tap, *mode).map_err(e)
            }
            _ => Err(format!("{name} is not a taper sweep")),
        }
    };
    let mut digest = String::new();
    let mut lines = Vec::new();

    // (a)
    let eps = taper("desk-epsilon-taper")?;
    let air = taper("desk-air-taper")?;
    let eps_l: Vec<_> = eps.points.iter().map(|p| p.wavelength()).collect();
    let air_l: Vec<_> = air.points.iter().map(|p| p.wavelength()).collect();
    let a_ok = strictly(&eps_l, false) && strictly(&air_l, true);
    lines.push(format!(
        "(a) {} eps lambda [{}] air lambda [{}]",
        if a_ok { "ok" } else { "FAIL" },
        fmt_list(&eps_l, 2),
        fmt_list(&air_l, 2)
    ));
    digest += &sweep_digest(&eps)?;
    digest += &sweep_digest(&air)?;

    // (b)
    let lh = match cfg.sweep("desk-defect-length").map_err(e)? {
        nanobeam::config::SweepPreset::DefectLength { design, l_h, saturated } => study
            .sweep_defect_length(&cfg.design(design).map_err(e)?, l_h, *saturated)
            .map_err(e)?,
        _ => return Err("desk-defect-length is not a defect sweep".into()),
    };
    let lh_q: Vec<_> = lh.points.iter().map(|p| p.q()).collect();
    let best = lh.best().map(|p| p.value);
    let interior = lh_q.iter().all(|q| q.is_some())
        && best.is_some_and(|b| b > lh.points[0].value && b < lh.points[lh.points.len() - 1].value);
    lines.push(format!(
        "(b) {} Q(l_h) [{}] max at l_h {:?}",
        if interior { "ok" } else { "FAIL" },
        fmt_list(&lh_q, 1),
        best
    ));
    digest += &sweep_digest(&lh)?;

    // (c)
    let sat = match cfg.sweep("desk-mirror-saturation").map_err(e)? {
        nanobeam::config::SweepPreset::MirrorHoles { design, n_mir } => {
            study.sweep_mirror_holes(&cfg.design(design).map_err(e)?, n_mir).map_err(e)?
        }
        _ => return Err("desk-mirror-saturation is not a mirror sweep".into()),
    };
    // A point without a resonance counts as Q = 0.
    let sat_q: Vec<f64> = sat.points.iter().map(|p| p.q().unwrap_or(0.0)).collect();
    let monotone = sat_q.windows(2).all(|w| w[1] >= w[0]);
    let norm = sat.normalized().unwrap_or_default();
    let tail: Vec<Option<f64>> = norm.iter().rev().take(3).rev().cloned().collect();
    let tail_ok = tail.len() == 3 && tail.iter().all(|v| v.is_some_and(|v| (0.98..=1.02).contains(&v)));
    let c_ok = monotone && sat.q_sat.is_some() && tail_ok;
    lines.push(format!(
        "(c) {} Q(N_mir) [{}] Q_sat {:?} final Q/Q_sat [{}]",
        if c_ok { "ok" } else { "FAIL" },
        sat_q.iter().map(|q| format!("{q:.1}")).collect::<Vec<_>>().join(" "),
        sat.q_sat.map(|q| (q * 10.0).round() / 10.0),
        fmt_list(&tail, 3)
    ));
    digest += &sweep_digest(&sat)?;

    // (d)
    let volume = |name: &str| -> Result<(Option<f64>, String), String> {
        let d = cfg.design(name).map_err(e)?;
        let band = study.settings.band_for(&d).map_err(e)?;
        let ev = study.evaluate(&d, band, true).map_err(e)?;
        Ok((ev.result.as_ref().and_then(|r| r.mode_volume), format!("{ev:?}")))
    };
    let (v_eps, de) = volume("desk-epsilon")?;
    let (v_air, da) = volume("desk-air")?;
    let mm = taper("desk-mm-taper")?;
    let mm_best = mm.best().map(|p| p.value);
    let air_best = air.best().map(|p| p.value);
    let v_ok = matches!((v_eps, v_air), (Some(x), Some(y)) if x < y);
    let n_ok = matches!((mm_best, air_best), (Some(x), Some(y)) if x < y);
    lines.push(format!(
        "(d) {} V_m eps {:.3?} < air {:.3?} at N_tap 5; best N_tap mode-matching {:?} < air {:?}",
        if v_ok && n_ok { "ok" } else { "FAIL" },
        v_eps,
        v_air,
        mm_best,
        air_best
    ));
    digest += &de;
    digest += &da;
    digest += &sweep_digest(&mm)?;

    let secs = t.elapsed().as_secs_f64();
    Ok(Outcome {
        pass: a_ok && interior && c_ok && v_ok && n_ok && secs < 1800.0,
        detail: format!(
            "{} evaluations, {secs:.0} s (< 1800 s)\n    {}",
            study.evaluations(),
            lines.join("\n    ")
        ),
        digest,
    })
}

fn c8_cross_method() -> Run {
    let cfg = ProjectConfig::builtin();
    let settings = cfg.settings();
    let d = cfg.design("reference-cavity").map_err(e)?;
    let band = settings.band_for(&d).map_err(e)?;
    let spec = TransmissionSpec::for_cavity(&d, &settings.grid, band, 400).map_err(e)?;
    let sp = run_transmission(&spec).map_err(e)?;
    let peak = (0..sp.len())
        .max_by(|&i, &j| sp.values[i].total_cmp(&sp.values[j]))
        .map(|i| sp.wavelengths[i])
        .ok_or("empty spectrum")?;
    let tx = lorentzian_fit(&sp, (peak - 5.0, peak + 5.0), None).map_err(e)?;
    let ev = Study::new(settings).map_err(e)?.evaluate(&d, band, false).map_err(e)?;
    let rd = ev.result.as_ref().ok_or("no ringdown resonance")?;
    let rel = (tx.wavelength / rd.wavelength - 1.0).abs();
    Ok(Outcome {
        pass: rel < 5e-3,
        detail: format!(
            "reference cavity: transmission {:.3} nm (Q {:.1}), ringdown {:.3} nm (Q {:.1}); |d lambda|/lambda {rel:.1e} (< 5e-3)",
            tx.wavelength, tx.q, rd.wavelength, rd.q
        ),
        digest: render(&sp, Format::Csv, &prov()).map_err(e)? + &format!("{tx:?}{ev:?}"),
    })
}

fn c9_loss_decomposition() -> Run {
    let models: [(f64, f64, f64); 4] = [(5000.0, 50.0, 0.3), (2.0e4, 20.0, 0.25), (800.0, 100.0, 0.5), (1.0e5, 10.0, 0.35)];
    let mut worst = 0.0_f64;
    let mut digest = String::new();
    for &(q_sc, q0, beta) in &models {
        let n_half = (q_sc / q0).ln() / beta;
        let data: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let n = (n_half * (0.2 + 0.25 * i as f64)).round();
                (n, 1.0 / (1.0 / q_sc + (-beta * n).exp() / q0))
            })
            .collect();
        let fit = fit_loss_model(&data).map_err(e)?;
        let got_sc = fit.q_sc.ok_or("Q_sc not identified")?;
        worst = worst
            .max((got_sc / q_sc - 1.0).abs())
            .max((fit.q0 / q0 - 1.0).abs())
            .max((fit.beta / beta - 1.0).abs());
        digest += &render(&fit, Format::Csv, &prov()).map_err(e)?;
        digest += &format!("{fit:?}");
    }
    Ok(Outcome {
        pass: worst < 0.02,
        detail: format!("{} synthetic models, worst parameter err {worst:.1e} (< 2e-2)", models.len()),
        digest,
    })
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Run); 9] = [
        ("empty-lattice bands", c1_empty_lattice),
        ("gap and mirror strength ordering", c2_gap_and_gamma),
        ("FDTD vs transfer matrix", c3_fdtd_vs_tmm),
        ("energy conservation and PML", c4_energy_and_pml),
        ("Lorentzian fit", c5_lorentzian),
        ("matrix pencil", c6_matrix_pencil),
        ("trend suite", c7_trends),
        ("cross-method consistency", c8_cross_method),
        ("loss decomposition", c9_loss_decomposition),
    ];
    let mut all = true;
    let mut digests = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail, digest) = match f() {
            Ok(o) => (o.pass, o.detail, Some(o.digest)),
            Err(err) => (false, format!("error: {err}"), None),
        };
        all &= pass;
        report(&format!("criterion {} {}: {} - {detail}", i + 1, if pass { "PASS" } else { "FAIL" }, name));
        digests.push(digest);
    }

    let t = Instant::now();
    let mut differing = Vec::new();
    for (i, ((_, f), first)) in criteria.iter().zip(&digests).enumerate() {
        let again = f().ok().map(|o| o.digest);
        if first.is_none() || again.as_ref() != first.as_ref() {
            differing.push(i + 1);
        }
    }
    let pass = differing.is_empty();
    all &= pass;
    report(&format!(
        "criterion 10 {}: determinism - second run of criteria 1-9 {} ({:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        if pass { "byte-identical".to_string() } else { format!("differs for {differing:?}") },
        t.elapsed().as_secs_f64()
    ));
    assert!(all, "acceptance criteria failed");
}
