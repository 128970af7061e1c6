//! Matrix-pencil harmonic inversion of a ringdown trace.
//!
//! The trace is shifted to the centre of the analysis band, low-pass
//! filtered and decimated so that the pencil only sees the band of
//! interest. Complex exponentials pass through the (linear, time-invariant)
//! filter unchanged apart from a constant factor, so frequencies and decay
//! rates are unaffected once the filter transient is discarded.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fdtd::TimeTrace;

use super::{Method, ResonanceResult, Uncertainty};

/// Options of [`harmonic_inversion`]. Frequencies are in cycles per nm
/// (f = 1 / lambda).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    pub f_min: f64,
    pub f_max: f64,
    pub max_modes: usize,
    /// Singular values below this fraction of the largest are dropped.
    pub rank_tolerance: f64,
    /// Modes weaker than this fraction of the strongest are dropped.
    pub amplitude_threshold: f64,
    /// Upper bound on the decimated trace length.
    pub max_samples: usize,
}

impl InversionOptions {
    pub fn new(lambda_min: f64, lambda_max: f64, max_modes: usize) -> Self {
        InversionOptions {
            f_min: 1.0 / lambda_max,
            f_max: 1.0 / lambda_min,
            max_modes,
            rank_tolerance: 1e-7,
            amplitude_threshold: 1e-4,
            max_samples: 600,
        }
    }
}

/// Result of the inversion, including a note when the pencil had lower
/// rank than requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub modes: Vec<ResonanceResult>,
    pub rank: usize,
    pub notes: Vec<String>,
}

/// Windowed-sinc low-pass with unit DC gain. The 4-term Blackman-Harris
/// window keeps sidelobes below -90 dB.
fn lowpass(cutoff: f64, taps: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let m = (taps - 1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let x = k as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let p = 2.0 * PI * k as f64 / m;
            let w = 0.35875 - 0.48829 * p.cos() + 0.14128 * (2.0 * p).cos() - 0.01168 * (3.0 * p).cos();
            sinc * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

const NOISE_FACTOR: f64 = 5.0;

/// Distance of `f` (cycles per sample) from the nearest alias of zero.
fn folded(f: f64) -> f64 {
    (f - f.round()).abs()
}

pub fn harmonic_inversion(trace: &TimeTrace, opts: &InversionOptions) -> Result<Inversion> {
    harmonic_inversion_joint(std::slice::from_ref(trace), opts)
}

/// Band-limited, decimated copy of one trace.
struct Baseband {
    y: Vec<Complex64>,
    dt_d: f64,
    /// Time of y[0] relative to the first input sample.
    t_first: f64,
}

fn baseband(trace: &TimeTrace, opts: &InversionOptions) -> Result<Baseband> {
    let (f_lo, f_hi) = (opts.f_min, opts.f_max);
    let dt = trace.dt;
    let n = trace.samples.len();
    if n < 4 * opts.max_modes {
        return Err(Error::Argument(format!(
            "trace of {n} samples too short for {} modes",
            opts.max_modes
        )));
    }
    if trace.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    if 2.0 * f_hi * dt >= 1.0 {
        return Err(Error::Argument("band extends beyond the trace Nyquist frequency".into()));
    }
    let f_c = 0.5 * (f_lo + f_hi);
    let half = 0.5 * (f_hi - f_lo);
    // Decimation keeps the new Nyquist frequency at least four half-bands
    // away, and avoids factors that fold the DC or negative-frequency image
    // of the shifted trace onto the analysis band.
    let max_dec = ((1.0 / (8.0 * half * dt)).floor() as usize).max(1);
    let transition = |dec: usize| (0.5 / dec as f64 - half * dt).max(1e-9);
    let mut taps = ((8.0 / transition(max_dec)).ceil() as usize) | 1;
    taps = taps.min((n / 4) | 1);
    let usable = n.saturating_sub(taps - 1);
    let clear = |dec: usize| {
        let band = 1.5 * half * dt * dec as f64;
        [f_c * dt, 2.0 * f_c * dt]
            .iter()
            .all(|img| folded(img * dec as f64) > band)
    };
    let want = usable.div_ceil(opts.max_samples).max(1).min(max_dec);
    let dec = (want..=max_dec)
        .find(|&d| clear(d))
        .or_else(|| (1..want).rev().find(|&d| clear(d)))
        .unwrap_or(want);
    let cutoff = (1.5 * half * dt).min(0.45);
    let h = if taps > 1 { lowpass(cutoff, taps) } else { vec![1.0] };
    let omega_c = 2.0 * std::f64::consts::PI * f_c;
    let shifted: Vec<Complex64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, v)| *v * Complex64::from_polar(1.0, -omega_c * k as f64 * dt))
        .collect();
    let mut y = Vec::new();
    let mut start = 0;
    while start + taps <= n {
        let mut acc = Complex64::default();
        for (k, hk) in h.iter().enumerate() {
            acc += shifted[start + taps - 1 - k] * *hk;
        }
        y.push(acc);
        start += dec;
    }
    if y.len() < 4 * opts.max_modes || y.len() < 8 {
        return Err(Error::Argument(format!("only {} samples left after filtering", y.len())));
    }
    Ok(Baseband {
        y,
        dt_d: dec as f64 * dt,
        // y[0] represents the input half a filter length in, by linear phase.
        t_first: 0.5 * (taps - 1) as f64 * dt,
    })
}

/// Matrix pencil on several traces that share their poles (probes of the
/// same run). The Hankel blocks of all traces are stacked, so every mode
/// visible at any probe enters one common signal subspace. Amplitudes are
/// reported for the trace where each mode is strongest.
pub fn harmonic_inversion_joint(traces: &[TimeTrace], opts: &InversionOptions) -> Result<Inversion> {
    let (f_lo, f_hi) = (opts.f_min, opts.f_max);
    if !(f_lo > 0.0 && f_hi > f_lo) {
        return Err(Error::Argument(format!("invalid band [{f_lo}, {f_hi}]")));
    }
    if opts.max_modes == 0 {
        return Err(Error::Argument("max_modes must be >= 1".into()));
    }
    let first = traces.first().ok_or_else(|| Error::Argument("no traces to invert".into()))?;
    if traces
        .iter()
        .any(|t| t.dt != first.dt || t.samples.len() != first.samples.len() || t.t0 != first.t0)
    {
        return Err(Error::Argument("joint inversion needs traces with a common time axis".into()));
    }
    let bases = traces
        .iter()
        .map(|t| baseband(t, opts))
        .collect::<Result<Vec<_>>>()?;
    let (dt_d, t_first) = (bases[0].dt_d, bases[0].t_first);
    let m = bases[0].y.len();
    let f_c = 0.5 * (f_lo + f_hi);
    let half = 0.5 * (f_hi - f_lo);
    let passband = (3.0 * half * dt_d).min(1.0);

    let l = (m / 3).max(opts.max_modes).min(m - opts.max_modes - 1);
    let rows = m - l;
    let mut hankel = DMatrix::zeros(rows * bases.len(), l + 1);
    for (b, base) in bases.iter().enumerate() {
        for i in 0..rows {
            for j in 0..=l {
                hankel[(b * rows + i, j)] = base.y[i + j];
            }
        }
    }
    let svd = SVD::new(hankel, false, true);
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let mut notes = Vec::new();
    if !(s_max > 0.0) {
        return Ok(Inversion {
            modes: Vec::new(),
            rank: 0,
            notes: vec!["trace has no content in band".into()],
        });
    }
    // Extra rank absorbs filter leakage of the negative-frequency image and
    // out-of-band content; those poles are discarded later.
    let max_rank = 2 * opts.max_modes + 4;
    // Filtered white noise fills a plateau of singular values whose share
    // matches the passband share of the decimated spectrum; a point in that
    // plateau beyond any admissible signal rank sets the noise floor.
    let mut sorted: Vec<f64> = sv.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let floor_at = ((0.5 * passband * sorted.len() as f64) as usize).max(2 * max_rank);
    let noise_floor = sorted[floor_at.min(sorted.len() - 1)];
    let threshold = (opts.rank_tolerance * s_max).max(NOISE_FACTOR * noise_floor);
    let significant = sv.iter().filter(|s| **s > threshold).count();
    let rank_max = significant.min(max_rank).min(l);
    if significant < opts.max_modes {
        notes.push(format!("pencil rank {significant} below requested {} modes", opts.max_modes));
    }
    if rank_max == 0 {
        return Ok(Inversion {
            modes: Vec::new(),
            rank: rank_max,
            notes,
        });
    }
    let v_t = svd.v_t.as_ref().expect("requested");

    // Weak directions near the threshold often carry non-exponential
    // (continuum) content and can pull genuine poles away at full rank.
    // Solve at every rank from half the admissible one up and keep poles
    // that recur at most of them.
    let ranks: Vec<usize> = (rank_max.div_ceil(2).max(1)..=rank_max).collect();
    let mut per_rank = Vec::with_capacity(ranks.len());
    for &rank in &ranks {
        per_rank.push(poles_at_rank(v_t, &bases, rank, l, dt_d, f_c, f_lo, f_hi)?);
    }
    let need = ranks.len().div_ceil(2);
    let mut clusters: Vec<Vec<Pole>> = Vec::new();
    let mut all: Vec<Pole> = per_rank.iter().flatten().copied().collect();
    all.sort_by(|a, b| b.amp.partial_cmp(&a.amp).unwrap());
    for p in all {
        let tol = |c: &Pole| 0.5 * (p.decay + c.decay) / (2.0 * std::f64::consts::PI) + 1e-9 * p.f;
        match clusters.iter_mut().find(|c| (c[0].f - p.f).abs() <= tol(&c[0])) {
            // One member per rank; the strongest comes first.
            Some(c) if !c.iter().any(|q| q.rank == p.rank) => c.push(p),
            Some(_) => {}
            None => clusters.push(vec![p]),
        }
    }
    let mut modes = Vec::new();
    for c in clusters.into_iter().filter(|c| c.len() >= need) {
        // The largest stable rank models the most of the trace.
        let best = c.iter().max_by_key(|p| p.rank).expect("non-empty");
        let (f, decay, amp) = (best.f, best.decay, best.amp);
        modes.push(ResonanceResult {
            wavelength: 1.0 / f,
            frequency: f,
            q: std::f64::consts::PI * f / decay,
            // Referred back to the start of the trace.
            amplitude: 2.0 * amp * (decay * t_first).exp(),
            mode_volume: None,
            method: Method::HarmonicInversion,
            uncertainty: Uncertainty::default(),
            notes: Vec::new(),
        });
    }
    modes.sort_by(|a, b| b.amplitude.partial_cmp(&a.amplitude).unwrap());
    if let Some(top) = modes.first().map(|m| m.amplitude) {
        modes.retain(|m| m.amplitude >= opts.amplitude_threshold * top);
    }
    modes.truncate(opts.max_modes);
    Ok(Inversion {
        modes,
        rank: rank_max,
        notes,
    })
}

#[derive(Debug, Clone, Copy)]
struct Pole {
    f: f64,
    decay: f64,
    amp: f64,
    rank: usize,
}

/// In-band decaying poles of the pencil truncated to `rank`.
#[allow(clippy::too_many_arguments)]
fn poles_at_rank(
    v_t: &DMatrix<Complex64>,
    bases: &[Baseband],
    rank: usize,
    l: usize,
    dt_d: f64,
    f_c: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<Vec<Pole>> {
    // Rows of Y are combinations of the rows of V^H, so the shift-invariant
    // basis is the transpose of v_t (the complex conjugate of V).
    let v = v_t.rows(0, rank).transpose();
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let pinv = v1.pseudo_inverse(1e-14).map_err(|e| Error::Eigen(e.to_string()))?;
    let a = pinv * v2;
    let schur = Schur::try_new(a, 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("pencil eigenvalues did not converge".into()))?;
    let (_, t) = schur.unpack();
    let z: Vec<Complex64> = (0..rank).map(|k| t[(k, k)]).collect();

    // Amplitudes by least squares on the Vandermonde system, per trace.
    let m = bases[0].y.len();
    let vand = DMatrix::from_fn(m, rank, |i, k| z[k].powu(i as u32));
    let vsvd = SVD::new(vand, true, true);
    let mut amp = vec![0.0_f64; rank];
    for base in bases {
        let rhs = DVector::from_vec(base.y.clone());
        let coef = vsvd.solve(&rhs, 1e-14).map_err(|e| Error::Eigen(e.to_string()))?;
        for k in 0..rank {
            amp[k] = amp[k].max(coef[k].norm());
        }
    }
    let mut poles = Vec::new();
    for k in 0..rank {
        if z[k].norm() == 0.0 {
            continue;
        }
        let s = z[k].ln() / dt_d;
        let f = f_c + s.im / (2.0 * std::f64::consts::PI);
        let decay = -s.re;
        // A line broader than half the band cannot be resolved inside it.
        let fwhm = decay / std::f64::consts::PI;
        if f >= f_lo && f <= f_hi && decay > 0.0 && fwhm <= 0.5 * (f_hi - f_lo) {
            poles.push(Pole { f, decay, amp: amp[k], rank });
        }
    }
    Ok(poles)
}
