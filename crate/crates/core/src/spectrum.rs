//! Sampled transmission spectra and resonance-valley analysis.
//!
//! The valley is the interior minimum of T(x), x = (Ω − ω_φ)/ω_φ, where
//! dT/dx = 0 and d²T/dx² > 0. It is located by a coarse grid followed by
//! golden-section refinement; the window grows until the minimum is
//! interior.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::params::{SystemConfig, SystemParams};
use crate::pipeline::{self, PipelineError};
use crate::response::{self, ResponseError, TransmissionPoint};
use crate::steady_state::{BranchTag, SteadyState};

pub const DEFAULT_WINDOW: (f64, f64) = (-0.2, 0.2);
/// Window expansion stops once it would reach beyond |x| = 2.
pub const MAX_ABS_X: f64 = 2.0;
pub const COARSE_POINTS: usize = 1024;
/// Minimum dip depth below baseline for a linewidth to be meaningful.
pub const DEPTH_FLOOR: f64 = 1e-3;
const FLAT_CONTRAST: f64 = 1e-9;
const REFINE_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("invalid sampling request: {0}")]
    InvalidRange(String),
    #[error("at x = {x}: {source}")]
    Response { x: f64, source: ResponseError },
    #[error("no interior minimum of T within [{lo}, {hi}]")]
    NoInteriorMinimum { lo: f64, hi: f64 },
    #[error("dip depth {depth:e} is below the floor {DEPTH_FLOOR:e}")]
    DipTooShallow { depth: f64 },
    #[error("half-depth level is not crossed on both sides of the valley")]
    NoHalfDepthCrossing,
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub points: Vec<TransmissionPoint>,
    pub params_fingerprint: String,
    pub branch_tag: BranchTag,
}

impl Spectrum {
    /// `x,T` with a header row and round-trippable doubles.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,T\n");
        for p in &self.points {
            out.push_str(&format!("{:.16e},{:.16e}\n", p.x, p.t));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValleyReport {
    pub x_star: f64,
    pub t_min: f64,
    pub curvature_sign_ok: bool,
    /// Full width at half depth in x units, when the dip is deep enough and
    /// both half-depth crossings lie inside the window.
    pub fwhm: Option<f64>,
    pub window: (f64, f64),
    pub expansions: usize,
}

fn t_at(params: &SystemParams, steady: &SteadyState, x: f64) -> Result<f64, SpectrumError> {
    response::transmission_at_x(params, steady, x).map_err(|source| SpectrumError::Response { x, source })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n).map(|i| lo + (hi - lo) * (i as f64 / last)).collect()
}

pub fn sample_spectrum(
    params: &SystemParams,
    steady: &SteadyState,
    x_lo: f64,
    x_hi: f64,
    n: usize,
) -> Result<Spectrum, SpectrumError> {
    if !(x_lo < x_hi) || n < 3 {
        return Err(SpectrumError::InvalidRange(format!(
            "need x_lo < x_hi and n >= 3, got [{x_lo}, {x_hi}], n = {n}"
        )));
    }
    let points = linspace(x_lo, x_hi, n)
        .into_par_iter()
        .map(|x| {
            let omega = params.omega_phi * (1.0 + x);
            response::probe_transmission(params, steady, omega)
                .map(|p| TransmissionPoint { x, ..p })
                .map_err(|source| SpectrumError::Response { x, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Spectrum {
        points,
        params_fingerprint: params.fingerprint(),
        branch_tag: steady.branch,
    })
}

/// Golden-section search for a minimum of `f` on [a, b].
fn golden_min<F>(mut a: f64, mut b: f64, tol: f64, f: F) -> Result<(f64, f64), SpectrumError>
where
    F: Fn(f64) -> Result<f64, SpectrumError>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the outer 10% of samples, split evenly between both ends.
fn baseline(ts: &[f64]) -> f64 {
    let k = (ts.len() / 20).max(1);
    let outer: Vec<f64> = ts[..k].iter().chain(ts[ts.len() - k..].iter()).copied().collect();
    median(outer)
}

fn bisect_level<F>(mut a: f64, mut b: f64, level: f64, f: &F) -> Result<f64, SpectrumError>
where
    F: Fn(f64) -> Result<f64, SpectrumError>,
{
    let below_a = f(a)? < level;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= REFINE_TOL || m == a || m == b {
            break;
        }
        if (f(m)? < level) == below_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Locates the resonance valley. `window` defaults to [`DEFAULT_WINDOW`].
pub fn find_valley(
    params: &SystemParams,
    steady: &SteadyState,
    window: Option<(f64, f64)>,
) -> Result<ValleyReport, SpectrumError> {
    let (mut lo, mut hi) = window.unwrap_or(DEFAULT_WINDOW);
    if !(lo < hi) {
        return Err(SpectrumError::InvalidRange(format!("window [{lo}, {hi}]")));
    }
    let f = |x: f64| t_at(params, steady, x);
    let mut expansions = 0;
    loop {
        let xs = linspace(lo, hi, COARSE_POINTS);
        let ts = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>, _>>()?;
        let (i, t_grid_min) = ts
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, t)| if t < acc.1 { (j, t) } else { acc });
        let t_max = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let flat = t_max - t_grid_min <= FLAT_CONTRAST * t_max.abs().max(1.0);
        let interior = i > 0 && i < COARSE_POINTS - 1;

        if flat || !interior {
            let centre = 0.5 * (lo + hi);
            let half = hi - lo;
            let (nlo, nhi) = ((centre - half).max(-MAX_ABS_X), (centre + half).min(MAX_ABS_X));
            if nlo >= lo && nhi <= hi {
                return Err(SpectrumError::NoInteriorMinimum { lo, hi });
            }
            lo = nlo;
            hi = nhi;
            expansions += 1;
            continue;
        }

        let (x_star, t_min) = golden_min(xs[i - 1], xs[i + 1], REFINE_TOL, f)?;
        let h = (xs[1] - xs[0]) / 64.0;
        let curvature = f(x_star + h)? + f(x_star - h)? - 2.0 * t_min;

        let base = baseline(&ts);
        let fwhm = if base - t_min > DEPTH_FLOOR {
            let level = 0.5 * (base + t_min);
            let left = (0..i).rev().find(|&j| ts[j] >= level);
            let right = (i + 1..COARSE_POINTS).find(|&j| ts[j] >= level);
            match (left, right) {
                (Some(l), Some(r)) => {
                    let xl = bisect_level(xs[l], x_star, level, &f)?;
                    let xr = bisect_level(x_star, xs[r], level, &f)?;
                    Some(xr - xl)
                }
                _ => None,
            }
        } else {
            None
        };

        return Ok(ValleyReport {
            x_star,
            t_min,
            curvature_sign_ok: curvature > 0.0,
            fwhm,
            window: (lo, hi),
            expansions,
        });
    }
}

/// Full width at half depth measured on the samples themselves, with
/// crossings placed by linear interpolation.
pub fn linewidth(spectrum: &Spectrum, valley: &ValleyReport) -> Result<f64, SpectrumError> {
    let pts = &spectrum.points;
    if pts.len() < 3 {
        return Err(SpectrumError::InvalidRange("fewer than 3 samples".into()));
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let base = baseline(&ts);
    let depth = base - valley.t_min;
    if depth <= DEPTH_FLOOR {
        return Err(SpectrumError::DipTooShallow { depth });
    }
    let level = 0.5 * (base + valley.t_min);
    let centre = pts
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.x - valley.x_star).abs().total_cmp(&(b.1.x - valley.x_star).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let cross = |a: &TransmissionPoint, b: &TransmissionPoint| {
        a.x + (level - a.t) * (b.x - a.x) / (b.t - a.t)
    };
    let left = (0..centre)
        .rev()
        .find(|&j| pts[j].t >= level)
        .map(|j| cross(&pts[j], &pts[j + 1]));
    let right = (centre + 1..pts.len())
        .find(|&j| pts[j].t >= level)
        .map(|j| cross(&pts[j - 1], &pts[j]));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(SpectrumError::NoHalfDepthCrossing),
    }
}

/// One row of a shift-distance scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftRow {
    pub delta2_over_omega: f64,
    /// |x*(l₁+1) − x*(l₁)|
    pub d: Option<f64>,
    pub error: Option<String>,
}

/// Valley displacement caused by a unit change of l₁, for each effective
/// cavity-2 detuning Δ₂ = s·ω_φ with s taken from `delta2_over_omega`.
pub fn shift_distance(template: &SystemConfig, l1: i64, delta2_over_omega: &[f64]) -> Vec<ShiftRow> {
    delta2_over_omega
        .par_iter()
        .map(|&s| {
            let at = |l: i64| -> Result<f64, PipelineError> {
                let mut c = template.clone();
                c.charge1 = l;
                c.detuning2 = crate::params::Detuning2Spec::EffectiveRadS(s * c.rotation_frequency_rad_s);
                Ok(pipeline::locate_valley(&c, None)?.valley.x_star)
            };
            match at(l1).and_then(|a| at(l1 + 1).map(|b| (b - a).abs())) {
                Ok(d) => ShiftRow {
                    delta2_over_omega: s,
                    d: Some(d),
                    error: None,
                },
                Err(e) => ShiftRow {
                    delta2_over_omega: s,
                    d: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn shift_table_csv(rows: &[ShiftRow]) -> String {
    let mut out = String::from("d2_over_omega,d,valid\n");
    for r in rows {
        match r.d {
            Some(d) => out.push_str(&format!("{:.16e},{:.16e},1\n", r.delta2_over_omega, d)),
            None => out.push_str(&format!("{:.16e},NaN,0\n", r.delta2_over_omega)),
        }
    }
    out
}

/// Left/right symmetry of a transparency window about its peak.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymmetryReport {
    pub x_peak: f64,
    pub t_peak: f64,
    pub x_valley: f64,
    pub t_valley: f64,
    /// max over 0 ≤ δ ≤ |x_valley − x_peak| of |T(x_peak+δ) − T(x_peak−δ)|,
    /// as a fraction of the peak-to-valley depth.
    pub defect: f64,
}

/// Measures how far the window in [x_lo, x_hi] departs from mirror
/// symmetry about its transparency peak. A symmetric OMIT window scores
/// near zero; a Fano-like window, whose dip sits on one side of the peak
/// only, scores near one.
pub fn window_asymmetry(
    params: &SystemParams,
    steady: &SteadyState,
    x_lo: f64,
    x_hi: f64,
    n: usize,
) -> Result<AsymmetryReport, SpectrumError> {
    let spec = sample_spectrum(params, steady, x_lo, x_hi, n)?;
    let ts: Vec<f64> = spec.points.iter().map(|p| p.t).collect();
    let xs: Vec<f64> = spec.points.iter().map(|p| p.x).collect();
    let argmin = (0..n).min_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap_or(0);
    let argmax = (0..n).max_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap_or(0);
    let f = |x: f64| t_at(params, steady, x);
    let neg = |x: f64| f(x).map(|t| -t);
    let bracket = |i: usize| (xs[i.saturating_sub(1)], xs[(i + 1).min(n - 1)]);
    let (a, b) = bracket(argmin);
    let (x_valley, t_valley) = golden_min(a, b, REFINE_TOL, f)?;
    let (a, b) = bracket(argmax);
    let (x_peak, neg_peak) = golden_min(a, b, REFINE_TOL, neg)?;
    let t_peak = -neg_peak;
    let depth = t_peak - t_valley;
    if depth <= DEPTH_FLOOR {
        return Err(SpectrumError::DipTooShallow { depth });
    }
    let reach = (x_valley - x_peak).abs();
    let samples = 512;
    let mut worst: f64 = 0.0;
    for k in 1..=samples {
        let d = reach * k as f64 / samples as f64;
        worst = worst.max((f(x_peak + d)? - f(x_peak - d)?).abs());
    }
    Ok(AsymmetryReport {
        x_peak,
        t_peak,
        x_valley,
        t_valley,
        defect: worst / depth,
    })
}
