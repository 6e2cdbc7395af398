//! Valley-position calibration against signed charge l₁, and its inversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::SystemConfig;
use crate::pipeline::{self, PipelineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OamError {
    #[error("invalid charge range [{l_min}, {l_max}]")]
    InvalidRange { l_min: i64, l_max: i64 },
    #[error("{failed} of {total} calibration points failed (first at l1 = {first}: {reason})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: i64,
        reason: String,
    },
    #[error("calibration has no entries")]
    EmptyCurve,
    #[error("valley position is not strictly monotone in l1; curve cannot be inverted")]
    ModelNotInvertible,
    #[error("x = {x} lies outside the calibrated span [{lo}, {hi}] by more than one step")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("calibration fingerprint {found} does not match current parameters {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub l1: i64,
    pub x_star: f64,
    pub fwhm: Option<f64>,
    pub delta1_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFailure {
    pub l1: i64,
    pub reason: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Fingerprint of the template with l₁ cleared.
    pub params_fingerprint: String,
    /// Sorted by l₁; failed charges are absent.
    pub entries: Vec<CalibrationEntry>,
    pub monotone: bool,
    /// Absent with fewer than two entries or a constant curve.
    pub lin_fit: Option<LinFit>,
    pub failures: Vec<CalibrationFailure>,
}

impl CalibrationCurve {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("l1,x_star,fwhm,delta1_normalized\n");
        for e in &self.entries {
            let fwhm = e.fwhm.map_or_else(|| "NaN".to_string(), |w| format!("{w:.16e}"));
            out.push_str(&format!(
                "{},{:.16e},{},{:.16e}\n",
                e.l1, e.x_star, fwhm, e.delta1_normalized
            ));
        }
        out
    }

    /// Failure closest to l₁ = 0, i.e. the first one met when widening the
    /// range symmetrically.
    pub fn first_failure(&self) -> Option<&CalibrationFailure> {
        self.failures.iter().min_by_key(|f| (f.l1.abs(), f.l1))
    }

    pub fn x_of(&self, l1: i64) -> Option<f64> {
        self.entries.iter().find(|e| e.l1 == l1).map(|e| e.x_star)
    }
}

/// Least-squares line through (l, x) with its coefficient of determination.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Some(LinFit {
        slope,
        intercept,
        r_squared: 1.0 - ss_res / syy,
    })
}

fn strictly_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0]) || xs.windows(2).all(|w| w[1] < w[0])
}

/// Per-l results in l order, failures split out.
fn per_charge<T: Send>(
    template: &SystemConfig,
    l_min: i64,
    l_max: i64,
    f: impl Fn(&SystemConfig) -> Result<T, PipelineError> + Sync,
) -> Result<(Vec<(i64, T)>, Vec<CalibrationFailure>), OamError> {
    if l_min > l_max {
        return Err(OamError::InvalidRange { l_min, l_max });
    }
    let results: Vec<(i64, Result<T, PipelineError>)> = (l_min..=l_max)
        .into_par_iter()
        .map(|l| {
            let mut c = template.clone();
            c.charge1 = l;
            (l, f(&c))
        })
        .collect();
    let total = results.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (l, r) in results {
        match r {
            Ok(v) => ok.push((l, v)),
            Err(e) => failures.push(CalibrationFailure {
                l1: l,
                reason: e.to_string(),
            }),
        }
    }
    // more than 10% failing is an error
    if failures.len() * 10 > total {
        let first = failures
            .iter()
            .min_by_key(|f| (f.l1.abs(), f.l1))
            .cloned()
            .expect("nonempty");
        return Err(OamError::TooManyFailures {
            failed: failures.len(),
            total,
            first: first.l1,
            reason: first.reason,
        });
    }
    Ok((ok, failures))
}

/// Valley position for every integer l₁ in [l_min, l_max], all other
/// inputs taken from `template`.
pub fn build_calibration(template: &SystemConfig, l_min: i64, l_max: i64) -> Result<CalibrationCurve, OamError> {
    let (ok, failures) = per_charge(template, l_min, l_max, |c| {
        let located = pipeline::locate_valley(c, None)?;
        Ok(CalibrationEntry {
            l1: c.charge1,
            x_star: located.valley.x_star,
            fwhm: located.valley.fwhm,
            delta1_normalized: located.steady.normalized_delta1(&located.params),
        })
    })?;
    let entries: Vec<CalibrationEntry> = ok.into_iter().map(|(_, e)| e).collect();
    let xs: Vec<f64> = entries.iter().map(|e| e.x_star).collect();
    let points: Vec<(f64, f64)> = entries.iter().map(|e| (e.l1 as f64, e.x_star)).collect();
    Ok(CalibrationCurve {
        params_fingerprint: template.template_fingerprint(),
        monotone: strictly_monotone(&xs),
        lin_fit: linear_fit(&points),
        entries,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetuningEntry {
    pub l1: i64,
    /// (Δ₁ − ω_φ)/ω_φ
    pub delta1_normalized: f64,
}

/// Normalized effective detuning of cavity 1 for every integer l₁.
pub fn detuning_curve(
    template: &SystemConfig,
    l_min: i64,
    l_max: i64,
) -> Result<(Vec<DetuningEntry>, Vec<CalibrationFailure>), OamError> {
    let (ok, failures) = per_charge(template, l_min, l_max, |c| {
        let (params, steady) = pipeline::resolve_state(c, None)?;
        Ok(steady.normalized_delta1(&params))
    })?;
    let entries = ok
        .into_iter()
        .map(|(l1, delta1_normalized)| DetuningEntry { l1, delta1_normalized })
        .collect();
    Ok((entries, failures))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OamEstimate {
    pub l_hat: i64,
    /// x_measured − x_star(l_hat)
    pub x_residual: f64,
    /// Other charges whose valley lies within the ambiguity radius of the
    /// measurement, or exactly as close as l_hat's.
    pub ambiguous_with: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    /// Ambiguity radius as a multiple of the best entry's fwhm.
    pub ambiguity_fwhm_fraction: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            ambiguity_fwhm_fraction: 0.5,
        }
    }
}

/// Refuses a curve built for different physics unless `force` is set.
pub fn check_fingerprint(curve: &CalibrationCurve, current: &SystemConfig, force: bool) -> Result<(), OamError> {
    let expected = current.template_fingerprint();
    if !force && curve.params_fingerprint != expected {
        return Err(OamError::FingerprintMismatch {
            expected,
            found: curve.params_fingerprint.clone(),
        });
    }
    Ok(())
}

/// Nearest-entry inversion of a calibration curve.
pub fn estimate_oam(curve: &CalibrationCurve, x_measured: f64) -> Result<OamEstimate, OamError> {
    estimate_oam_with(curve, x_measured, EstimateOptions::default())
}

pub fn estimate_oam_with(
    curve: &CalibrationCurve,
    x_measured: f64,
    opts: EstimateOptions,
) -> Result<OamEstimate, OamError> {
    let entries = &curve.entries;
    if entries.is_empty() {
        return Err(OamError::EmptyCurve);
    }
    if !curve.monotone {
        return Err(OamError::ModelNotInvertible);
    }
    let first = entries[0].x_star;
    let last = entries[entries.len() - 1].x_star;
    let (lo, hi) = (first.min(last), first.max(last));
    let (step_lo, step_hi) = if entries.len() > 1 {
        let a = (entries[1].x_star - first).abs();
        let b = (last - entries[entries.len() - 2].x_star).abs();
        if first < last {
            (a, b)
        } else {
            (b, a)
        }
    } else {
        (0.0, 0.0)
    };
    if !(x_measured >= lo - step_lo && x_measured <= hi + step_hi) {
        return Err(OamError::OutOfRange { x: x_measured, lo, hi });
    }

    let dist = |e: &CalibrationEntry| (e.x_star - x_measured).abs();
    let best = entries
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.l1.cmp(&b.l1)))
        .expect("nonempty");
    let d_best = dist(best);
    let radius = opts.ambiguity_fwhm_fraction * best.fwhm.unwrap_or(0.0);
    // a midpoint computed in floating point can sit an ulp off centre
    let tie = d_best + 4.0 * f64::EPSILON * (x_measured.abs() + d_best);
    let ambiguous_with = entries
        .iter()
        .filter(|e| e.l1 != best.l1)
        .filter(|e| dist(e) <= radius || dist(e) <= tie)
        .map(|e| e.l1)
        .collect();
    Ok(OamEstimate {
        l_hat: best.l1,
        x_residual: x_measured - best.x_star,
        ambiguous_with,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(xs: &[(i64, f64)], fwhm: f64) -> CalibrationCurve {
        let entries: Vec<CalibrationEntry> = xs
            .iter()
            .map(|&(l1, x)| CalibrationEntry {
                l1,
                x_star: x,
                fwhm: Some(fwhm),
                delta1_normalized: x,
            })
            .collect();
        let pts: Vec<(f64, f64)> = xs.iter().map(|&(l, x)| (l as f64, x)).collect();
        CalibrationCurve {
            params_fingerprint: "test".into(),
            monotone: strictly_monotone(&xs.iter().map(|p| p.1).collect::<Vec<_>>()),
            lin_fit: linear_fit(&pts),
            entries,
            failures: vec![],
        }
    }

    fn line() -> CalibrationCurve {
        let xs: Vec<(i64, f64)> = (-5..=5).map(|l| (l, 0.04 * l as f64 + 0.001)).collect();
        synthetic(&xs, 0.012)
    }

    #[test]
    fn fit_recovers_exact_line() {
        let f = line().lin_fit.unwrap();
        assert!((f.slope - 0.04).abs() < 1e-14);
        assert!((f.intercept - 0.001).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_every_entry() {
        let c = line();
        for e in &c.entries {
            let est = estimate_oam(&c, e.x_star).unwrap();
            assert_eq!(est.l_hat, e.l1);
            assert_eq!(est.x_residual, 0.0);
            assert!(est.ambiguous_with.is_empty());
        }
    }

    #[test]
    fn midpoint_is_ambiguous() {
        let c = line();
        for l in -5..5 {
            let x = 0.5 * (c.x_of(l).unwrap() + c.x_of(l + 1).unwrap());
            let est = estimate_oam(&c, x).unwrap();
            let other = if est.l_hat == l { l + 1 } else { l };
            assert!(est.l_hat == l || est.l_hat == l + 1);
            assert_eq!(est.ambiguous_with, vec![other]);
        }
    }

    #[test]
    fn wide_radius_lists_neighbours() {
        let c = line();
        let opts = EstimateOptions {
            ambiguity_fwhm_fraction: 4.0,
        };
        let est = estimate_oam_with(&c, c.x_of(0).unwrap(), opts).unwrap();
        assert_eq!(est.ambiguous_with, vec![-1, 1]);
    }

    #[test]
    fn range_is_one_step_beyond_extremes() {
        let c = line();
        let top = c.x_of(5).unwrap();
        assert_eq!(estimate_oam(&c, top + 0.039).unwrap().l_hat, 5);
        assert!(matches!(estimate_oam(&c, top + 0.041), Err(OamError::OutOfRange { .. })));
        assert!(matches!(estimate_oam(&c, f64::NAN), Err(OamError::OutOfRange { .. })));
    }

    #[test]
    fn decreasing_curve_inverts() {
        let xs: Vec<(i64, f64)> = (-3..=3).map(|l| (l, -0.04 * l as f64)).collect();
        let c = synthetic(&xs, 0.01);
        assert!(c.monotone);
        assert!(c.lin_fit.unwrap().slope < 0.0);
        assert_eq!(estimate_oam(&c, 0.079).unwrap().l_hat, -2);
    }

    #[test]
    fn even_curve_is_not_invertible() {
        let xs: Vec<(i64, f64)> = (-3..=3).map(|l| (l, 1e-4 * (l * l) as f64)).collect();
        let c = synthetic(&xs, 0.01);
        assert!(!c.monotone);
        assert_eq!(estimate_oam(&c, 0.0), Err(OamError::ModelNotInvertible));
    }

    #[test]
    fn json_round_trip() {
        let c = line();
        assert_eq!(CalibrationCurve::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.to_csv().lines().count(), 12);
    }

    #[test]
    fn single_point_calibration() {
        let mut t = SystemConfig::baseline();
        t.drive2_power_w = 0.1;
        let c = build_calibration(&t, 0, 0).unwrap();
        assert_eq!(c.entries.len(), 1);
        assert!(c.lin_fit.is_none());
        assert!(c.monotone);
        assert_eq!(estimate_oam(&c, c.entries[0].x_star).unwrap().l_hat, 0);
    }

    #[test]
    fn inverted_range_rejected() {
        let t = SystemConfig::baseline();
        assert_eq!(
            build_calibration(&t, 3, 2),
            Err(OamError::InvalidRange { l_min: 3, l_max: 2 })
        );
    }

    #[test]
    fn failures_are_counted() {
        // decoupled lossless cavity has no valley at l1 = 0 only
        let mut t = SystemConfig::baseline();
        t.charge2 = 0;
        t.output_coupling_ratio = 1.0;
        let err = build_calibration(&t, 0, 0).unwrap_err();
        assert!(matches!(err, OamError::TooManyFailures { failed: 1, total: 1, first: 0, .. }));
    }

    #[test]
    fn fingerprint_guard() {
        let mut t = SystemConfig::baseline();
        t.drive2_power_w = 0.1;
        let mut c = line();
        c.params_fingerprint = t.template_fingerprint();
        assert!(check_fingerprint(&c, &t, false).is_ok());
        let mut other = t.clone();
        other.charge1 = 7;
        assert!(check_fingerprint(&c, &other, false).is_ok());
        other.finesse1 *= 2.0;
        assert!(matches!(
            check_fingerprint(&c, &other, false),
            Err(OamError::FingerprintMismatch { .. })
        ));
        assert!(check_fingerprint(&c, &other, true).is_ok());
    }

    #[test]
    fn detuning_curve_is_even_without_second_drive() {
        let t = SystemConfig::baseline();
        let (d, fails) = detuning_curve(&t, -3, 3).unwrap();
        assert!(fails.is_empty());
        for k in 0..3 {
            assert_eq!(d[k].delta1_normalized, d[6 - k].delta1_normalized);
        }
        assert_eq!(d[3].delta1_normalized, 0.0);
    }
}
