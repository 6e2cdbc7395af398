//! Time-domain check of the linearised model.
//!
//! The full nonlinear mean-field equations are integrated with an adaptive
//! Dormand–Prince 5(4) scheme, and the component of c₁(t) at the probe
//! beat frequency is extracted by least squares. Nothing here uses the
//! effective detunings or the sideband solve; agreement with them is the
//! point.
//!
//! State layout: [Re c₁, Im c₁, Re c₂, Im c₂, φ, dφ/dt].

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

use crate::linalg;
use crate::params::SystemParams;
use crate::response;
use crate::steady_state::SteadyState;

/// Longest integration allowed, in mechanical periods.
pub const MAX_PERIODS: f64 = 1e7;
pub const DEFAULT_RTOL: f64 = 1e-10;
pub const MIN_DEMOD_PERIODS: usize = 10;
/// Residual rms, relative to |c₁₊|, above which the single-harmonic fit
/// is rejected.
pub const POOR_FIT_LIMIT: f64 = 1e-2;
const SAMPLES_PER_PERIOD: usize = 32;
const STEPS_PER_PERIOD: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("step size underflow at t = {t:e} s (trajectory diverging or stiff)")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t:e} s")]
    StepBudgetExceeded { t: f64, max_steps: usize },
    #[error("requested duration {t_end:e} s exceeds {MAX_PERIODS:e} mechanical periods")]
    DurationTooLong { t_end: f64 },
    #[error("demodulation window of {periods} beat periods is too short or outside the recorded span")]
    WindowTooShort { periods: usize },
    #[error("single-harmonic fit residual {residual:e} exceeds {POOR_FIT_LIMIT:e} of |c1_plus|")]
    PoorFit { residual: f64, result: Box<DemodulationResult> },
    #[error("degenerate demodulation basis")]
    DegenerateBasis,
}

/// Bare detunings of both cavities from their drives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BareDetunings {
    pub delta_c1: f64,
    pub delta_c2: f64,
}

impl BareDetunings {
    pub fn from_steady(params: &SystemParams, steady: &SteadyState) -> Self {
        Self {
            delta_c1: params.delta_c1,
            delta_c2: steady.bare_delta_c2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Probe {
    pub eps_p: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanFieldState {
    pub c1: Complex64,
    pub c2: Complex64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl MeanFieldState {
    fn to_array(self) -> [f64; 6] {
        [self.c1.re, self.c1.im, self.c2.re, self.c2.im, self.phi, self.phi_dot]
    }

    fn from_array(y: &[f64; 6]) -> Self {
        Self {
            c1: Complex64::new(y[0], y[1]),
            c2: Complex64::new(y[2], y[3]),
            phi: y[4],
            phi_dot: y[5],
        }
    }

    pub fn from_steady(steady: &SteadyState) -> Self {
        Self {
            c1: steady.c1s,
            c2: steady.c2s,
            phi: steady.phi_s,
            phi_dot: 0.0,
        }
    }
}

/// Right-hand side of the mean-field equations.
pub fn vector_field(
    params: &SystemParams,
    bare: &BareDetunings,
    probe: Option<Probe>,
    t: f64,
    s: &MeanFieldState,
) -> MeanFieldState {
    let p = params;
    let i = Complex64::new(0.0, 1.0);
    let mut dc1 = -(p.kappa1 + i * (bare.delta_c1 + p.g1 * s.phi)) * s.c1 + p.eps1;
    if let Some(pr) = probe {
        dc1 += pr.eps_p * Complex64::from_polar(1.0, -pr.omega * t);
    }
    let dc2 = -(p.kappa2 + i * (bare.delta_c2 - p.g2 * s.phi)) * s.c2 + p.eps2;
    let torque = p.hbar / p.inertia * (p.g1 * s.c1.norm_sqr() - p.g2 * s.c2.norm_sqr());
    let ddphi = -p.gamma_phi * s.phi_dot - p.omega_phi * p.omega_phi * s.phi - torque;
    MeanFieldState {
        c1: dc1,
        c2: dc2,
        phi: s.phi_dot,
        phi_dot: ddphi,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: [f64; 6],
    pub max_steps: usize,
    /// Step cap keeping cubic resampling accurate between stored points.
    pub max_step: f64,
}

impl Tolerances {
    /// Absolute floors from the natural amplitude and angle scales.
    pub fn for_params(params: &SystemParams, eps_p: f64, rtol: f64) -> Self {
        let p = params;
        let c_scale = (p.eps1 + eps_p) / p.kappa1 + p.eps2 / p.kappa2;
        let phi_scale = p.static_compliance()
            * (p.g1.abs() * ((p.eps1 + eps_p) / p.kappa1).powi(2) + p.g2.abs() * (p.eps2 / p.kappa2).powi(2));
        let a_c = (rtol * c_scale).max(f64::MIN_POSITIVE);
        let a_phi = (rtol * phi_scale).max(f64::MIN_POSITIVE);
        Self {
            rtol,
            atol: [a_c, a_c, a_c, a_c, a_phi, a_phi * p.omega_phi],
            max_steps: 50_000_000,
            max_step: 2.0 * PI / p.omega_phi / STEPS_PER_PERIOD,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rtol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub c1: Vec<Complex64>,
    pub c2: Vec<Complex64>,
    pub phi: Vec<f64>,
    pub phi_dot: Vec<f64>,
    /// Time derivatives at each stored point, for Hermite resampling.
    derivs: Vec<[f64; 6]>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    fn push(&mut self, t: f64, y: &[f64; 6], dy: &[f64; 6]) {
        self.times.push(t);
        self.c1.push(Complex64::new(y[0], y[1]));
        self.c2.push(Complex64::new(y[2], y[3]));
        self.phi.push(y[4]);
        self.phi_dot.push(y[5]);
        self.derivs.push(*dy);
    }

    pub fn final_state(&self) -> MeanFieldState {
        let k = self.times.len() - 1;
        MeanFieldState {
            c1: self.c1[k],
            c2: self.c2[k],
            phi: self.phi[k],
            phi_dot: self.phi_dot[k],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re_c1,im_c1,re_c2,im_c2,phi,dphi_dt\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.times[k], self.c1[k].re, self.c1[k].im, self.c2[k].re, self.c2[k].im, self.phi[k], self.phi_dot[k]
            ));
        }
        out
    }

    /// c₁ at time t by cubic Hermite interpolation; `hint` is advanced
    /// monotonically for sequential queries.
    fn c1_at(&self, t: f64, hint: &mut usize) -> Complex64 {
        let n = self.times.len();
        while *hint + 2 < n && self.times[*hint + 1] < t {
            *hint += 1;
        }
        let k = *hint;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let d0 = Complex64::new(self.derivs[k][0], self.derivs[k][1]);
        let d1 = Complex64::new(self.derivs[k + 1][0], self.derivs[k + 1][1]);
        self.c1[k] * h00 + d0 * (h10 * h) + self.c1[k + 1] * h01 + d1 * (h11 * h)
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates from t = 0 to `t_end`, storing points with t ≥ `record_from`.
pub fn integrate_mean_field(
    params: &SystemParams,
    bare: &BareDetunings,
    probe: Option<Probe>,
    initial: MeanFieldState,
    t_end: f64,
    record_from: f64,
    tol: &Tolerances,
) -> Result<Trajectory, OracleError> {
    let period = 2.0 * PI / params.omega_phi;
    if t_end > MAX_PERIODS * period {
        return Err(OracleError::DurationTooLong { t_end });
    }
    let f = |t: f64, y: &[f64; 6]| vector_field(params, bare, probe, t, &MeanFieldState::from_array(y)).to_array();
    let mut traj = Trajectory {
        times: vec![],
        c1: vec![],
        c2: vec![],
        phi: vec![],
        phi_dot: vec![],
        derivs: vec![],
        stats: IntegratorStats {
            rtol: tol.rtol,
            ..Default::default()
        },
    };

    let mut t = 0.0;
    let mut y = initial.to_array();
    let mut k0 = f(t, &y);
    if record_from <= 0.0 {
        traj.push(t, &y, &k0);
    }
    let mut h = period / 50.0;
    while t < t_end {
        if traj.stats.steps + traj.stats.rejected >= tol.max_steps {
            return Err(OracleError::StepBudgetExceeded {
                t,
                max_steps: tol.max_steps,
            });
        }
        if h <= 16.0 * f64::EPSILON * t.max(period) {
            return Err(OracleError::StepSizeUnderflow { t });
        }
        let h_try = h.min(tol.max_step).min(t_end - t);
        let mut k = [[0.0; 6]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for m in 0..6 {
                        ys[m] += h_try * a * kj[m];
                    }
                }
            }
            if s == 6 {
                // stage 7 evaluates at the fifth-order solution (FSAL)
                k[6] = f(t + h_try, &ys);
                let mut err2 = 0.0;
                for m in 0..6 {
                    let e: f64 = h_try * (0..7).map(|j| E[j] * k[j][m]).sum::<f64>();
                    let sc = tol.atol[m] + tol.rtol * y[m].abs().max(ys[m].abs());
                    err2 += (e / sc).powi(2);
                }
                let err = (err2 / 6.0).sqrt();
                if err <= 1.0 {
                    t += h_try;
                    y = ys;
                    k0 = k[6];
                    traj.stats.steps += 1;
                    if t >= record_from {
                        traj.push(t, &y, &k0);
                    }
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = h_try * grow;
                } else {
                    traj.stats.rejected += 1;
                    // NaN lands here too and shrinks the step until underflow
                    let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                    h = h_try * shrink;
                }
            } else {
                k[s] = f(t + C[s] * h_try, &ys);
            }
        }
    }
    if traj.times.is_empty() {
        traj.push(t, &y, &k0);
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemodulationResult {
    pub c1s_est: Complex64,
    /// Coefficient of e^{−iΩt}.
    pub c1_plus_est: Complex64,
    /// Coefficient of e^{+iΩt}.
    pub c1_minus_est: Complex64,
    /// rms fit residual divided by |c1_plus_est|.
    pub fit_residual_rms: f64,
    pub window_start: f64,
    pub periods: usize,
}

/// Least-squares projection of c₁(t) onto {1, e^{−iΩt}, e^{+iΩt}} over
/// `periods` whole beat periods starting at `t_start`.
pub fn demodulate(
    traj: &Trajectory,
    omega: f64,
    t_start: f64,
    periods: usize,
) -> Result<DemodulationResult, OracleError> {
    let beat = 2.0 * PI / omega.abs();
    let t_stop = t_start + periods as f64 * beat;
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(OracleError::WindowTooShort { periods }),
    };
    if periods < MIN_DEMOD_PERIODS || t_start < first || t_stop > last || !beat.is_finite() || traj.times.len() < 2 {
        return Err(OracleError::WindowTooShort { periods });
    }
    let n = periods * SAMPLES_PER_PERIOD;
    let mut hint = traj.times.partition_point(|&t| t < t_start).saturating_sub(1);
    let mut samples = Vec::with_capacity(n);
    let mut gram = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut rhs = [Complex64::new(0.0, 0.0); 3];
    for j in 0..n {
        let t = t_start + (t_stop - t_start) * (j as f64 / n as f64);
        let z = traj.c1_at(t, &mut hint);
        let e = Complex64::from_polar(1.0, -omega * t);
        let basis = [Complex64::new(1.0, 0.0), e, e.conj()];
        for a in 0..3 {
            for b in 0..3 {
                gram[a][b] += basis[a].conj() * basis[b];
            }
            rhs[a] += basis[a].conj() * z;
        }
        samples.push((basis, z));
    }
    let coef = linalg::solve(&gram, &rhs).map_err(|_| OracleError::DegenerateBasis)?.x;
    let ss: f64 = samples
        .iter()
        .map(|(b, z)| (z - (coef[0] * b[0] + coef[1] * b[1] + coef[2] * b[2])).norm_sqr())
        .sum();
    let rms = (ss / n as f64).sqrt();
    let result = DemodulationResult {
        c1s_est: coef[0],
        c1_plus_est: coef[1],
        c1_minus_est: coef[2],
        fit_residual_rms: rms / coef[1].norm(),
        window_start: t_start,
        periods,
    };
    if !(result.fit_residual_rms <= POOR_FIT_LIMIT) {
        return Err(OracleError::PoorFit {
            residual: result.fit_residual_rms,
            result: Box::new(result),
        });
    }
    Ok(result)
}

/// Durations are in units of the mechanical damping time 1/γ_φ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSettings {
    /// Relaxation from the empty cavity with the probe off.
    pub relax_damping_times: f64,
    /// Settling after the probe is switched on.
    pub settle_damping_times: f64,
    pub demod_periods: usize,
    /// Probe-on integration tolerance.
    pub rtol: f64,
    /// Tighter tolerance for the relaxation, whose transient starts far
    /// from the fixed point.
    pub relax_rtol: f64,
    /// Where relaxation starts; the empty cavity at rest when absent. With
    /// an effective cavity-2 detuning the implied bare detuning can admit
    /// several fixed points, and the empty cavity may relax onto another
    /// one than the reported steady state.
    pub initial: Option<MeanFieldState>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            relax_damping_times: 40.0,
            settle_damping_times: 20.0,
            demod_periods: 100,
            rtol: DEFAULT_RTOL,
            relax_rtol: 1e-12,
            initial: None,
        }
    }
}

/// Probe-off relaxation from `settings.initial`.
pub fn relax(params: &SystemParams, bare: &BareDetunings, settings: &OracleSettings) -> Result<MeanFieldState, OracleError> {
    let tol = Tolerances::for_params(params, 0.0, settings.relax_rtol);
    let t_end = settings.relax_damping_times / params.gamma_phi;
    Ok(integrate_mean_field(params, bare, None, settings.initial.unwrap_or_default(), t_end, t_end, &tol)?.final_state())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleTransmission {
    pub omega: f64,
    pub t: f64,
    pub demod: DemodulationResult,
    pub relaxed: MeanFieldState,
}

/// Relax, switch the probe on, settle, demodulate the last
/// `demod_periods` beat periods and form T from the fitted c₁₊.
pub fn transmission_oracle_with(
    params: &SystemParams,
    bare: &BareDetunings,
    omega: f64,
    eps_p: f64,
    settings: &OracleSettings,
) -> Result<OracleTransmission, OracleError> {
    let relaxed = relax(params, bare, settings)?;
    let probe = Probe { eps_p, omega };
    let tol = Tolerances::for_params(params, eps_p, settings.rtol);
    let beat = 2.0 * PI / omega.abs();
    let settle = settings.settle_damping_times / params.gamma_phi;
    let t_end = settle + settings.demod_periods as f64 * beat;
    let traj = integrate_mean_field(params, bare, Some(probe), relaxed, t_end, settle, &tol)?;
    let start = *traj.times.first().expect("recorded tail");
    let periods = (((traj.times.last().unwrap() - start) / beat).floor() as usize).min(settings.demod_periods);
    let demod = demodulate(&traj, omega, start, periods)?;
    Ok(OracleTransmission {
        omega,
        t: response::transmission(params, demod.c1_plus_est, eps_p),
        demod,
        relaxed,
    })
}

/// [`transmission_oracle_with`] at the configured probe amplitude and
/// default settings.
pub fn transmission_oracle(params: &SystemParams, bare: &BareDetunings, omega: f64) -> Result<f64, OracleError> {
    transmission_oracle_with(params, bare, omega, params.eps_p, &OracleSettings::default()).map(|r| r.t)
}
