//! First-order response to the weak probe.
//!
//! Fluctuations around the steady state are expanded as
//! `δO = O₊ e^{−iΩt} + O₋ e^{+iΩt}`; products of two fluctuations are
//! dropped, and the e^{∓iΩt} coefficients give a linear system in
//! (c₁₊, c₁₋*, c₂₊, c₂₋*, φ₊, φ₋*). The mirror angle is real, so φ₋* = φ₊
//! must come out of the solve; it is kept as its own unknown so that this
//! can be checked rather than assumed.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::params::SystemParams;
use crate::steady_state::SteadyState;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum ResponseError {
    #[error("sideband system singular at Ω = {omega:e} rad/s (scaled det {scaled_det:e})")]
    SingularSystem { omega: f64, scaled_det: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResponse {
    pub omega: f64,
    pub c1_plus: Complex64,
    pub c1_minus_conj: Complex64,
    pub c2_plus: Complex64,
    pub c2_minus_conj: Complex64,
    pub phi_plus: Complex64,
    pub phi_minus_conj: Complex64,
    pub condition_estimate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TransmissionPoint {
    /// Probe-drive detuning Ω [rad/s].
    pub omega: f64,
    /// (Ω − ω_φ)/ω_φ
    pub x: f64,
    pub t: f64,
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

/// Solves the linearised sideband equations at probe detuning `omega`,
/// driven by the probe amplitude `eps_p`.
pub fn sideband_response_with_drive(
    params: &SystemParams,
    steady: &SteadyState,
    omega: f64,
    eps_p: f64,
) -> Result<ProbeResponse, ResponseError> {
    let p = params;
    let zero = re(0.0);
    let (c1s, c2s) = (steady.c1s, steady.c2s);
    let (d1, d2) = (steady.delta1, steady.delta2);
    let mech = re(p.omega_phi * p.omega_phi - omega * omega) - I * (p.gamma_phi * omega);
    let k1 = p.hbar * p.g1 / p.inertia;
    let k2 = p.hbar * p.g2 / p.inertia;

    // unknowns: c1+, c1-*, c2+, c2-*, φ+, φ-*
    let a = [
        [Complex64::new(p.kappa1, d1 - omega), zero, zero, zero, I * p.g1 * c1s, zero],
        [zero, Complex64::new(p.kappa1, -(d1 + omega)), zero, zero, zero, -I * p.g1 * c1s.conj()],
        [zero, zero, Complex64::new(p.kappa2, d2 - omega), zero, -I * p.g2 * c2s, zero],
        [zero, zero, zero, Complex64::new(p.kappa2, -(d2 + omega)), zero, I * p.g2 * c2s.conj()],
        [k1 * c1s.conj(), k1 * c1s, -k2 * c2s.conj(), -k2 * c2s, mech, zero],
        [k1 * c1s.conj(), k1 * c1s, -k2 * c2s.conj(), -k2 * c2s, zero, mech],
    ];
    let b = [re(eps_p), zero, zero, zero, zero, zero];
    let sol = linalg::solve(&a, &b).map_err(|s| ResponseError::SingularSystem {
        omega,
        scaled_det: s.scaled_det,
    })?;
    let x = sol.x;
    Ok(ProbeResponse {
        omega,
        c1_plus: x[0],
        c1_minus_conj: x[1],
        c2_plus: x[2],
        c2_minus_conj: x[3],
        phi_plus: x[4],
        phi_minus_conj: x[5],
        condition_estimate: sol.condition,
    })
}

/// [`sideband_response_with_drive`] at the configured probe amplitude.
pub fn sideband_response(
    params: &SystemParams,
    steady: &SteadyState,
    omega: f64,
) -> Result<ProbeResponse, ResponseError> {
    sideband_response_with_drive(params, steady, omega, params.eps_p)
}

/// Closed-form c₁₊ with N₁ = |c₁s|², N₂ = |c₂s|² and I the moment of
/// inertia. Algebraically identical to eliminating the linear system by
/// hand; kept as an independent cross-check of [`sideband_response`].
pub fn closed_form_c1p(
    params: &SystemParams,
    steady: &SteadyState,
    omega: f64,
) -> Result<Complex64, ResponseError> {
    let p = params;
    let (d1, d2) = (steady.delta1, steady.delta2);
    let (n1, n2) = (steady.c1s.norm_sqr(), steady.c2s.norm_sqr());
    let hb = p.hbar;
    let inertia = p.inertia;
    let singular = ResponseError::SingularSystem {
        omega,
        scaled_det: 0.0,
    };

    let mech = Complex64::new(omega * omega - p.omega_phi * p.omega_phi, p.gamma_phi * omega);
    let lorentz1 = re(d1 * d1) + (Complex64::new(p.kappa1, -omega)).powi(2);
    let lorentz2 = re(d2 * d2) + (Complex64::new(p.kappa2, -omega)).powi(2);
    if lorentz2 == re(0.0) {
        return Err(singular);
    }
    let upper = Complex64::new(d1 + omega, p.kappa1);
    let d_1 = upper / lorentz2;
    let d_2 = upper * mech;
    let d_3 = lorentz1 / lorentz2;
    let d_4 = lorentz1 * mech;

    let cross = 2.0 * n2 * d2 * p.g2 * p.g2 * hb;
    let num = re(n1 * p.g1 * p.g1 * hb) + cross * d_1 + inertia * d_2;
    let den = re(2.0 * n1 * d1 * p.g1 * p.g1 * hb) + cross * d_3 + inertia * d_4;
    if den == re(0.0) || !den.is_finite() {
        return Err(singular);
    }
    Ok(-I * p.eps_p * num / den)
}

/// T = |1 − 2ηκ₁c₁₊/ε_p|², η being the output-coupling ratio of cavity 1.
pub fn transmission(params: &SystemParams, c1_plus: Complex64, eps_p: f64) -> f64 {
    let r = re(1.0) - 2.0 * params.output_coupling_ratio * params.kappa1 * c1_plus / eps_p;
    r.norm_sqr()
}

/// Probe transmission at detuning `omega`. T does not depend on the probe
/// amplitude in the linear regime, so a unit drive stands in when the
/// configured probe power is zero.
pub fn probe_transmission(
    params: &SystemParams,
    steady: &SteadyState,
    omega: f64,
) -> Result<TransmissionPoint, ResponseError> {
    let drive = if params.eps_p > 0.0 { params.eps_p } else { 1.0 };
    let r = sideband_response_with_drive(params, steady, omega, drive)?;
    Ok(TransmissionPoint {
        omega,
        x: (omega - params.omega_phi) / params.omega_phi,
        t: transmission(params, r.c1_plus, drive),
    })
}

/// Transmission at normalised detuning x = (Ω − ω_φ)/ω_φ.
pub fn transmission_at_x(
    params: &SystemParams,
    steady: &SteadyState,
    x: f64,
) -> Result<f64, ResponseError> {
    let omega = params.omega_phi * (1.0 + x);
    probe_transmission(params, steady, omega).map(|p| p.t)
}
