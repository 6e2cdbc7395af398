//! Lab-style configuration and the derived physical constants of the
//! double rotational-cavity system.
//!
//! Everything here is SI. A [`SystemConfig`] is what a user writes down
//! (mirror geometry, finesse, powers, wavelengths, topological charges);
//! [`derive_params`] turns it into the rates and couplings the solvers use.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;

/// How the second cavity's detuning is pinned.
///
/// `Effective` fixes Δ₂ itself, so the bare detuning Δ_c2 is taken to track
/// the mirror displacement (Δ_c2 = Δ₂ + g₂φ_s). `Bare` fixes Δ_c2 and leaves
/// Δ₂ to the self-consistent solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Detuning2Spec {
    /// Effective detuning Δ₂ [rad/s].
    EffectiveRadS(f64),
    /// Bare detuning Δ_c2 [rad/s].
    BareRadS(f64),
}

impl Default for Detuning2Spec {
    fn default() -> Self {
        Detuning2Spec::EffectiveRadS(0.0)
    }
}

/// User-facing system description. Field names double as the canonical
/// configuration-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub mirror_radius_m: f64,
    pub mirror_mass_kg: f64,
    pub rotation_frequency_rad_s: f64,
    pub quality_factor: f64,
    pub cavity_length_m: f64,
    pub finesse1: f64,
    pub finesse2: f64,
    pub drive1_power_w: f64,
    pub drive2_power_w: f64,
    pub probe_power_w: f64,
    pub drive1_wavelength_m: f64,
    /// Defaults to the drive-1 wavelength when absent.
    pub drive2_wavelength_m: Option<f64>,
    pub bare_detuning1_rad_s: f64,
    pub detuning2: Detuning2Spec,
    pub charge1: i64,
    pub charge2: i64,
    /// Fraction of the cavity-1 amplitude decay rate that leaks through the
    /// port where the probe is detected. `1.0` is a lossless one-sided
    /// cavity; `0.5` is a critically coupled one.
    pub output_coupling_ratio: f64,
}

impl SystemConfig {
    /// Reference operating point: a 10 µm, 100 ng rotational mirror at
    /// 2π×10 MHz with Q = 2×10⁶, 5 mm cavities of finesse 5×10⁴ pumped at
    /// 1064 nm, cavity 1 red-detuned by ω_φ with 0.1 µW, cavity 2 dark and
    /// resonant, l₁ = 50, l₂ = 100.
    pub fn baseline() -> Self {
        let omega_phi = 2.0 * PI * 1.0e7;
        SystemConfig {
            mirror_radius_m: 10.0e-6,
            mirror_mass_kg: 100.0e-12,
            rotation_frequency_rad_s: omega_phi,
            quality_factor: 2.0e6,
            cavity_length_m: 5.0e-3,
            finesse1: 5.0e4,
            finesse2: 5.0e4,
            drive1_power_w: 0.1e-6,
            drive2_power_w: 0.0,
            probe_power_w: 1.0e-13,
            drive1_wavelength_m: 1064.0e-9,
            drive2_wavelength_m: None,
            bare_detuning1_rad_s: omega_phi,
            detuning2: Detuning2Spec::EffectiveRadS(0.0),
            charge1: 50,
            charge2: 100,
            output_coupling_ratio: 0.5,
        }
    }

    pub fn drive2_wavelength(&self) -> f64 {
        self.drive2_wavelength_m.unwrap_or(self.drive1_wavelength_m)
    }

    /// Stable hash of every physical input, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |name: &str, v: f64| {
            h.update(name.as_bytes());
            h.update(b"=");
            h.update(v.to_bits().to_be_bytes());
            h.update(b";");
        };
        put("mirror_radius_m", self.mirror_radius_m);
        put("mirror_mass_kg", self.mirror_mass_kg);
        put("rotation_frequency_rad_s", self.rotation_frequency_rad_s);
        put("quality_factor", self.quality_factor);
        put("cavity_length_m", self.cavity_length_m);
        put("finesse1", self.finesse1);
        put("finesse2", self.finesse2);
        put("drive1_power_w", self.drive1_power_w);
        put("drive2_power_w", self.drive2_power_w);
        put("probe_power_w", self.probe_power_w);
        put("drive1_wavelength_m", self.drive1_wavelength_m);
        put("drive2_wavelength_m", self.drive2_wavelength());
        put("bare_detuning1_rad_s", self.bare_detuning1_rad_s);
        match self.detuning2 {
            Detuning2Spec::EffectiveRadS(v) => put("detuning2.effective_rad_s", v),
            Detuning2Spec::BareRadS(v) => put("detuning2.bare_rad_s", v),
        }
        put("charge1", self.charge1 as f64);
        put("charge2", self.charge2 as f64);
        put("output_coupling_ratio", self.output_coupling_ratio);
        put("c", SPEED_OF_LIGHT);
        put("hbar", HBAR);
        hex::encode(&h.finalize()[..16])
    }

    /// Fingerprint with `charge1` normalised away. A calibration curve is
    /// valid for any device that shares everything except the measured charge.
    pub fn template_fingerprint(&self) -> String {
        let mut c = self.clone();
        c.charge1 = 0;
        c.fingerprint()
    }
}

/// One broken invariant of a [`SystemConfig`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("configuration does not parse: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks every invariant and reports each failure by field name.
pub fn validate(config: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let positive = [
        ("mirror_radius_m", config.mirror_radius_m),
        ("mirror_mass_kg", config.mirror_mass_kg),
        ("rotation_frequency_rad_s", config.rotation_frequency_rad_s),
        ("quality_factor", config.quality_factor),
        ("cavity_length_m", config.cavity_length_m),
        ("finesse1", config.finesse1),
        ("finesse2", config.finesse2),
        ("drive1_wavelength_m", config.drive1_wavelength_m),
        ("drive2_wavelength_m", config.drive2_wavelength()),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            out.push(Violation::new(name, format!("must be finite and > 0, got {v}")));
        }
    }
    let non_negative = [
        ("drive1_power_w", config.drive1_power_w),
        ("drive2_power_w", config.drive2_power_w),
        ("probe_power_w", config.probe_power_w),
    ];
    for (name, v) in non_negative {
        if !(v.is_finite() && v >= 0.0) {
            out.push(Violation::new(name, format!("must be finite and >= 0, got {v}")));
        }
    }
    if !config.bare_detuning1_rad_s.is_finite() {
        out.push(Violation::new("bare_detuning1_rad_s", "must be finite"));
    }
    let d2 = match config.detuning2 {
        Detuning2Spec::EffectiveRadS(v) | Detuning2Spec::BareRadS(v) => v,
    };
    if !d2.is_finite() {
        out.push(Violation::new("detuning2", "must be finite"));
    }
    let eta = config.output_coupling_ratio;
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        out.push(Violation::new(
            "output_coupling_ratio",
            format!("must lie in (0, 1], got {eta}"),
        ));
    }
    out
}

/// On-disk form: every key required except the few with documented
/// defaults; charges are read as numbers so that non-integers can be
/// reported as violations rather than opaque parse errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mirror_radius_m: f64,
    mirror_mass_kg: f64,
    rotation_frequency_rad_s: f64,
    quality_factor: f64,
    cavity_length_m: f64,
    finesse1: f64,
    finesse2: f64,
    drive1_power_w: f64,
    drive2_power_w: f64,
    probe_power_w: f64,
    drive1_wavelength_m: f64,
    #[serde(default)]
    drive2_wavelength_m: Option<f64>,
    bare_detuning1_rad_s: f64,
    #[serde(default)]
    detuning2: Detuning2Spec,
    charge1: f64,
    charge2: f64,
    #[serde(default = "default_coupling_ratio")]
    output_coupling_ratio: f64,
}

fn default_coupling_ratio() -> f64 {
    0.5
}

fn integral_charge(name: &str, v: f64, out: &mut Vec<Violation>) -> i64 {
    if v.is_finite() && v.fract() == 0.0 && v.abs() <= 1.0e15 {
        v as i64
    } else {
        out.push(Violation::new(
            name,
            format!("topological charge must be an integer, got {v}"),
        ));
        0
    }
}

/// Parses a JSON configuration document and validates it.
pub fn parse_config(text: &str) -> Result<SystemConfig, ConfigError> {
    let raw: ConfigFile =
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut violations = Vec::new();
    let charge1 = integral_charge("charge1", raw.charge1, &mut violations);
    let charge2 = integral_charge("charge2", raw.charge2, &mut violations);
    let config = SystemConfig {
        mirror_radius_m: raw.mirror_radius_m,
        mirror_mass_kg: raw.mirror_mass_kg,
        rotation_frequency_rad_s: raw.rotation_frequency_rad_s,
        quality_factor: raw.quality_factor,
        cavity_length_m: raw.cavity_length_m,
        finesse1: raw.finesse1,
        finesse2: raw.finesse2,
        drive1_power_w: raw.drive1_power_w,
        drive2_power_w: raw.drive2_power_w,
        probe_power_w: raw.probe_power_w,
        drive1_wavelength_m: raw.drive1_wavelength_m,
        drive2_wavelength_m: raw.drive2_wavelength_m,
        bare_detuning1_rad_s: raw.bare_detuning1_rad_s,
        detuning2: raw.detuning2,
        charge1,
        charge2,
        output_coupling_ratio: raw.output_coupling_ratio,
    };
    violations.extend(validate(&config));
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Derived rates and couplings consumed by the solvers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    /// Amplitude decay rates κ₁, κ₂ [rad/s].
    pub kappa1: f64,
    pub kappa2: f64,
    /// Optorotational couplings g = c·l/L [rad/s per rad].
    pub g1: f64,
    pub g2: f64,
    /// Mirror moment of inertia [kg m²].
    pub inertia: f64,
    /// Mechanical damping γ_φ [rad/s].
    pub gamma_phi: f64,
    /// Mechanical angular frequency ω_φ [rad/s].
    pub omega_phi: f64,
    /// Drive and probe amplitudes [√photons / s].
    pub eps1: f64,
    pub eps2: f64,
    pub eps_p: f64,
    /// Optical carrier frequencies [rad/s].
    pub omega1: f64,
    pub omega2: f64,
    pub delta_c1: f64,
    pub detuning2: Detuning2Spec,
    pub output_coupling_ratio: f64,
    pub hbar: f64,
    pub c: f64,
    pub config: SystemConfig,
}

impl SystemParams {
    /// ħ/(I ω_φ²): static angular displacement per unit of g·N.
    pub fn static_compliance(&self) -> f64 {
        self.hbar / (self.inertia * self.omega_phi * self.omega_phi)
    }

    pub fn fingerprint(&self) -> String {
        self.config.fingerprint()
    }
}

/// εₓ = √(2κPₓ/(ħωₓ)).
pub fn drive_amplitude(kappa: f64, power: f64, omega: f64) -> f64 {
    (2.0 * kappa * power / (HBAR * omega)).sqrt()
}

/// κ = πc/(2LF).
pub fn decay_rate(cavity_length: f64, finesse: f64) -> f64 {
    PI * SPEED_OF_LIGHT / (2.0 * cavity_length * finesse)
}

pub fn derive_params(config: &SystemConfig) -> Result<SystemParams, ConfigError> {
    let violations = validate(config);
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations));
    }
    let c = SPEED_OF_LIGHT;
    let len = config.cavity_length_m;
    let kappa1 = decay_rate(len, config.finesse1);
    let kappa2 = decay_rate(len, config.finesse2);
    let omega1 = 2.0 * PI * c / config.drive1_wavelength_m;
    let omega2 = 2.0 * PI * c / config.drive2_wavelength();
    Ok(SystemParams {
        kappa1,
        kappa2,
        g1: c * config.charge1 as f64 / len,
        g2: c * config.charge2 as f64 / len,
        inertia: config.mirror_mass_kg * config.mirror_radius_m * config.mirror_radius_m / 2.0,
        gamma_phi: config.rotation_frequency_rad_s / config.quality_factor,
        omega_phi: config.rotation_frequency_rad_s,
        eps1: drive_amplitude(kappa1, config.drive1_power_w, omega1),
        eps2: drive_amplitude(kappa2, config.drive2_power_w, omega2),
        // probe carrier taken at ω₁; Ω/ω₁ is ~1e-7 here
        eps_p: drive_amplitude(kappa1, config.probe_power_w, omega1),
        omega1,
        omega2,
        delta_c1: config.bare_detuning1_rad_s,
        detuning2: config.detuning2,
        output_coupling_ratio: config.output_coupling_ratio,
        hbar: HBAR,
        c,
        config: config.clone(),
    })
}
