//! Self-consistent static state of the mirror and both cavity fields.
//!
//! The static angle φ_s solves the scalar fixed point
//!
//! ```text
//! φ = ħ(−g₁N₁(φ) + g₂N₂(φ)) / (I ω_φ²)
//! ```
//!
//! where Nᵢ(φ) are the Lorentzian intracavity photon numbers at the
//! φ-shifted detunings. Everything else (c₁s, c₂s, Δ₁, Δ₂) follows in
//! closed form once φ_s is known. Roots are bracketed on a grid fine enough
//! to resolve the narrowest Lorentzian, so coexisting (bistable) solutions
//! are all reported.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::params::{Detuning2Spec, SystemParams};

/// Lower bound on the angle scale used in relative tolerances [rad].
pub const PHI_FLOOR: f64 = 1e-18;
/// Relative tolerance on |residual| for an accepted root.
pub const ROOT_RTOL: f64 = 1e-6;
const CONTINUATION_STEPS: usize = 16;
const CONTINUATION_DECADES: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTag {
    Selected,
    Alternative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    /// Static mirror angle [rad].
    pub phi_s: f64,
    /// Static angular momentum; identically zero.
    pub l_zs: f64,
    pub c1s: Complex64,
    pub c2s: Complex64,
    /// Effective detunings [rad/s].
    pub delta1: f64,
    pub delta2: f64,
    /// Bare cavity-2 detuning consistent with this root [rad/s].
    pub bare_delta_c2: f64,
    pub n1: f64,
    pub n2: f64,
    /// Fixed-point defect at φ_s [rad].
    pub residual: f64,
    /// d(residual)/dφ at φ_s; positive on a statically stable branch.
    pub residual_slope: f64,
    pub branch: BranchTag,
}

impl SteadyState {
    /// (Δ₁ − ω_φ)/ω_φ
    pub fn normalized_delta1(&self, params: &SystemParams) -> f64 {
        (self.delta1 - params.omega_phi) / params.omega_phi
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadySolveReport {
    /// Index into `all_roots`.
    pub selected: usize,
    /// Sorted by φ_s.
    pub all_roots: Vec<SteadyState>,
    pub multistable: bool,
    /// Total bisection iterations of the final solve.
    pub iterations: usize,
    pub brackets: usize,
    pub grid_points: usize,
    pub scan_window: (f64, f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error("no steady state found in scan window [{lo:e}, {hi:e}] rad")]
    NoConvergence { lo: f64, hi: f64 },
    #[error("{count} coexisting steady states; choose a branch explicitly")]
    Multistable { count: usize },
    #[error("branch {index} requested but only {count} roots exist")]
    BranchOutOfRange { index: usize, count: usize },
}

impl SteadySolveReport {
    pub fn selected_state(&self) -> &SteadyState {
        &self.all_roots[self.selected]
    }

    /// The branch to run spectra on. Multistable reports need an explicit
    /// index into `all_roots`.
    pub fn resolve(&self, branch: Option<usize>) -> Result<SteadyState, SteadyError> {
        match branch {
            Some(index) => self
                .all_roots
                .get(index)
                .cloned()
                .ok_or(SteadyError::BranchOutOfRange {
                    index,
                    count: self.all_roots.len(),
                }),
            None if self.multistable => Err(SteadyError::Multistable {
                count: self.all_roots.len(),
            }),
            None => Ok(self.selected_state().clone()),
        }
    }
}

/// The scalar fixed-point problem with drive powers scaled by `power_scale`.
#[derive(Clone, Copy, Debug)]
struct FixedPoint {
    compliance: f64,
    g1: f64,
    g2: f64,
    kappa1: f64,
    kappa2: f64,
    eps1_sq: f64,
    eps2_sq: f64,
    delta_c1: f64,
    detuning2: Detuning2Spec,
}

impl FixedPoint {
    fn new(p: &SystemParams, power_scale: f64) -> Self {
        FixedPoint {
            compliance: p.static_compliance(),
            g1: p.g1,
            g2: p.g2,
            kappa1: p.kappa1,
            kappa2: p.kappa2,
            eps1_sq: p.eps1 * p.eps1 * power_scale,
            eps2_sq: p.eps2 * p.eps2 * power_scale,
            delta_c1: p.delta_c1,
            detuning2: p.detuning2,
        }
    }

    fn delta1(&self, phi: f64) -> f64 {
        self.delta_c1 + self.g1 * phi
    }

    fn delta2(&self, phi: f64) -> f64 {
        match self.detuning2 {
            Detuning2Spec::EffectiveRadS(d) => d,
            Detuning2Spec::BareRadS(d) => d - self.g2 * phi,
        }
    }

    fn n1(&self, phi: f64) -> f64 {
        let d = self.delta1(phi);
        self.eps1_sq / (self.kappa1 * self.kappa1 + d * d)
    }

    fn n2(&self, phi: f64) -> f64 {
        let d = self.delta2(phi);
        self.eps2_sq / (self.kappa2 * self.kappa2 + d * d)
    }

    fn residual(&self, phi: f64) -> f64 {
        phi - self.compliance * (-self.g1 * self.n1(phi) + self.g2 * self.n2(phi))
    }

    fn slope(&self, phi: f64) -> f64 {
        let d1 = self.delta1(phi);
        let den1 = self.kappa1 * self.kappa1 + d1 * d1;
        let dn1 = -2.0 * self.eps1_sq * d1 * self.g1 / (den1 * den1);
        let dn2 = match self.detuning2 {
            Detuning2Spec::EffectiveRadS(_) => 0.0,
            Detuning2Spec::BareRadS(_) => {
                let d2 = self.delta2(phi);
                let den2 = self.kappa2 * self.kappa2 + d2 * d2;
                2.0 * self.eps2_sq * d2 * self.g2 / (den2 * den2)
            }
        };
        1.0 - self.compliance * (-self.g1 * dn1 + self.g2 * dn2)
    }

    /// Every root lies within a quarter of this bound.
    fn phi_max(&self) -> f64 {
        let n1_max = self.eps1_sq / (self.kappa1 * self.kappa1);
        let n2_max = self.eps2_sq / (self.kappa2 * self.kappa2);
        4.0 * self.compliance * (self.g1.abs() * n1_max + self.g2.abs() * n2_max)
    }

    fn grid_points(&self, phi_max: f64) -> usize {
        let mut width = f64::INFINITY;
        if self.g1 != 0.0 && self.eps1_sq > 0.0 {
            width = width.min(self.kappa1 / self.g1.abs());
        }
        if matches!(self.detuning2, Detuning2Spec::BareRadS(_))
            && self.g2 != 0.0
            && self.eps2_sq > 0.0
        {
            width = width.min(self.kappa2 / self.g2.abs());
        }
        let n = (2.0 * phi_max / (width / 8.0)).ceil();
        if n.is_finite() {
            (n as usize).clamp(2000, 4_000_000)
        } else {
            2000
        }
    }

    fn tolerance(phi: f64) -> f64 {
        ROOT_RTOL * phi.abs().max(PHI_FLOOR)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, mut f_lo: f64, iterations: &mut usize) -> f64 {
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-14 * mid.abs().max(PHI_FLOOR) || mid == lo || mid == hi {
                break;
            }
            *iterations += 1;
            let f_mid = self.residual(mid);
            if f_mid == 0.0 {
                return mid;
            }
            if (f_mid < 0.0) == (f_lo < 0.0) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        let phi = 0.5 * (lo + hi);
        // one Newton step, kept only if it stays bracketed and helps
        let f = self.residual(phi);
        let s = self.slope(phi);
        if s != 0.0 && s.is_finite() {
            let polished = phi - f / s;
            if polished >= lo && polished <= hi && self.residual(polished).abs() <= f.abs() {
                return polished;
            }
        }
        phi
    }

    fn roots(&self) -> ScanResult {
        let phi_max = self.phi_max();
        if !(phi_max > 0.0) || !phi_max.is_finite() {
            return ScanResult {
                roots: vec![0.0],
                iterations: 0,
                brackets: 1,
                grid_points: 1,
                window: (0.0, 0.0),
            };
        }
        let n = self.grid_points(phi_max);
        // symmetric construction keeps mirror-image problems bit-exact
        let grid: Vec<f64> = (0..=n)
            .map(|i| phi_max * ((2 * i) as f64 - n as f64) / n as f64)
            .collect();
        let values: Vec<f64> = grid.iter().map(|&p| self.residual(p)).collect();
        let mut roots = Vec::new();
        let mut iterations = 0;
        let mut brackets = 0;
        for i in 0..n {
            let (fa, fb) = (values[i], values[i + 1]);
            if fa == 0.0 {
                brackets += 1;
                roots.push(grid[i]);
            } else if fb != 0.0 && (fa < 0.0) != (fb < 0.0) {
                brackets += 1;
                roots.push(self.bisect(grid[i], grid[i + 1], fa, &mut iterations));
            }
        }
        if values[n] == 0.0 {
            brackets += 1;
            roots.push(grid[n]);
        }
        roots.retain(|&r| self.residual(r).abs() <= Self::tolerance(r));
        ScanResult {
            roots,
            iterations,
            brackets,
            grid_points: n + 1,
            window: (-phi_max, phi_max),
        }
    }
}

struct ScanResult {
    roots: Vec<f64>,
    iterations: usize,
    brackets: usize,
    grid_points: usize,
    window: (f64, f64),
}

fn nearest(roots: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, r) in roots.iter().enumerate() {
        if (r - target).abs() < (roots[best] - target).abs() {
            best = i;
        }
    }
    best
}

/// φ − ħ(−g₁N₁(φ) + g₂N₂(φ))/(Iω_φ²)
pub fn steady_residual(phi: f64, params: &SystemParams) -> f64 {
    FixedPoint::new(params, 1.0).residual(phi)
}

/// (Δ₁, Δ₂) at mirror angle `phi_s`. With an effective Δ₂ specification the
/// bare detuning tracks the mirror, so Δ₂ is returned unchanged.
pub fn effective_detunings(phi_s: f64, params: &SystemParams) -> (f64, f64) {
    let fp = FixedPoint::new(params, 1.0);
    (fp.delta1(phi_s), fp.delta2(phi_s))
}

fn build_state(params: &SystemParams, fp: &FixedPoint, phi: f64, branch: BranchTag) -> SteadyState {
    let (delta1, delta2) = (fp.delta1(phi), fp.delta2(phi));
    let c1s = Complex64::new(params.eps1, 0.0) / Complex64::new(params.kappa1, delta1);
    let c2s = Complex64::new(params.eps2, 0.0) / Complex64::new(params.kappa2, delta2);
    SteadyState {
        phi_s: phi,
        l_zs: 0.0,
        c1s,
        c2s,
        delta1,
        delta2,
        bare_delta_c2: delta2 + params.g2 * phi,
        n1: c1s.norm_sqr(),
        n2: c2s.norm_sqr(),
        residual: fp.residual(phi),
        residual_slope: fp.slope(phi),
        branch,
    }
}

/// Finds every steady state and picks the one continuously connected to
/// the undriven mirror by ramping both drive powers up geometrically.
pub fn solve_steady(params: &SystemParams) -> Result<SteadySolveReport, SteadyError> {
    let full = FixedPoint::new(params, 1.0);
    let scan = full.roots();
    if scan.roots.is_empty() {
        return Err(SteadyError::NoConvergence {
            lo: scan.window.0,
            hi: scan.window.1,
        });
    }

    let selected_phi = if scan.roots.len() == 1 {
        scan.roots[0]
    } else {
        let mut tracked = 0.0;
        for k in 1..CONTINUATION_STEPS {
            let scale =
                10f64.powf(-CONTINUATION_DECADES * (CONTINUATION_STEPS - k) as f64 / (CONTINUATION_STEPS - 1) as f64);
            let step = FixedPoint::new(params, scale).roots();
            if !step.roots.is_empty() {
                tracked = step.roots[nearest(&step.roots, tracked)];
            }
        }
        scan.roots[nearest(&scan.roots, tracked)]
    };

    let mut roots = scan.roots.clone();
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup();
    let selected = roots.iter().position(|&r| r == selected_phi).unwrap_or(0);
    let all_roots: Vec<SteadyState> = roots
        .iter()
        .enumerate()
        .map(|(i, &phi)| {
            let tag = if i == selected {
                BranchTag::Selected
            } else {
                BranchTag::Alternative
            };
            build_state(params, &full, phi, tag)
        })
        .collect();
    Ok(SteadySolveReport {
        selected,
        multistable: all_roots.len() > 1,
        all_roots,
        iterations: scan.iterations,
        brackets: scan.brackets,
        grid_points: scan.grid_points,
        scan_window: scan.window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, SystemConfig};

    fn params(f: impl FnOnce(&mut SystemConfig)) -> SystemParams {
        let mut c = SystemConfig::baseline();
        f(&mut c);
        derive_params(&c).unwrap()
    }

    #[test]
    fn undriven_cavity_sits_at_origin() {
        let p = params(|c| {
            c.drive1_power_w = 0.0;
            c.drive2_power_w = 0.0;
        });
        let r = solve_steady(&p).unwrap();
        assert_eq!(r.all_roots.len(), 1);
        let s = r.selected_state();
        assert_eq!(s.phi_s, 0.0);
        assert_eq!(s.c1s, Complex64::new(0.0, 0.0));
        assert_eq!(s.c2s, Complex64::new(0.0, 0.0));
        assert_eq!(s.delta1, p.delta_c1);
        assert_eq!(steady_residual(0.0, &p), 0.0);
    }

    #[test]
    fn decoupled_cavity_one() {
        let p = params(|c| {
            c.charge1 = 0;
            c.drive1_power_w = 1e-3;
            c.drive2_power_w = 0.05;
        });
        let s = solve_steady(&p).unwrap().selected_state().clone();
        let n2 = p.eps2 * p.eps2 / (p.kappa2 * p.kappa2);
        let phi = p.static_compliance() * p.g2 * n2;
        assert!(((s.phi_s - phi) / phi).abs() < 1e-12);
        assert_eq!(s.delta1, p.delta_c1);
        assert!(((s.n2 - n2) / n2).abs() < 1e-14);
    }

    #[test]
    fn roots_satisfy_closed_forms() {
        let p = params(|c| {
            c.drive1_power_w = 0.1;
            c.drive2_power_w = 0.1;
        });
        let r = solve_steady(&p).unwrap();
        for s in &r.all_roots {
            assert!(s.residual.abs() <= ROOT_RTOL * s.phi_s.abs().max(PHI_FLOOR));
            let c1 = Complex64::new(p.eps1, 0.0) / Complex64::new(p.kappa1, s.delta1);
            assert_eq!(c1, s.c1s);
            assert_eq!(s.l_zs, 0.0);
        }
    }

    #[test]
    fn sign_of_shift_follows_charge_product() {
        for (l1, l2) in [(50, 100), (-50, 100), (50, -100), (-50, -100)] {
            let dark = params(|c| {
                c.charge1 = l1;
                c.charge2 = l2;
            });
            let lit = params(|c| {
                c.charge1 = l1;
                c.charge2 = l2;
                c.drive2_power_w = 0.1;
            });
            let d0 = solve_steady(&dark).unwrap().selected_state().delta1;
            let d1 = solve_steady(&lit).unwrap().selected_state().delta1;
            assert_eq!((d1 - d0).signum(), ((l1 * l2) as f64).signum());
        }
    }

    #[test]
    fn detuning_decomposition_holds_at_root() {
        let p = params(|c| {
            c.drive1_power_w = 0.1;
            c.drive2_power_w = 0.1;
        });
        let s = solve_steady(&p).unwrap().selected_state().clone();
        let k = p.static_compliance();
        let kerr = p.delta_c1 - p.g1 * p.g1 * k * s.n1;
        let cross = p.g1 * p.g2 * k * s.n2;
        let err = (s.delta1 - (kerr + cross)).abs();
        assert!(err <= 1e-6 * s.delta1.abs(), "err {err}");
    }

    #[test]
    fn flipping_charge_flips_cross_term() {
        let plus = params(|c| c.drive2_power_w = 0.1);
        let minus = params(|c| {
            c.drive2_power_w = 0.1;
            c.charge1 = -50;
        });
        let k = plus.static_compliance();
        let sp = solve_steady(&plus).unwrap().selected_state().clone();
        let sm = solve_steady(&minus).unwrap().selected_state().clone();
        // Δ₂ = 0 effective: N₂ identical on both branches
        assert_eq!(sp.n2, sm.n2);
        let a = |s: &SteadyState, g1: f64| s.delta1 - (plus.delta_c1 - g1 * g1 * k * s.n1);
        let xp = a(&sp, plus.g1);
        let xm = a(&sm, minus.g1);
        assert!(((xp + xm) / xp).abs() < 1e-6, "{xp} {xm}");
    }

    #[test]
    fn single_cavity_is_sign_blind() {
        let plus = params(|c| c.drive1_power_w = 0.1);
        let minus = params(|c| {
            c.drive1_power_w = 0.1;
            c.charge1 = -50;
        });
        let sp = solve_steady(&plus).unwrap().selected_state().clone();
        let sm = solve_steady(&minus).unwrap().selected_state().clone();
        assert_eq!(sp.delta1, sm.delta1);
        assert_eq!(sp.phi_s, -sm.phi_s);
        let k = plus.static_compliance();
        let expect = plus.delta_c1 - plus.g1 * plus.g1 * k * sp.n1;
        assert!(((sp.delta1 - expect) / expect).abs() < 1e-12);
    }

    #[test]
    fn residual_monotone_on_default_window() {
        let p = params(|c| c.drive2_power_w = 0.25);
        let r = solve_steady(&p).unwrap();
        let (lo, hi) = r.scan_window;
        let mut prev = steady_residual(lo, &p);
        for i in 1..=5000 {
            let phi = lo + (hi - lo) * i as f64 / 5000.0;
            let v = steady_residual(phi, &p);
            assert!(v > prev);
            prev = v;
        }
        assert!(!r.multistable);
    }

    #[test]
    fn effective_detunings_at_zero_angle() {
        let p = params(|c| c.detuning2 = Detuning2Spec::BareRadS(3.0e5));
        assert_eq!(effective_detunings(0.0, &p), (p.delta_c1, 3.0e5));
    }

    #[test]
    fn bare_kerr_cavity_reports_bistability() {
        // cavity 2 driven hard on the side of a Kerr-tilted resonance
        let p = params(|c| {
            c.drive1_power_w = 0.0;
            c.drive2_power_w = 1e-2;
            c.detuning2 = Detuning2Spec::BareRadS(6.0e6);
        });
        let r = solve_steady(&p).unwrap();
        assert!(r.multistable, "roots: {}", r.all_roots.len());
        assert_eq!(r.all_roots.len(), 3);
        assert!(r.all_roots.windows(2).all(|w| w[0].phi_s < w[1].phi_s));
        assert!(matches!(r.resolve(None), Err(SteadyError::Multistable { count: 3 })));
        // weak-drive continuation starts far from the cavity-2 resonance
        assert_eq!(r.selected, 0);
        assert_eq!(r.selected_state().branch, BranchTag::Selected);
        assert!(r.resolve(Some(2)).is_ok());
        assert!(r.resolve(Some(3)).is_err());
        // middle root is the statically unstable one
        assert!(r.all_roots[1].residual_slope < 0.0);
    }
}
