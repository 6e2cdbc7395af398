//! Small dense complex solves by partial-pivot Gaussian elimination.

use num_complex::Complex64;

/// Outcome of [`solve`]: the solution plus diagnostics.
#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub x: [Complex64; N],
    /// |det| of the equilibrated matrix (unit max-norm rows and columns).
    pub scaled_det: f64,
    /// 1-norm condition number of the equilibrated matrix.
    pub condition: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Singular {
    pub scaled_det: f64,
}

/// Equilibrated-determinant threshold below which the system is declared
/// singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-30;
const PIVOT_FLOOR: f64 = 64.0 * f64::EPSILON;

struct Lu<const N: usize> {
    a: [[Complex64; N]; N],
    perm: [usize; N],
}

impl<const N: usize> Lu<N> {
    fn solve(&self, b: &[Complex64; N]) -> [Complex64; N] {
        let mut y = [Complex64::new(0.0, 0.0); N];
        for i in 0..N {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..N).rev() {
            let mut s = y[i];
            for j in i + 1..N {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s / self.a[i][i];
        }
        y
    }
}

/// Ruiz equilibration: alternately scale rows and columns until every
/// row and column has unit max-norm. Returns (row scales, column scales).
fn equilibrate<const N: usize>(m: &mut [[Complex64; N]; N]) -> Option<([f64; N], [f64; N])> {
    let mut rs = [1.0; N];
    let mut cs = [1.0; N];
    for _ in 0..20 {
        let mut worst: f64 = 0.0;
        let r: [f64; N] = std::array::from_fn(|i| m[i].iter().map(|z| z.norm()).fold(0.0, f64::max));
        let c: [f64; N] = std::array::from_fn(|j| (0..N).map(|i| m[i][j].norm()).fold(0.0, f64::max));
        if r.iter().chain(c.iter()).any(|&v| v == 0.0 || !v.is_finite()) {
            return None;
        }
        for i in 0..N {
            for j in 0..N {
                let f = 1.0 / (r[i].sqrt() * c[j].sqrt());
                m[i][j] *= f;
            }
            rs[i] /= r[i].sqrt();
            worst = worst.max((1.0 - r[i]).abs());
        }
        for j in 0..N {
            cs[j] /= c[j].sqrt();
            worst = worst.max((1.0 - c[j]).abs());
        }
        if worst < 1e-3 {
            break;
        }
    }
    Some((rs, cs))
}

/// Solves `a x = b`. The matrix is row- and column-equilibrated first so
/// that wildly different physical units per equation and per unknown do
/// not spoil pivoting or the singularity test.
pub fn solve<const N: usize>(
    a: &[[Complex64; N]; N],
    b: &[Complex64; N],
) -> Result<Solution<N>, Singular> {
    let mut m = *a;
    let (rs, cs) = equilibrate(&mut m).ok_or(Singular { scaled_det: 0.0 })?;
    let rhs: [Complex64; N] = std::array::from_fn(|i| b[i] * rs[i]);
    let scaled = m;

    let mut perm: [usize; N] = std::array::from_fn(|i| i);
    let mut det_abs = 1.0;
    for k in 0..N {
        let (p, pmax) = (k..N)
            .map(|i| (i, m[i][k].norm()))
            .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        // numerically zero pivot on an equilibrated matrix
        if pmax <= PIVOT_FLOOR {
            return Err(Singular { scaled_det: det_abs * pmax });
        }
        m.swap(k, p);
        perm.swap(k, p);
        det_abs *= pmax;
        for i in k + 1..N {
            let f = m[i][k] / m[k][k];
            m[i][k] = f;
            for j in k + 1..N {
                let t = m[k][j];
                m[i][j] -= f * t;
            }
        }
    }
    if det_abs < SINGULAR_THRESHOLD || !det_abs.is_finite() {
        return Err(Singular { scaled_det: det_abs });
    }
    let lu = Lu { a: m, perm };
    let y = lu.solve(&rhs);
    let x: [Complex64; N] = std::array::from_fn(|j| y[j] * cs[j]);

    // ‖A‖₁ ‖A⁻¹‖₁ on the equilibrated matrix
    let norm_a = (0..N)
        .map(|j| (0..N).map(|i| scaled[i][j].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut norm_inv: f64 = 0.0;
    for j in 0..N {
        let mut e = [Complex64::new(0.0, 0.0); N];
        e[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        norm_inv = norm_inv.max(col.iter().map(|z| z.norm()).sum());
    }
    Ok(Solution {
        x,
        scaled_det: det_abs,
        condition: norm_a * norm_inv,
    })
}
