//! Matrix-free GMRES.
//!
//! The discretized integral operators here are real-linear but not
//! complex-linear (they conjugate part of their argument), so Krylov
//! iteration runs over the isomorphic real vector space: a complex system
//! of dimension `N` becomes a real system of dimension `2N`. GMRES is run
//! without restart, with modified Gram-Schmidt plus one reorthogonalization
//! pass, which is needed to reach residuals near 1e-14 reliably.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A linear map on real vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// A real-linear (possibly conjugate-linear) map on complex vectors.
pub trait RealLinearMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>>;
}

/// GMRES controls. Defaults: tolerance `1e-14`, at most 100 iterations,
/// no restart.
#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            tol: 1e-14,
            max_iters: 100,
        }
    }
}

/// Outcome of a real GMRES solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Outcome of a complex (real-linear) GMRES solve.
#[derive(Debug, Clone)]
pub struct ComplexSolveReport {
    pub solution: Vec<Complex64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl ComplexSolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `op(x) = rhs` by full-memory GMRES.
pub fn gmres(op: &dyn LinearOperator, rhs: &[f64], opts: &GmresOptions) -> Result<SolveReport> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::InvalidParameter(format!(
            "rhs length {} does not match operator dimension {n}",
            rhs.len()
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("GMRES tolerance must be positive".into()));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter("GMRES needs max_iters >= 1".into()));
    }

    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            iterations: 0,
            residual_history: Vec::new(),
            converged: true,
        });
    }

    let max_k = opts.max_iters.min(n);
    // Krylov basis, Hessenberg columns, Givens rotations.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_k + 1);
    let mut h_cols: Vec<Vec<f64>> = Vec::with_capacity(max_k);
    let mut cs: Vec<f64> = Vec::with_capacity(max_k);
    let mut sn: Vec<f64> = Vec::with_capacity(max_k);
    let mut g = vec![0.0; max_k + 1];
    let mut history = Vec::with_capacity(max_k);

    // Initial guess zero: the first residual is the right-hand side.
    let mut v0 = rhs.to_vec();
    for x in v0.iter_mut() {
        *x /= b_norm;
    }
    basis.push(v0);
    g[0] = b_norm;

    let mut converged = false;
    let mut k_done = 0;

    for k in 0..max_k {
        let mut w = op.apply(&basis[k])?;
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite value in operator output at iteration {}",
                k + 1
            )));
        }

        // Modified Gram-Schmidt with a single reorthogonalization pass.
        let mut h = vec![0.0; k + 2];
        for j in 0..=k {
            let c = dot(&w, &basis[j]);
            h[j] = c;
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= c * vi;
            }
        }
        for j in 0..=k {
            let c = dot(&w, &basis[j]);
            h[j] += c;
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= c * vi;
            }
        }
        let wn = norm(&w);
        h[k + 1] = wn;
        if !wn.is_finite() {
            return Err(Error::NumericalBreakdown(
                "non-finite Krylov vector norm".into(),
            ));
        }
        if wn > 0.0 {
            let mut v = w;
            for x in v.iter_mut() {
                *x /= wn;
            }
            basis.push(v);
        } else {
            // Happy breakdown: the Krylov space is invariant.
            basis.push(vec![0.0; n]);
        }

        // Apply accumulated Givens rotations to the new column.
        for j in 0..k {
            let t = cs[j] * h[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
            h[j] = t;
        }
        let (c, s) = givens(h[k], h[k + 1]);
        cs.push(c);
        sn.push(s);
        h[k] = c * h[k] + s * h[k + 1];
        h[k + 1] = 0.0;
        let t = c * g[k] + s * g[k + 1];
        g[k + 1] = -s * g[k] + c * g[k + 1];
        g[k] = t;

        h_cols.push(h);
        k_done = k + 1;
        let rel = g[k_done].abs() / b_norm;
        history.push(rel);
        if rel <= opts.tol || wn == 0.0 {
            converged = rel <= opts.tol || wn == 0.0;
            break;
        }
    }

    // Back-substitute the triangular system for the Krylov coefficients.
    let mut y = vec![0.0; k_done];
    for i in (0..k_done).rev() {
        let mut sum = g[i];
        for (j, yj) in y.iter().enumerate().skip(i + 1) {
            sum -= h_cols[j][i] * yj;
        }
        let d = h_cols[i][i];
        if d == 0.0 {
            return Err(Error::NumericalBreakdown(
                "singular Hessenberg factor in GMRES".into(),
            ));
        }
        y[i] = sum / d;
    }
    let mut solution = vec![0.0; n];
    for (j, yj) in y.iter().enumerate() {
        for (xi, vi) in solution.iter_mut().zip(&basis[j]) {
            *xi += yj * vi;
        }
    }

    Ok(SolveReport {
        solution,
        iterations: k_done,
        residual_history: history,
        converged,
    })
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a.abs() > b.abs() {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    } else {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    }
}

struct Embedded<'a> {
    op: &'a dyn RealLinearMap,
}

impl LinearOperator for Embedded<'_> {
    fn dim(&self) -> usize {
        2 * self.op.dim()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.op.dim();
        let z: Vec<Complex64> = (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect();
        let out = self.op.apply(&z)?;
        let mut y = vec![0.0; 2 * n];
        for (i, v) in out.iter().enumerate() {
            y[i] = v.re;
            y[n + i] = v.im;
        }
        Ok(y)
    }
}

/// Solves a real-linear complex system over the equivalent `2N` real
/// space; norms and tolerances agree with the complex 2-norm.
pub fn gmres_complex(
    op: &dyn RealLinearMap,
    rhs: &[Complex64],
    opts: &GmresOptions,
) -> Result<ComplexSolveReport> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::InvalidParameter(format!(
            "rhs length {} does not match operator dimension {n}",
            rhs.len()
        )));
    }
    let embedded = Embedded { op };
    let mut rhs_r = vec![0.0; 2 * n];
    for (i, v) in rhs.iter().enumerate() {
        rhs_r[i] = v.re;
        rhs_r[n + i] = v.im;
    }
    let report = gmres(&embedded, &rhs_r, opts)?;
    let solution = (0..n)
        .map(|i| Complex64::new(report.solution[i], report.solution[n + i]))
        .collect();
    Ok(ComplexSolveReport {
        solution,
        iterations: report.iterations,
        residual_history: report.residual_history,
        converged: report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense {
        n: usize,
        a: Vec<f64>, // row-major
    }

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok((0..self.n)
                .map(|i| dot(&self.a[i * self.n..(i + 1) * self.n], x))
                .collect())
        }
    }

    struct Identity(usize);

    impl LinearOperator for Identity {
        fn dim(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(x.to_vec())
        }
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let rhs = vec![3.0, -1.5, 0.25, 7.0];
        let report = gmres(&Identity(4), &rhs, &GmresOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for (a, b) in report.solution.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_two_by_two() {
        let op = Dense {
            n: 2,
            a: vec![1.0, 0.0, 0.0, 2.0],
        };
        let report = gmres(&op, &[1.0, 1.0], &GmresOptions::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert!((report.solution[0] - 1.0).abs() < 1e-13);
        assert!((report.solution[1] - 0.5).abs() < 1e-13);
    }

    #[test]
    fn zero_rhs_short_circuits() {
        let report = gmres(&Identity(3), &[0.0; 3], &GmresOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.solution, vec![0.0; 3]);
    }

    #[test]
    fn residual_history_non_increasing() {
        let n = 60;
        let mut a = vec![0.0; n * n];
        let mut state = 123u64;
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = if i == j { 4.0 } else { next() / n as f64 };
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| 2.0 * next() - 1.0).collect();
        let op = Dense { n, a };
        let report = gmres(&op, &rhs, &GmresOptions::default()).unwrap();
        assert!(report.converged);
        for w in report.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn matches_direct_solve_on_random_system() {
        let n = 120;
        let mut state = 77u64;
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        // Well-conditioned: dominant diagonal plus noise.
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = if i == j {
                    3.0 + next()
                } else {
                    (2.0 * next() - 1.0) / n as f64
                };
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| 2.0 * next() - 1.0).collect();

        let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i * n + j]);
        let b = nalgebra::DVector::from_column_slice(&rhs);
        let exact = mat.lu().solve(&b).expect("oracle solve");

        let op = Dense { n, a };
        let report = gmres(&op, &rhs, &GmresOptions::default()).unwrap();
        assert!(report.converged);
        let scale = exact.norm();
        let err: f64 = report
            .solution
            .iter()
            .zip(exact.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10 * scale, "relative error {:e}", err / scale);
    }

    #[test]
    fn reports_non_convergence() {
        // A rotation-like system that full GMRES cannot finish in 2 steps.
        let n = 40;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + (i + 1) % n] = 1.0;
        }
        let op = Dense { n, a };
        let mut rhs = vec![0.0; n];
        rhs[0] = 1.0;
        let report = gmres(
            &op,
            &rhs,
            &GmresOptions {
                tol: 1e-14,
                max_iters: 2,
            },
        )
        .unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 2);
    }

    struct ConjugateScale;

    impl RealLinearMap for ConjugateScale {
        fn dim(&self) -> usize {
            2
        }
        fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
            // x + 0.5 conj(x): real-linear, not complex-linear.
            Ok(x.iter().map(|z| z + 0.5 * z.conj()).collect())
        }
    }

    #[test]
    fn real_linear_complex_solve() {
        // (a + ib) + 0.5 (a - ib) = 1.5 a + 0.5 i b, so the inverse of
        // rhs = (3, 1) componentwise is (2, 2i)... check via the solver.
        let rhs = vec![Complex64::new(3.0, 1.0), Complex64::new(0.0, 2.0)];
        let report = gmres_complex(&ConjugateScale, &rhs, &GmresOptions::default()).unwrap();
        assert!(report.converged);
        let expected = [Complex64::new(2.0, 2.0), Complex64::new(0.0, 4.0)];
        for (s, e) in report.solution.iter().zip(expected.iter()) {
            assert!((s - e).norm() < 1e-13, "got {s}, want {e}");
        }
    }
}
