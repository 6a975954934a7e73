//! Capacity engine: Kerzman-Stein kernel, the boundary integral equation
//! for the Szego-kernel density, and the capacity quadrature.
//!
//! With the boundary `zeta(t)` of the compact set traversed clockwise, the
//! density `psi` solves
//!
//! ```text
//! psi(t) + int_J A(zeta(t), zeta(s)) psi(s) |zeta'(s)| ds = 1 / (2 pi)
//! ```
//!
//! where `A` is the continuous Kerzman-Stein kernel, and the capacity is
//! `gamma = int_J Re[psi(t)] |zeta'(t)| dt`. The Nystrom discretization on
//! equidistant nodes turns the operator into two pairwise Cauchy sums per
//! application, evaluated by the `fastsum` backend.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretize::{assemble, BoundaryData, GradingOptions};
use crate::error::{Error, Result};
use crate::fastsum::{CauchyEvaluator, FastSumOptions};
use crate::geometry::CompactSetSpec;
use crate::krylov::{gmres_complex, GmresOptions, RealLinearMap};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Kerzman-Stein kernel value `A(zeta(t_i), zeta(t_j))`; zero on the
/// diagonal.
pub fn ks_kernel(data: &BoundaryData, i: usize, j: usize) -> Result<Complex64> {
    if i == j {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (zi, zj) = (data.zeta[i], data.zeta[j]);
    let diff = zi - zj;
    if diff == Complex64::new(0.0, 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "nodes {i} and {j} coincide at {zi}"
        )));
    }
    // conj[(1/2 pi i) zeta'_i / (|zeta'_i| (zeta_i - zeta_j))]
    //   - (1/2 pi i) zeta'_j / (|zeta'_j| (zeta_j - zeta_i)).
    let term1 = (data.dzeta[i] / (data.speed[i] * diff) / Complex64::new(0.0, TWO_PI)).conj();
    let term2 = data.dzeta[j] / (data.speed[j] * (-diff)) / Complex64::new(0.0, TWO_PI);
    Ok(term1 - term2)
}

/// The discretized integral operator of the density equation.
///
/// Holds a summation plan so repeated applications inside GMRES reuse the
/// quadtree.
pub struct KsOperator<'a> {
    data: &'a BoundaryData,
    evaluator: CauchyEvaluator,
    /// `conj(zeta') / |zeta'|` per node.
    conj_tangent: Vec<Complex64>,
}

impl<'a> KsOperator<'a> {
    pub fn new(data: &'a BoundaryData, opts: &FastSumOptions) -> Result<Self> {
        let evaluator = CauchyEvaluator::new(&data.zeta, opts)?;
        let conj_tangent = data
            .dzeta
            .iter()
            .zip(&data.speed)
            .map(|(d, s)| d.conj() / s)
            .collect();
        Ok(KsOperator {
            data,
            evaluator,
            conj_tangent,
        })
    }
}

impl RealLinearMap for KsOperator<'_> {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.data.nodes.n as f64;
        let b1: Vec<Complex64> = x
            .iter()
            .zip(&self.data.speed)
            .map(|(xi, s)| s * xi.conj())
            .collect();
        let e1 = self.evaluator.apply(&b1)?;
        let b2: Vec<Complex64> = x
            .iter()
            .zip(&self.data.dzeta)
            .map(|(xi, d)| d * xi)
            .collect();
        let e2 = self.evaluator.apply(&b2)?;
        let i_over_n = Complex64::new(0.0, 1.0 / n);
        Ok((0..x.len())
            .map(|k| x[k] + i_over_n * (self.conj_tangent[k] * e1[k].conj() - e2[k]))
            .collect())
    }
}

/// Applies the discretized Kerzman-Stein operator to `x` once.
pub fn apply_ks_operator(
    data: &BoundaryData,
    x: &[Complex64],
    opts: &FastSumOptions,
) -> Result<Vec<Complex64>> {
    KsOperator::new(data, opts)?.apply(x)
}

/// GMRES statistics of a density solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Node values of the Szego-kernel density `psi`.
#[derive(Debug, Clone)]
pub struct Density {
    pub psi: Vec<Complex64>,
    pub boundary: Arc<BoundaryData>,
    pub stats: SolveStats,
}

impl Density {
    /// The discrete capacity integral `(2 pi / n) sum conj(psi_j) |zeta'_j|`,
    /// which must be real up to discretization error.
    pub fn capacity_integral(&self) -> Complex64 {
        let h = TWO_PI / self.boundary.nodes.n as f64;
        self.psi
            .iter()
            .zip(&self.boundary.speed)
            .map(|(p, s)| p.conj() * s * h)
            .sum()
    }
}

/// Solver options shared by the capacity pipelines.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapacityOptions {
    /// Nodes per boundary component; `None` picks 512 for smooth specs and
    /// `512 * lcm(corner counts)` when corners are present.
    pub n: Option<usize>,
    pub grading: GradingOptions,
    pub fastsum: FastSumOptions,
    pub gmres: GmresOptions,
}

/// Capacity value with solver metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResult {
    pub gamma: f64,
    pub n: usize,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}

/// Solves the density equation on assembled boundary data.
pub fn solve_density(
    data: Arc<BoundaryData>,
    fastsum: &FastSumOptions,
    gmres: &GmresOptions,
) -> Result<Density> {
    let op = KsOperator::new(&data, fastsum)?;
    let rhs = vec![Complex64::new(1.0 / TWO_PI, 0.0); data.len()];
    let report = gmres_complex(&op, &rhs, gmres)?;
    if !report.converged {
        return Err(Error::SolverFailure {
            msg: "GMRES did not converge on the density equation".into(),
            iterations: report.iterations,
            residual: report.final_residual(),
        });
    }
    let stats = SolveStats {
        iterations: report.iterations,
        residual: report.final_residual(),
    };
    Ok(Density {
        psi: report.solution,
        boundary: data,
        stats,
    })
}

/// Capacity quadrature `gamma = (2 pi / n) sum Re(psi_j) |zeta'_j|`.
///
/// Fails if the capacity integral has an imaginary part above `1e-8`,
/// which signals an under-resolved discretization.
pub fn capacity_from_density(density: &Density, seconds: f64) -> Result<CapacityResult> {
    let integral = density.capacity_integral();
    if integral.im.abs() > 1e-8 {
        return Err(Error::Inconsistency(format!(
            "capacity integral has imaginary part {:.3e}",
            integral.im
        )));
    }
    let gamma = integral.re;
    if gamma < 0.0 {
        return Err(Error::Inconsistency(format!(
            "capacity came out negative ({gamma:.3e})"
        )));
    }
    Ok(CapacityResult {
        gamma,
        n: density.boundary.nodes.n,
        iterations: density.stats.iterations,
        residual: density.stats.residual,
        seconds,
    })
}

/// Default node count for a spec: 512 per component for smooth curves,
/// scaled by the least common multiple of the corner counts otherwise.
pub fn default_node_count(spec: &CompactSetSpec) -> Result<usize> {
    let curves = spec.curves()?;
    let mut factor = 1usize;
    for c in curves {
        let l = c.corner_count();
        if l > 0 {
            factor = lcm(factor, l);
        }
    }
    Ok(512 * factor)
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Full pipeline for Jordan-curve specs: assemble, solve, integrate.
pub fn compute_capacity(spec: &CompactSetSpec, opts: &CapacityOptions) -> Result<CapacityResult> {
    let start = Instant::now();
    let n = match opts.n {
        Some(n) => n,
        None => default_node_count(spec)?,
    };
    let data = Arc::new(assemble(spec, n, opts.grading)?);
    let density = solve_density(data, &opts.fastsum, &opts.gmres)?;
    capacity_from_density(&density, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryCurve;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn circle_spec(center: Complex64, r: f64) -> CompactSetSpec {
        CompactSetSpec::from_curves(vec![BoundaryCurve::circle(center, r).unwrap()]).unwrap()
    }

    fn assemble_n(spec: &CompactSetSpec, n: usize) -> Arc<BoundaryData> {
        Arc::new(assemble(spec, n, GradingOptions::default()).unwrap())
    }

    #[test]
    fn kernel_diagonal_is_zero() {
        let data = assemble_n(&circle_spec(c(0.0, 0.0), 1.0), 16);
        assert_eq!(ks_kernel(&data, 3, 3).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn kernel_vanishes_on_circles() {
        // The two kernel terms cancel identically on a circle, regardless of
        // center and radius. The tolerance scales with the size of the
        // canceling terms, which grow like 1/|zeta_i - zeta_j| for close
        // node pairs.
        // On the unit circle at the origin the cancellation is clean and
        // the absolute 1e-15 bound holds outright.
        let data = assemble_n(&circle_spec(c(0.0, 0.0), 1.0), 32);
        for i in 0..32 {
            for j in 0..32 {
                if i != j {
                    let a = ks_kernel(&data, i, j).unwrap();
                    assert!(a.norm() < 1e-15, "A({i},{j}) = {a} on the unit circle");
                }
            }
        }
        // Off-center and rescaled circles: first-order rounding model, the
        // error grows with term size 1/(2 pi d) and with the coordinate
        // magnitude relative to the node separation d.
        for (center, r) in [(c(3.0, 4.0), 0.5), (c(-1.0, 2.0), 7.0), (c(0.0, 0.0), 0.3)] {
            let data = assemble_n(&circle_spec(center, r), 32);
            for i in 0..32 {
                for j in 0..32 {
                    if i == j {
                        continue;
                    }
                    let a = ks_kernel(&data, i, j).unwrap();
                    let d = (data.zeta[i] - data.zeta[j]).norm();
                    let zmag = data.zeta[i].norm().max(data.zeta[j].norm());
                    let tol = f64::EPSILON / (TWO_PI * d) * (8.0 + 4.0 * zmag / d) + 1e-16;
                    assert!(a.norm() < tol, "A({i},{j}) = {a} on circle r={r}");
                }
            }
        }
    }

    /// Second transcription of the kernel formula, kept deliberately
    /// separate from `ks_kernel`.
    fn ks_kernel_reference(
        zi: Complex64,
        dzi: Complex64,
        zj: Complex64,
        dzj: Complex64,
    ) -> Complex64 {
        let two_pi_i = Complex64::new(0.0, TWO_PI);
        let first = dzi / (dzi.norm() * (zi - zj)) / two_pi_i;
        let second = dzj / (dzj.norm() * (zj - zi)) / two_pi_i;
        first.conj() - second
    }

    #[test]
    fn kernel_matches_independent_transcription() {
        let spec = CompactSetSpec::from_curves(vec![
            BoundaryCurve::circle(c(-2.0, 0.0), 1.0).unwrap(),
            BoundaryCurve::ellipse(c(2.0, 0.5), 1.5, 0.3, 0.6).unwrap(),
        ])
        .unwrap();
        let data = assemble_n(&spec, 32);
        for (i, j) in [(0, 40), (5, 37), (50, 3), (12, 20), (33, 63)] {
            let a = ks_kernel(&data, i, j).unwrap();
            let b = ks_kernel_reference(data.zeta[i], data.dzeta[i], data.zeta[j], data.dzeta[j]);
            assert!((a - b).norm() <= 1e-16 + 1e-15 * b.norm(), "({i},{j})");
        }
    }

    #[test]
    fn operator_is_identity_on_circle() {
        let data = assemble_n(&circle_spec(c(0.5, -0.25), 1.25), 64);
        let mut state = 5u64;
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<Complex64> = (0..64).map(|_| c(next() - 0.5, next() - 0.5)).collect();
        let y = apply_ks_operator(&data, &x, &FastSumOptions::default()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((xi - yi).norm() < 1e-13);
        }
    }

    #[test]
    fn operator_zero_maps_to_zero() {
        let data = assemble_n(&circle_spec(c(0.0, 0.0), 1.0), 16);
        let x = vec![c(0.0, 0.0); 16];
        let y = apply_ks_operator(&data, &x, &FastSumOptions::default()).unwrap();
        assert!(y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn operator_matches_dense_nystrom_assembly() {
        // Two disks, random input: the fast operator equals the explicitly
        // assembled Nystrom matrix I + (2 pi / n) A diag(|zeta'|).
        let spec = CompactSetSpec::from_curves(vec![
            BoundaryCurve::circle(c(-2.0, 0.0), 1.0).unwrap(),
            BoundaryCurve::circle(c(2.0, 0.0), 1.0).unwrap(),
        ])
        .unwrap();
        let n = 32;
        let data = assemble_n(&spec, n);
        let total = data.len();
        let h = TWO_PI / n as f64;
        let mut state = 9u64;
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<Complex64> = (0..total).map(|_| c(next() - 0.5, next() - 0.5)).collect();

        let mut expected = vec![c(0.0, 0.0); total];
        for i in 0..total {
            let mut acc = x[i];
            for j in 0..total {
                let a = ks_kernel(&data, i, j).unwrap();
                acc += h * a * data.speed[j] * x[j];
            }
            expected[i] = acc;
        }

        let y = apply_ks_operator(&data, &x, &FastSumOptions::default()).unwrap();
        let scale = expected.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..total {
            assert!(
                (y[i] - expected[i]).norm() <= 1e-13 * scale,
                "node {i}: {} vs {}",
                y[i],
                expected[i]
            );
        }
    }

    #[test]
    fn density_is_constant_on_circles() {
        // Unit circle at the origin.
        let data = assemble_n(&circle_spec(c(0.0, 0.0), 1.0), 16);
        let density =
            solve_density(data, &FastSumOptions::default(), &GmresOptions::default()).unwrap();
        let expected = 1.0 / TWO_PI;
        for p in &density.psi {
            assert!((p - c(expected, 0.0)).norm() < 1e-13);
        }

        // Scaled and translated disk: psi is still 1 / (2 pi).
        let data = assemble_n(&circle_spec(c(3.0, 4.0), 0.5), 64);
        let density =
            solve_density(data, &FastSumOptions::default(), &GmresOptions::default()).unwrap();
        for p in &density.psi {
            assert!((p - c(expected, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn capacity_of_disks_equals_radius() {
        for (center, r) in [(c(0.0, 0.0), 1.0), (c(2.0, -1.0), 7.0), (c(-4.0, 0.3), 0.3)] {
            let spec = circle_spec(center, r);
            let result = compute_capacity(
                &spec,
                &CapacityOptions {
                    n: Some(64),
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(
                (result.gamma - r).abs() <= 1e-12 * r,
                "disk r={r}: gamma={}",
                result.gamma
            );
        }
    }

    #[test]
    fn two_disk_headline_value() {
        // Centers +-2, radius 1, n = 2^9.
        let spec = CompactSetSpec::from_curves(vec![
            BoundaryCurve::circle(c(-2.0, 0.0), 1.0).unwrap(),
            BoundaryCurve::circle(c(2.0, 0.0), 1.0).unwrap(),
        ])
        .unwrap();
        let result = compute_capacity(
            &spec,
            &CapacityOptions {
                n: Some(512),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (result.gamma - 1.875_595_019_097_120).abs() < 5e-13,
            "gamma = {:.15}",
            result.gamma
        );
    }

    #[test]
    fn density_realness_invariant() {
        let spec = CompactSetSpec::from_curves(vec![
            BoundaryCurve::circle(c(-2.0, 0.0), 1.0).unwrap(),
            BoundaryCurve::circle(c(2.0, 0.0), 1.0).unwrap(),
        ])
        .unwrap();
        let data = assemble_n(&spec, 128);
        let density =
            solve_density(data, &FastSumOptions::default(), &GmresOptions::default()).unwrap();
        assert!(density.capacity_integral().im.abs() <= 1e-10);
    }

    #[test]
    fn square_capacity_converges() {
        let square = BoundaryCurve::polygon(vec![
            c(1.0, 0.0),
            c(0.0, -1.0),
            c(-1.0, 0.0),
            c(0.0, 1.0),
        ])
        .unwrap();
        let spec = CompactSetSpec::from_curves(vec![square]).unwrap();
        let exact = crate::reference::exact_square(2.0f64.sqrt()).unwrap().value;
        let result = compute_capacity(
            &spec,
            &CapacityOptions {
                n: Some(1 << 10),
                ..Default::default()
            },
        )
        .unwrap();
        let rel = (result.gamma - exact).abs() / exact;
        assert!(rel < 5e-9, "n=2^10 relative error {rel:e}");
    }

    #[test]
    fn default_node_counts() {
        let smooth = circle_spec(c(0.0, 0.0), 1.0);
        assert_eq!(default_node_count(&smooth).unwrap(), 512);
        let square = BoundaryCurve::polygon(vec![
            c(1.0, 0.0),
            c(0.0, -1.0),
            c(-1.0, 0.0),
            c(0.0, 1.0),
        ])
        .unwrap();
        let spec = CompactSetSpec::from_curves(vec![square]).unwrap();
        assert_eq!(default_node_count(&spec).unwrap(), 2048);
    }
}
