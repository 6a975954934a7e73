//! Pairwise Cauchy-type sums `out_i = sum_{j != i} q_j / (z_i - z_j)`.
//!
//! Two evaluation paths share one contract: a dense `O(N^2)` double loop in
//! fixed index order, which doubles as the accuracy oracle, and a quadtree
//! treecode with truncated Laurent expansions of `1/(z - z0)` for large node
//! counts. Both parallelize over targets only, so results do not depend on
//! the thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Problems at or below this size always use the dense path under
/// [`FastSumMode::Auto`]; dense is faster there and serves as ground truth.
pub const DENSE_THRESHOLD: usize = 2048;

/// Acceptance ratio of the multipole criterion: a cluster of radius `rho`
/// is expanded for targets at distance `>= rho / THETA` from its center.
const THETA: f64 = 0.5;

const LEAF_CAP: usize = 48;
const MAX_DEPTH: usize = 48;
const MAX_ORDER: usize = 64;

/// Evaluation strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FastSumMode {
    Dense,
    Tree,
    #[default]
    Auto,
}

impl std::str::FromStr for FastSumMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dense" => Ok(FastSumMode::Dense),
            "tree" => Ok(FastSumMode::Tree),
            "auto" => Ok(FastSumMode::Auto),
            other => Err(format!("unknown fast-sum mode {other:?} (dense|tree|auto)")),
        }
    }
}

/// Options for the fast summation backend.
#[derive(Debug, Clone, Copy)]
pub struct FastSumOptions {
    pub mode: FastSumMode,
    /// Target accuracy of the treecode relative to the dense sum.
    pub tol: f64,
}

impl Default for FastSumOptions {
    fn default() -> Self {
        FastSumOptions {
            mode: FastSumMode::Auto,
            tol: 0.5e-15,
        }
    }
}

/// Locations and weights of a pairwise Cauchy sum.
#[derive(Debug, Clone)]
pub struct ChargeSystem {
    pub points: Vec<Complex64>,
    pub charges: Vec<Complex64>,
}

impl ChargeSystem {
    pub fn new(points: Vec<Complex64>, charges: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("charge system is empty".into()));
        }
        if points.len() != charges.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} charges",
                points.len(),
                charges.len()
            )));
        }
        Ok(ChargeSystem { points, charges })
    }
}

/// Dense evaluation in index order.
pub fn cauchy_sum_dense(sys: &ChargeSystem) -> Result<Vec<Complex64>> {
    let eval = CauchyEvaluator::with_mode(&sys.points, FastSumMode::Dense, 0.5e-15)?;
    eval.apply(&sys.charges)
}

/// Treecode evaluation with accuracy target `tol`.
pub fn cauchy_sum_fast(sys: &ChargeSystem, tol: f64) -> Result<Vec<Complex64>> {
    let eval = CauchyEvaluator::with_mode(&sys.points, FastSumMode::Tree, tol)?;
    eval.apply(&sys.charges)
}

/// Dispatch on [`FastSumOptions`].
pub fn cauchy_sum(sys: &ChargeSystem, opts: &FastSumOptions) -> Result<Vec<Complex64>> {
    let eval = CauchyEvaluator::new(&sys.points, opts)?;
    eval.apply(&sys.charges)
}

/// A summation plan for a fixed point set, reusable across charge vectors.
///
/// Operator applications inside GMRES reuse the quadtree; only the
/// multipole moments are recomputed per charge vector.
pub struct CauchyEvaluator {
    points: Vec<Complex64>,
    plan: Plan,
}

enum Plan {
    Dense,
    Tree(QuadTree),
}

impl CauchyEvaluator {
    pub fn new(points: &[Complex64], opts: &FastSumOptions) -> Result<Self> {
        let mode = match opts.mode {
            FastSumMode::Auto => {
                if points.len() <= DENSE_THRESHOLD {
                    FastSumMode::Dense
                } else {
                    FastSumMode::Tree
                }
            }
            m => m,
        };
        Self::with_mode(points, mode, opts.tol)
    }

    fn with_mode(points: &[Complex64], mode: FastSumMode, tol: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("charge system is empty".into()));
        }
        let plan = match mode {
            FastSumMode::Dense => Plan::Dense,
            FastSumMode::Tree | FastSumMode::Auto => {
                if !(1e-16..=1e-6).contains(&tol) {
                    return Err(Error::InvalidParameter(format!(
                        "fast-sum tolerance must lie in [1e-16, 1e-6], got {tol:e}"
                    )));
                }
                Plan::Tree(QuadTree::build(points, tol))
            }
        };
        Ok(CauchyEvaluator {
            points: points.to_vec(),
            plan,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evaluates `out_i = sum_{j != i} charges_j / (points_i - points_j)`.
    pub fn apply(&self, charges: &[Complex64]) -> Result<Vec<Complex64>> {
        if charges.len() != self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} charges for {} points",
                charges.len(),
                self.points.len()
            )));
        }
        match &self.plan {
            Plan::Dense => dense_apply(&self.points, charges),
            Plan::Tree(tree) => tree.apply(&self.points, charges),
        }
    }
}

fn dense_apply(points: &[Complex64], charges: &[Complex64]) -> Result<Vec<Complex64>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, &zi)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &zj) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = zi - zj;
                if d == Complex64::new(0.0, 0.0) {
                    return Err(Error::DegenerateGeometry(format!(
                        "points {i} and {j} coincide at {zi}"
                    )));
                }
                acc += charges[j] / d;
            }
            Ok(acc)
        })
        .collect()
}

struct TreeNode {
    center: Complex64,
    /// Half-diagonal of the node square; every point of the node lies
    /// within this distance of the center.
    radius: f64,
    start: usize,
    end: usize,
    /// Child node indices; empty for leaves.
    children: Vec<u32>,
}

struct QuadTree {
    nodes: Vec<TreeNode>,
    /// Maps sorted slots to original point indices.
    perm: Vec<u32>,
    sorted_points: Vec<Complex64>,
    /// Number of expansion coefficients.
    order: usize,
    /// Pascal's triangle up to `order`, flattened row-major.
    binomial: Vec<f64>,
}

impl QuadTree {
    fn build(points: &[Complex64], tol: f64) -> Self {
        let order = ((1.0 / tol).ln() / (1.0 / THETA).ln()).ceil() as usize + 3;
        let order = order.clamp(4, MAX_ORDER);

        let (mut lo_x, mut hi_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo_x = lo_x.min(p.re);
            hi_x = hi_x.max(p.re);
            lo_y = lo_y.min(p.im);
            hi_y = hi_y.max(p.im);
        }
        let center = Complex64::new(0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
        let half = 0.5 * f64::max(hi_x - lo_x, hi_y - lo_y).max(f64::MIN_POSITIVE);

        let mut perm: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        let mut scratch: Vec<u32> = Vec::with_capacity(points.len());
        subdivide(
            points,
            &mut perm,
            &mut scratch,
            &mut nodes,
            center,
            half,
            0,
            points.len(),
            0,
        );
        let sorted_points: Vec<Complex64> = perm.iter().map(|&i| points[i as usize]).collect();

        let mut binomial = vec![0.0; order * order];
        for k in 0..order {
            binomial[k * order] = 1.0;
            for j in 1..=k {
                binomial[k * order + j] = binomial[(k - 1) * order + j - 1]
                    + if j <= k - 1 {
                        binomial[(k - 1) * order + j]
                    } else {
                        0.0
                    };
            }
        }

        QuadTree {
            nodes,
            perm,
            sorted_points,
            order,
            binomial,
        }
    }

    fn apply(&self, points: &[Complex64], charges: &[Complex64]) -> Result<Vec<Complex64>> {
        let p = self.order;
        let sorted_charges: Vec<Complex64> =
            self.perm.iter().map(|&i| charges[i as usize]).collect();

        // Multipole moments M_k = sum q_j (z_j - c)^k per node. Children are
        // stored after their parent, so a reverse sweep sees children first.
        let mut moments = vec![Complex64::new(0.0, 0.0); self.nodes.len() * p];
        for ni in (0..self.nodes.len()).rev() {
            let node = &self.nodes[ni];
            if node.children.is_empty() {
                for s in node.start..node.end {
                    let dz = self.sorted_points[s] - node.center;
                    let q = sorted_charges[s];
                    let mut pw = Complex64::new(1.0, 0.0);
                    for k in 0..p {
                        moments[ni * p + k] += q * pw;
                        pw *= dz;
                    }
                }
            } else {
                let children = node.children.clone();
                for &ci in &children {
                    let ci = ci as usize;
                    let d = self.nodes[ci].center - node.center;
                    // Shift the child expansion to the parent center:
                    // M_k(parent) = sum_j C(k, j) d^{k-j} M_j(child).
                    let mut dpow = vec![Complex64::new(1.0, 0.0); p];
                    for k in 1..p {
                        dpow[k] = dpow[k - 1] * d;
                    }
                    for k in 0..p {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for j in 0..=k {
                            acc += self.binomial[k * p + j] * dpow[k - j] * moments[ci * p + j];
                        }
                        moments[ni * p + k] += acc;
                    }
                }
            }
        }

        (0..points.len())
            .into_par_iter()
            .map(|i| self.evaluate_target(i as u32, points[i], &sorted_charges, &moments))
            .collect()
    }

    fn evaluate_target(
        &self,
        target: u32,
        z: Complex64,
        sorted_charges: &[Complex64],
        moments: &[Complex64],
    ) -> Result<Complex64> {
        let p = self.order;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.start == node.end {
                continue;
            }
            let d = (z - node.center).norm();
            if d * THETA >= node.radius && node.radius > 0.0 {
                // Horner evaluation of sum_k M_k / (z - c)^{k+1}.
                let w = 1.0 / (z - node.center);
                let base = ni as usize * p;
                let mut sum = moments[base + p - 1];
                for k in (0..p - 1).rev() {
                    sum = sum * w + moments[base + k];
                }
                acc += sum * w;
            } else if node.children.is_empty() {
                for s in node.start..node.end {
                    if self.perm[s] == target {
                        continue;
                    }
                    let dz = z - self.sorted_points[s];
                    if dz == Complex64::new(0.0, 0.0) {
                        return Err(Error::DegenerateGeometry(format!(
                            "points {target} and {} coincide at {z}",
                            self.perm[s]
                        )));
                    }
                    acc += sorted_charges[s] / dz;
                }
            } else {
                // Push in reverse so children are visited in stored order.
                for &c in node.children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        Ok(acc)
    }
}

#[allow(clippy::too_many_arguments)]
fn subdivide(
    points: &[Complex64],
    perm: &mut [u32],
    scratch: &mut Vec<u32>,
    nodes: &mut Vec<TreeNode>,
    center: Complex64,
    half: f64,
    start: usize,
    end: usize,
    depth: usize,
) -> u32 {
    let index = nodes.len() as u32;
    nodes.push(TreeNode {
        center,
        radius: half * std::f64::consts::SQRT_2,
        start,
        end,
        children: Vec::new(),
    });
    if end - start <= LEAF_CAP || depth >= MAX_DEPTH {
        return index;
    }

    // Stable partition into the four quadrants (fixed order: -x-y, +x-y,
    // -x+y, +x+y) keeps the traversal deterministic.
    let mut buckets: [Vec<u32>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for &pi in perm[start..end].iter() {
        let pt = points[pi as usize];
        let qx = (pt.re > center.re) as usize;
        let qy = (pt.im > center.im) as usize;
        buckets[qy * 2 + qx].push(pi);
    }
    scratch.clear();
    let mut offsets = [0usize; 5];
    for (q, b) in buckets.iter().enumerate() {
        offsets[q + 1] = offsets[q] + b.len();
        scratch.extend_from_slice(b);
    }
    perm[start..end].copy_from_slice(scratch);

    let quarter = 0.5 * half;
    let mut children = Vec::new();
    for q in 0..4 {
        let (s, e) = (start + offsets[q], start + offsets[q + 1]);
        if s == e {
            continue;
        }
        let dx = if q % 2 == 0 { -quarter } else { quarter };
        let dy = if q / 2 == 0 { -quarter } else { quarter };
        let child_center = center + Complex64::new(dx, dy);
        let ci = subdivide(
            points,
            perm,
            scratch,
            nodes,
            child_center,
            quarter,
            s,
            e,
            depth + 1,
        );
        children.push(ci);
    }
    nodes[index as usize].children = children;
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Literal double-loop oracle, written independently of `dense_apply`.
    fn double_loop(points: &[Complex64], charges: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); points.len()];
        for i in 0..points.len() {
            for j in 0..points.len() {
                if i != j {
                    out[i] += charges[j] / (points[i] - points[j]);
                }
            }
        }
        out
    }

    fn random_system(n: usize, seed: u64) -> ChargeSystem {
        let mut state = seed.max(1);
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        let points = (0..n).map(|_| c(next(), next())).collect();
        let charges = (0..n).map(|_| c(2.0 * next() - 1.0, 2.0 * next() - 1.0)).collect();
        ChargeSystem::new(points, charges).unwrap()
    }

    #[test]
    fn dense_two_points() {
        let sys = ChargeSystem::new(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0); 2]).unwrap();
        let out = cauchy_sum_dense(&sys).unwrap();
        assert_eq!(out, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn dense_single_charge() {
        let sys = ChargeSystem::new(
            vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let out = cauchy_sum_dense(&sys).unwrap();
        assert_eq!(out, vec![c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.0)]);
    }

    #[test]
    fn dense_matches_double_loop_bitwise() {
        let sys = random_system(200, 42);
        let out = cauchy_sum_dense(&sys).unwrap();
        let oracle = double_loop(&sys.points, &sys.charges);
        assert_eq!(out, oracle, "dense path must match index-order double loop");
    }

    #[test]
    fn dense_rejects_duplicates() {
        let sys = ChargeSystem::new(
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(1.0, 0.0); 3],
        )
        .unwrap();
        assert!(matches!(
            cauchy_sum_dense(&sys),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn tree_degenerates_to_direct_on_two_points() {
        let sys = ChargeSystem::new(vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0); 2]).unwrap();
        let out = cauchy_sum_fast(&sys, 1e-12).unwrap();
        assert_eq!(out, vec![c(-1.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn tree_matches_dense_on_random_cloud() {
        let n = 6000;
        let sys = random_system(n, 7);
        let dense = cauchy_sum_dense(&sys).unwrap();
        let fast = cauchy_sum_fast(&sys, 1e-12).unwrap();
        let scale = dense.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let max_dev = dense
            .iter()
            .zip(fast.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(
            max_dev <= 1e-11 * scale,
            "max deviation {max_dev:e} vs scale {scale:e}"
        );
    }

    #[test]
    fn tree_matches_dense_on_clustered_points() {
        // Clusters of very different scales stress the adaptive refinement.
        let mut points = Vec::new();
        let mut charges = Vec::new();
        let mut state = 99u64;
        let mut next = || {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545f4914f6cdd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        for k in 0..40 {
            let center = c(next() * 10.0, next() * 10.0);
            let scale = 1e-4 * (k as f64 + 1.0);
            for _ in 0..100 {
                points.push(center + c(scale * next(), scale * next()));
                charges.push(c(next() - 0.5, next() - 0.5));
            }
        }
        let sys = ChargeSystem::new(points, charges).unwrap();
        let dense = cauchy_sum_dense(&sys).unwrap();
        let fast = cauchy_sum_fast(&sys, 1e-13).unwrap();
        let scale = dense.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let max_dev = dense
            .iter()
            .zip(fast.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(
            max_dev <= 1e-11 * scale,
            "max deviation {max_dev:e} vs scale {scale:e}"
        );
    }

    #[test]
    fn tree_rejects_bad_tolerance() {
        let sys = random_system(10, 3);
        assert!(cauchy_sum_fast(&sys, 1e-3).is_err());
        assert!(cauchy_sum_fast(&sys, 1e-17).is_err());
    }

    #[test]
    fn linearity_of_fast_path() {
        let n = 3000;
        let sys = random_system(n, 11);
        let sys2 = random_system(n, 13);
        let eval = CauchyEvaluator::with_mode(&sys.points, FastSumMode::Tree, 1e-13).unwrap();
        let (alpha, beta) = (c(0.7, -0.3), c(-1.2, 0.4));
        let combined: Vec<Complex64> = sys
            .charges
            .iter()
            .zip(sys2.charges.iter())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let lhs = eval.apply(&combined).unwrap();
        let f1 = eval.apply(&sys.charges).unwrap();
        let f2 = eval.apply(&sys2.charges).unwrap();
        let scale = lhs.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..n {
            let rhs = alpha * f1[i] + beta * f2[i];
            assert!((lhs[i] - rhs).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn unit_charge_sums_cancel() {
        for &n in &[500usize, 5000] {
            let mut sys = random_system(n, n as u64);
            sys.charges = vec![c(1.0, 0.0); n];
            let out = if n <= DENSE_THRESHOLD {
                cauchy_sum_dense(&sys).unwrap()
            } else {
                cauchy_sum_fast(&sys, 1e-13).unwrap()
            };
            let total: Complex64 = out.iter().sum();
            assert!(
                total.norm() <= 1e-10 * n as f64,
                "n={n}: residual {:e}",
                total.norm()
            );
        }
    }

    #[test]
    fn auto_mode_picks_dense_for_small_systems() {
        let sys = random_system(100, 5);
        let auto = cauchy_sum(&sys, &FastSumOptions::default()).unwrap();
        let dense = cauchy_sum_dense(&sys).unwrap();
        assert_eq!(auto, dense);
    }
}
