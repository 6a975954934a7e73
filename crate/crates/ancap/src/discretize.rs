//! Nystrom discretization of boundary components.
//!
//! Every component carries the same even number `n` of equidistant nodes
//! `s_q = (q - 1) 2 pi / n`. Smooth components are sampled directly. For a
//! component with corners the parametrization is composed with a graded
//! bijection whose derivative vanishes at the corners, which removes the
//! corner singularity of the integral-equation density, and the whole
//! component is sampled half a node spacing off the lattice so that no node
//! coincides with a corner.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::CompactSetSpec;

const TWO_PI: f64 = 2.0 * PI;

/// Equidistant parameter nodes replicated over `m` components.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub m: usize,
    pub n: usize,
    /// `m * n` parameter values: `m` copies of `s_1, ..., s_n`.
    pub t: Vec<f64>,
}

/// Builds the node set: `n` must be even and at least 4.
pub fn uniform_nodes(m: usize, n: usize) -> Result<NodeSet> {
    if m < 1 {
        return Err(Error::InvalidParameter("component count m must be >= 1".into()));
    }
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "node count n must be an even integer >= 4, got {n}"
        )));
    }
    let h = TWO_PI / n as f64;
    let mut t = Vec::with_capacity(m * n);
    for _ in 0..m {
        for q in 0..n {
            t.push(q as f64 * h);
        }
    }
    Ok(NodeSet { m, n, t })
}

/// Trapezoidal rule on the replicated periodic grid:
/// `(2 pi / n) * sum(values)`.
pub fn trapezoid(values: &[Complex64], n: usize) -> Result<Complex64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("trapezoid on empty input".into()));
    }
    if n == 0 || values.len() % n != 0 {
        return Err(Error::InvalidParameter(format!(
            "value count {} is not a multiple of n = {n}",
            values.len()
        )));
    }
    let sum: Complex64 = values.iter().sum();
    Ok(sum * (TWO_PI / n as f64))
}

/// A graded reparametrization of `[0, 2 pi]` onto itself.
///
/// Identity when there are no corners. Otherwise each inter-corner
/// subinterval is mapped onto itself by the Kress substitution of order
/// `p`, so corners are fixed points and the derivative vanishes to order
/// `p - 1` at every corner.
#[derive(Debug, Clone)]
pub struct Grading {
    corners: Vec<f64>,
    p: u32,
}

/// Builds the grading for the given corner parameters.
pub fn kress_grading(corner_params: &[f64], p: u32) -> Result<Grading> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "grading exponent p must be >= 2, got {p}"
        )));
    }
    for w in corner_params.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "corner parameters must be strictly increasing".into(),
            ));
        }
    }
    if corner_params.iter().any(|&c| !(0.0..TWO_PI).contains(&c)) {
        return Err(Error::InvalidParameter(
            "corner parameters must lie in [0, 2*pi)".into(),
        ));
    }
    Ok(Grading {
        corners: corner_params.to_vec(),
        p,
    })
}

impl Grading {
    /// Evaluates `(delta(t), delta'(t))` for `t` in `[0, 2 pi]`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        if self.corners.is_empty() {
            return (t, 1.0);
        }
        let l = self.corners.len();
        // Locate the subinterval [c_k, c_{k+1}) containing t, wrapping the
        // final one around 2*pi.
        let first = self.corners[0];
        let (lo, hi) = if t < first {
            (self.corners[l - 1] - TWO_PI, first)
        } else {
            let k = match self
                .corners
                .binary_search_by(|c| c.partial_cmp(&t).unwrap())
            {
                Ok(k) => k,
                Err(k) => k - 1,
            };
            if k + 1 < l {
                (self.corners[k], self.corners[k + 1])
            } else {
                (self.corners[l - 1], first + TWO_PI)
            }
        };
        let span = hi - lo;
        let s = (t - lo) / span * TWO_PI;
        let (w, dw) = kress_w(s, self.p);
        let mut mapped = lo + w / TWO_PI * span;
        if mapped < 0.0 {
            mapped += TWO_PI;
        }
        (mapped, dw)
    }
}

/// The Kress substitution `w(s)` on `[0, 2 pi]` with exponent `p`:
/// `w = 2 pi v(s)^p / (v(s)^p + v(2 pi - s)^p)` where
/// `v(s) = (1/p - 1/2)((pi - s)/pi)^3 + (s - pi)/(p pi) + 1/2`.
fn kress_w(s: f64, p: u32) -> (f64, f64) {
    let pf = p as f64;
    let v = |x: f64| {
        let u = (PI - x) / PI;
        (1.0 / pf - 0.5) * u * u * u + (x - PI) / (pf * PI) + 0.5
    };
    let dv = |x: f64| {
        let u = (PI - x) / PI;
        3.0 * (0.5 - 1.0 / pf) * u * u / PI + 1.0 / (pf * PI)
    };
    let a = v(s).powi(p as i32);
    let b = v(TWO_PI - s).powi(p as i32);
    let da = pf * v(s).powi(p as i32 - 1) * dv(s);
    let db = -pf * v(TWO_PI - s).powi(p as i32 - 1) * dv(TWO_PI - s);
    let denom = a + b;
    let w = TWO_PI * a / denom;
    let dw = TWO_PI * (da * b - a * db) / (denom * denom);
    (w, dw)
}

/// Discretized boundary: node parameters and the sampled parametrization.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub nodes: NodeSet,
    /// `zeta(t_j)` over all components.
    pub zeta: Vec<Complex64>,
    /// `zeta'(t_j)`, including the grading factor on cornered components.
    pub dzeta: Vec<Complex64>,
    /// `|zeta'(t_j)|`.
    pub speed: Vec<f64>,
}

impl BoundaryData {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// Index range of component `p` in the flat vectors.
    pub fn component_range(&self, p: usize) -> std::ops::Range<usize> {
        p * self.nodes.n..(p + 1) * self.nodes.n
    }
}

/// Discretization options.
#[derive(Debug, Clone, Copy)]
pub struct GradingOptions {
    /// Kress exponent for cornered components.
    pub p: u32,
}

impl Default for GradingOptions {
    fn default() -> Self {
        GradingOptions { p: 3 }
    }
}

/// Samples every component of a Jordan-curve spec on `n` nodes.
///
/// Cornered components are graded and sampled at lattice midpoints
/// (`s_q + pi/n`); `n` must be a multiple of each component's corner
/// count.
pub fn assemble(spec: &CompactSetSpec, n: usize, grading: GradingOptions) -> Result<BoundaryData> {
    let curves = spec.curves()?;
    let nodes = uniform_nodes(curves.len(), n)?;
    let mut zeta = Vec::with_capacity(nodes.t.len());
    let mut dzeta = Vec::with_capacity(nodes.t.len());
    let h = TWO_PI / n as f64;
    for (p, curve) in curves.iter().enumerate() {
        let corners = curve.corners();
        if !corners.is_empty() && n % corners.len() != 0 {
            return Err(Error::InvalidParameter(format!(
                "component {p} has {} corners; n = {n} must be a multiple of that",
                corners.len()
            )));
        }
        let delta = kress_grading(&corners, grading.p)?;
        let offset = if corners.is_empty() { 0.0 } else { 0.5 * h };
        for q in 0..n {
            let t = q as f64 * h + offset;
            let (d, dd) = delta.eval(t);
            let (z, dz) = curve.evaluate(d)?;
            zeta.push(z);
            dzeta.push(dz * dd);
        }
    }
    let speed = dzeta.iter().map(|d| d.norm()).collect();
    Ok(BoundaryData {
        nodes,
        zeta,
        dzeta,
        speed,
    })
}
