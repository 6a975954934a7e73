//! Boundary curves, slit sets and compact-set specifications.
//!
//! All generators parametrize boundary components over `[0, 2*pi]` so that
//! the unbounded complement domain lies on the left, i.e. each component is
//! traversed clockwise. The ellipse parametrization
//! `c + 0.5 a e^{i theta} (cos t - i r sin t)` fixes this convention; the
//! circle and polygon generators follow it. A curve can be reversed for
//! counterclockwise traversal, which is occasionally useful in tests.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Minimum sampled distance between distinct components.
const DISJOINT_THRESHOLD: f64 = 1e-12;

/// Traversal direction of a boundary component.
///
/// `Negative` (clockwise) is the solver convention for boundaries of
/// compact sets seen from the unbounded complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

/// Which one-sided derivative to take at a corner parameter.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

type CurveFn = Arc<dyn Fn(f64) -> (Complex64, Complex64) + Send + Sync>;

#[derive(Clone)]
enum CurveKind {
    Circle {
        center: Complex64,
        radius: f64,
    },
    Ellipse {
        center: Complex64,
        major: f64,
        angle: f64,
        ratio: f64,
    },
    Polygon {
        vertices: Vec<Complex64>,
    },
    Custom {
        eval: CurveFn,
        corners: Vec<f64>,
    },
}

/// A parametrized Jordan curve: one boundary component of a compact set.
#[derive(Clone)]
pub struct BoundaryCurve {
    kind: CurveKind,
    orientation: Orientation,
}

impl fmt::Debug for BoundaryCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CurveKind::Circle { center, radius } => {
                write!(f, "Circle(center={center}, radius={radius}")?
            }
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => write!(
                f,
                "Ellipse(center={center}, major={major}, angle={angle}, ratio={ratio}"
            )?,
            CurveKind::Polygon { vertices } => write!(f, "Polygon({} vertices", vertices.len())?,
            CurveKind::Custom { corners, .. } => write!(f, "Custom({} corners", corners.len())?,
        }
        write!(f, ", {:?})", self.orientation)
    }
}

impl BoundaryCurve {
    /// Circle of radius `radius` around `center`, traversed clockwise.
    pub fn circle(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "circle radius must be positive and finite, got {radius}"
            )));
        }
        Ok(BoundaryCurve {
            kind: CurveKind::Circle { center, radius },
            orientation: Orientation::Negative,
        })
    }

    /// Ellipse `center + 0.5 major e^{i angle} (cos t - i ratio sin t)`.
    ///
    /// `major` is the full major-axis length and `ratio` in `(0, 1]` the
    /// minor/major axis ratio; `ratio = 1` gives a circle of radius
    /// `major / 2`.
    pub fn ellipse(center: Complex64, major: f64, angle: f64, ratio: f64) -> Result<Self> {
        if !(major > 0.0) || !major.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "ellipse major axis must be positive, got {major}"
            )));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "ellipse axis ratio must lie in (0, 1], got {ratio}"
            )));
        }
        Ok(BoundaryCurve {
            kind: CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            },
            orientation: Orientation::Negative,
        })
    }

    /// Simple polygon through `vertices`, one affine edge per parameter
    /// span `2 pi / len`. The vertex order is normalized to clockwise.
    pub fn polygon(vertices: Vec<Complex64>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidGeometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        for (i, a) in vertices.iter().enumerate() {
            for b in &vertices[i + 1..] {
                if a == b {
                    return Err(Error::InvalidGeometry(format!(
                        "polygon vertices must be pairwise distinct, found duplicate {a}"
                    )));
                }
            }
        }
        let n = vertices.len();
        for k in 0..n {
            let e = vertices[(k + 1) % n] - vertices[k];
            if e.norm() == 0.0 {
                return Err(Error::InvalidGeometry("zero-length polygon edge".into()));
            }
        }
        // Non-adjacent edges must not intersect.
        for i in 0..n {
            let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
            for j in i + 1..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(Error::InvalidGeometry(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        // Shoelace: positive signed area means counterclockwise input.
        let mut area2 = 0.0;
        for k in 0..n {
            let p = vertices[k];
            let q = vertices[(k + 1) % n];
            area2 += p.re * q.im - q.re * p.im;
        }
        let vertices = if area2 > 0.0 {
            // Reverse the cycle but keep the original first vertex as the
            // parametrization base point.
            let mut v = vertices;
            v.reverse();
            v.rotate_right(1);
            v
        } else {
            vertices
        };
        Ok(BoundaryCurve {
            kind: CurveKind::Polygon { vertices },
            orientation: Orientation::Negative,
        })
    }

    /// Curve given by an arbitrary parametrization `t -> (zeta, zeta')`,
    /// with `corners` listing the parameters where `zeta'` jumps.
    pub fn custom<F>(eval: F, corners: Vec<f64>) -> Result<Self>
    where
        F: Fn(f64) -> (Complex64, Complex64) + Send + Sync + 'static,
    {
        let mut sorted = corners.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidParameter(
                    "coincident corner parameters".into(),
                ));
            }
        }
        if sorted.iter().any(|&c| !(0.0..TWO_PI).contains(&c)) {
            return Err(Error::InvalidParameter(
                "corner parameters must lie in [0, 2*pi)".into(),
            ));
        }
        Ok(BoundaryCurve {
            kind: CurveKind::Custom {
                eval: Arc::new(eval),
                corners: sorted,
            },
            orientation: Orientation::Negative,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// The same point set traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let mut c = self.clone();
        c.orientation = match self.orientation {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        };
        c
    }

    /// Corner parameter values, ascending in `[0, 2*pi)`.
    pub fn corners(&self) -> Vec<f64> {
        let native: Vec<f64> = match &self.kind {
            CurveKind::Circle { .. } | CurveKind::Ellipse { .. } => Vec::new(),
            CurveKind::Polygon { vertices } => {
                let l = vertices.len();
                (0..l).map(|k| k as f64 * TWO_PI / l as f64).collect()
            }
            CurveKind::Custom { corners, .. } => corners.clone(),
        };
        match self.orientation {
            Orientation::Negative => native,
            Orientation::Positive => {
                let mut flipped: Vec<f64> = native
                    .into_iter()
                    .map(|c| if c == 0.0 { 0.0 } else { TWO_PI - c })
                    .collect();
                flipped.sort_by(|a, b| a.partial_cmp(b).unwrap());
                flipped
            }
        }
    }

    pub fn corner_count(&self) -> usize {
        self.corners().len()
    }

    /// Evaluates the parametrization: returns `(zeta(t), zeta'(t))`.
    ///
    /// At a corner parameter the left (incoming) one-sided derivative is
    /// returned.
    pub fn evaluate(&self, t: f64) -> Result<(Complex64, Complex64)> {
        if !(0.0..=TWO_PI).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "parameter {t} outside [0, 2*pi]"
            )));
        }
        Ok(self.eval_oriented(t, Side::Left))
    }

    fn eval_oriented(&self, t: f64, side: Side) -> (Complex64, Complex64) {
        match self.orientation {
            Orientation::Negative => self.eval_native(t, side),
            Orientation::Positive => {
                let flipped_side = match side {
                    Side::Left => Side::Right,
                    Side::Right => Side::Left,
                };
                let (z, dz) = self.eval_native(TWO_PI - t, flipped_side);
                (z, -dz)
            }
        }
    }

    fn eval_native(&self, t: f64, side: Side) -> (Complex64, Complex64) {
        match &self.kind {
            CurveKind::Circle { center, radius } => {
                let e = Complex64::from_polar(*radius, -t);
                (center + e, e * Complex64::new(0.0, -1.0))
            }
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => {
                let rot = Complex64::from_polar(0.5 * major, *angle);
                let z = center + rot * Complex64::new(t.cos(), -ratio * t.sin());
                let dz = rot * Complex64::new(-t.sin(), -ratio * t.cos());
                (z, dz)
            }
            CurveKind::Polygon { vertices } => eval_polygon(vertices, t, side),
            CurveKind::Custom { eval, .. } => eval(t),
        }
    }

    /// Translates the curve by `shift`.
    pub fn translated(&self, shift: Complex64) -> Self {
        let kind = match &self.kind {
            CurveKind::Circle { center, radius } => CurveKind::Circle {
                center: center + shift,
                radius: *radius,
            },
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => CurveKind::Ellipse {
                center: center + shift,
                major: *major,
                angle: *angle,
                ratio: *ratio,
            },
            CurveKind::Polygon { vertices } => CurveKind::Polygon {
                vertices: vertices.iter().map(|v| v + shift).collect(),
            },
            CurveKind::Custom { eval, corners } => {
                let inner = eval.clone();
                CurveKind::Custom {
                    eval: Arc::new(move |t| {
                        let (z, dz) = inner(t);
                        (z + shift, dz)
                    }),
                    corners: corners.clone(),
                }
            }
        };
        BoundaryCurve {
            kind,
            orientation: self.orientation,
        }
    }

    /// Rotates the curve about the origin by `theta` radians.
    pub fn rotated(&self, theta: f64) -> Self {
        let rot = Complex64::from_polar(1.0, theta);
        let kind = match &self.kind {
            CurveKind::Circle { center, radius } => CurveKind::Circle {
                center: rot * center,
                radius: *radius,
            },
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => CurveKind::Ellipse {
                center: rot * center,
                major: *major,
                angle: angle + theta,
                ratio: *ratio,
            },
            CurveKind::Polygon { vertices } => CurveKind::Polygon {
                vertices: vertices.iter().map(|v| rot * v).collect(),
            },
            CurveKind::Custom { eval, corners } => {
                let inner = eval.clone();
                CurveKind::Custom {
                    eval: Arc::new(move |t| {
                        let (z, dz) = inner(t);
                        (rot * z, rot * dz)
                    }),
                    corners: corners.clone(),
                }
            }
        };
        BoundaryCurve {
            kind,
            orientation: self.orientation,
        }
    }

    /// Scales the curve about the origin by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        let kind = match &self.kind {
            CurveKind::Circle { center, radius } => CurveKind::Circle {
                center: factor * center,
                radius: factor * radius,
            },
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => CurveKind::Ellipse {
                center: factor * center,
                major: factor * major,
                angle: *angle,
                ratio: *ratio,
            },
            CurveKind::Polygon { vertices } => CurveKind::Polygon {
                vertices: vertices.iter().map(|v| factor * v).collect(),
            },
            CurveKind::Custom { eval, corners } => {
                let inner = eval.clone();
                CurveKind::Custom {
                    eval: Arc::new(move |t| {
                        let (z, dz) = inner(t);
                        (factor * z, factor * dz)
                    }),
                    corners: corners.clone(),
                }
            }
        };
        BoundaryCurve {
            kind,
            orientation: self.orientation,
        }
    }

    /// Center of a circle or ellipse; `None` for other kinds.
    ///
    /// For these conics the parametrization satisfies
    /// `zeta''(t) = -(zeta(t) - center)` in either orientation, which the
    /// slit-map module uses for kernel diagonals.
    pub fn conic_center(&self) -> Option<Complex64> {
        match &self.kind {
            CurveKind::Circle { center, .. } | CurveKind::Ellipse { center, .. } => Some(*center),
            _ => None,
        }
    }

    /// Ellipse parameters `(center, major, angle, ratio)` when applicable.
    pub fn ellipse_parameters(&self) -> Option<(Complex64, f64, f64, f64)> {
        match &self.kind {
            CurveKind::Ellipse {
                center,
                major,
                angle,
                ratio,
            } => Some((*center, *major, *angle, *ratio)),
            CurveKind::Circle { center, radius } => Some((*center, 2.0 * radius, 0.0, 1.0)),
            _ => None,
        }
    }

    /// Upper bound on the component diameter.
    pub fn diameter_bound(&self) -> f64 {
        match &self.kind {
            CurveKind::Circle { radius, .. } => 2.0 * radius,
            CurveKind::Ellipse { major, .. } => *major,
            CurveKind::Polygon { vertices } => {
                let mut d = 0.0;
                for (i, a) in vertices.iter().enumerate() {
                    for b in &vertices[i + 1..] {
                        d = f64::max(d, (a - b).norm());
                    }
                }
                d
            }
            CurveKind::Custom { .. } => {
                let (_, r) = self.bounding_disk();
                2.0 * r
            }
        }
    }

    /// A disk containing the curve: `(center, radius)`.
    ///
    /// Exact for circles, ellipses and polygons; sampled for custom curves.
    pub fn bounding_disk(&self) -> (Complex64, f64) {
        match &self.kind {
            CurveKind::Circle { center, radius } => (*center, *radius),
            CurveKind::Ellipse { center, major, .. } => (*center, 0.5 * major),
            CurveKind::Polygon { vertices } => {
                let c = vertices.iter().sum::<Complex64>() / vertices.len() as f64;
                let r = vertices
                    .iter()
                    .map(|v| (v - c).norm())
                    .fold(0.0, f64::max);
                (c, r)
            }
            CurveKind::Custom { eval, .. } => {
                let samples = 256;
                let pts: Vec<Complex64> = (0..samples)
                    .map(|q| eval(q as f64 * TWO_PI / samples as f64).0)
                    .collect();
                let c = pts.iter().sum::<Complex64>() / samples as f64;
                let r = pts.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
                // Sampled bound; inflate a little to stay conservative.
                (c, r * 1.05 + 1e-12)
            }
        }
    }

    fn sample_points(&self, count: usize) -> Vec<Complex64> {
        (0..count)
            .map(|q| self.eval_oriented(q as f64 * TWO_PI / count as f64, Side::Left).0)
            .collect()
    }
}

fn eval_polygon(vertices: &[Complex64], t: f64, side: Side) -> (Complex64, Complex64) {
    let l = vertices.len();
    let span = TWO_PI / l as f64;
    let scaled = t / span;
    let mut k = scaled.floor() as usize;
    let mut frac = scaled - k as f64;
    if k >= l {
        // t == 2*pi wraps to the starting corner.
        k = 0;
        frac = 0.0;
    }
    let at_corner = frac == 0.0;
    let (edge_start, edge_index) = if at_corner && side == Side::Left {
        // Left derivative at a corner: the incoming edge.
        let prev = (k + l - 1) % l;
        (prev, prev)
    } else {
        (k, k)
    };
    let v0 = vertices[edge_start];
    let v1 = vertices[(edge_index + 1) % l];
    let dz = (v1 - v0) / span;
    let z = if at_corner {
        vertices[k]
    } else {
        v0 + (v1 - v0) * frac
    };
    (z, dz)
}

/// Orientation sign of the triangle `(a, b, c)`.
fn orient(a: Complex64, b: Complex64, c: Complex64) -> f64 {
    let ab = b - a;
    let ac = c - a;
    ab.re * ac.im - ab.im * ac.re
}

fn on_segment(a: Complex64, b: Complex64, p: Complex64) -> bool {
    orient(a, b, p) == 0.0
        && p.re >= a.re.min(b.re)
        && p.re <= a.re.max(b.re)
        && p.im >= a.im.min(b.im)
        && p.im <= a.im.max(b.im)
}

/// Closed-segment intersection test.
fn segments_intersect(a1: Complex64, a2: Complex64, b1: Complex64, b2: Complex64) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(b1, b2, a1) || on_segment(b1, b2, a2) || on_segment(a1, a2, b1) || on_segment(a1, a2, b2)
}

/// Distance between closed segments `[a1, a2]` and `[b1, b2]`.
pub(crate) fn segment_distance(a1: Complex64, a2: Complex64, b1: Complex64, b2: Complex64) -> f64 {
    if segments_intersect(a1, a2, b1, b2) {
        return 0.0;
    }
    let d = point_segment_distance(a1, b1, b2)
        .min(point_segment_distance(a2, b1, b2))
        .min(point_segment_distance(b1, a1, a2))
        .min(point_segment_distance(b2, a1, a2));
    d
}

fn point_segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let s = s.clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// One rectilinear slit with its derived angle, length and center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slit {
    pub a: Complex64,
    pub b: Complex64,
    /// Angle of `b - a` with the positive x-axis, in `(-pi, pi]`.
    pub theta: f64,
    pub length: f64,
    pub center: Complex64,
}

/// Builds a slit record from its endpoints.
pub fn slit_from_endpoints(a: Complex64, b: Complex64) -> Result<Slit> {
    if a == b {
        return Err(Error::InvalidGeometry(
            "slit endpoints must be distinct".into(),
        ));
    }
    let d = b - a;
    let mut theta = d.im.atan2(d.re);
    if theta <= -PI {
        theta = PI;
    }
    Ok(Slit {
        a,
        b,
        theta,
        length: d.norm(),
        center: (a + b) / 2.0,
    })
}

/// A compact set made of finitely many pairwise disjoint rectilinear slits.
#[derive(Debug, Clone)]
pub struct SlitSet {
    slits: Vec<Slit>,
}

impl SlitSet {
    pub fn new(segments: Vec<(Complex64, Complex64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidGeometry("slit set is empty".into()));
        }
        let slits: Vec<Slit> = segments
            .iter()
            .map(|&(a, b)| slit_from_endpoints(a, b))
            .collect::<Result<_>>()?;
        for i in 0..slits.len() {
            for j in i + 1..slits.len() {
                let d = segment_distance(slits[i].a, slits[i].b, slits[j].a, slits[j].b);
                if d <= 0.0 {
                    return Err(Error::InvalidGeometry(format!(
                        "slits {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(SlitSet { slits })
    }

    pub fn slits(&self) -> &[Slit] {
        &self.slits
    }

    pub fn len(&self) -> usize {
        self.slits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slits.is_empty()
    }

    /// Rotates every slit about the origin.
    pub fn rotated(&self, theta: f64) -> Result<Self> {
        let rot = Complex64::from_polar(1.0, theta);
        SlitSet::new(self.slits.iter().map(|s| (rot * s.a, rot * s.b)).collect())
    }
}

/// Level-`k` stage of the middle-thirds construction on `[-1, 1]`:
/// `2^k` real segments of length `2 / 3^k`.
pub fn cantor_slits(k: u32) -> Result<SlitSet> {
    if k > 12 {
        return Err(Error::ResourceLimit(format!(
            "cantor level {k} exceeds the cap of 12 (2^{k} components)"
        )));
    }
    let mut segs = vec![(-1.0_f64, 1.0_f64)];
    for _ in 0..k {
        let mut next = Vec::with_capacity(2 * segs.len());
        for (a, b) in segs {
            let third = (b - a) / 3.0;
            next.push((a, a + third));
            next.push((b - third, b));
        }
        segs = next;
    }
    SlitSet::new(
        segs.into_iter()
            .map(|(a, b)| (Complex64::new(a, 0.0), Complex64::new(b, 0.0)))
            .collect(),
    )
}

/// The component list of a [`CompactSetSpec`].
#[derive(Debug, Clone)]
pub enum Components {
    Curves(Vec<BoundaryCurve>),
    Slits(SlitSet),
}

/// A compact planar set: either a union of Jordan domains or a slit set,
/// with optional per-component labels for set-algebra experiments.
#[derive(Debug, Clone)]
pub struct CompactSetSpec {
    components: Components,
    labels: Vec<Option<String>>,
}

impl CompactSetSpec {
    pub fn from_curves(curves: Vec<BoundaryCurve>) -> Result<Self> {
        Self::from_labeled_curves(curves.into_iter().map(|c| (c, None)).collect())
    }

    pub fn from_labeled_curves(curves: Vec<(BoundaryCurve, Option<String>)>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidGeometry(
                "compact set needs at least one component".into(),
            ));
        }
        let (curves, labels): (Vec<_>, Vec<_>) = curves.into_iter().unzip();
        check_curves_disjoint(&curves)?;
        Ok(CompactSetSpec {
            components: Components::Curves(curves),
            labels,
        })
    }

    pub fn from_slits(slits: SlitSet) -> Result<Self> {
        let labels = vec![None; slits.len()];
        Ok(CompactSetSpec {
            components: Components::Slits(slits),
            labels,
        })
    }

    pub fn from_labeled_slits(slits: SlitSet, labels: Vec<Option<String>>) -> Result<Self> {
        if labels.len() != slits.len() {
            return Err(Error::InvalidParameter(
                "one label slot per slit is required".into(),
            ));
        }
        Ok(CompactSetSpec {
            components: Components::Slits(slits),
            labels,
        })
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    pub fn component_count(&self) -> usize {
        match &self.components {
            Components::Curves(c) => c.len(),
            Components::Slits(s) => s.len(),
        }
    }

    pub fn is_slit_set(&self) -> bool {
        matches!(self.components, Components::Slits(_))
    }

    pub fn curves(&self) -> Result<&[BoundaryCurve]> {
        match &self.components {
            Components::Curves(c) => Ok(c),
            Components::Slits(_) => Err(Error::InvalidParameter(
                "operation requires Jordan curves, got a slit set".into(),
            )),
        }
    }

    pub fn slits(&self) -> Result<&SlitSet> {
        match &self.components {
            Components::Slits(s) => Ok(s),
            Components::Curves(_) => Err(Error::InvalidParameter(
                "operation requires a slit set, got Jordan curves".into(),
            )),
        }
    }

    /// Sum of per-component diameter bounds (a crude capacity upper bound
    /// scale used by sanity checks).
    pub fn total_diameter_bound(&self) -> f64 {
        match &self.components {
            Components::Curves(c) => c.iter().map(|b| b.diameter_bound()).sum(),
            Components::Slits(s) => s.slits().iter().map(|s| s.length).sum(),
        }
    }

    /// The sub-spec of components carrying `label`.
    pub fn labeled_subset(&self, label: &str) -> Result<CompactSetSpec> {
        let keep: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_deref() == Some(label))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no component carries label {label:?}"
            )));
        }
        match &self.components {
            Components::Curves(c) => Self::from_labeled_curves(
                keep.iter()
                    .map(|&i| (c[i].clone(), self.labels[i].clone()))
                    .collect(),
            ),
            Components::Slits(s) => {
                let slits =
                    SlitSet::new(keep.iter().map(|&i| (s.slits()[i].a, s.slits()[i].b)).collect())?;
                let labels = keep.iter().map(|&i| self.labels[i].clone()).collect();
                Self::from_labeled_slits(slits, labels)
            }
        }
    }

    /// Parses the JSON geometry format.
    pub fn from_json_str(json: &str) -> Result<Self> {
        let parsed: GeometryFile = serde_json::from_str(json)?;
        let mut curves: Vec<(BoundaryCurve, Option<String>)> = Vec::new();
        let mut slit_segments: Vec<(Complex64, Complex64)> = Vec::new();
        let mut slit_labels: Vec<Option<String>> = Vec::new();
        for comp in parsed.components {
            match comp {
                ComponentJson::Circle {
                    center,
                    radius,
                    label,
                } => curves.push((
                    BoundaryCurve::circle(Complex64::new(center[0], center[1]), radius)?,
                    label,
                )),
                ComponentJson::Ellipse {
                    center,
                    major,
                    angle,
                    ratio,
                    label,
                } => curves.push((
                    BoundaryCurve::ellipse(Complex64::new(center[0], center[1]), major, angle, ratio)?,
                    label,
                )),
                ComponentJson::Polygon { vertices, label } => curves.push((
                    BoundaryCurve::polygon(
                        vertices
                            .into_iter()
                            .map(|v| Complex64::new(v[0], v[1]))
                            .collect(),
                    )?,
                    label,
                )),
                ComponentJson::Slit { a, b, label } => {
                    slit_segments
                        .push((Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1])));
                    slit_labels.push(label);
                }
            }
        }
        match (curves.is_empty(), slit_segments.is_empty()) {
            (false, true) => Self::from_labeled_curves(curves),
            (true, false) => Self::from_labeled_slits(SlitSet::new(slit_segments)?, slit_labels),
            (true, true) => Err(Error::InvalidGeometry("geometry file has no components".into())),
            (false, false) => Err(Error::InvalidGeometry(
                "mixing slits and Jordan curves in one geometry is not supported".into(),
            )),
        }
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// Winding number of the closed polyline `pts` around `p`.
fn winding_number(pts: &[Complex64], p: Complex64) -> f64 {
    let mut total = 0.0;
    for k in 0..pts.len() {
        let a = pts[k] - p;
        let b = pts[(k + 1) % pts.len()] - p;
        let cross = a.re * b.im - a.im * b.re;
        let dot = a.re * b.re + a.im * b.im;
        total += cross.atan2(dot);
    }
    total / TWO_PI
}

fn check_curves_disjoint(curves: &[BoundaryCurve]) -> Result<()> {
    let disks: Vec<(Complex64, f64)> = curves.iter().map(|c| c.bounding_disk()).collect();
    let mut cached_samples: Vec<Option<Vec<Complex64>>> = vec![None; curves.len()];
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let gap = (disks[i].0 - disks[j].0).norm() - disks[i].1 - disks[j].1;
            if gap > DISJOINT_THRESHOLD {
                continue;
            }
            // Bounding disks are close: fall back to sampled polylines.
            if cached_samples[i].is_none() {
                cached_samples[i] = Some(curves[i].sample_points(64));
            }
            if cached_samples[j].is_none() {
                cached_samples[j] = Some(curves[j].sample_points(64));
            }
            let (a, b) = (
                cached_samples[i].as_ref().unwrap(),
                cached_samples[j].as_ref().unwrap(),
            );
            let mut min_d = f64::INFINITY;
            for p in a {
                for q in b {
                    min_d = min_d.min((p - q).norm());
                }
            }
            if min_d <= DISJOINT_THRESHOLD {
                return Err(Error::InvalidGeometry(format!(
                    "components {i} and {j} are not disjoint (sampled distance {min_d:.3e})"
                )));
            }
            // Crossing boundaries or one component inside the other.
            let crossing = (0..a.len()).any(|k| {
                let (a1, a2) = (a[k], a[(k + 1) % a.len()]);
                (0..b.len()).any(|l| {
                    segments_intersect(a1, a2, b[l], b[(l + 1) % b.len()])
                })
            });
            if crossing
                || winding_number(a, b[0]).abs() > 0.5
                || winding_number(b, a[0]).abs() > 0.5
            {
                return Err(Error::InvalidGeometry(format!(
                    "components {i} and {j} overlap"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    components: Vec<ComponentJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ComponentJson {
    Circle {
        center: [f64; 2],
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Ellipse {
        center: [f64; 2],
        major: f64,
        angle: f64,
        ratio: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Slit {
        a: [f64; 2],
        b: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}
