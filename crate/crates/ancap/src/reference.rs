//! Closed-form reference capacities.
//!
//! Exact values used to validate the solver: disk, square, complex line
//! segment, unions of disjoint real intervals, and the two symmetric disks
//! whose capacity is known through the second Jacobi theta function.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gamma(1/4) to full f64 precision.
///
/// Checked constant; `tests` cross-validate it against a Lanczos
/// evaluation of the gamma function.
pub const GAMMA_QUARTER: f64 = 3.625_609_908_221_908_3;

/// An exact capacity value together with the formula that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactValue {
    pub value: f64,
    /// Short identifier of the closed form, e.g. `"disk"` or `"two-disks"`.
    pub formula: &'static str,
    /// Human-readable echo of the inputs.
    pub inputs: String,
}

impl ExactValue {
    fn new(value: f64, formula: &'static str, inputs: String) -> Self {
        ExactValue {
            value,
            formula,
            inputs,
        }
    }
}

/// Second Jacobi theta function `theta2(q) = 2 q^{1/4} prod_{j>=1} (1-q^{2j})(1+q^{2j})^2`.
///
/// The product is truncated once its factors are within 1e-16 of 1, which
/// happens geometrically fast for `q < 1`.
pub fn jacobi_theta2(q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "jacobi_theta2 requires 0 <= q < 1, got {q}"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let mut product = 1.0;
    let mut q2j = 1.0; // q^{2j}
    for _ in 1..=10_000 {
        q2j *= q * q;
        let factor = (1.0 - q2j) * (1.0 + q2j) * (1.0 + q2j);
        product *= factor;
        if (factor - 1.0).abs() < 1e-16 {
            break;
        }
    }
    Ok(2.0 * q.powf(0.25) * product)
}

/// Capacity of two disks `|z - c| <= r` and `|z + c| <= r` with `0 < r < c`.
///
/// `gamma = (r / 2 sqrt(q)) (1 - q) theta2(q)^2` with
/// `q = (p - sqrt(p^2-1)) / (p + sqrt(p^2-1))`, `p = c/r`.
pub fn exact_two_disks(c: f64, r: f64) -> Result<ExactValue> {
    if !(r > 0.0 && r < c) {
        return Err(Error::InvalidParameter(format!(
            "two-disk formula requires 0 < r < c, got r={r}, c={c}"
        )));
    }
    let p = c / r;
    let s = (p * p - 1.0).sqrt();
    let q = (p - s) / (p + s);
    let theta = jacobi_theta2(q)?;
    let value = r / (2.0 * q.sqrt()) * (1.0 - q) * theta * theta;
    Ok(ExactValue::new(value, "two-disks", format!("c={c}, r={r}")))
}

/// Capacity of a square with side length `side`:
/// `gamma = side * Gamma(1/4)^2 / (4 sqrt(pi^3))`.
pub fn exact_square(side: f64) -> Result<ExactValue> {
    if side <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "square side must be positive, got {side}"
        )));
    }
    let value = side * GAMMA_QUARTER * GAMMA_QUARTER / (4.0 * std::f64::consts::PI.powi(3).sqrt());
    Ok(ExactValue::new(value, "square", format!("side={side}")))
}

/// Capacity of the line segment `[a, b]`: `gamma = |b - a| / 4`.
pub fn exact_segment(a: Complex64, b: Complex64) -> Result<ExactValue> {
    if a == b {
        return Err(Error::InvalidParameter(
            "segment endpoints must be distinct".into(),
        ));
    }
    Ok(ExactValue::new(
        (b - a).norm() / 4.0,
        "segment",
        format!("a={a}, b={b}"),
    ))
}

/// Capacity of a disk of radius `r`: `gamma = r`.
pub fn exact_disk(r: f64) -> Result<ExactValue> {
    if r <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "disk radius must be positive, got {r}"
        )));
    }
    Ok(ExactValue::new(r, "disk", format!("r={r}")))
}

/// Capacity of a union of disjoint real intervals `[a_j, b_j]`:
/// a quarter of the total length.
///
/// Intervals must be ordered `a_1 < b_1 < a_2 < ... < b_m`.
pub fn exact_real_union(intervals: &[(f64, f64)]) -> Result<ExactValue> {
    if intervals.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one interval is required".into(),
        ));
    }
    let mut prev_end = f64::NEG_INFINITY;
    let mut total = 0.0;
    for &(a, b) in intervals {
        if !(a < b) {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] is degenerate or reversed"
            )));
        }
        if a <= prev_end {
            return Err(Error::InvalidParameter(format!(
                "interval [{a}, {b}] overlaps its predecessor"
            )));
        }
        prev_end = b;
        total += b - a;
    }
    Ok(ExactValue::new(
        total / 4.0,
        "real-union",
        format!("{} intervals, |E|={total}", intervals.len()),
    ))
}

/// Gamma function via the Lanczos approximation (g = 7, 9 coefficients).
///
/// Only used to cross-check [`GAMMA_QUARTER`]; the solver itself relies on
/// the stored constant.
pub fn lanczos_gamma(x: f64) -> f64 {
    // Coefficients for g = 7, n = 9 (Godfrey's table).
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * lanczos_gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = COEFFS[0];
        for (i, &c) in COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent series representation `theta2(q) = 2 sum_{k>=0} q^{(k+1/2)^2}`.
    fn theta2_series(q: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..200 {
            let e = (k as f64 + 0.5) * (k as f64 + 0.5);
            sum += q.powf(e);
        }
        2.0 * sum
    }

    #[test]
    fn theta2_at_zero() {
        assert_eq!(jacobi_theta2(0.0).unwrap(), 0.0);
    }

    #[test]
    fn theta2_rejects_q_at_or_above_one() {
        assert!(jacobi_theta2(1.0).is_err());
        assert!(jacobi_theta2(1.5).is_err());
        assert!(jacobi_theta2(-0.1).is_err());
    }

    #[test]
    fn theta2_product_matches_series_oracle() {
        for &q in &[0.01, 0.1, 0.3, 0.6] {
            let product = jacobi_theta2(q).unwrap();
            let series = theta2_series(q);
            assert!(
                (product - series).abs() <= 1e-14 * series.abs(),
                "q={q}: product {product} vs series {series}"
            );
        }
    }

    #[test]
    fn theta2_value_at_two_disk_modulus() {
        // gamma = sqrt(3) * theta2((2 - sqrt(3))^2)^2 = 1.8755950190971197.
        let q = (2.0 - 3.0_f64.sqrt()).powi(2);
        let theta = jacobi_theta2(q).unwrap();
        let gamma = 3.0_f64.sqrt() * theta * theta;
        assert!(
            (gamma - 1.875_595_019_097_119_7).abs() < 1e-14,
            "gamma={gamma}"
        );
    }

    #[test]
    fn two_disks_headline_value() {
        let v = exact_two_disks(2.0, 1.0).unwrap();
        assert!((v.value - 1.875_595_019_097_119_7).abs() < 1e-14);
    }

    #[test]
    fn two_disks_rejects_touching() {
        assert!(exact_two_disks(1.0, 1.0).is_err());
        assert!(exact_two_disks(1.0, 2.0).is_err());
    }

    #[test]
    fn two_disks_small_radius_is_subadditive_and_monotone() {
        let v = exact_two_disks(3.0, 0.1).unwrap().value;
        assert!(v > 0.0 && v < 0.2);
        // Monotone in r at fixed c (finite-difference check on the closed form).
        let mut prev = 0.0;
        for &r in &[0.05, 0.1, 0.2, 0.4, 0.8] {
            let v = exact_two_disks(3.0, r).unwrap().value;
            assert!(v > prev, "r={r}: {v} <= {prev}");
            prev = v;
        }
    }

    #[test]
    fn two_disks_scaling_homogeneity() {
        for &(c, r) in &[(2.0, 1.0), (0.5, 0.1), (3.0, 2.0)] {
            let lhs = exact_two_disks(c, r).unwrap().value;
            let rhs = r * exact_two_disks(c / r, 1.0).unwrap().value;
            assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs(), "c={c} r={r}");
        }
    }

    #[test]
    fn gamma_quarter_matches_lanczos() {
        let g = lanczos_gamma(0.25);
        assert!(
            (g - GAMMA_QUARTER).abs() <= 1e-15 * GAMMA_QUARTER,
            "lanczos gives {g}"
        );
    }

    #[test]
    fn square_values() {
        // Side sqrt(2): the square with corners 1, -i, -1, i.
        let v = exact_square(2.0_f64.sqrt()).unwrap();
        assert!((v.value - 0.834_626_841_674_073).abs() < 1e-14);
        // Side 2: Gamma^2(1/4) / (2 sqrt(pi^3)).
        let v2 = exact_square(2.0).unwrap();
        assert!((v2.value - 1.180_340_599_016_1).abs() < 1e-12);
        // Side 4 is twice side 2.
        let v4 = exact_square(4.0).unwrap();
        assert!((v4.value - 2.0 * v2.value).abs() < 1e-14);
        assert!(exact_square(0.0).is_err());
    }

    #[test]
    fn segment_values() {
        let v = exact_segment(Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(v.value, 0.5);
        let z = Complex64::new(0.0, 0.0);
        assert!(exact_segment(z, z).is_err());
    }

    #[test]
    fn disk_values() {
        assert_eq!(exact_disk(2.5).unwrap().value, 2.5);
        assert!(exact_disk(0.0).is_err());
    }

    #[test]
    fn real_union_values() {
        // Cantor level 3: 8 intervals of length 2/27, gamma = (1/2)(2/3)^3 = 4/27.
        let len: f64 = 2.0 / 27.0;
        let mut intervals = Vec::new();
        let mut segs = vec![(-1.0, 1.0)];
        for _ in 0..3 {
            let mut next = Vec::new();
            for (a, b) in segs {
                let third = (b - a) / 3.0;
                next.push((a, a + third));
                next.push((b - third, b));
            }
            segs = next;
        }
        for (a, b) in segs {
            assert!((b - a - len).abs() < 1e-15);
            intervals.push((a, b));
        }
        let v = exact_real_union(&intervals).unwrap();
        assert!((v.value - 4.0 / 27.0).abs() < 1e-15);

        // A single interval equals the segment formula.
        let one = exact_real_union(&[(-1.0, 1.0)]).unwrap();
        let seg = exact_segment(Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(one.value, seg.value);

        // Overlap is rejected.
        assert!(exact_real_union(&[(0.0, 1.0), (0.5, 2.0)]).is_err());
        assert!(exact_real_union(&[(1.0, 0.5)]).is_err());
        assert!(exact_real_union(&[]).is_err());
    }
}
