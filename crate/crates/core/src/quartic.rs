//! Dense quartic utilities: companion-matrix roots and the classical discriminant.
//!
//! Coefficients are stored highest degree first, `[c4, c3, c2, c1, c0]`.

use nalgebra::{Complex, Matrix4};

/// All four complex roots of a quartic with `c4 != 0`.
pub fn roots(coeffs: &[f64; 5]) -> [Complex<f64>; 4] {
    let [c4, c3, c2, c1, c0] = *coeffs;
    debug_assert!(c4 != 0.0);
    // Frobenius companion matrix of the monic polynomial.
    let m = Matrix4::new(
        -c3 / c4, -c2 / c4, -c1 / c4, -c0 / c4,
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let ev = m.complex_eigenvalues();
    [ev[0], ev[1], ev[2], ev[3]]
}

/// Horner evaluation.
#[cfg(test)]
pub fn eval(coeffs: &[f64; 5], u: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * u + c)
}

/// Discriminant of `a u⁴ + b u³ + c u² + d u + e`.
///
/// Positive when the roots are four real or two conjugate pairs, negative with
/// exactly two real roots, zero on a repeated root.
pub fn discriminant(coeffs: &[f64; 5]) -> f64 {
    let [a, b, c, d, e] = *coeffs;
    256.0 * a.powi(3) * e.powi(3) - 192.0 * a * a * b * d * e * e - 128.0 * a * a * c * c * e * e
        + 144.0 * a * a * c * d * d * e
        - 27.0 * a * a * d.powi(4)
        + 144.0 * a * b * b * c * e * e
        - 6.0 * a * b * b * d * d * e
        - 80.0 * a * b * c * c * d * e
        + 18.0 * a * b * c * d.powi(3)
        + 16.0 * a * c.powi(4) * e
        - 4.0 * a * c.powi(3) * d * d
        - 27.0 * b.powi(4) * e * e
        + 18.0 * b.powi(3) * c * d * e
        - 4.0 * b.powi(3) * d.powi(3)
        - 4.0 * b * b * c.powi(3) * e
        + b * b * c * c * d * d
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Expands `k ∏ (u − r_i)` for real roots.
    fn from_roots(k: f64, r: [f64; 4]) -> [f64; 5] {
        let mut p = vec![k];
        for root in r {
            let mut next = vec![0.0; p.len() + 1];
            for (i, &c) in p.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c * root;
            }
            p = next;
        }
        [p[0], p[1], p[2], p[3], p[4]]
    }

    /// Discriminant from its definition `k⁶ ∏_{i<j} (r_i − r_j)²`.
    fn disc_from_roots(k: f64, r: &[Complex<f64>]) -> f64 {
        let mut prod = Complex::new(k.powi(6), 0.0);
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                prod *= (r[i] - r[j]) * (r[i] - r[j]);
            }
        }
        prod.re
    }

    #[test]
    fn roots_of_known_polynomial() {
        let p = from_roots(2.0, [-1.5, 0.25, 1.0, 3.0]);
        let mut found: Vec<f64> = roots(&p).iter().map(|z| z.re).collect();
        found.sort_by(f64::total_cmp);
        for (a, b) in found.iter().zip([-1.5, 0.25, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12, "{found:?}");
        }
        for z in roots(&p) {
            assert!(z.im.abs() < 1e-12);
            assert!(eval(&p, z.re).abs() < 1e-10);
        }
    }

    #[test]
    fn discriminant_matches_root_product() {
        let r = [-1.5, 0.25, 1.0, 3.0];
        let p = from_roots(-0.7, r);
        let z: Vec<Complex<f64>> = r.iter().map(|&x| Complex::new(x, 0.0)).collect();
        let want = disc_from_roots(-0.7, &z);
        assert!((discriminant(&p) - want).abs() < 1e-9 * want.abs());
        assert!(discriminant(&p) > 0.0);

        // (u² + 1)(u − 1)(u + 2): one conjugate pair, two real roots.
        let p = [1.0, 1.0, -1.0, 1.0, -2.0];
        let z = roots(&p);
        assert!(discriminant(&p) < 0.0);
        let want = disc_from_roots(1.0, &z);
        assert!((discriminant(&p) - want).abs() < 1e-9 * want.abs());

        let p = from_roots(1.0, [1.0, 1.0, 2.0, -3.0]);
        assert!(discriminant(&p).abs() < 1e-9);
    }
}
