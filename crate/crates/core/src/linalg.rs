//! Minimal 2×2 linear algebra for planar linearizations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Self {
        Mat2([[self.0[0][0], self.0[1][0]], [self.0[0][1], self.0[1][1]]])
    }

    pub fn mul_vec(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * x[0] + self.0[0][1] * x[1],
            self.0[1][0] * x[0] + self.0[1][1] * x[1],
        ]
    }

    /// Largest absolute entry; used as the scale for rank and
    /// hyperbolicity tolerances.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Eigenvalues ordered by real part (ascending).
    ///
    /// Uses the cancellation-free form of the quadratic formula so that a
    /// near-zero eigenvalue of a nearly singular matrix keeps full relative
    /// accuracy.
    pub fn eigenvalues(&self) -> [Complex64; 2] {
        let tr = self.trace();
        let det = self.det();
        let half = 0.5 * tr;
        // discriminant written without forming tr^2 - 4 det directly
        let a = self.0[0][0];
        let d = self.0[1][1];
        let disc = 0.25 * (a - d) * (a - d) + self.0[0][1] * self.0[1][0];
        if disc >= 0.0 {
            let s = disc.sqrt();
            let big = if half >= 0.0 { half + s } else { half - s };
            let small = if big != 0.0 { det / big } else { 0.0 };
            let (l1, l2) = if big < small { (big, small) } else { (small, big) };
            [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)]
        } else {
            let s = (-disc).sqrt();
            [Complex64::new(half, -s), Complex64::new(half, s)]
        }
    }

    /// Unit eigenvector for a real eigenvalue `lambda`.
    pub fn real_eigenvector(&self, lambda: f64) -> [f64; 2] {
        let [[a, b], [c, d]] = self.0;
        // rows of (A - lambda I) are both orthogonal to the eigenvector;
        // pick the better-conditioned one
        let r1 = [a - lambda, b];
        let r2 = [c, d - lambda];
        let n1 = r1[0].hypot(r1[1]);
        let n2 = r2[0].hypot(r2[1]);
        let v = if n1 >= n2 && n1 > 0.0 {
            [-r1[1], r1[0]]
        } else if n2 > 0.0 {
            [-r2[1], r2[0]]
        } else {
            [1.0, 0.0]
        };
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let m = Mat2::new(-2.0, 0.0, 0.0, 3.0);
        let ev = m.eigenvalues();
        assert_eq!(ev[0].re, -2.0);
        assert_eq!(ev[1].re, 3.0);
    }

    #[test]
    fn symmetric_example() {
        let m = Mat2::new(-2.0, -1.0, -1.0, -2.0);
        let ev = m.eigenvalues();
        assert!((ev[0].re + 3.0).abs() < 1e-15);
        assert!((ev[1].re + 1.0).abs() < 1e-15);
        let e = m.real_eigenvector(-1.0);
        let r = m.mul_vec(e);
        assert!((r[0] + e[0]).abs() < 1e-14 && (r[1] + e[1]).abs() < 1e-14);
    }

    #[test]
    fn complex_pair() {
        let m = Mat2::new(0.0, -1.0, 1.0, 0.0);
        let ev = m.eigenvalues();
        assert!((ev[0].im + 1.0).abs() < 1e-15 && (ev[1].im - 1.0).abs() < 1e-15);
    }

    #[test]
    fn near_singular_small_eigenvalue_is_accurate() {
        // det = 1e-14 exactly representable up to rounding; small eigenvalue ~ det / trace
        let m = Mat2::new(-1.0, 1.0, 1.0, -1.0 + 1e-14);
        let ev = m.eigenvalues();
        let product = ev[0].re * ev[1].re;
        assert!((product - m.det()).abs() < 1e-20);
    }
}
