//! Minimal 2×2 real matrix arithmetic for the per-coordinate momentum dynamics.

use std::ops::Mul;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        ((s + disc) / 2.0).sqrt()
    }

    /// `self^k` by binary exponentiation.
    pub fn pow(&self, mut k: u64) -> Mat2 {
        let mut base = *self;
        let mut acc = Mat2::IDENTITY;
        while k > 0 {
            if k & 1 == 1 {
                acc = base * acc;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = self.0;
        let b = rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow_matches_repeated_product() {
        let m = Mat2([[0.9, -0.3], [1.0, 0.0]]);
        let mut acc = Mat2::IDENTITY;
        for k in 0..20u64 {
            let p = m.pow(k);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((p.0[i][j] - acc.0[i][j]).abs() < 1e-14);
                }
            }
            acc = m * acc;
        }
    }

    #[test]
    fn spectral_norm_of_diagonal_and_nilpotent() {
        assert!((Mat2([[3.0, 0.0], [0.0, -4.0]]).spectral_norm() - 4.0).abs() < 1e-14);
        assert!((Mat2([[0.0, 0.0], [1.0, 0.0]]).spectral_norm() - 1.0).abs() < 1e-14);
    }
}
