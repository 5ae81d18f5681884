//! Small fixed-size types and dense complex matrix helpers.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;
/// 2x2 complex block indexed by orbitals `(sigma, sigma')`.
pub type C2 = Matrix2<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

pub fn cis(phase: f64) -> Complex64 {
    Complex64::from_polar(1.0, phase)
}

/// Integer vector as `f64` components.
pub fn ivec(n: [i64; 2]) -> Vec2 {
    Vec2::new(n[0] as f64, n[1] as f64)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |H - H^dagger|` over entries.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Spectral norm through the singular values.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
        .singular_values()
        .map_or(f64::NAN, |s| s.into_iter().fold(0.0_f64, f64::max))
}

/// Maximum absolute row sum, an upper bound for the spectral norm of a Hermitian matrix.
pub fn max_row_sum(m: &CMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn c2_max_abs(m: &C2) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthogonal() {
        let r = rotation(0.3);
        let id = r.transpose() * r;
        assert!((id - Mat2::identity()).abs().max() < 1e-15);
        let v = r * Vec2::new(1.0, 0.0);
        assert!((v - Vec2::new(0.3f64.cos(), 0.3f64.sin())).norm() < 1e-15);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(-3.0, 0.0),
            Complex64::new(2.0, 0.0),
        ]));
        assert!((operator_norm(&m) - 3.0).abs() < 1e-14);
        assert!((max_row_sum(&m) - 3.0).abs() < 1e-14);
    }
}
