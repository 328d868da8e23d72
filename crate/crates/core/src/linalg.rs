//! Small dense linear-algebra routines that nalgebra only offers with `std`.

use nalgebra::DMatrix;
#[allow(unused_imports)] // unused when a dependent enables std float methods
use num_traits::Float;

/// Matrix exponential by scaling and squaring with a degree-18 Taylor core.
///
/// The matrix is scaled so its 1-norm is at most 1/4; the truncated series
/// is then accurate to well below machine precision before squaring back.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let scaled = a * 0.5f64.powi(squarings);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves the continuous Lyapunov equation A P + P Aᵀ + Q = 0.
///
/// Uses the Kronecker form (I⊗A + A⊗I) vec(P) = −vec(Q), which is fine for
/// the handful of states here. Returns `None` if the operator is singular,
/// which happens when A has eigenvalues λ_i + λ_j = 0.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut k = DMatrix::<f64>::zeros(n * n, n * n);
    // vec is column-major: index (i, j) ↦ i + n j
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for m in 0..n {
                k[(row, m + n * j)] += a[(i, m)];
                k[(row, i + n * m)] += a[(j, m)];
            }
        }
    }
    let rhs = DMatrix::from_iterator(n * n, 1, q.iter().map(|x| -x));
    let sol = k.lu().solve(&rhs)?;
    let p = DMatrix::from_iterator(n, n, sol.iter().copied());
    Some((&p + p.transpose()) * 0.5)
}

/// A factor L with L Lᵀ = M for a symmetric positive semidefinite M.
///
/// Works on the correlation matrix D⁻¹MD⁻¹ so that wildly different
/// variances do not spoil the eigen-decomposition; slightly negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let d: alloc::vec::Vec<f64> = (0..n).map(|i| m[(i, i)].max(0.0).sqrt()).collect();
    let mut r = m.clone();
    for i in 0..n {
        for j in 0..n {
            let s = d[i] * d[j];
            r[(i, j)] = if s > 0.0 { m[(i, j)] / s } else { 0.0 };
        }
    }
    let r = (&r + r.transpose()) * 0.5;
    let eig = r.symmetric_eigen();
    let mut l = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            l[(i, j)] *= s * d[i];
        }
    }
    l
}

/// Process-noise discretization of dx = A x dt + dW with E[dW dWᵀ] = Q_c dt.
///
/// Returns (Φ, Q_d) with Φ = e^{A dt} and Q_d = ∫₀^dt e^{As} Q_c e^{Aᵀs} ds,
/// via the block exponential of [[−A, Q_c], [0, Aᵀ]]·dt. Q_c is rescaled to
/// unit norm first because Q_d is linear in it.
pub fn discretize(a: &DMatrix<f64>, qc: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let qn = qc.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let alpha = if qn > 0.0 { 1.0 / qn } else { 1.0 };
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a * dt));
    big.view_mut((0, n), (n, n)).copy_from(&(qc * (alpha * dt)));
    big.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * dt));
    let e = expm(&big);
    let phi = e.view((n, n), (n, n)).transpose();
    let f12 = e.view((0, n), (n, n)).into_owned();
    let q = (&phi * f12) / alpha;
    let q = (&q + q.transpose()) * 0.5;
    (phi, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    #[test]
    fn expm_rotation() {
        let t = 2.7;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&a);
        let expect = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert!(max_abs(&(e - expect)) < 1e-13);
    }

    proptest! {
        #[test]
        fn expm_matches_eigen_decomposition(
            d in proptest::collection::vec(-3.0f64..3.0, 4),
            off in proptest::collection::vec(-0.3f64..0.3, 16),
        ) {
            // A = P D P⁻¹ with P near the identity, so exp(A) = P exp(D) P⁻¹
            let p = DMatrix::<f64>::identity(4, 4) + DMatrix::from_row_slice(4, 4, &off);
            let p_inv = p.clone().try_inverse().unwrap();
            let a = &p * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())) * &p_inv;
            let e_d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, d.iter().map(|x| num_traits::Float::exp(*x))));
            let expect = &p * e_d * &p_inv;
            let scale = max_abs(&expect).max(1.0);
            prop_assert!(max_abs(&(expm(&a) - expect)) < 1e-11 * scale);
        }

        #[test]
        fn lyapunov_residual(v in proptest::collection::vec(-1.0f64..1.0, 9)) {
            // Shift to make A Hurwitz.
            let a = DMatrix::from_row_slice(3, 3, &v) - DMatrix::<f64>::identity(3, 3) * 4.0;
            let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 2.0, -1.0, 0.3]);
            let q = &b * b.transpose();
            let p = lyapunov(&a, &q).unwrap();
            let r = &a * &p + &p * a.transpose() + &q;
            prop_assert!(max_abs(&r) < 1e-10 * max_abs(&q));
        }

        #[test]
        fn psd_factor_reconstructs(v in proptest::collection::vec(-2.0f64..2.0, 12), s in 1e-6f64..1e6) {
            let b = DMatrix::from_row_slice(4, 3, &v);
            let mut m = &b * b.transpose();
            // badly scaled but rank-deficient PSD matrix
            for i in 0..4 { for j in 0..4 { if i == 0 { m[(i, j)] *= s; } if j == 0 { m[(i, j)] *= s; } } }
            let l = psd_factor(&m);
            let back = &l * l.transpose();
            for i in 0..4 {
                for j in 0..4 {
                    let tol = 1e-9 * (m[(i, i)] * m[(j, j)]).sqrt() + 1e-300;
                    prop_assert!((back[(i, j)] - m[(i, j)]).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn discretize_scalar_ou() {
        // dx = −γx dt + dW, E dW² = q dt → Φ = e^{−γdt}, Q = q(1 − e^{−2γdt})/2γ
        let (g, q, dt) = (3.0, 1e8, 0.2);
        let a = DMatrix::from_element(1, 1, -g);
        let qc = DMatrix::from_element(1, 1, q);
        let (phi, qd) = discretize(&a, &qc, dt);
        assert!((phi[(0, 0)] - (-g * dt).exp()).abs() < 1e-14);
        let expect = q * (1.0 - (-2.0 * g * dt).exp()) / (2.0 * g);
        assert!(((qd[(0, 0)] - expect) / expect).abs() < 1e-12);
    }
}
