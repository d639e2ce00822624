use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Factorizes `a`. Returns `None` when a pivot falls below
    /// `rel_tol * max(diag(a))`, i.e. the matrix is not numerically SPD.
    pub fn factor(a: &Matrix, rel_tol: f64) -> Option<Self> {
        let n = a.rows();
        if n != a.cols() {
            return None;
        }
        let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let floor = rel_tol * max_diag.max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > floor) {
                return None;
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(Cholesky { lower: l })
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.lower.rows();
        let l = &self.lower;
        let mut x = b.clone();
        for c in 0..b.cols() {
            // forward: L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
            // backward: Lᵀ x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / l[(i, i)];
            }
        }
        x
    }
}

const PIVOT_TOL: f64 = 1e-13;
const MAX_JITTER_RETRIES: usize = 8;

/// Ridge regression: returns `W` minimizing `‖XW − Y‖² + λ‖W‖²`.
///
/// Solves the normal equations `(XᵀX + λI) W = XᵀY` by Cholesky. With
/// `λ > 0` a failed factorization is retried with a growing jitter; with
/// `λ = 0` it reports [`Error::SingularSystem`].
pub fn ridge_solve(x: &Matrix, y: &Matrix, lambda: f64) -> Result<Matrix> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::InvalidArgument(
            "ridge_solve needs at least one row and one column".into(),
        ));
    }
    if y.rows() != x.rows() {
        return Err(Error::dims("ridge_solve targets", x.rows(), y.rows()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge penalty must be a finite nonnegative number, got {lambda}"
        )));
    }
    let gram = x.tmatmul(x)?;
    let rhs = x.tmatmul(y)?;
    solve_regularized(&gram, &rhs, lambda)
}

/// Solves `(G + λI) W = R` for symmetric positive semi-definite `G`.
pub(crate) fn solve_regularized(gram: &Matrix, rhs: &Matrix, lambda: f64) -> Result<Matrix> {
    let p = gram.rows();
    let scale = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut shift = lambda;
    for attempt in 0..=MAX_JITTER_RETRIES {
        let mut system = gram.clone();
        for i in 0..p {
            system[(i, i)] += shift;
        }
        if let Some(chol) = Cholesky::factor(&system, PIVOT_TOL) {
            let mut w = chol.solve(rhs);
            refine(&system, rhs, &chol, &mut w);
            if w.is_finite() {
                return Ok(w);
            }
        }
        if lambda == 0.0 {
            return Err(Error::SingularSystem);
        }
        shift += 1e-10 * scale * 10f64.powi(attempt as i32);
    }
    Err(Error::SingularSystem)
}

// One round of iterative refinement; cheap and tightens the normal-equation residual.
fn refine(system: &Matrix, rhs: &Matrix, chol: &Cholesky, w: &mut Matrix) {
    let Ok(mut residual) = system.matmul(w) else {
        return;
    };
    residual.scale(-1.0);
    residual.axpy(1.0, rhs);
    let correction = chol.solve(&residual);
    w.axpy(1.0, &correction);
}

/// Ridge regression with an unpenalized intercept: centers `x` and `y`,
/// solves for the weights on the centered data, and returns
/// `(W, b)` with `ŷ = Wᵀx + b`.
pub fn ridge_with_intercept(x: &Matrix, y: &Matrix, lambda: f64) -> Result<(Matrix, Vec<f64>)> {
    if x.rows() == 0 || x.rows() != y.rows() {
        return Err(Error::dims("ridge rows", x.rows().max(1), y.rows()));
    }
    let mx = column_means(x);
    let my = column_means(y);
    let w = ridge_solve(&centered(x, &mx), &centered(y, &my), lambda)?;
    let shift = w.tmul_vec(&mx)?;
    let bias = my.iter().zip(&shift).map(|(m, s)| m - s).collect();
    Ok((w, bias))
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, v) in means.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    means.iter_mut().for_each(|v| *v /= m.rows() as f64);
    means
}

fn centered(m: &Matrix, means: &[f64]) -> Matrix {
    let mut c = m.clone();
    for i in 0..c.rows() {
        for (v, mu) in c.row_mut(i).iter_mut().zip(means) {
            *v -= mu;
        }
    }
    c
}

/// Least-squares / minimum-norm solution `z = pinv(Mᵀ) r` for a stack of
/// right-hand sides, where `m` is `h×d` (so `Mᵀ z` maps `h → d`).
///
/// Each row of `targets` is one `r` of length `d`; each output row is the
/// corresponding `z` of length `h`.
pub fn pullback_rows(m: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let (h, d) = m.shape();
    if targets.cols() != d {
        return Err(Error::dims("pullback targets", d, targets.cols()));
    }
    if h <= d {
        // z = (M Mᵀ)⁻¹ M r
        let mmt = m.matmul(&m.transpose())?;
        let rhs = m.matmul(&targets.transpose())?;
        Ok(solve_pinv_system(&mmt, &rhs)?.transpose())
    } else {
        // z = M (Mᵀ M)⁻¹ r
        let mtm = m.tmatmul(m)?;
        let coeffs = solve_pinv_system(&mtm, &targets.transpose())?;
        Ok(m.matmul(&coeffs)?.transpose())
    }
}

fn solve_pinv_system(gram: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let scale = (0..gram.rows())
        .map(|i| gram[(i, i)])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    // Tikhonov limit of the pseudoinverse; the tiny shift only matters when
    // the decoder is rank-deficient.
    solve_regularized(gram, rhs, 1e-12 * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn normal_eq_residual(x: &Matrix, y: &Matrix, lambda: f64, w: &Matrix) -> (f64, f64) {
        let mut lhs = x.tmatmul(x).unwrap();
        for i in 0..lhs.rows() {
            lhs[(i, i)] += lambda;
        }
        let mut r = lhs.matmul(w).unwrap();
        let xty = x.tmatmul(y).unwrap();
        r.axpy(-1.0, &xty);
        (r.frobenius_norm(), xty.frobenius_norm())
    }

    #[test]
    fn identity_design() {
        let i2 = Matrix::identity(2);
        assert_eq!(ridge_solve(&i2, &i2, 0.0).unwrap(), i2);
        let w = ridge_solve(&i2, &i2, 1.0).unwrap();
        let mut half = Matrix::identity(2);
        half.scale(0.5);
        assert!(w.max_abs_diff(&half) < 1e-15);
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(matches!(ridge_solve(&x, &y, 0.0), Err(Error::SingularSystem)));
        let w = ridge_solve(&x, &y, 1e-3).unwrap();
        let (res, scale) = normal_eq_residual(&x, &y, 1e-3, &w);
        assert!(res < 1e-8 * (1.0 + scale));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::identity(2);
        assert!(ridge_solve(&x, &Matrix::zeros(3, 1), 0.0).is_err());
        assert!(ridge_solve(&x, &x, -1.0).is_err());
        assert!(ridge_solve(&Matrix::zeros(0, 0), &Matrix::zeros(0, 0), 1.0).is_err());
    }

    #[test]
    fn pullback_inverts_full_rank_decoder() {
        let mut rng = Rng::new(11);
        // h < d: least squares recovers z exactly when r lies in the range.
        let m = Matrix::from_vec(3, 5, rng.normals(15, 0.0, 1.0)).unwrap();
        let z = Matrix::from_vec(4, 3, rng.normals(12, 0.0, 1.0)).unwrap();
        let r = z.matmul(&m).unwrap();
        let back = pullback_rows(&m, &r).unwrap();
        assert!(back.max_abs_diff(&z) < 1e-8);

        // h > d: minimum-norm solution reproduces r.
        let m = Matrix::from_vec(4, 2, rng.normals(8, 0.0, 1.0)).unwrap();
        let r = Matrix::from_vec(3, 2, rng.normals(6, 0.0, 1.0)).unwrap();
        let back = pullback_rows(&m, &r).unwrap();
        let again = back.matmul(&m).unwrap();
        assert!(again.max_abs_diff(&r) < 1e-8);
    }
}
