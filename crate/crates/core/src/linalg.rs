//! Small dense linear-algebra helpers shared by the densities and filters.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::{Error, Matrix, Result};

/// Escalating diagonal jitter applied when a symmetric factorization fails.
///
/// A factorization is accepted when Cholesky succeeds and every squared pivot
/// is at least `min_pivot_ratio` times the largest diagonal entry. Otherwise
/// `step * max(scale_floor, trace / dim)` is added to the diagonal for each
/// entry of `steps` in turn.
#[derive(Clone, Debug, PartialEq)]
pub struct JitterPolicy {
    pub steps: Vec<f64>,
    pub scale_floor: f64,
    pub min_pivot_ratio: f64,
}

impl Default for JitterPolicy {
    /// Policy used for innovation and feature-space covariances.
    fn default() -> Self {
        Self {
            steps: vec![1e-12, 1e-9, 1e-6],
            scale_floor: f64::MIN_POSITIVE,
            min_pivot_ratio: 1e-14,
        }
    }
}

impl JitterPolicy {
    /// Policy used when evaluating Gaussian log densities.
    pub fn density() -> Self {
        Self {
            steps: vec![1e-9],
            scale_floor: 1.0,
            min_pivot_ratio: 1e-14,
        }
    }

    /// No jitter at all: singular matrices are reported as failures.
    pub fn none() -> Self {
        Self {
            steps: Vec::new(),
            scale_floor: 0.0,
            min_pivot_ratio: 1e-14,
        }
    }

    /// Cholesky factor of `m`, regularized according to the policy.
    pub fn factor(&self, m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
        if !m.is_square() {
            return Err(Error::Argument(format!(
                "cannot factor a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        if let Some(c) = self.accept(m.clone()) {
            return Ok(c);
        }
        let n = m.nrows().max(1) as f64;
        let scale = (m.trace() / n).max(self.scale_floor);
        for step in &self.steps {
            let mut jittered = m.clone();
            for i in 0..m.nrows() {
                jittered[(i, i)] += step * scale;
            }
            if let Some(c) = self.accept(jittered) {
                return Ok(c);
            }
        }
        Err(Error::Numerical(format!(
            "{}x{} matrix is not positive definite after {} jitter steps",
            m.nrows(),
            m.ncols(),
            self.steps.len()
        )))
    }

    fn accept(&self, m: Matrix) -> Option<Cholesky<f64, Dyn>> {
        let max_diag = m.diagonal().iter().fold(0.0_f64, |a, &b| a.max(b));
        let chol = Cholesky::new(m)?;
        let l = chol.l_dirty();
        let min_pivot = (0..l.nrows())
            .map(|i| l[(i, i)] * l[(i, i)])
            .fold(f64::INFINITY, f64::min);
        (min_pivot >= self.min_pivot_ratio * max_diag && min_pivot > 0.0).then_some(chol)
    }
}

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest asymmetry relative to the largest entry magnitude.
pub fn relative_asymmetry(m: &Matrix) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Checks symmetry and that no eigenvalue is below `-psd_floor * trace`.
pub fn check_covariance(m: &Matrix, sym_tol: f64, psd_floor: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Argument(format!("{what} must be square")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    if relative_asymmetry(m) > sym_tol {
        return Err(Error::Argument(format!("{what} is not symmetric")));
    }
    let min_eig = min_eigenvalue(m);
    let floor = -psd_floor * m.trace().abs().max(f64::MIN_POSITIVE);
    if min_eig < floor {
        return Err(Error::Numerical(format!(
            "{what} is not positive semidefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// A matrix `S` with `S Sᵀ = m` for symmetric PSD `m`.
///
/// Uses the Cholesky factor when `m` is positive definite and falls back to
/// the symmetric eigendecomposition (negative eigenvalues above the PSD floor
/// clamped to zero) for singular covariances.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    if let Some(c) = Cholesky::new(m.clone()) {
        let l = c.l();
        if l.iter().all(|v| v.is_finite()) {
            return Ok(l);
        }
    }
    check_covariance(m, 1e-9, 1e-10, "covariance")?;
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let mut root = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        root.column_mut(j).scale_mut(s);
    }
    Ok(root)
}

/// `log(exp(a) + exp(b))` without overflow; `-inf` terms are handled.
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let lo = a.min(b);
    hi + (lo - hi).exp().ln_1p()
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_accepts_well_conditioned() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let c = JitterPolicy::none().factor(&m).unwrap();
        let back = c.l() * c.l().transpose();
        assert!((back - m).amax() < 1e-14);
    }

    #[test]
    fn factor_jitters_singular_matrix() {
        let m = Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(JitterPolicy::none().factor(&m).is_err());
        let c = JitterPolicy::default().factor(&m).unwrap();
        let back = c.l() * c.l().transpose();
        assert!((back[(1, 1)] - 3.0).abs() < 1e-11);
        assert!(back[(0, 0)] > 0.0);
    }

    #[test]
    fn factor_rejects_negative_definite() {
        let m = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            JitterPolicy::default().factor(&m),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn factor_flags_near_collinear() {
        // rows sum to a constant direction: eigenvalue ~1e-17
        let m = Matrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25 + 1e-17]);
        let c = JitterPolicy::default().factor(&m).unwrap();
        let l = c.l();
        assert!(l[(1, 1)] * l[(1, 1)] >= 1e-14 * 0.25);
    }

    #[test]
    fn psd_sqrt_of_singular() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = psd_sqrt(&m).unwrap();
        assert!((&s * s.transpose() - m).amax() < 1e-12);
        let z = Matrix::zeros(3, 3);
        assert_eq!(psd_sqrt(&z).unwrap().amax(), 0.0);
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, 0.0), 0.0);
        assert_eq!(
            log_sum_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
        assert!((log_sum_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!(std_normal_cdf(-40.0) >= 0.0);
    }
}
