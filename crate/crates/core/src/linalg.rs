//! Small dense eigenproblems in complex arithmetic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative separation below which two eigenvalues count as repeated.
pub const SIMPLE_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    /// Right eigenvector scaled to unit max-modulus.
    pub vector: DVector<Complex64>,
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues and right eigenvectors of a square matrix whose eigenvalues
/// are all simple.
///
/// When `real_input` is set the matrix is known to be real; eigenvalues with
/// negligible imaginary part are snapped to the real axis and complex ones
/// are returned in exactly conjugate pairs with conjugate eigenvectors.
/// Pairs are sorted by real part, then imaginary part.
pub fn eigenpairs(a: &DMatrix<Complex64>, real_input: bool) -> Result<Vec<EigenPair>> {
    let n = a.nrows();
    if n == 0 || n != a.ncols() {
        return Err(Error::Numeric(format!(
            "eigenproblem needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let mut values: Vec<Complex64> = schur
        .eigenvalues()
        .ok_or_else(|| Error::Numeric("Schur form is not triangular".into()))?
        .iter()
        .copied()
        .collect();
    let scale = values.iter().map(|v| v.norm()).fold(a.camax().max(1e-300), f64::max);

    if real_input {
        values = conjugate_closure(&values, scale)?;
    }
    values.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= SIMPLE_EIGEN_TOL * scale {
                return Err(Error::RepeatedEigenvalue { value: values[i] });
            }
        }
    }

    let mut out: Vec<EigenPair> = Vec::with_capacity(n);
    for &value in &values {
        // the partner of a conjugate pair reuses the conjugated vector
        if real_input && value.im < 0.0 {
            if let Some(p) = out.iter().find(|p| p.value == value.conj()) {
                let vector = p.vector.map(|z| z.conj());
                out.push(EigenPair { value, vector });
                continue;
            }
        }
        let mut vector = null_vector(a, value)?;
        if real_input && value.im == 0.0 {
            vector = vector.map(|z| Complex64::new(z.re, 0.0));
            let m = vector.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            vector /= Complex64::new(m, 0.0);
        }
        out.push(EigenPair { value, vector });
    }
    Ok(out)
}

/// Left eigenpairs: `φ A = z φ`, returned with `φ` as a column vector.
pub fn left_eigenpairs(a: &DMatrix<Complex64>, real_input: bool) -> Result<Vec<EigenPair>> {
    eigenpairs(&a.transpose(), real_input)
}

fn conjugate_closure(values: &[Complex64], scale: f64) -> Result<Vec<Complex64>> {
    let tol = 1e-10 * scale;
    let mut out = Vec::with_capacity(values.len());
    let mut upper = Vec::new();
    let mut lower = 0usize;
    for &v in values {
        if v.im.abs() <= tol {
            out.push(Complex64::new(v.re, 0.0));
        } else if v.im > 0.0 {
            upper.push(v);
        } else {
            lower += 1;
        }
    }
    if upper.len() != lower {
        return Err(Error::Numeric(
            "eigenvalues of a real matrix are not closed under conjugation".into(),
        ));
    }
    for v in upper {
        out.push(v);
        out.push(v.conj());
    }
    Ok(out)
}

/// Unit vector spanning the numerical kernel of `a - λI`, phase-normalised so
/// that its largest entry is real and positive.
fn null_vector(a: &DMatrix<Complex64>, lambda: Complex64) -> Result<DVector<Complex64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::from_diagonal_element(n, n, lambda);
    let svd = shifted.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty spectrum");
    let mut v: DVector<Complex64> = v_t.row(idx).transpose().map(|z| z.conj());
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .expect("non-empty vector");
    let pivot = v[imax];
    v /= pivot;
    Ok(v)
}

/// Solves the complex linear system `a x = b`.
pub fn solve(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numeric("singular linear system".into()))
}
