use crate::error::{Error, Result};

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator. Stops once `‖b - A x‖ ≤ tol ‖b‖`.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 2.0 * x[i] - l - r;
        }
    }

    #[test]
    fn converges_on_1d_laplacian() {
        let b = vec![1.0; 50];
        let x = pcg(lap1d, &[2.0; 50], &b, 1e-12, 200).unwrap();
        let mut ax = vec![0.0; 50];
        lap1d(&x, &mut ax);
        let err: f64 = ax
            .iter()
            .zip(&b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let b = vec![1.0; 50];
        match pcg(lap1d, &[2.0; 50], &b, 1e-12, 3) {
            Err(Error::NotConverged {
                iterations: 3,
                residual,
            }) => assert!(residual > 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }
}
