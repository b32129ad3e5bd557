//! Locally optimal block preconditioned conjugate gradient, block size one,
//! for the largest eigenpair of a symmetric operator.

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::num_complex::Complex64;

pub(crate) trait SymmetricOperator {
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64;
}

#[derive(Debug, Clone)]
pub(crate) struct Eigenpair {
    pub value: f64,
    pub vector: Vec<Complex64>,
    /// `||K x - value x||` for the unit vector `x`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn axpy(y: &mut [Complex64], a: f64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn scale(y: &mut [Complex64], a: f64) {
    for yi in y.iter_mut() {
        *yi *= a;
    }
}

fn combine(coeffs: &[f64], vs: &[&Vec<Complex64>]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); vs[0].len()];
    for (c, v) in coeffs.iter().zip(vs) {
        axpy(&mut out, *c, v);
    }
    out
}

/// Iterates until successive Rayleigh quotients differ by less than
/// `rel_tol` relative, or `max_iter` is reached.
pub(crate) fn largest_eigenpair<K: SymmetricOperator>(
    op: &K,
    start: Vec<Complex64>,
    rel_tol: f64,
    max_iter: usize,
) -> Eigenpair {
    let mut x = start;
    let nx = op.inner(&x, &x).sqrt();
    scale(&mut x, 1.0 / nx);
    let mut kx = op.apply(&x);
    let mut theta = op.inner(&x, &kx);
    let mut p: Option<(Vec<Complex64>, Vec<Complex64>)> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut r = kx.clone();
        axpy(&mut r, -theta, &x);
        let rnorm = op.inner(&r, &r).sqrt();
        if rnorm <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE) || rnorm == 0.0 {
            converged = true;
            break;
        }
        for _ in 0..2 {
            let c = op.inner(&x, &r);
            axpy(&mut r, -c, &x);
        }
        let rn = op.inner(&r, &r).sqrt();
        scale(&mut r, 1.0 / rn);
        let kr = op.apply(&r);

        let mut basis: Vec<(Vec<Complex64>, Vec<Complex64>)> = vec![(x, kx), (r, kr)];
        if let Some((mut pv, mut kp)) = p.take() {
            for _ in 0..2 {
                for (s, ks) in &basis {
                    let c = op.inner(s, &pv);
                    axpy(&mut pv, -c, s);
                    axpy(&mut kp, -c, ks);
                }
            }
            let pn = op.inner(&pv, &pv).sqrt();
            if pn > 1e-12 {
                scale(&mut pv, 1.0 / pn);
                scale(&mut kp, 1.0 / pn);
                basis.push((pv, kp));
            }
        }

        let m = basis.len();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (op.inner(&basis[i].0, &basis[j].1) + op.inner(&basis[j].0, &basis[i].1));
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(gram);
        let (imax, &theta_new) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty basis");
        let alpha: Vec<f64> = eig.eigenvectors.column(imax).iter().copied().collect();

        let vs: Vec<&Vec<Complex64>> = basis.iter().map(|b| &b.0).collect();
        let ks: Vec<&Vec<Complex64>> = basis.iter().map(|b| &b.1).collect();
        let mut tail = alpha.clone();
        tail[0] = 0.0;
        let pv = combine(&tail, &vs);
        let kp = combine(&tail, &ks);
        x = combine(&alpha, &vs);
        kx = combine(&alpha, &ks);
        let nx = op.inner(&x, &x).sqrt();
        scale(&mut x, 1.0 / nx);
        scale(&mut kx, 1.0 / nx);
        p = Some((pv, kp));

        let previous = theta;
        theta = theta_new;
        if (theta - previous).abs() <= rel_tol * theta.abs() {
            converged = true;
            break;
        }
    }

    let mut r = kx.clone();
    axpy(&mut r, -theta, &x);
    let residual = op.inner(&r, &r).sqrt();
    Eigenpair {
        value: theta,
        vector: x,
        residual,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense symmetric matrix acting on real parts.
    struct Dense(DMatrix<f64>);

    impl SymmetricOperator for Dense {
        fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
            let v = nalgebra::DVector::from_iterator(x.len(), x.iter().map(|c| c.re));
            (&self.0 * v).iter().map(|r| Complex64::new(*r, 0.0)).collect()
        }
        fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
            a.iter().zip(b).map(|(x, y)| x.re * y.re).sum()
        }
    }

    #[test]
    fn finds_top_eigenvalue_of_dense_matrix() {
        let n = 60;
        // Discrete 1-D Laplacian-like matrix with a known spectrum.
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 2.0;
            if i + 1 < n {
                m[(i, i + 1)] = -1.0;
                m[(i + 1, i)] = -1.0;
            }
        }
        let exact = 2.0 - 2.0 * (std::f64::consts::PI * n as f64 / (n as f64 + 1.0)).cos();
        let start: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + 0.01 * i as f64, 0.0)).collect();
        let pair = largest_eigenpair(&Dense(m), start, 1e-14, 2000);
        assert!(pair.converged);
        assert!((pair.value - exact).abs() < 1e-9, "{} vs {exact}", pair.value);
    }

    #[test]
    fn zero_operator_converges_immediately() {
        let pair = largest_eigenpair(
            &Dense(DMatrix::zeros(5, 5)),
            vec![Complex64::new(1.0, 0.0); 5],
            1e-10,
            100,
        );
        assert!(pair.converged);
        assert_eq!(pair.value, 0.0);
        assert_eq!(pair.iterations, 1);
    }
}
