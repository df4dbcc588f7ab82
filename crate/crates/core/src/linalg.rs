//! Dense kernels shared by the model modules: Householder QR with column-norm
//! pivoting, sorted symmetric eigendecompositions, and a block subspace
//! iteration for the leading eigenpairs of large kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `A P = Q R` with Householder reflectors stored below the diagonal.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    /// `perm[j]` is the original column placed at position `j`.
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (n, p) = a.shape();
        let kmax = n.min(p);
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = vec![0.0; kmax];
        let mut norms: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared()).collect();

        for j in 0..kmax {
            let (piv, _) = norms[j..]
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
            let piv = piv + j;
            if piv != j {
                a.swap_columns(j, piv);
                perm.swap(j, piv);
                norms.swap(j, piv);
            }

            let xnorm = a.view((j, j), (n - j, 1)).norm();
            if xnorm == 0.0 {
                tau[j] = 0.0;
                continue;
            }
            let x0 = a[(j, j)];
            let alpha = if x0 >= 0.0 { -xnorm } else { xnorm };
            let v0 = x0 - alpha;
            for i in j + 1..n {
                a[(i, j)] /= v0;
            }
            // H = I - tau v v^T with v = (1, a[j+1.., j])
            let t = -v0 / alpha;
            tau[j] = t;
            a[(j, j)] = alpha;

            for c in j + 1..p {
                let mut s = a[(j, c)];
                for i in j + 1..n {
                    s += a[(i, j)] * a[(i, c)];
                }
                s *= t;
                a[(j, c)] -= s;
                for i in j + 1..n {
                    let vij = a[(i, j)];
                    a[(i, c)] -= s * vij;
                }
                // exact recomputation keeps pivot choices reliable
                norms[c] = a.view((j + 1, c), (n - j - 1, 1)).norm_squared();
            }
        }
        PivotedQr { qr: a, tau, perm }
    }

    pub fn nrows(&self) -> usize {
        self.qr.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|i| self.qr[(i, i)]).collect()
    }

    /// Numerical rank: diagonal entries of `R` above `rel_tol * |R_11|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let d = self.r_diag();
        let Some(first) = d.first() else { return 0 };
        let thresh = rel_tol * first.abs();
        d.iter().take_while(|x| x.abs() > thresh).count()
    }

    /// Applies `Q^T` in place.
    pub fn qt_mul(&self, y: &mut DVector<f64>) {
        let n = self.qr.nrows();
        for (j, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut s = y[j];
            for i in j + 1..n {
                s += self.qr[(i, j)] * y[i];
            }
            s *= t;
            y[j] -= s;
            for i in j + 1..n {
                y[i] -= s * self.qr[(i, j)];
            }
        }
    }

    /// Applies `Q` in place.
    pub fn q_mul(&self, y: &mut DVector<f64>) {
        let n = self.qr.nrows();
        for (j, &t) in self.tau.iter().enumerate().rev() {
            if t == 0.0 {
                continue;
            }
            let mut s = y[j];
            for i in j + 1..n {
                s += self.qr[(i, j)] * y[i];
            }
            s *= t;
            y[j] -= s;
            for i in j + 1..n {
                y[i] -= s * self.qr[(i, j)];
            }
        }
    }

    /// First `min(n, p)` columns of `Q`.
    pub fn thin_q(&self) -> DMatrix<f64> {
        let n = self.qr.nrows();
        let k = self.tau.len();
        let mut q = DMatrix::zeros(n, k);
        let mut e = DVector::zeros(n);
        for j in 0..k {
            e.fill(0.0);
            e[j] = 1.0;
            self.q_mul(&mut e);
            q.set_column(j, &e);
        }
        q
    }

    /// Square upper-triangular factor (requires `n >= p`).
    pub fn r(&self) -> DMatrix<f64> {
        let p = self.qr.ncols();
        DMatrix::from_fn(p, p, |i, j| if i <= j { self.qr[(i, j)] } else { 0.0 })
    }

    /// Least-squares solution in the original column order (requires full
    /// column rank and `n >= p`).
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.qr.ncols();
        let mut qty = y.clone();
        self.qt_mul(&mut qty);
        let z = back_substitute(&self.qr, &qty.rows(0, p).into_owned());
        let mut beta = DVector::zeros(p);
        for (j, &orig) in self.perm.iter().enumerate() {
            beta[orig] = z[j];
        }
        beta
    }

    /// `R^{-1}` with rows indexed by pivoted position.
    pub fn r_inverse(&self) -> DMatrix<f64> {
        let p = self.qr.ncols();
        let mut inv = DMatrix::zeros(p, p);
        for c in 0..p {
            let mut e = DVector::zeros(p);
            e[c] = 1.0;
            let col = back_substitute(&self.qr, &e);
            inv.set_column(c, &col);
        }
        inv
    }

    /// Diagonal of `(A^T A)^{-1}` in the original column order.
    pub fn gram_inverse_diag(&self) -> Vec<f64> {
        let rinv = self.r_inverse();
        let mut d = vec![0.0; self.qr.ncols()];
        for (j, &orig) in self.perm.iter().enumerate() {
            d[orig] = rinv.row(j).norm_squared();
        }
        d
    }

    pub fn log_abs_det_r(&self) -> f64 {
        self.r_diag().iter().map(|d| d.abs().ln()).sum()
    }
}

/// Solves `R z = b` using the upper triangle of the leading square block of `r`.
fn back_substitute(r: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let p = b.len();
    let mut z = b.clone();
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= r[(i, k)] * z[k];
        }
        z[i] = s / r[(i, i)];
    }
    z
}

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis for the columns of `a` (`n >= p`).
pub fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    PivotedQr::new(a).thin_q()
}

/// Leading `r` eigenpairs of the symmetric positive semidefinite operator
/// `op`, computed by block subspace iteration with Rayleigh-Ritz
/// extraction from the starting block `start` (its column count is the block
/// size and must exceed `r`).
pub fn leading_eigenpairs<F>(op: F, start: DMatrix<f64>, r: usize, tol: f64, max_iter: usize) -> (Vec<f64>, DMatrix<f64>)
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let b = start.ncols();
    assert!(b > r, "block size must exceed the number of wanted eigenpairs");
    let mut v = orthonormalize(start);
    let mut values = vec![0.0; b];
    for _ in 0..max_iter {
        let av = op(&v);
        let h = v.transpose() * &av;
        let h = (&h + h.transpose()) * 0.5;
        let (theta, w) = sym_eigen_desc(h);
        let ritz = &v * &w;
        let aritz = &av * &w;
        values = theta;
        let scale = values[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..r).all(|j| {
            let res = aritz.column(j) - ritz.column(j) * values[j];
            res.norm() <= tol * scale
        });
        if converged {
            return (values[..r].to_vec(), ritz.columns(0, r).into_owned());
        }
        v = orthonormalize(aritz);
    }
    let av = op(&v);
    let h = v.transpose() * &av;
    let (theta, w) = sym_eigen_desc((&h + h.transpose()) * 0.5);
    let ritz = &v * &w;
    values = theta;
    (values[..r].to_vec(), ritz.columns(0, r).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(5, 3, &[
            1.0, 0.0, 2.0, //
            1.0, 1.0, 0.5, //
            1.0, 2.0, -1.0, //
            1.0, 3.0, 4.0, //
            1.0, 4.0, 0.0,
        ])
    }

    #[test]
    fn qr_reconstructs() {
        let a = sample();
        let qr = PivotedQr::new(a.clone());
        let q = qr.thin_q();
        let r = qr.r();
        let qr_prod = &q * &r;
        for (j, &orig) in qr.perm().iter().enumerate() {
            for i in 0..5 {
                assert!((qr_prod[(i, j)] - a[(i, orig)]).abs() < 1e-12);
            }
        }
        let qtq = q.transpose() * &q;
        assert!((qtq - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let a = sample();
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0, -1.0]);
        let beta = PivotedQr::new(a.clone()).solve(&y);
        let ata = a.transpose() * &a;
        let direct = ata.clone().cholesky().unwrap().solve(&(a.transpose() * &y));
        assert!((beta - direct).norm() < 1e-10);
        let d = PivotedQr::new(a).gram_inverse_diag();
        let inv = ata.try_inverse().unwrap();
        for j in 0..3 {
            assert!((d[j] - inv[(j, j)]).abs() < 1e-10);
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        let mut a = sample();
        let c = a.column(0) * 2.0 - a.column(1);
        a.set_column(2, &c);
        assert_eq!(PivotedQr::new(a).rank(1e-10), 2);
    }

    #[test]
    fn subspace_iteration_matches_dense() {
        let n = 60;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            (-(x - y).powi(2) * 20.0).exp()
        });
        let (dense_vals, _) = sym_eigen_desc(m.clone());
        let start = DMatrix::from_fn(n, 10, |i, j| ((j + 1) as f64 * i as f64 * 0.1).cos());
        let (vals, vecs) = leading_eigenpairs(|v| &m * v, start, 4, 1e-12, 500);
        for j in 0..4 {
            assert!((vals[j] - dense_vals[j]).abs() < 1e-9 * dense_vals[0]);
            let res = &m * vecs.column(j) - vecs.column(j) * vals[j];
            assert!(res.norm() < 1e-8);
        }
    }
}
