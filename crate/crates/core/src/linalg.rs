//! Dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Orthonormal basis of an (approximate) null space together with the
/// singular-value evidence used to decide its dimension.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Columns form an orthonormal basis.
    pub basis: Mat,
    /// Singular values in descending order, padded with zeros up to the column count.
    pub singular_values: Vec<f64>,
    pub cutoff: f64,
    /// True when a singular value sits within a factor 10 of the cutoff.
    pub ambiguous: bool,
}

impl NullSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Null space of `m` with singular values below `rel_tol * max(sigma_max, 1)` treated as zero.
pub fn null_space(m: &Mat, rel_tol: f64) -> NullSpace {
    let cols = m.ncols();
    if cols == 0 {
        return NullSpace { basis: Mat::zeros(0, 0), singular_values: vec![], cutoff: 0.0, ambiguous: false };
    }
    let padded = if m.nrows() < cols {
        let mut p = Mat::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    let cutoff = rel_tol * scale;
    let ambiguous = sv.iter().any(|&s| s > cutoff / 10.0 && s < cutoff * 10.0);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= cutoff).collect();
    let mut basis = Mat::zeros(cols, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    NullSpace { basis, singular_values: sv, cutoff, ambiguous }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, q) = sym_eigen(m);
    let d = Mat::from_diagonal(&Vector::from_iterator(vals.len(), vals.iter().map(|&v| f(v))));
    &q * d * q.transpose()
}

/// Matrix exponential of a symmetric matrix.
pub fn exp_sym(m: &Mat) -> Mat {
    sym_apply(m, f64::exp)
}

/// Principal logarithm of a symmetric positive-definite matrix.
pub fn log_spd(m: &Mat) -> Mat {
    sym_apply(m, f64::ln)
}

/// Hilbert-Schmidt inner product tr(a^T b).
pub fn hs_inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol
}

pub fn is_orthogonal(m: &Mat, tol: f64) -> bool {
    m.is_square() && (m.transpose() * m - Mat::identity(m.nrows(), m.ncols())).amax() <= tol
}

pub fn commutator(a: &Mat, b: &Mat) -> Mat {
    a * b - b * a
}

/// Haar-distributed orthogonal matrix from the QR factorisation of a Gaussian matrix.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthogonal matrix whose last column is the unit vector along `v`.
pub fn frame_with_last(v: &Vector) -> Mat {
    let n = v.len();
    let u = v.normalize();
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = Vector::zeros(n);
        e[i] = 1.0;
        let mut w = &e - &u * u.dot(&e);
        for c in &cols {
            w -= c * c.dot(&w);
        }
        if w.norm() > 1e-6 {
            cols.push(w.normalize());
        }
        if cols.len() == n - 1 {
            break;
        }
    }
    cols.push(u);
    Mat::from_columns(&cols)
}

/// Minimum-norm solution of a symmetric system via its eigen-decomposition,
/// discarding eigenvalues below `rel_tol * max|eigenvalue|`.
pub fn sym_pinv_solve(m: &Mat, rhs: &Vector, rel_tol: f64) -> Vector {
    let (vals, q) = sym_eigen(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut y = q.transpose() * rhs;
    for (i, &v) in vals.iter().enumerate() {
        y[i] = if v.abs() > rel_tol * scale && scale > 0.0 { y[i] / v } else { 0.0 };
    }
    q * y
}
