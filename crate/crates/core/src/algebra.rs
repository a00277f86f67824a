//! Structure tensors of nilpotent Lie algebras and the linear action on them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::tolerances::{EPS_INV, EPS_JAC, EPS_MU};

/// Sparse structure constants `mu(e_i, e_j) = sum_k c_ijk e_k`, stored for `i < j` only.
///
/// Indices are 0-based. Entries below `EPS_MU` times the largest magnitude are pruned.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    dim: usize,
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl StructureTensor {
    pub fn zero(dim: usize) -> Self {
        StructureTensor { dim, entries: BTreeMap::new() }
    }

    /// Builds a tensor from `(i, j, k, c)` records meaning `mu(e_i, e_j) += c e_k`.
    /// Records with `i > j` are folded in by antisymmetry; `i == j` records must be zero.
    pub fn from_triples(dim: usize, triples: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for &(i, j, k, c) in triples {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::IndexOutOfRange { record: 0, i: i + 1, j: j + 1, k: k + 1, dim });
            }
            if i == j {
                if c != 0.0 {
                    return Err(Error::NonAntisymmetric { defect: c.abs() });
                }
                continue;
            }
            let (a, b, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
            *entries.entry((a, b, k)).or_insert(0.0) += s * c;
        }
        let mut t = StructureTensor { dim, entries };
        t.prune();
        Ok(t)
    }

    fn prune(&mut self) {
        let max = self.max_abs();
        self.entries.retain(|_, c| c.abs() > EPS_MU * max && *c != 0.0);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Coefficient of `e_k` in `mu(e_i, e_j)` for any ordering of `i, j`.
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        if i < j {
            self.entries.get(&(i, j, k)).copied().unwrap_or(0.0)
        } else if i > j {
            -self.entries.get(&(j, i, k)).copied().unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// Stored entries `(i, j, k, c)` with `i < j`, in lexicographic order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j, k), &c)| (i, j, k, c))
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    /// Squared norm summing over `i < j`.
    pub fn norm_sq(&self) -> f64 {
        self.entries.values().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, f: f64) -> Self {
        let mut t = self.clone();
        t.entries.values_mut().for_each(|c| *c *= f);
        t.prune();
        t
    }

    pub fn to_dense(&self) -> BracketTensor {
        let mut d = BracketTensor::zero(self.dim);
        for (i, j, k, c) in self.triples() {
            d.set_pair(i, j, k, c);
        }
        d
    }

    /// Bracket of two vectors.
    pub fn bracket(&self, x: &Vector, y: &Vector) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for (i, j, k, c) in self.triples() {
            out[k] += c * (x[i] * y[j] - x[j] * y[i]);
        }
        out
    }

    /// Change of basis `g . mu = g mu(g^-1 ., g^-1 .)`.
    pub fn act(&self, g: &FrameChange) -> StructureTensor {
        self.to_dense().act(g.matrix(), g.inverse()).to_structure()
    }

    /// Infinitesimal action `lambda mu - mu(lambda ., .) - mu(., lambda .)`.
    pub fn rho_star(&self, lambda: &Mat) -> StructureTensor {
        self.to_dense().rho_star(lambda).to_structure_unpruned()
    }
}

/// Dense antisymmetric representation `t[i][j][k]`, used inside numerical kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketTensor {
    n: usize,
    data: Vec<f64>,
}

impl BracketTensor {
    pub fn zero(n: usize) -> Self {
        BracketTensor { n, data: vec![0.0; n * n * n] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn set_pair(&mut self, i: usize, j: usize, k: usize, c: f64) {
        let a = self.idx(i, j, k);
        let b = self.idx(j, i, k);
        self.data[a] = c;
        self.data[b] = -c;
    }

    /// Squared norm over `i < j`.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c * c).sum::<f64>() * 0.5
    }

    pub fn inner(&self, other: &BracketTensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>() * 0.5
    }

    pub fn scaled(&self, f: f64) -> Self {
        BracketTensor { n: self.n, data: self.data.iter().map(|c| c * f).collect() }
    }

    pub fn sub(&self, other: &BracketTensor) -> Self {
        BracketTensor { n: self.n, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    /// Flattened coefficients over `i < j`, in `(i, j, k)` lexicographic order.
    pub fn upper_vec(&self) -> Vec<f64> {
        let n = self.n;
        let mut v = Vec::with_capacity(n * n * (n - 1).max(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                for k in 0..n {
                    v.push(self.get(i, j, k));
                }
            }
        }
        v
    }

    /// `t'[i][j][k] = sum out[k][c] inp[a][i] inp[b][j] t[a][b][c]`.
    fn transform(&self, out: &Mat, inp: &Mat) -> BracketTensor {
        let n = self.n;
        let mut s1 = vec![0.0; n * n * n];
        for a in 0..n {
            for b in 0..n {
                let base = (a * n + b) * n;
                for k in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += out[(k, c)] * self.data[base + c];
                    }
                    s1[base + k] = acc;
                }
            }
        }
        let mut s2 = vec![0.0; n * n * n];
        for i in 0..n {
            for b in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += inp[(a, i)] * s1[(a * n + b) * n + k];
                    }
                    s2[(i * n + b) * n + k] = acc;
                }
            }
        }
        let mut s3 = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for b in 0..n {
                        acc += inp[(b, j)] * s2[(i * n + b) * n + k];
                    }
                    s3[(i * n + j) * n + k] = acc;
                }
            }
        }
        BracketTensor { n, data: s3 }
    }

    /// `g mu(g^-1 ., g^-1 .)` given `g` and its inverse.
    pub fn act(&self, g: &Mat, g_inv: &Mat) -> BracketTensor {
        self.transform(g, g_inv)
    }

    pub fn rho_star(&self, lambda: &Mat) -> BracketTensor {
        let n = self.n;
        let mut out = BracketTensor::zero(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += lambda[(k, c)] * self.get(i, j, c);
                        acc -= self.get(c, j, k) * lambda[(c, i)];
                        acc -= self.get(i, c, k) * lambda[(c, j)];
                    }
                    let idx = out.idx(i, j, k);
                    out.data[idx] = acc;
                }
            }
        }
        out
    }

    pub fn to_structure(&self) -> StructureTensor {
        let mut t = self.to_structure_unpruned();
        t.prune();
        t
    }

    fn to_structure_unpruned(&self) -> StructureTensor {
        let mut entries = BTreeMap::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                for k in 0..self.n {
                    let c = self.get(i, j, k);
                    if c != 0.0 {
                        entries.insert((i, j, k), c);
                    }
                }
            }
        }
        StructureTensor { dim: self.n, entries }
    }
}

/// Inner product of structure tensors summing over `i < j`.
pub fn tensor_inner(a: &StructureTensor, b: &StructureTensor) -> f64 {
    a.triples().map(|(i, j, k, c)| c * b.coeff(i, j, k)).sum()
}

/// An invertible change of basis, stored with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameChange {
    g: Mat,
    g_inv: Mat,
}

impl FrameChange {
    pub fn new(g: Mat) -> Result<Self> {
        let n = g.nrows();
        if !g.is_square() {
            return Err(Error::DimensionMismatch { expected: n, found: g.ncols() });
        }
        let g_inv = g.clone().try_inverse().ok_or(Error::SingularFrame { defect: f64::INFINITY })?;
        let defect = (&g * &g_inv - Mat::identity(n, n)).amax();
        if defect > EPS_INV {
            return Err(Error::SingularFrame { defect });
        }
        Ok(FrameChange { g, g_inv })
    }

    /// Pairs a matrix with an inverse computed elsewhere (e.g. `exp(-A)` for `exp(A)`).
    pub(crate) fn from_pair(g: Mat, g_inv: Mat) -> Self {
        FrameChange { g, g_inv }
    }

    pub fn identity(n: usize) -> Self {
        FrameChange { g: Mat::identity(n, n), g_inv: Mat::identity(n, n) }
    }

    /// Orthogonal change of basis; the inverse is the transpose.
    pub fn orthogonal(q: Mat) -> Self {
        let q_inv = q.transpose();
        FrameChange { g: q, g_inv: q_inv }
    }

    pub fn matrix(&self) -> &Mat {
        &self.g
    }

    pub fn inverse(&self) -> &Mat {
        &self.g_inv
    }

    pub fn compose(&self, other: &FrameChange) -> FrameChange {
        FrameChange { g: &self.g * &other.g, g_inv: &other.g_inv * &self.g_inv }
    }
}

/// Outcome of structural validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub dim: usize,
    pub support: usize,
    pub jacobi_residual: f64,
    /// Dimensions of the lower central series, ending with 0.
    pub lower_central_series: Vec<usize>,
    pub nilpotency_step: usize,
    /// Unit vector spanning part of the last nonzero term of the lower central series.
    pub central_vector: Vector,
}

/// Checks the Jacobi identity and nilpotency.
pub fn validate(mu: &StructureTensor) -> Result<ValidationReport> {
    if mu.is_zero() {
        return Err(Error::Commutative);
    }
    let n = mu.dim();
    let t = mu.to_dense();
    let scale = mu.norm_sq().max(f64::MIN_POSITIVE);
    let mut worst = (0.0, 0, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                for m in 0..n {
                    let mut acc = 0.0;
                    for p in 0..n {
                        acc += t.get(i, j, p) * t.get(p, l, m)
                            + t.get(j, l, p) * t.get(p, i, m)
                            + t.get(l, i, p) * t.get(p, j, m);
                    }
                    if acc.abs() > worst.0 {
                        worst = (acc.abs(), i, j, l);
                    }
                }
            }
        }
    }
    if worst.0 > EPS_JAC * scale {
        return Err(Error::JacobiViolation { i: worst.1 + 1, j: worst.2 + 1, k: worst.3 + 1, residual: worst.0 });
    }
    let (dims, last) = lower_central_series(mu)?;
    Ok(ValidationReport {
        dim: n,
        support: mu.support_len(),
        jacobi_residual: worst.0,
        nilpotency_step: dims.len() - 1,
        lower_central_series: dims,
        central_vector: last,
    })
}

/// Dimensions of `C^0 = g, C^{k+1} = [g, C^k]` and a unit vector from the last nonzero term.
pub fn lower_central_series(mu: &StructureTensor) -> Result<(Vec<usize>, Vector)> {
    let n = mu.dim();
    let mut basis = Mat::identity(n, n);
    let mut dims = vec![n];
    let mut last = basis.clone();
    while basis.ncols() > 0 {
        if dims.len() > n + 1 {
            return Err(Error::NotNilpotent { dim: n });
        }
        let mut images = Vec::new();
        for i in 0..n {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            for c in 0..basis.ncols() {
                images.push(mu.bracket(&e, &basis.column(c).into_owned()));
            }
        }
        let next = if images.is_empty() { Mat::zeros(n, 0) } else { column_span(&Mat::from_columns(&images)) };
        if next.ncols() == basis.ncols() {
            return Err(Error::NotNilpotent { dim: n });
        }
        last = basis;
        basis = next;
        dims.push(basis.ncols());
    }
    Ok((dims, pick_vector(&last)))
}

fn column_span(m: &Mat) -> Mat {
    let svd = nalgebra::SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let scale = svd.singular_values.amax().max(1.0);
    let cols: Vec<Vector> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * scale)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        Mat::zeros(m.nrows(), 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Deterministic unit vector from a subspace: the projection of the last coordinate axis
/// with the largest projection, sign fixed so its largest entry is positive.
fn pick_vector(basis: &Mat) -> Vector {
    let n = basis.nrows();
    let proj = basis * basis.transpose();
    let mut best = n - 1;
    for i in (0..n).rev() {
        if proj[(i, i)] > proj[(best, best)] + 1e-12 {
            best = i;
        }
    }
    let mut v = proj.column(best).into_owned().normalize();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn act_by_diagonal_on_heisenberg() {
        let h3 = corpus::heisenberg(1);
        let g = FrameChange::new(Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 1.0]))).unwrap();
        let out = h3.act(&g);
        assert!((out.coeff(0, 1, 2) - 0.5).abs() < 1e-15);
        assert_eq!(out.support_len(), 1);
    }

    #[test]
    fn act_by_identity_is_identity() {
        let l5 = corpus::filiform(5);
        assert_eq!(l5.act(&FrameChange::identity(5)), l5);
    }

    #[test]
    fn antisymmetric_lookup() {
        let h3 = corpus::heisenberg(1);
        assert_eq!(h3.coeff(1, 0, 2), -1.0);
        let x = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(h3.bracket(&x, &y)[2], -1.0);
    }

    #[test]
    fn lower_central_series_dims() {
        assert_eq!(validate(&corpus::heisenberg(1)).unwrap().lower_central_series, vec![3, 1, 0]);
        assert_eq!(validate(&corpus::n4()).unwrap().lower_central_series, vec![4, 2, 1, 0]);
        assert_eq!(validate(&corpus::heisenberg(2)).unwrap().lower_central_series, vec![5, 1, 0]);
    }

    #[test]
    fn central_vector_of_heisenberg() {
        let rep = validate(&corpus::heisenberg(2)).unwrap();
        assert!((rep.central_vector[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_violation_detected() {
        // so(3) brackets satisfy Jacobi but are not nilpotent.
        let so3 = StructureTensor::from_triples(3, &[(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0)]).unwrap();
        assert!(matches!(validate(&so3), Err(Error::NotNilpotent { .. })));
        let bad = StructureTensor::from_triples(3, &[(0, 1, 2, 1.0), (0, 2, 0, 1.0)]).unwrap();
        assert!(matches!(validate(&bad), Err(Error::JacobiViolation { .. })));
    }

    #[test]
    fn rho_star_of_identity_is_minus_mu() {
        let l6 = corpus::filiform(6);
        let r = l6.rho_star(&Mat::identity(6, 6));
        assert!((tensor_inner(&r, &l6) + l6.norm_sq()).abs() < 1e-12);
    }
}
