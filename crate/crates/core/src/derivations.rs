//! Derivation algebras and the pre-Einstein derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{FrameChange, StructureTensor};
use crate::error::{Error, Result};
use crate::linalg::{hs_inner, null_space, sym_pinv_solve, Mat, Vector};
use crate::tolerances::{EPS_DER, EPS_EIG, EPS_PE, EPS_RANK, KAPPA_MAX};

/// Number of random points of the solution set tried when the minimal-norm
/// solution is not diagonalisable.
const RESAMPLE_ATTEMPTS: usize = 32;
const RESAMPLE_SEED: u64 = 0x5eed_0001;

/// Hilbert-Schmidt orthonormal basis of `Der(mu)`.
#[derive(Debug, Clone)]
pub struct DerivationSpace {
    pub basis: Vec<Mat>,
    /// Singular values of the constraint map, descending.
    pub singular_values: Vec<f64>,
}

impl DerivationSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projection of `m` onto the span of the basis.
    pub fn project(&self, m: &Mat) -> Mat {
        let mut out = Mat::zeros(m.nrows(), m.ncols());
        for b in &self.basis {
            out += b * hs_inner(b, m);
        }
        out
    }
}

/// Matrix of `D -> rho_*(D) mu` with `D` flattened row-major into `n^2` columns.
pub fn constraint_matrix(mu: &StructureTensor) -> Mat {
    let n = mu.dim();
    let dense = mu.to_dense();
    let rows = n * n * (n - 1) / 2;
    let mut m = Mat::zeros(rows, n * n);
    for a in 0..n {
        for b in 0..n {
            let mut e = Mat::zeros(n, n);
            e[(a, b)] = 1.0;
            let col = dense.rho_star(&e).upper_vec();
            for (r, v) in col.into_iter().enumerate() {
                m[(r, a * n + b)] = v;
            }
        }
    }
    m
}

pub fn derivation_space(mu: &StructureTensor) -> Result<DerivationSpace> {
    let n = mu.dim();
    let ns = null_space(&constraint_matrix(mu), EPS_RANK);
    if ns.ambiguous {
        let value = ns
            .singular_values
            .iter()
            .copied()
            .find(|&s| s > ns.cutoff / 10.0 && s < ns.cutoff * 10.0)
            .unwrap_or(ns.cutoff);
        return Err(Error::RankAmbiguity { value, cutoff: ns.cutoff });
    }
    let basis = (0..ns.dim()).map(|c| Mat::from_row_slice(n, n, ns.basis.column(c).as_slice())).collect();
    Ok(DerivationSpace { basis, singular_values: ns.singular_values })
}

/// Norm of `rho_*(lambda) mu`.
pub fn derivation_defect(lambda: &Mat, mu: &StructureTensor) -> f64 {
    mu.to_dense().rho_star(lambda).norm_sq().sqrt()
}

pub fn is_derivation(lambda: &Mat, mu: &StructureTensor) -> bool {
    derivation_defect(lambda, mu) <= EPS_DER * lambda.norm() * mu.norm()
}

/// The pre-Einstein derivation in a working frame where it is diagonal.
#[derive(Debug, Clone)]
pub struct PreEinstein {
    /// Diagonal in the working frame.
    pub phi: Mat,
    /// The solution of the trace system in the input frame.
    pub phi_input: Mat,
    /// Eigenvalues ascending, with multiplicity.
    pub eigenvalues: Vec<f64>,
    /// Working-frame indices grouped by eigenvalue, groups ordered by ascending eigenvalue.
    pub groups: Vec<Vec<usize>>,
    pub is_zero: bool,
    /// Maps the input frame to the working frame.
    pub frame: FrameChange,
    /// The bracket expressed in the working frame.
    pub bracket: StructureTensor,
    /// Max over derivation basis elements of `|tr(phi psi) - tr(psi)|`.
    pub trace_residual: f64,
    pub derivation_dim: usize,
    /// Random solution-set samples consumed before a diagonalisable one was found.
    pub resamples: usize,
}

impl PreEinstein {
    /// Diagonal entries of `I - phi`.
    pub fn s(&self) -> Vec<f64> {
        (0..self.phi.nrows()).map(|i| 1.0 - self.phi[(i, i)]).collect()
    }

    pub fn phi_diag(&self) -> Vec<f64> {
        (0..self.phi.nrows()).map(|i| self.phi[(i, i)]).collect()
    }

    pub fn has_simple_spectrum(&self) -> bool {
        self.groups.iter().all(|g| g.len() == 1)
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    /// A pre-Einstein record with a prescribed diagonal, bypassing the trace system.
    ///
    /// Used to state hypotheses in tests and to replay synthetic fixtures; the bracket is
    /// taken as already expressed in the working frame.
    pub fn from_diagonal(mu: &StructureTensor, diag: &[f64]) -> Self {
        let n = mu.dim();
        let phi = Mat::from_diagonal(&Vector::from_column_slice(diag));
        let (eigenvalues, groups) = group_diagonal(diag);
        PreEinstein {
            phi_input: phi.clone(),
            phi,
            eigenvalues,
            groups,
            is_zero: diag.iter().all(|v| v.abs() <= EPS_PE),
            frame: FrameChange::identity(n),
            bracket: mu.clone(),
            trace_residual: 0.0,
            derivation_dim: 0,
            resamples: 0,
        }
    }
}

/// Sorts diagonal entries and clusters indices whose values agree within `EPS_EIG`.
pub fn group_diagonal(diag: &[f64]) -> (Vec<f64>, Vec<Vec<usize>>) {
    let mut order: Vec<usize> = (0..diag.len()).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
    let scale = diag.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if (diag[i] - diag[*g.last().unwrap()]).abs() <= EPS_EIG * scale => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    for g in &mut groups {
        g.sort();
    }
    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    (eigenvalues, groups)
}

pub fn pre_einstein(mu: &StructureTensor) -> Result<PreEinstein> {
    let der = derivation_space(mu)?;
    let n = mu.dim();
    let d = der.dim();
    let mut gram = Mat::zeros(d, d);
    let mut traces = Vector::zeros(d);
    for a in 0..d {
        traces[a] = der.basis[a].trace();
        for b in 0..d {
            gram[(a, b)] = (&der.basis[a] * &der.basis[b]).trace();
        }
    }
    let x = sym_pinv_solve(&gram, &traces, EPS_RANK);
    let residual = (&gram * &x - &traces).amax();
    if residual > EPS_PE * traces.amax().max(1.0) {
        return Err(Error::SemisimplicityUnverified { reason: format!("trace system residual {residual:e}") });
    }
    let combine = |coef: &Vector| {
        let mut m = Mat::zeros(n, n);
        for (a, b) in der.basis.iter().enumerate() {
            m += b * coef[a];
        }
        m
    };
    let kernel = null_space(&gram, EPS_RANK);
    let mut candidate = combine(&x);
    let mut attempt = compatible_frame(mu, &candidate);
    let mut resamples = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(RESAMPLE_SEED);
    while attempt.is_err() && resamples < RESAMPLE_ATTEMPTS && kernel.dim() > 0 {
        resamples += 1;
        let mut y: Vector = Vector::from_fn(kernel.dim(), |_, _| StandardNormal.sample(&mut rng));
        y /= y.norm().max(1.0);
        let coef = &x + &kernel.basis * y;
        candidate = combine(&coef);
        attempt = compatible_frame(mu, &candidate);
    }
    let (frame, bracket, phi) = attempt.map_err(|e| Error::SemisimplicityUnverified { reason: e.to_string() })?;
    let trace_residual =
        der.basis.iter().map(|psi| ((&candidate * psi).trace() - psi.trace()).abs()).fold(0.0, f64::max);
    let diag: Vec<f64> = (0..n).map(|i| phi[(i, i)]).collect();
    let (eigenvalues, groups) = group_diagonal(&diag);
    Ok(PreEinstein {
        is_zero: diag.iter().all(|v| v.abs() <= EPS_PE),
        phi,
        phi_input: candidate,
        eigenvalues,
        groups,
        frame,
        bracket,
        trace_residual,
        derivation_dim: d,
        resamples,
    })
}

/// Frame in which a real semisimple `phi_raw` is diagonal.
///
/// Returns `g0`, the bracket `rho(g0) mu` and the diagonal form of `phi_raw`.
pub fn compatible_frame(mu: &StructureTensor, phi_raw: &Mat) -> Result<(FrameChange, StructureTensor, Mat)> {
    let n = phi_raw.nrows();
    let scale = phi_raw.amax().max(1.0);
    let mut off = phi_raw.clone();
    off.fill_diagonal(0.0);
    if off.amax() <= 1e-12 * scale {
        let phi = Mat::from_diagonal(&phi_raw.diagonal());
        return Ok((FrameChange::identity(n), mu.clone(), phi));
    }
    let p = if (phi_raw - phi_raw.transpose()).amax() <= 1e-12 * scale {
        crate::linalg::sym_eigen(phi_raw).1
    } else {
        eigenvector_matrix(phi_raw, scale)?
    };
    let sv = nalgebra::SVD::new(p.clone(), false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > KAPPA_MAX {
        return Err(Error::NonDiagonalizable { reason: format!("eigenvector condition {condition:e}") });
    }
    let p_inv = p.clone().try_inverse().ok_or(Error::NonDiagonalizable { reason: "singular eigenvectors".into() })?;
    let frame = FrameChange::new(p_inv)?;
    let conj = frame.matrix() * phi_raw * frame.inverse();
    let mut off = conj.clone();
    off.fill_diagonal(0.0);
    if off.amax() > EPS_EIG * scale {
        return Err(Error::NonDiagonalizable { reason: format!("residual off-diagonal {:e}", off.amax()) });
    }
    let phi = Mat::from_diagonal(&conj.diagonal());
    let bracket = mu.act(&frame);
    Ok((frame, bracket, phi))
}

/// Columns are eigenvectors of a real matrix with real spectrum, ordered by eigenvalue.
fn eigenvector_matrix(m: &Mat, scale: f64) -> Result<Mat> {
    let n = m.nrows();
    let eig = nalgebra::Schur::new(m.clone()).complex_eigenvalues();
    let imag = eig.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    if imag > EPS_EIG * scale {
        return Err(Error::NonDiagonalizable { reason: format!("non-real eigenvalue, imaginary part {imag:e}") });
    }
    let real: Vec<f64> = eig.iter().map(|z| z.re).collect();
    let (_, groups) = group_diagonal(&real);
    let mut cols: Vec<Vector> = Vec::with_capacity(n);
    for g in &groups {
        let value = g.iter().map(|&i| real[i]).sum::<f64>() / g.len() as f64;
        let shifted = m - Mat::identity(n, n) * value;
        let ns = null_space(&shifted, EPS_EIG);
        if ns.dim() != g.len() {
            return Err(Error::NonDiagonalizable {
                reason: format!("eigenvalue {value} has multiplicity {} but {} eigenvectors", g.len(), ns.dim()),
            });
        }
        cols.extend((0..ns.dim()).map(|c| ns.basis.column(c).into_owned()));
    }
    Ok(Mat::from_columns(&cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::linalg::haar_orthogonal;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(v))
    }

    #[test]
    fn derivation_dimensions() {
        assert_eq!(derivation_space(&corpus::heisenberg(1)).unwrap().dim(), 6);
        // Der(h5) = csp(4) + Hom(v, z): 11 + 4.
        assert_eq!(derivation_space(&corpus::heisenberg(2)).unwrap().dim(), 15);
    }

    #[test]
    fn derivation_examples() {
        let h3 = corpus::heisenberg(1);
        assert!(is_derivation(&diag(&[1.0, 1.0, 2.0]), &h3));
        assert!(!is_derivation(&Mat::identity(3, 3), &h3));
        assert!(!is_derivation(&diag(&[1.0, 0.0, 0.0, 0.0]), &corpus::n4()));
    }

    #[test]
    fn pre_einstein_examples() {
        let cases: [(StructureTensor, Vec<f64>); 3] = [
            (corpus::heisenberg(1), vec![2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]),
            (corpus::n4(), vec![1.0 / 3.0, 2.0 / 3.0, 1.0, 4.0 / 3.0]),
            (corpus::heisenberg(2), vec![0.75, 0.75, 0.75, 0.75, 1.5]),
        ];
        for (mu, expected) in cases {
            let pe = pre_einstein(&mu).unwrap();
            for (a, b) in pe.phi_diag().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-8, "{:?}", pe.phi_diag());
            }
            assert!(pe.trace_residual < 1e-8);
            assert!(is_derivation(&pe.phi, &pe.bracket));
        }
    }

    #[test]
    fn rotated_input_keeps_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h3 = corpus::heisenberg(1);
        let q = FrameChange::orthogonal(haar_orthogonal(3, &mut rng));
        let pe = pre_einstein(&h3.act(&q)).unwrap();
        let expected = [2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0];
        for (a, b) in pe.eigenvalues.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(pe.groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn sheared_input_gets_working_frame() {
        let h3 = corpus::heisenberg(1);
        let shear = Mat::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.7, -0.3, 1.0]);
        let sheared = h3.act(&FrameChange::new(shear).unwrap());
        let pe = pre_einstein(&sheared).unwrap();
        assert!(crate::algebra::validate(&pe.bracket).is_ok());
        assert!(is_derivation(&pe.phi, &pe.bracket));
        assert!((pe.eigenvalues[2] - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn grouping() {
        let (vals, groups) = group_diagonal(&[1.0, 0.5, 1.0 + 1e-9, 2.0]);
        assert_eq!(vals.len(), 4);
        assert_eq!(groups, vec![vec![1], vec![0, 2], vec![3]]);
    }
}
