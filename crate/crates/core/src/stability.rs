//! The scaling line, the admissible tangent space, Hilbert-Mumford weights and obstructions.

use serde::{Deserialize, Serialize};

use crate::algebra::{lower_central_series, FrameChange, StructureTensor};
use crate::derivations::{is_derivation, PreEinstein};
use crate::error::{Error, Result};
use crate::linalg::{frame_with_last, hs_inner, null_space, sym_eigen, Mat, Vector};
use crate::tolerances::{EPS_CERT, EPS_EIG, EPS_MU, EPS_RANK};

/// The line spanned by `I - phi`.
#[derive(Debug, Clone)]
pub struct SDirection {
    pub s: Mat,
    pub norm_sq: f64,
}

pub fn s_direction(pe: &PreEinstein) -> SDirection {
    let n = pe.dim();
    let s = Mat::identity(n, n) - &pe.phi;
    let norm_sq = hs_inner(&s, &s);
    SDirection { s, norm_sq }
}

/// Orthonormal basis of the symmetric endomorphisms that commute with `phi` and are
/// orthogonal to `I - phi`, in the working frame.
#[derive(Debug, Clone)]
pub struct PBasis {
    pub elements: Vec<Mat>,
    n: usize,
}

impl PBasis {
    pub fn new(pe: &PreEinstein) -> Self {
        let n = pe.dim();
        let s = pe.s();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit_s: Vec<f64> = s.iter().map(|v| v / s_norm).collect();
        let mut diagonal: Vec<Vector> = Vec::new();
        for i in 0..n {
            let mut v = Vector::from_fn(n, |r, _| -unit_s[r] * unit_s[i]);
            v[i] += 1.0;
            for d in &diagonal {
                v -= d * d.dot(&v);
            }
            let norm = v.norm();
            if norm > 1e-8 {
                diagonal.push(v / norm);
            }
        }
        let mut elements: Vec<Mat> = diagonal.iter().map(Mat::from_diagonal).collect();
        for g in &pe.groups {
            for (a, &i) in g.iter().enumerate() {
                for &j in &g[a + 1..] {
                    let mut m = Mat::zeros(n, n);
                    m[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
                    m[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
                    elements.push(m);
                }
            }
        }
        PBasis { elements, n }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn to_matrix(&self, coords: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.n, self.n);
        for (e, &c) in self.elements.iter().zip(coords) {
            m += e * c;
        }
        m
    }

    pub fn coords(&self, m: &Mat) -> Vec<f64> {
        self.elements.iter().map(|e| hs_inner(e, m)).collect()
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, m: &Mat) -> Mat {
        self.to_matrix(&self.coords(m))
    }
}

/// Checks symmetry, commutation with `phi` and orthogonality to `I - phi`.
pub fn check_in_p(lambda: &Mat, pe: &PreEinstein, tol: f64) -> Result<()> {
    let scale = lambda.norm().max(1.0);
    let asym = (lambda - lambda.transpose()).amax();
    if asym > tol * scale {
        return Err(Error::NotInP { reason: format!("asymmetry {asym:e}") });
    }
    let comm = (lambda * &pe.phi - &pe.phi * lambda).amax();
    if comm > tol * scale {
        return Err(Error::NotInP { reason: format!("commutator with phi {comm:e}") });
    }
    let sd = s_direction(pe);
    let along = hs_inner(lambda, &sd.s) / sd.norm_sq.sqrt();
    if along.abs() > tol * scale {
        return Err(Error::NotInP { reason: format!("component along I - phi {along:e}") });
    }
    Ok(())
}

/// A Hilbert-Mumford weight with a witness.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight {
    pub nu: f64,
    /// 1-based `(i, j, k)` in the eigenframe of `lambda` attaining the weight.
    pub witness: (usize, usize, usize),
    /// Orthogonal eigenframe of `lambda` (columns), eigenvalues ascending.
    pub frame: Mat,
    pub eigenvalues: Vec<f64>,
}

fn ensure_symmetric(lambda: &Mat) -> Result<()> {
    let defect = (lambda - lambda.transpose()).amax();
    if !lambda.is_square() || defect > 1e-10 * lambda.amax().max(1.0) {
        return Err(Error::AsymmetricInput { defect });
    }
    Ok(())
}

/// `nu(lambda; mu)`: the largest eigenvalue of `rho_*(lambda)` on which `mu` has a nonzero component.
///
/// Eigenvalues of `rho_*(lambda)` closer than `EPS_EIG` are merged before the components are
/// measured, so the answer does not depend on the choice of eigenbasis inside repeated eigenspaces.
pub fn hm_weight(lambda: &Mat, mu: &StructureTensor) -> Result<Weight> {
    ensure_symmetric(lambda)?;
    if mu.is_zero() {
        return Err(Error::Commutative);
    }
    let n = mu.dim();
    let mut off = lambda.clone();
    off.fill_diagonal(0.0);
    let (vals, q) = if off.amax() == 0.0 {
        ((0..n).map(|i| lambda[(i, i)]).collect(), Mat::identity(n, n))
    } else {
        sym_eigen(lambda)
    };
    let moved = mu.to_dense().act(&q.transpose(), &q);
    let mut comps: Vec<(f64, f64, (usize, usize, usize))> = Vec::new();
    let mut max_coeff = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..n {
                let c = moved.get(i, j, k);
                max_coeff = max_coeff.max(c.abs());
                comps.push((vals[k] - vals[i] - vals[j], c, (i + 1, j + 1, k + 1)));
            }
        }
    }
    comps.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tol = EPS_EIG * vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let threshold = EPS_MU * max_coeff;
    let mut start = 0;
    while start < comps.len() {
        let mut end = start + 1;
        while end < comps.len() && comps[end - 1].0 - comps[end].0 <= tol {
            end += 1;
        }
        let cluster = &comps[start..end];
        let mass: f64 = cluster.iter().map(|c| c.1 * c.1).sum();
        if mass.sqrt() > threshold {
            let best = cluster.iter().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).expect("nonempty");
            let nu = cluster.iter().map(|c| c.0 * c.1 * c.1).sum::<f64>() / mass;
            return Ok(Weight { nu, witness: best.2, frame: q, eigenvalues: vals });
        }
        start = end;
    }
    Err(Error::Commutative)
}

/// `nu` straight from the definition in a given orthonormal frame diagonalising `lambda`:
/// `-min(l_i + l_j - l_k)` over the support of the transported bracket.
pub fn hm_weight_in_frame(lambda: &Mat, mu: &StructureTensor, frame: &Mat) -> Result<f64> {
    let n = mu.dim();
    let d = frame.transpose() * lambda * frame;
    let mut off = d.clone();
    off.fill_diagonal(0.0);
    if off.amax() > 1e-8 * lambda.amax().max(1.0) {
        return Err(Error::FrameNotDiagonalizing { defect: off.amax() });
    }
    let moved = mu.act(&FrameChange::orthogonal(frame.transpose()));
    let mut best = f64::INFINITY;
    for (i, j, k, _) in moved.triples() {
        best = best.min(d[(i, i)] + d[(j, j)] - d[(k, k)]);
    }
    if n == 0 || !best.is_finite() {
        return Err(Error::Commutative);
    }
    Ok(-best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstructionKind {
    NegativeWeight,
    Scaling,
    ZeroPhi,
}

impl ObstructionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObstructionKind::NegativeWeight => "negative-weight",
            ObstructionKind::Scaling => "scaling",
            ObstructionKind::ZeroPhi => "zero-phi",
        }
    }
}

/// A destabilising direction in the working frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstructionCertificate {
    pub kind: ObstructionKind,
    pub lambda: Mat,
    pub nu: f64,
    /// Orthogonal frame (columns) diagonalising `lambda`.
    pub frame: Mat,
    pub witness: (usize, usize, usize),
    /// `c` with `rho_*(lambda) mu = c mu`, scaling kind only.
    pub scaling_constant: Option<f64>,
}

impl ObstructionCertificate {
    /// Wraps a direction whose weight has already been found negative.
    pub fn from_direction(kind: ObstructionKind, lambda: Mat, mu: &StructureTensor) -> Result<Self> {
        let w = hm_weight(&lambda, mu)?;
        Ok(ObstructionCertificate {
            kind,
            lambda,
            nu: w.nu,
            frame: w.frame,
            witness: w.witness,
            scaling_constant: None,
        })
    }
}

/// Looks for `lambda` in the tangent space and `c != 0` with `rho_*(lambda) mu = c mu`.
pub fn scaling_obstruction(pe: &PreEinstein, pb: &PBasis) -> Result<Option<ObstructionCertificate>> {
    let mu = &pe.bracket;
    let dense = mu.to_dense();
    let base = dense.upper_vec();
    let d = pb.len();
    let mut m = Mat::zeros(base.len(), d + 1);
    for (a, e) in pb.elements.iter().enumerate() {
        for (r, v) in dense.rho_star(e).upper_vec().into_iter().enumerate() {
            m[(r, a)] = v;
        }
    }
    for (r, v) in base.iter().enumerate() {
        m[(r, d)] = -v;
    }
    let ns = null_space(&m, EPS_RANK);
    if ns.dim() == 0 {
        return Ok(None);
    }
    let c_row: Vector = ns.basis.row(d).transpose();
    if c_row.norm() <= EPS_CERT {
        return Ok(None);
    }
    let v = &ns.basis * c_row.normalize();
    let x: Vec<f64> = (0..d).map(|a| v[a]).collect();
    let x_norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
    if x_norm == 0.0 {
        return Ok(None);
    }
    let mut c = v[d] / x_norm;
    let mut lambda = pb.to_matrix(&x) / x_norm;
    if c.abs() <= EPS_CERT {
        return Ok(None);
    }
    if c > 0.0 {
        c = -c;
        lambda = -lambda;
    }
    let mut cert = ObstructionCertificate::from_direction(ObstructionKind::Scaling, lambda, mu)?;
    cert.scaling_constant = Some(c);
    Ok(Some(cert))
}

/// When `phi = 0`: `diag(1, ..., 1, -(n-1))` in a frame whose last vector is central.
pub fn zero_phi_obstruction(pe: &PreEinstein) -> Result<ObstructionCertificate> {
    if !pe.is_zero {
        return Err(Error::PhiNonzero);
    }
    let mu = &pe.bracket;
    let n = mu.dim();
    let (_, central) = lower_central_series(mu)?;
    let q = frame_with_last(&central);
    let mut d = Vector::from_element(n, 1.0);
    d[n - 1] = -(n as f64 - 1.0);
    let lambda = &q * Mat::from_diagonal(&d) * q.transpose();
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    ObstructionCertificate::from_direction(ObstructionKind::ZeroPhi, lambda, mu)
}

/// Unit element of `p ∩ Der(mu)` that is not a derivation of `g . mu`, if one exists.
pub fn tt_condition3(pe: &PreEinstein, pb: &PBasis, g: &FrameChange) -> Result<Option<Mat>> {
    let mu = &pe.bracket;
    let gm = g.matrix();
    let defect = (gm * &pe.phi - &pe.phi * gm).amax();
    if defect > 1e-9 * gm.amax().max(1.0) {
        return Err(Error::FrameNotCommuting { defect });
    }
    let dense = mu.to_dense();
    let rows = dense.upper_vec().len();
    let mut m = Mat::zeros(rows, pb.len());
    for (a, e) in pb.elements.iter().enumerate() {
        for (r, v) in dense.rho_star(e).upper_vec().into_iter().enumerate() {
            m[(r, a)] = v;
        }
    }
    let common = null_space(&m, EPS_RANK);
    if common.dim() == 0 {
        return Ok(None);
    }
    let members: Vec<Mat> = (0..common.dim())
        .map(|c| {
            let coords: Vec<f64> = common.basis.column(c).iter().copied().collect();
            pb.to_matrix(&coords)
        })
        .collect();
    let moved = mu.act(g).to_dense();
    let mut image = Mat::zeros(rows, members.len());
    for (b, w) in members.iter().enumerate() {
        for (r, v) in moved.rho_star(w).upper_vec().into_iter().enumerate() {
            image[(r, b)] = v;
        }
    }
    let svd = nalgebra::SVD::new(image, false, true);
    let top = svd.singular_values[0];
    if top <= crate::tolerances::EPS_DER * moved.norm_sq().sqrt() {
        return Ok(None);
    }
    let v_t = svd.v_t.expect("requested");
    let mut witness = Mat::zeros(mu.dim(), mu.dim());
    for (b, w) in members.iter().enumerate() {
        witness += w * v_t[(0, b)];
    }
    let witness = &witness / witness.norm();
    debug_assert!(!is_derivation(&witness, &mu.act(g)));
    Ok(Some(witness))
}
