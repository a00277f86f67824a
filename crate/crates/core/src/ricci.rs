//! Ricci endomorphism of a metric nilpotent Lie algebra and the soliton equation.

use crate::algebra::{BracketTensor, StructureTensor};
use crate::derivations::PreEinstein;
use crate::linalg::{hs_inner, Mat};

/// Ricci endomorphism of the standard inner product for which the basis is orthonormal.
///
/// `R_ab = -1/2 sum_ij mu_ai^j mu_bi^j + 1/4 sum_ij mu_ij^a mu_ij^b`, both sums over ordered pairs.
pub fn ricci_endo(mu: &StructureTensor) -> Mat {
    ricci_dense(&mu.to_dense())
}

pub fn ricci_dense(t: &BracketTensor) -> Mat {
    let n = t.dim();
    let mut r = Mat::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc -= 0.5 * t.get(a, i, j) * t.get(b, i, j);
                    acc += 0.25 * t.get(i, j, a) * t.get(i, j, b);
                }
            }
            r[(a, b)] = acc;
            r[(b, a)] = acc;
        }
    }
    r
}

/// Ricci endomorphism through the moment-map identity `<Ric, E> = 1/2 <rho_*(E) mu, mu>`
/// evaluated on the symmetric unit matrices. Shares no code with [`ricci_dense`].
pub fn ricci_via_moment_map(mu: &StructureTensor) -> Mat {
    let n = mu.dim();
    let dense = mu.to_dense();
    let mut r = Mat::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let mut e = Mat::zeros(n, n);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            // <Ric, E_ab + E_ba> = 2 R_ab off the diagonal, <Ric, E_aa> = R_aa on it.
            let weight = if a == b { 0.5 } else { 0.25 };
            let value = weight * dense.rho_star(&e).inner(&dense);
            r[(a, b)] = value;
            r[(b, a)] = value;
        }
    }
    r
}

/// Best fit of `Ric = c I + D` with `D` in the line of `phi` plus a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonFit {
    pub c: f64,
    pub d: Mat,
    /// `|Ric - c (I - phi)|`.
    pub residual: f64,
}

/// Projects `Ric` onto `R(I - phi)`: `c = <Ric, I-phi> / |I-phi|^2`, `D = Ric - c I`.
pub fn soliton_fit(ric: &Mat, phi: &Mat) -> SolitonFit {
    let n = ric.nrows();
    let s = Mat::identity(n, n) - phi;
    let c = hs_inner(ric, &s) / hs_inner(&s, &s);
    let rest = ric - &s * c;
    let d = -phi * c + &rest;
    SolitonFit { c, d, residual: rest.norm() }
}

/// Soliton fit of the standard metric on the working-frame bracket of `pe`.
pub fn soliton_residual(mu: &StructureTensor, pe: &PreEinstein) -> SolitonFit {
    soliton_fit(&ricci_endo(mu), &pe.phi)
}
