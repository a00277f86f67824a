//! Soliton and obstruction certificates, and their re-verification.
//!
//! Verification recomputes everything through routes that share as little code as possible with
//! the producers: Padé matrix exponentials instead of eigen-decompositions, the moment-map Ricci
//! instead of the contraction formula, and the defining minimum for weights. Tolerances are ten
//! times tighter than the ones used to accept a candidate.

use crate::algebra::{FrameChange, StructureTensor};
use crate::derivations::{derivation_defect, PreEinstein};
use crate::error::{Error, Result};
use crate::linalg::{exp_sym, is_orthogonal, Mat};
use crate::ricci::{ricci_dense, ricci_via_moment_map, soliton_fit};
use crate::stability::{check_in_p, hm_weight_in_frame, ObstructionCertificate, ObstructionKind};
use crate::tolerances::{EPS_CERT, EPS_DER, EPS_SOL};

/// The metric `exp(A)` on the working-frame bracket solves `Ric = c I + D` with `D` a derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonCertificate {
    pub a: Mat,
    pub c: f64,
    pub d: Mat,
    /// `|Ric - c (I - phi)| / |g . mu|^2`, scale-free.
    pub residual: f64,
    /// `log |g . mu|^2`.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    Soliton(SolitonCertificate),
    Obstruction(ObstructionCertificate),
}

/// Builds the certificate for `exp(a)` against `pe.bracket` at its own scale.
pub fn soliton_certificate(pe: &PreEinstein, a: &Mat) -> SolitonCertificate {
    let dense = pe.bracket.to_dense();
    let moved = dense.act(&exp_sym(a), &exp_sym(&-a));
    let nsq = moved.norm_sq();
    let ric = ricci_dense(&moved);
    let fit = soliton_fit(&ric, &pe.phi);
    SolitonCertificate { a: a.clone(), c: fit.c, d: fit.d, residual: fit.residual / nsq, energy: nsq.ln() }
}

/// One named check of a verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Verification {
    pub checks: Vec<Check>,
}

impl Verification {
    fn push(&mut self, name: &'static str, value: f64, bound: f64) {
        self.checks.push(Check { name, value, bound });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    /// `Ok(())` when every check passes, otherwise `MalformedCertificate` naming the first failure.
    pub fn into_result(self) -> Result<()> {
        match self.checks.iter().find(|c| !c.passed()) {
            None => Ok(()),
            Some(c) => Err(Error::MalformedCertificate {
                reason: format!("{} = {:e} exceeds {:e}", c.name, c.value, c.bound),
            }),
        }
    }
}

fn finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn shape(m: &Mat, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n || !finite(m) {
        return Err(Error::MalformedCertificate { reason: format!("{what} must be a finite {n}x{n} matrix") });
    }
    Ok(())
}

pub fn verify_soliton(cert: &SolitonCertificate, pe: &PreEinstein) -> Result<Verification> {
    let n = pe.dim();
    shape(&cert.a, n, "A")?;
    shape(&cert.d, n, "D")?;
    if !cert.c.is_finite() || !cert.energy.is_finite() {
        return Err(Error::MalformedCertificate { reason: "non-finite scalar".into() });
    }
    let mut v = Verification::default();
    let in_p = match check_in_p(&cert.a, pe, 1e-9) {
        Ok(()) => 0.0,
        Err(_) => f64::INFINITY,
    };
    v.push("A outside the tangent space", in_p, 0.0);

    let g = cert.a.clone().exp();
    let g_inv = (-&cert.a).exp();
    let moved = pe.bracket.act(&FrameChange::from_pair(g, g_inv));
    let nsq = moved.norm_sq();
    let ric = ricci_via_moment_map(&moved);
    let ident = Mat::identity(n, n);

    let eq = (&ric - &ident * cert.c - &cert.d).norm() / nsq;
    v.push("|Ric - cI - D| / |g.mu|^2", eq, EPS_SOL / 10.0);
    let der = derivation_defect(&cert.d, &moved) / (cert.d.norm().max(f64::MIN_POSITIVE) * nsq.sqrt());
    v.push("relative derivation defect of D", der, EPS_DER / 10.0);
    let fit = soliton_fit(&ric, &pe.phi);
    v.push("|Ric - c(I - phi)| / |g.mu|^2", fit.residual / nsq, EPS_SOL / 10.0);
    v.push("claimed residual", cert.residual, EPS_SOL);
    v.push("energy mismatch", (nsq.ln() - cert.energy).abs(), 1e-9 * cert.energy.abs().max(1.0));
    Ok(v)
}

pub fn verify_obstruction(cert: &ObstructionCertificate, pe: &PreEinstein) -> Result<Verification> {
    let n = pe.dim();
    shape(&cert.lambda, n, "lambda")?;
    shape(&cert.frame, n, "frame")?;
    if !cert.nu.is_finite() {
        return Err(Error::MalformedCertificate { reason: "non-finite weight".into() });
    }
    let mu = &pe.bracket;
    let mut v = Verification::default();
    let lambda_norm = cert.lambda.norm();
    v.push("1 / |lambda|", 1.0 / lambda_norm, 1e12);
    let in_p = match check_in_p(&cert.lambda, pe, 1e-9) {
        Ok(()) => 0.0,
        Err(_) => f64::INFINITY,
    };
    v.push("lambda outside the tangent space", in_p, 0.0);
    v.push("frame orthogonality defect", if is_orthogonal(&cert.frame, 1e-10) { 0.0 } else { f64::INFINITY }, 0.0);
    let nu = hm_weight_in_frame(&cert.lambda, mu, &cert.frame)?;
    v.push("weight mismatch", (nu - cert.nu).abs(), 1e-8 * cert.nu.abs().max(1.0));

    let rel_defect = derivation_defect(&cert.lambda, mu) / (lambda_norm * mu.norm());
    match cert.kind {
        ObstructionKind::NegativeWeight => {
            v.push("weight", nu, -EPS_CERT);
            v.push("1 / relative derivation defect", 1.0 / rel_defect, 1.0 / (10.0 * EPS_DER));
        }
        ObstructionKind::ZeroPhi => {
            v.push("phi norm", pe.phi.norm(), 0.0);
            v.push("weight", nu, -EPS_CERT);
            v.push("1 / relative derivation defect", 1.0 / rel_defect, 1.0 / (10.0 * EPS_DER));
        }
        ObstructionKind::Scaling => {
            let c = cert.scaling_constant.ok_or_else(|| Error::MalformedCertificate {
                reason: "scaling certificate without a constant".into(),
            })?;
            v.push("1 / |c|", 1.0 / c.abs(), 1.0 / EPS_CERT);
            let dense = mu.to_dense();
            let lin = dense.rho_star(&cert.lambda).sub(&dense.scaled(c)).norm_sq().sqrt() / mu.norm();
            v.push("|rho_*(lambda) mu - c mu| / |mu|", lin, EPS_CERT / 10.0);
            let g = cert.lambda.clone().exp();
            let g_inv = (-&cert.lambda).exp();
            let grp = dense.act(&g, &g_inv).sub(&dense.scaled(c.exp())).norm_sq().sqrt() / mu.norm();
            v.push("|rho(exp lambda) mu - e^c mu| / |mu|", grp, 1e-6);
            v.push("weight", nu, -EPS_CERT);
        }
    }
    Ok(v)
}

pub fn verify_certificate(cert: &Certificate, pe: &PreEinstein) -> Result<Verification> {
    match cert {
        Certificate::Soliton(c) => verify_soliton(c, pe),
        Certificate::Obstruction(c) => verify_obstruction(c, pe),
    }
}

/// Brackets the certificate's own subject: the working-frame bracket of `pe` moved by `exp(A)`.
pub fn soliton_bracket(cert: &SolitonCertificate, pe: &PreEinstein) -> StructureTensor {
    pe.bracket.act(&FrameChange::from_pair(exp_sym(&cert.a), exp_sym(&-&cert.a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::derivations::pre_einstein;
    use crate::stability::{scaling_obstruction, zero_phi_obstruction, PBasis};

    #[test]
    fn standard_soliton_verifies() {
        for name in ["h3", "n4", "h5", "free23"] {
            let pe = pre_einstein(&corpus::by_name(name).unwrap()).unwrap();
            let cert = soliton_certificate(&pe, &Mat::zeros(pe.dim(), pe.dim()));
            let v = verify_soliton(&cert, &pe).unwrap();
            assert!(v.passed(), "{name}: {v:?}");
        }
    }

    #[test]
    fn tampered_soliton_fails() {
        let pe = pre_einstein(&corpus::n4()).unwrap();
        let good = soliton_certificate(&pe, &Mat::zeros(4, 4));
        let mut bad = good.clone();
        bad.c += 1e-3;
        assert!(!verify_soliton(&bad, &pe).unwrap().passed());
        let mut bad = good.clone();
        bad.d[(0, 1)] += 1e-3;
        assert!(!verify_soliton(&bad, &pe).unwrap().passed());
        let mut bad = good;
        bad.a[(0, 0)] = f64::NAN;
        assert!(matches!(verify_soliton(&bad, &pe), Err(Error::MalformedCertificate { .. })));
    }

    #[test]
    fn obstructions_verify() {
        let h3 = corpus::heisenberg(1);
        let pe = crate::derivations::PreEinstein::from_diagonal(&h3, &[0.0; 3]);
        let z = zero_phi_obstruction(&pe).unwrap();
        assert!(verify_obstruction(&z, &pe).unwrap().passed());
        let s = scaling_obstruction(&pe, &PBasis::new(&pe)).unwrap().unwrap();
        assert!(verify_obstruction(&s, &pe).unwrap().passed());

        let mut bad = z.clone();
        bad.nu = 1.0;
        assert!(!verify_obstruction(&bad, &pe).unwrap().passed());
        let mut bad = s;
        bad.scaling_constant = Some(bad.scaling_constant.unwrap() + 0.01);
        assert!(!verify_obstruction(&bad, &pe).unwrap().passed());
    }
}
