//! Kempf-Ness energy on the symmetric space of admissible metrics, and the descent flow.
//!
//! Points are `K exp(A)` with `A` in the span of a [`PBasis`]. Right translation by `exp(A)` is an
//! isometry, so the geodesic through `K exp(A)` with initial direction `lambda` is
//! `t -> K exp(t lambda / 2) exp(A)`. All curves below use that form.

use serde::Serialize;

use crate::algebra::{BracketTensor, StructureTensor};
use crate::certificate::{soliton_certificate, SolitonCertificate};
use crate::derivations::{is_derivation, PreEinstein};
use crate::error::{Error, Result};
use crate::linalg::{exp_sym, hs_inner, log_spd, sym_eigen, Mat};
use crate::ricci::{ricci_dense, soliton_fit};
use crate::stability::{hm_weight, ObstructionCertificate, ObstructionKind, PBasis};
use crate::tolerances::{EPS_CERT, EPS_SOL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_init: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub radius_max: f64,
    pub slope_window: usize,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            max_iter: 20_000,
            grad_tol: 1e-11,
            step_init: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            radius_max: 50.0,
            slope_window: 100,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::ConfigInvalid { reason: reason.into() });
        if self.max_iter == 0 || self.slope_window == 0 {
            return bad("max_iter and slope_window must be positive");
        }
        if !(self.grad_tol > 0.0 && self.step_init > 0.0 && self.radius_max > 0.0) {
            return bad("grad_tol, step_init and radius_max must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c <= 0.5) {
            return bad("armijo_c must lie in (0, 1/2]");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

/// The energy `E(K g) = log |g . mu|^2` for a fixed bracket and tangent basis.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub pbasis: PBasis,
    pub phi: Mat,
    bracket: BracketTensor,
    radius_max: f64,
}

impl Landscape {
    pub fn new(pe: &PreEinstein) -> Self {
        Self::with_bracket(pe, &pe.bracket)
    }

    /// Landscape for another bracket expressed in the working frame of `pe`.
    pub fn with_bracket(pe: &PreEinstein, mu: &StructureTensor) -> Self {
        Landscape {
            pbasis: PBasis::new(pe),
            phi: pe.phi.clone(),
            bracket: mu.to_dense(),
            radius_max: FlowConfig::default().radius_max,
        }
    }

    pub fn set_radius_max(&mut self, r: f64) {
        self.radius_max = r;
    }

    pub fn bracket(&self) -> &BracketTensor {
        &self.bracket
    }

    pub fn matrix(&self, a: &[f64]) -> Mat {
        self.pbasis.to_matrix(a)
    }

    /// `g . mu` for a group element given with its inverse.
    pub fn transported(&self, g: &Mat, g_inv: &Mat) -> BracketTensor {
        self.bracket.act(g, g_inv)
    }

    fn at(&self, a: &Mat) -> BracketTensor {
        self.transported(&exp_sym(a), &exp_sym(&-a))
    }

    pub fn energy(&self, a: &[f64]) -> Result<f64> {
        let m = self.matrix(a);
        let radius = m.norm();
        if radius > 4.0 * self.radius_max {
            return Err(Error::Overflow { radius });
        }
        Ok(self.at(&m).norm_sq().ln())
    }

    /// Energy at `K exp(t lambda / 2) exp(A)`.
    pub fn geodesic_energy(&self, a: &[f64], lambda: &Mat, t: f64) -> f64 {
        let base = self.matrix(a);
        let half = lambda * (t / 2.0);
        let g = exp_sym(&half) * exp_sym(&base);
        let g_inv = exp_sym(&-&base) * exp_sym(&-half);
        self.transported(&g, &g_inv).norm_sq().ln()
    }

    /// Closed form at `A = 0`: `log sum exp((l_k - l_i - l_j) t) (mu'_ij^k)^2` in the eigenframe of `lambda`.
    pub fn geodesic_energy_closed_form(&self, lambda: &Mat, t: f64) -> f64 {
        exponent_sum(&self.bracket, lambda).log_sum(t)
    }

    /// `d/dt E(K exp(t lambda) exp(A))` at `t = 0`, equal to `4 <Ric(g.mu), lambda> / |g.mu|^2`.
    pub fn directional_derivative(&self, a: &[f64], lambda: &Mat) -> f64 {
        let moved = self.at(&self.matrix(a));
        4.0 * hs_inner(&ricci_dense(&moved), lambda) / moved.norm_sq()
    }

    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let moved = self.at(&self.matrix(a));
        let ric = ricci_dense(&moved) * (4.0 / moved.norm_sq());
        self.pbasis.coords(&ric)
    }

    /// Energy along a geodesic sampled on a uniform grid, with second differences.
    pub fn convexity_probe(&self, a: &[f64], lambda: &Mat, t_grid: &[f64]) -> Result<ConvexityReport> {
        if t_grid.len() < 3 {
            return Err(Error::ConfigInvalid { reason: "grid needs at least three points".into() });
        }
        let h = t_grid[1] - t_grid[0];
        if h <= 0.0 || t_grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-12 * h.max(1.0)) {
            return Err(Error::ConfigInvalid { reason: "grid must be uniform and increasing".into() });
        }
        let energies: Vec<f64> = t_grid.iter().map(|&t| self.geodesic_energy(a, lambda, t)).collect();
        let second: Vec<f64> = energies.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
        let min_second = second.iter().copied().fold(f64::INFINITY, f64::min);
        let flat = second.iter().all(|d| d.abs() <= 1e-10);
        let flat_explained = if flat {
            let moved = self.at(&self.matrix(a)).to_structure();
            Some(lambda.norm() == 0.0 || is_derivation(lambda, &moved) || is_scaling(lambda, &moved))
        } else {
            None
        };
        Ok(ConvexityReport { energies, second_differences: second, min_second_difference: min_second, flat, flat_explained })
    }
}

fn is_scaling(lambda: &Mat, mu: &StructureTensor) -> bool {
    let image = mu.to_dense().rho_star(lambda);
    let base = mu.to_dense();
    let c = image.inner(&base) / base.norm_sq();
    image.sub(&base.scaled(c)).norm_sq().sqrt() <= 1e-9 * lambda.norm() * base.norm_sq().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub energies: Vec<f64>,
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
    pub flat: bool,
    /// For flat probes: whether `lambda` is a derivation or a scaling direction of the base point.
    pub flat_explained: Option<bool>,
}

/// Squared coefficients of a bracket in the eigenframe of a symmetric matrix, tagged with the
/// eigenvalue `l_k - l_i - l_j` of `rho_*` they belong to.
struct ExponentSum {
    terms: Vec<(f64, f64)>,
}

fn exponent_sum(t: &BracketTensor, lambda: &Mat) -> ExponentSum {
    let n = t.dim();
    let (vals, q) = sym_eigen(lambda);
    let moved = t.act(&q.transpose(), &q);
    let mut terms = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in 0..n {
                let c = moved.get(i, j, k);
                if c != 0.0 {
                    terms.push((vals[k] - vals[i] - vals[j], c * c));
                }
            }
        }
    }
    ExponentSum { terms }
}

impl ExponentSum {
    fn log_sum(&self, t: f64) -> f64 {
        let top = self.terms.iter().map(|(w, _)| w * t).fold(f64::NEG_INFINITY, f64::max);
        top + self.terms.iter().map(|(w, p)| p * (w * t - top).exp()).sum::<f64>().ln()
    }

    /// `log(sum p e^{-2 eta w} / sum p)` computed without cancellation.
    fn log_ratio_descent(&self, eta: f64) -> f64 {
        let total: f64 = self.terms.iter().map(|(_, p)| p).sum();
        let delta: f64 = self.terms.iter().map(|(w, p)| p * (-2.0 * eta * w).exp_m1()).sum::<f64>() / total;
        delta.ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowRecord {
    pub energy: f64,
    pub grad_norm: f64,
    pub residual: f64,
    pub a_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowOutcome {
    Converged(SolitonCertificate),
    Diverged { candidate: Mat, nu: f64, certificate: Option<ObstructionCertificate> },
    MaxIter,
    /// The line search could not find a decrease; carries the last gradient norm.
    Stalled { grad_norm: f64 },
}

impl FlowOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            FlowOutcome::Converged(_) => "converged",
            FlowOutcome::Diverged { .. } => "diverged",
            FlowOutcome::MaxIter => "max-iter",
            FlowOutcome::Stalled { .. } => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub outcome: FlowOutcome,
    /// Final point in tangent coordinates.
    pub a: Vec<f64>,
}

impl FlowTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Gradient descent of the energy from `start` (tangent coordinates, default 0).
///
/// The bracket is normalised to unit norm first; certificates are reported for the original scale.
pub fn flow(pe: &PreEinstein, config: &FlowConfig, start: Option<&[f64]>) -> Result<FlowTrace> {
    config.validate()?;
    let norm = pe.bracket.norm();
    if norm == 0.0 {
        return Err(Error::Commutative);
    }
    let unit = pe.bracket.scaled(1.0 / norm);
    let mut land = Landscape::with_bracket(pe, &unit);
    land.set_radius_max(config.radius_max);
    let d = land.pbasis.len();
    let mut a: Vec<f64> = match start {
        Some(s) if s.len() == d => s.to_vec(),
        Some(s) => return Err(Error::DimensionMismatch { expected: d, found: s.len() }),
        None => vec![0.0; d],
    };
    let mut records: Vec<FlowRecord> = Vec::new();
    let mut step = 0.0;
    let mut last_eta = config.step_init;
    for iter in 0..=config.max_iter {
        let a_mat = land.matrix(&a);
        let a_norm = a_mat.norm();
        let g = exp_sym(&a_mat);
        let g_inv = exp_sym(&-&a_mat);
        let moved = land.transported(&g, &g_inv);
        let nsq = moved.norm_sq();
        let ric = ricci_dense(&moved) / nsq;
        let grad = land.pbasis.coords(&(&ric * 4.0));
        let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = soliton_fit(&ric, &land.phi).residual;
        records.push(FlowRecord { energy: nsq.ln(), grad_norm, residual, a_norm, step });

        if grad_norm <= config.grad_tol && residual <= EPS_SOL {
            let cert = soliton_certificate(pe, &a_mat);
            return Ok(FlowTrace { records, outcome: FlowOutcome::Converged(cert), a });
        }
        if a_norm > config.radius_max {
            let window = config.slope_window.min(iter);
            let past = &records[records.len() - 1 - window];
            let now = records.last().expect("pushed");
            let persistent = window > 0
                && records[records.len() - 1 - window..].windows(2).all(|w| w[1].energy < w[0].energy)
                && (now.energy - past.energy) / (now.a_norm - past.a_norm) < -EPS_CERT;
            if persistent || a_norm > 3.5 * config.radius_max {
                let outcome = diverged(&a_mat, &unit)?;
                return Ok(FlowTrace { records, outcome, a });
            }
        }
        if iter == config.max_iter {
            break;
        }

        let delta = land.pbasis.to_matrix(&grad);
        let sums = exponent_sum(&moved, &delta);
        let slope = grad_norm * grad_norm;
        let mut eta = config.step_init;
        let mut accepted = false;
        for _ in 0..80 {
            if sums.log_ratio_descent(eta) <= -config.armijo_c * eta * slope {
                accepted = true;
                break;
            }
            eta *= config.armijo_shrink;
        }
        if !accepted {
            // Below round-off the sufficient-decrease test cannot be evaluated; fall back to the
            // last accepted step length as long as the energy does not rise.
            eta = last_eta;
            if sums.log_ratio_descent(eta) > 0.0 {
                return Ok(FlowTrace { records, outcome: FlowOutcome::Stalled { grad_norm }, a });
            }
        }
        last_eta = eta;
        step = eta;
        let h = exp_sym(&(&delta * -eta)) * &g;
        let next = log_spd(&(h.transpose() * &h)) * 0.5;
        a = land.pbasis.coords(&next);
    }
    Ok(FlowTrace { records, outcome: FlowOutcome::MaxIter, a })
}

fn diverged(a_mat: &Mat, mu: &StructureTensor) -> Result<FlowOutcome> {
    let candidate = a_mat / a_mat.norm();
    let w = hm_weight(&candidate, mu)?;
    let certificate = if w.nu < -EPS_CERT && !is_derivation(&candidate, mu) {
        Some(ObstructionCertificate::from_direction(ObstructionKind::NegativeWeight, candidate.clone(), mu)?)
    } else {
        None
    };
    Ok(FlowOutcome::Diverged { candidate, nu: w.nu, certificate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::derivations::pre_einstein;
    use crate::linalg::Vector;

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&Vector::from_column_slice(v))
    }

    #[test]
    fn energy_examples() {
        let pe = pre_einstein(&corpus::heisenberg(1)).unwrap();
        let land = Landscape::new(&pe);
        assert!(land.energy(&[0.0; 3]).unwrap().abs() < 1e-15);

        let pe = pre_einstein(&corpus::n4()).unwrap();
        let land = Landscape::new(&pe);
        let lambda = diag(&[0.0, 0.0, 1.0, 0.0]);
        let a = land.pbasis.coords(&lambda);
        assert!((land.matrix(&a) - &lambda).amax() < 1e-12, "diag(0,0,1,0) lies in p");
        let expected = (2.0f64.exp() + (-2.0f64).exp()).ln();
        assert!((land.energy(&a).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let pe = pre_einstein(&corpus::heisenberg(1)).unwrap();
        let land = Landscape::new(&pe);
        let lambda = diag(&[1.0, 1.0, 2.0]);
        for t in [-2.0, 0.5, 3.0] {
            assert!(land.geodesic_energy(&[0.0; 3], &lambda, t).abs() < 1e-12);
        }
        let pe = pre_einstein(&corpus::n4()).unwrap();
        let land = Landscape::new(&pe);
        let lambda = diag(&[0.0, 0.0, 1.0, 0.0]);
        for t in [-1.0f64, 0.3, 2.0] {
            let expected = (t.exp() + (-t).exp()).ln();
            assert!((land.geodesic_energy(&[0.0; 3], &lambda, t) - expected).abs() < 1e-12);
            assert!((land.geodesic_energy_closed_form(&lambda, t) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_at_soliton_vanishes() {
        let pe = pre_einstein(&corpus::n4()).unwrap();
        let land = Landscape::new(&pe);
        assert!(land.directional_derivative(&[0.0; 3], &diag(&[0.0, 0.0, 1.0, 0.0])).abs() < 1e-12);
        let pe = pre_einstein(&corpus::heisenberg(2)).unwrap();
        let land = Landscape::new(&pe);
        assert!(land.gradient(&[0.0; 10]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let pe = pre_einstein(&corpus::filiform(5)).unwrap();
        let land = Landscape::new(&pe);
        let a = [0.3, -0.2, 0.1, 0.25];
        let lambda = land.matrix(&[0.1, 0.4, -0.3, 0.2]);
        let g = exp_sym(&land.matrix(&a));
        let g_inv = exp_sym(&-land.matrix(&a));
        let e = |t: f64| {
            let h = exp_sym(&(&lambda * t)) * &g;
            let h_inv = &g_inv * exp_sym(&(&lambda * -t));
            land.transported(&h, &h_inv).norm_sq().ln()
        };
        let h = 1e-3;
        let fd = (-e(2.0 * h) + 8.0 * e(h) - 8.0 * e(-h) + e(-2.0 * h)) / (12.0 * h);
        let an = land.directional_derivative(&a, &lambda);
        assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "{fd} vs {an}");
    }

    #[test]
    fn convexity_examples() {
        let pe = pre_einstein(&corpus::heisenberg(1)).unwrap();
        let land = Landscape::new(&pe);
        let grid: Vec<f64> = (-3..=3).map(f64::from).collect();
        let lambda = diag(&[1.0, 1.0, 2.0]) / 6.0f64.sqrt();
        let rep = land.convexity_probe(&[0.0; 3], &lambda, &grid).unwrap();
        assert!(rep.flat);
        assert_eq!(rep.flat_explained, Some(true));
        let rep = land.convexity_probe(&[0.0; 3], &Mat::zeros(3, 3), &grid).unwrap();
        assert!(rep.flat);

        let pe = pre_einstein(&corpus::n4()).unwrap();
        let land = Landscape::new(&pe);
        let rep = land.convexity_probe(&[0.0; 3], &diag(&[0.0, 0.0, 1.0, 0.0]), &grid).unwrap();
        assert!(!rep.flat);
        assert!(rep.second_differences[2] > 0.1);
        assert!(rep.min_second_difference > 0.0);
    }

    #[test]
    fn flow_converges_on_standard_metrics() {
        for name in ["h3", "n4", "h5"] {
            let pe = pre_einstein(&corpus::by_name(name).unwrap()).unwrap();
            let trace = flow(&pe, &FlowConfig::default(), None).unwrap();
            assert!(matches!(trace.outcome, FlowOutcome::Converged(_)), "{name}");
            assert_eq!(trace.iterations(), 0, "{name}");
        }
    }

    #[test]
    fn flow_finds_soliton_from_perturbed_start() {
        let pe = pre_einstein(&corpus::filiform(5)).unwrap();
        let trace = flow(&pe, &FlowConfig::default(), Some(&[0.4, -0.3, 0.2, 0.5])).unwrap();
        match &trace.outcome {
            FlowOutcome::Converged(cert) => assert!(cert.residual <= EPS_SOL),
            other => panic!("{other:?}"),
        }
        for w in trace.records.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-14);
        }
    }

    #[test]
    fn flow_diverges_when_phi_forced_to_zero() {
        let h3 = corpus::heisenberg(1);
        let pe = PreEinstein::from_diagonal(&h3, &[0.0; 3]);
        let trace = flow(&pe, &FlowConfig::default(), None).unwrap();
        match trace.outcome {
            FlowOutcome::Diverged { nu, certificate, .. } => {
                assert!(nu < -EPS_CERT);
                assert!(certificate.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let c = FlowConfig { armijo_c: 0.7, ..FlowConfig::default() };
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { .. })));
    }
}
