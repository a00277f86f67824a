//! Convex-hull criterion over bases diagonalising the pre-Einstein derivation.
//!
//! In an orthonormal frame `B` that diagonalises `phi`, every nonzero coefficient `mu_ij^k`
//! contributes the point `e_i + e_j - e_k`. All these points lie on the hyperplane `<x, s> = 1`
//! (`s = diag(I - phi)`), the origin projects to `P0 = s / |s|^2` on their affine hull, and a
//! soliton exists exactly when `P0` is in the relative interior of their convex hull for every
//! such frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{FrameChange, StructureTensor};
use crate::derivations::{is_derivation, PreEinstein};
use crate::error::{Error, Result};
use crate::linalg::{haar_orthogonal, is_orthogonal, sym_eigen, Mat, Vector};
use crate::simplex::{maximize, LpStatus};
use crate::stability::{ObstructionCertificate, ObstructionKind};
use crate::tolerances::{EPS_CERT, EPS_EIG, EPS_LP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Interior,
    Boundary,
    Exterior,
}

impl Verdict {
    pub fn from_margin(t: f64) -> Self {
        if t > EPS_LP {
            Verdict::Interior
        } else if t >= -EPS_LP {
            Verdict::Boundary
        } else {
            Verdict::Exterior
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Interior => "interior",
            Verdict::Boundary => "boundary",
            Verdict::Exterior => "exterior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    /// 1-based support triples in the frame.
    pub triples: Vec<(usize, usize, usize)>,
    /// Distinct points `e_i + e_j - e_k`, in order of first appearance.
    pub points: Vec<Vec<f64>>,
    /// Rows are the points.
    pub y: Mat,
    pub s: Vec<f64>,
    pub p0: Vec<f64>,
    pub p0_norm_sq: f64,
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// Optimal minimum barycentric coefficient.
    pub margin: f64,
    /// Optimal minimum coefficient of the Gram system.
    pub gram_margin: f64,
    pub verdict: Verdict,
    /// One frame decides when the spectrum of `phi` is simple.
    pub definitive: bool,
    /// Orthogonal frame (columns) relative to the working frame.
    pub frame: Mat,
}

/// Support triples, distinct points and the transported bracket.
pub type PointSet = (Vec<(usize, usize, usize)>, Vec<Vec<f64>>, StructureTensor);

/// Support triples and distinct points of `mu` in the frame given by the columns of `frame`.
pub fn build_f(pe: &PreEinstein, frame: &Mat) -> Result<PointSet> {
    let n = pe.dim();
    if frame.nrows() != n || frame.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: frame.nrows() });
    }
    if !is_orthogonal(frame, 1e-9) {
        return Err(Error::FrameNotDiagonalizing { defect: (frame.transpose() * frame - Mat::identity(n, n)).amax() });
    }
    let mut off = frame.transpose() * &pe.phi * frame;
    off.fill_diagonal(0.0);
    if off.amax() > EPS_EIG {
        return Err(Error::FrameNotDiagonalizing { defect: off.amax() });
    }
    let moved = pe.bracket.act(&FrameChange::orthogonal(frame.transpose()));
    let mut triples = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, j, k, _) in moved.triples() {
        triples.push((i + 1, j + 1, k + 1));
        let mut f = vec![0.0; n];
        f[i] += 1.0;
        f[j] += 1.0;
        f[k] -= 1.0;
        if !points.contains(&f) {
            points.push(f);
        }
    }
    Ok((triples, points, moved))
}

/// Least-squares projection of the origin onto the affine hull of `points`.
///
/// Uses an orthonormal basis of the difference directions from the eigenvectors of `D D^t`.
pub fn affine_projection(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points[0].len();
    let base = Vector::from_column_slice(&points[0]);
    let mut d = Mat::zeros(n, points.len() - 1);
    for (c, p) in points[1..].iter().enumerate() {
        for q in 0..n {
            d[(q, c)] = p[q] - points[0][q];
        }
    }
    let (vals, u) = sym_eigen(&(&d * d.transpose()));
    let top = vals.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut p = base.clone();
    for (i, v) in vals.iter().enumerate() {
        if *v > 1e-10 * top {
            let col = u.column(i);
            p -= col * col.dot(&base);
        }
    }
    p.as_slice().to_vec()
}

/// `P0 = s / |s|^2`, cross-checked against the least-squares projection; returns `(P0, |P0|^2)`.
pub fn project_origin(points: &[Vec<f64>], s: &[f64]) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() {
        return Err(Error::Commutative);
    }
    let ssq: f64 = s.iter().map(|v| v * v).sum();
    let p0: Vec<f64> = s.iter().map(|v| v / ssq).collect();
    let ls = affine_projection(points);
    let gap = p0.iter().zip(&ls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > 1e-10 {
        return Err(Error::ProjectionMismatch { gap });
    }
    Ok((p0, 1.0 / ssq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorResult {
    pub verdict: Verdict,
    pub margin: f64,
    pub beta: Vec<f64>,
}

/// Maximise `min_p x_p` subject to `sum_p x_p rows_p = rhs` (`x = t + gamma`, `t` free, `gamma >= 0`).
fn max_min_coefficient(rows: &[Vec<f64>], rhs: &[f64], weights: &[f64], total: f64) -> Result<Option<(f64, Vec<f64>)>> {
    let m = rows.len();
    let dim = rhs.len();
    let mut a = Vec::with_capacity(dim + 1);
    let mut b = Vec::with_capacity(dim + 1);
    for q in 0..dim {
        let sum: f64 = rows.iter().map(|r| r[q]).sum();
        let mut row = vec![sum, -sum];
        row.extend(rows.iter().map(|r| r[q]));
        a.push(row);
        b.push(rhs[q]);
    }
    let wsum: f64 = weights.iter().sum();
    let mut row = vec![wsum, -wsum];
    row.extend_from_slice(weights);
    a.push(row);
    b.push(total);
    let mut c = vec![0.0; m + 2];
    c[0] = 1.0;
    c[1] = -1.0;
    let sol = maximize(&a, &b, &c)?;
    match sol.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::LPNumericalFailure { reason: "unbounded margin".into() }),
        LpStatus::Optimal => {
            let t = sol.x[0] - sol.x[1];
            Ok(Some((t, sol.x[2..].iter().map(|g| t + g).collect())))
        }
    }
}

/// Relative-interior test of `P0` in the convex hull of `points`.
pub fn interior_test(points: &[Vec<f64>], p0: &[f64]) -> Result<InteriorResult> {
    let ones = vec![1.0; points.len()];
    match max_min_coefficient(points, p0, &ones, 1.0)? {
        None => Ok(InteriorResult { verdict: Verdict::Exterior, margin: f64::NEG_INFINITY, beta: Vec::new() }),
        Some((t, beta)) => Ok(InteriorResult { verdict: Verdict::from_margin(t), margin: t, beta }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramResult {
    pub alpha: Option<Vec<f64>>,
    pub margin: f64,
    pub solution: Vec<f64>,
}

/// Solves `Y Y^t alpha = 1`, `sum alpha = 1/|P0|^2` maximising `min alpha`.
pub fn yyt_solve(y: &Mat, p0_norm_sq: f64) -> Result<GramResult> {
    let g = y * y.transpose();
    let m = g.nrows();
    let rows: Vec<Vec<f64>> = (0..m).map(|p| g.column(p).iter().copied().collect()).collect();
    match max_min_coefficient(&rows, &vec![1.0; m], &vec![1.0; m], 1.0 / p0_norm_sq)? {
        None => Ok(GramResult { alpha: None, margin: f64::NEG_INFINITY, solution: Vec::new() }),
        Some((t, alpha)) => {
            Ok(GramResult { alpha: (t > EPS_LP).then(|| alpha.clone()), margin: t, solution: alpha })
        }
    }
}

/// Both tests in one frame; fails with `TestsDisagree` when they conflict.
pub fn criterion_verdict(pe: &PreEinstein, frame: &Mat) -> Result<CriterionReport> {
    let (triples, points, _) = build_f(pe, frame)?;
    let n = pe.dim();
    let s_mat = frame.transpose() * (Mat::identity(n, n) - &pe.phi) * frame;
    let s: Vec<f64> = (0..n).map(|i| s_mat[(i, i)]).collect();
    let (p0, p0_norm_sq) = project_origin(&points, &s)?;
    let interior = interior_test(&points, &p0)?;
    let y = Mat::from_fn(points.len(), n, |p, q| points[p][q]);
    let gram = yyt_solve(&y, p0_norm_sq)?;
    // alpha = beta / |P0|^2, so the Gram margin rescales to the barycentric one.
    let rescaled = gram.margin * p0_norm_sq;
    if Verdict::from_margin(rescaled) != interior.verdict && (rescaled - interior.margin).abs() > EPS_LP {
        return Err(Error::TestsDisagree { margin: interior.margin, gram_margin: rescaled });
    }
    Ok(CriterionReport {
        triples,
        points,
        y,
        s,
        p0,
        p0_norm_sq,
        beta: interior.beta,
        alpha: gram.alpha,
        margin: interior.margin,
        gram_margin: gram.margin,
        verdict: interior.verdict,
        definitive: pe.has_simple_spectrum(),
        frame: frame.clone(),
    })
}

/// For an exterior frame: a diagonal `lambda` orthogonal to `s` with `<f, lambda> >= 1` on every
/// point, mapped back to the working frame and normalised. Its weight is `-min <f, lambda>`.
pub fn separation_certificate(report: &CriterionReport, pe: &PreEinstein) -> Result<Option<ObstructionCertificate>> {
    if report.verdict != Verdict::Exterior {
        return Ok(None);
    }
    let n = report.s.len();
    let m = report.points.len();
    let width = 2 * n + m;
    let mut a = Vec::with_capacity(m + 1);
    let mut b = Vec::with_capacity(m + 1);
    for (p, f) in report.points.iter().enumerate() {
        let mut row = vec![0.0; width];
        for q in 0..n {
            row[q] = f[q];
            row[n + q] = -f[q];
        }
        row[2 * n + p] = -1.0;
        a.push(row);
        b.push(1.0);
    }
    let mut row = vec![0.0; width];
    for q in 0..n {
        row[q] = report.s[q];
        row[n + q] = -report.s[q];
    }
    a.push(row);
    b.push(0.0);
    let c: Vec<f64> = (0..width).map(|j| if j < 2 * n { -1.0 } else { 0.0 }).collect();
    let sol = maximize(&a, &b, &c)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let diag = Vector::from_fn(n, |q, _| sol.x[q] - sol.x[n + q]);
    let lambda = &report.frame * Mat::from_diagonal(&diag) * report.frame.transpose();
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    let lambda = &lambda / lambda.norm();
    if is_derivation(&lambda, &pe.bracket) {
        return Ok(None);
    }
    let cert = ObstructionCertificate::from_direction(ObstructionKind::NegativeWeight, lambda, &pe.bracket)?;
    Ok((cert.nu < -EPS_CERT).then_some(cert))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    pub workers: usize,
    /// How many of the lowest-margin samples get coordinate-descent refinement.
    pub refine_starts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { budget: 64, seed: 0, workers: 1, refine_starts: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Certificate(ObstructionCertificate),
    /// No violating frame found; the lowest margin seen is reported.
    InconclusivePositive { best_margin: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub worst: CriterionReport,
    pub frames_tried: usize,
    pub outcome: SearchOutcome,
}

/// Block rotation commuting with `phi`, Haar-distributed within each eigenspace.
pub fn block_rotation(pe: &PreEinstein, rng: &mut ChaCha8Rng) -> Mat {
    let n = pe.dim();
    let mut q = Mat::identity(n, n);
    for group in pe.groups.iter().filter(|g| g.len() > 1) {
        let h = haar_orthogonal(group.len(), rng);
        for (a, &ga) in group.iter().enumerate() {
            for (b, &gb) in group.iter().enumerate() {
                q[(ga, gb)] = h[(a, b)];
            }
        }
    }
    q
}

fn sample_frame(pe: &PreEinstein, seed: u64, index: usize) -> Mat {
    if index == 0 {
        return Mat::identity(pe.dim(), pe.dim());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    block_rotation(pe, &mut rng)
}

fn givens(n: usize, a: usize, b: usize, theta: f64) -> Mat {
    let mut g = Mat::identity(n, n);
    let (s, c) = theta.sin_cos();
    g[(a, a)] = c;
    g[(b, b)] = c;
    g[(a, b)] = -s;
    g[(b, a)] = s;
    g
}

/// Lowers the margin by Givens rotations inside eigenspaces until no step helps.
fn refine(pe: &PreEinstein, start: CriterionReport) -> Result<CriterionReport> {
    let n = pe.dim();
    let mut best = start;
    for delta in [0.2, 0.05, 0.0125] {
        for _ in 0..3 {
            let mut improved = false;
            for group in pe.groups.iter().filter(|g| g.len() > 1) {
                for (x, &a) in group.iter().enumerate() {
                    for &b in &group[x + 1..] {
                        for theta in [delta, -delta] {
                            let frame = &best.frame * givens(n, a, b, theta);
                            let report = criterion_verdict(pe, &frame)?;
                            if report.margin < best.margin - 1e-12 {
                                best = report;
                                improved = true;
                            }
                        }
                    }
                }
                if best.verdict == Verdict::Exterior {
                    return Ok(best);
                }
            }
            if !improved {
                break;
            }
        }
    }
    Ok(best)
}

/// Falsification search over diagonalising frames.
///
/// Frame `k` depends only on `(seed, k)`, so the result does not depend on the worker count.
/// Frame 0 is the working frame itself.
pub fn basis_search(pe: &PreEinstein, config: &SearchConfig) -> Result<SearchReport> {
    let budget = config.budget.max(1);
    let workers = config.workers.clamp(1, budget);
    let evaluate = |k: usize| criterion_verdict(pe, &sample_frame(pe, config.seed, k));
    let mut results: Vec<(usize, Result<CriterionReport>)> = if workers == 1 {
        (0..budget).map(|k| (k, evaluate(k))).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let evaluate = &evaluate;
                    scope.spawn(move || (w..budget).step_by(workers).map(|k| (k, evaluate(k))).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("search worker panicked")).collect()
        })
    };
    results.sort_by_key(|(k, _)| *k);
    let mut reports = Vec::with_capacity(budget);
    for (k, r) in results {
        reports.push((k, r?));
    }
    reports.sort_by(|(ka, a), (kb, b)| a.margin.total_cmp(&b.margin).then(ka.cmp(kb)));

    let mut worst = reports[0].1.clone();
    if worst.verdict != Verdict::Exterior && pe.groups.iter().any(|g| g.len() > 1) {
        for (_, start) in reports.iter().take(config.refine_starts) {
            let refined = refine(pe, start.clone())?;
            if refined.margin < worst.margin {
                worst = refined;
            }
            if worst.verdict == Verdict::Exterior {
                break;
            }
        }
    }
    let outcome = match separation_certificate(&worst, pe)? {
        Some(cert) => SearchOutcome::Certificate(cert),
        None => SearchOutcome::InconclusivePositive { best_margin: worst.margin },
    };
    Ok(SearchReport { worst, frames_tried: budget, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::derivations::pre_einstein;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// `(e1,e2) -> e3 + e4`, `(e1,e3) -> e4` with a forced diagonal `(0,1,1,1)`.
    fn exterior_fixture() -> PreEinstein {
        let mu = StructureTensor::from_triples(4, &[(0, 1, 2, 1.0), (0, 1, 3, 1.0), (0, 2, 3, 1.0)]).unwrap();
        PreEinstein::from_diagonal(&mu, &[0.0, 1.0, 1.0, 1.0])
    }

    #[test]
    fn point_sets() {
        let cases: [(&str, Vec<Vec<f64>>); 3] = [
            ("h3", vec![vec![1.0, 1.0, -1.0]]),
            ("n4", vec![vec![1.0, 1.0, -1.0, 0.0], vec![1.0, 0.0, 1.0, -1.0]]),
            ("h5", vec![vec![1.0, 1.0, 0.0, 0.0, -1.0], vec![0.0, 0.0, 1.0, 1.0, -1.0]]),
        ];
        for (name, expected) in cases {
            let pe = pre_einstein(&corpus::by_name(name).unwrap()).unwrap();
            let (_, points, _) = build_f(&pe, &Mat::identity(pe.dim(), pe.dim())).unwrap();
            assert_eq!(points, expected, "{name}");
        }
    }

    #[test]
    fn rejects_non_diagonalising_frame() {
        let pe = pre_einstein(&corpus::n4()).unwrap();
        let q = givens(4, 0, 1, 0.3);
        assert!(matches!(build_f(&pe, &q), Err(Error::FrameNotDiagonalizing { .. })));
    }

    #[test]
    fn projections() {
        let pe = pre_einstein(&corpus::heisenberg(1)).unwrap();
        let r = criterion_verdict(&pe, &Mat::identity(3, 3)).unwrap();
        assert!(close(&r.p0, &[1.0, 1.0, -1.0], 1e-10));
        assert!((r.p0_norm_sq - 3.0).abs() < 1e-10);

        let pe = pre_einstein(&corpus::n4()).unwrap();
        let r = criterion_verdict(&pe, &Mat::identity(4, 4)).unwrap();
        assert!(close(&r.p0, &[1.0, 0.5, 0.0, -0.5], 1e-10));
        assert!((r.p0_norm_sq - 1.5).abs() < 1e-10);
        for f in &r.points {
            let along: f64 = f.iter().zip(&r.p0).zip(&r.s).map(|((f, p), s)| (f - p) * s).sum();
            assert!(along.abs() < 1e-9);
        }
    }

    #[test]
    fn interior_examples() {
        let h3 = interior_test(&[vec![1.0, 1.0, -1.0]], &[1.0, 1.0, -1.0]).unwrap();
        assert_eq!(h3.verdict, Verdict::Interior);
        assert!((h3.margin - 1.0).abs() < 1e-12);

        let n4 = [vec![1.0, 1.0, -1.0, 0.0], vec![1.0, 0.0, 1.0, -1.0]];
        let r = interior_test(&n4, &[1.0, 0.5, 0.0, -0.5]).unwrap();
        assert_eq!(r.verdict, Verdict::Interior);
        assert!(close(&r.beta, &[0.5, 0.5], 1e-12));

        let seg = interior_test(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 0.0]).unwrap();
        assert_eq!(seg.verdict, Verdict::Boundary);
        assert!(seg.margin.abs() < 1e-12);
    }

    #[test]
    fn gram_examples() {
        let y = Mat::from_row_slice(1, 3, &[1.0, 1.0, -1.0]);
        let r = yyt_solve(&y, 3.0).unwrap();
        assert!(close(r.alpha.as_ref().unwrap(), &[1.0 / 3.0], 1e-12));

        let y = Mat::from_row_slice(2, 4, &[1.0, 1.0, -1.0, 0.0, 1.0, 0.0, 1.0, -1.0]);
        assert!((&y * y.transpose() - Mat::identity(2, 2) * 3.0).amax() < 1e-15);
        let r = yyt_solve(&y, 1.5).unwrap();
        assert!(close(r.alpha.as_ref().unwrap(), &[1.0 / 3.0, 1.0 / 3.0], 1e-12));

        let y = Mat::from_row_slice(2, 5, &[1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 1.0, -1.0]);
        let r = yyt_solve(&y, 2.0).unwrap();
        assert!(close(r.alpha.as_ref().unwrap(), &[0.25, 0.25], 1e-12));
    }

    #[test]
    fn verdicts_and_definitiveness() {
        for (name, definitive) in [("h3", false), ("n4", true), ("h5", false)] {
            let pe = pre_einstein(&corpus::by_name(name).unwrap()).unwrap();
            let r = criterion_verdict(&pe, &Mat::identity(pe.dim(), pe.dim())).unwrap();
            assert_eq!(r.verdict, Verdict::Interior, "{name}");
            assert_eq!(r.definitive, definitive, "{name}");
        }
    }

    #[test]
    fn exterior_fixture_yields_certificate() {
        let pe = exterior_fixture();
        let r = criterion_verdict(&pe, &Mat::identity(4, 4)).unwrap();
        assert_eq!(r.verdict, Verdict::Exterior);
        assert!((r.margin + 1.0).abs() < 1e-9);
        assert!(r.alpha.is_none());
        let cert = separation_certificate(&r, &pe).unwrap().unwrap();
        assert!(cert.nu < -EPS_CERT);
        assert!(crate::certificate::verify_obstruction(&cert, &pe).unwrap().passed());
    }

    #[test]
    fn search_on_heisenberg() {
        let pe = pre_einstein(&corpus::heisenberg(1)).unwrap();
        let cfg = SearchConfig { budget: 100, ..SearchConfig::default() };
        let rep = basis_search(&pe, &cfg).unwrap();
        assert!((rep.worst.margin - 1.0).abs() < 1e-9);
        assert!(matches!(rep.outcome, SearchOutcome::InconclusivePositive { .. }));
    }

    #[test]
    fn search_is_worker_independent() {
        let pe = pre_einstein(&corpus::heisenberg(2)).unwrap();
        let one = basis_search(&pe, &SearchConfig { budget: 24, seed: 7, workers: 1, refine_starts: 1 }).unwrap();
        let four = basis_search(&pe, &SearchConfig { budget: 24, seed: 7, workers: 4, refine_starts: 1 }).unwrap();
        assert_eq!(one, four);
        assert!(one.worst.margin > EPS_LP);
    }
}
