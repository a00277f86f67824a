//! End-to-end runs behind the command-line tool, producing a JSON run report.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::algebra::{validate, StructureTensor};
use crate::certificate::{verify_certificate, Certificate, Verification};
use crate::criterion::{basis_search, criterion_verdict, separation_certificate, CriterionReport, SearchConfig, SearchOutcome};
use crate::derivations::{derivation_space, is_derivation, pre_einstein, PreEinstein};
use crate::document::{rows, AlgebraDocument, CertificateFile};
use crate::error::{Error, Result};
use crate::kempf_ness::{flow, FlowConfig, FlowOutcome, FlowTrace};
use crate::linalg::Mat;
use crate::ricci::{ricci_endo, soliton_fit};
use crate::stability::{hm_weight, scaling_obstruction, zero_phi_obstruction, ObstructionCertificate, PBasis};

pub const TOOL: &str = "nilsoliton";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    SolitonFound,
    NoSoliton,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::SolitonFound => 0,
            Status::NoSoliton => 10,
            Status::Inconclusive => 20,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::SolitonFound => "soliton-found",
            Status::NoSoliton => "no-soliton",
            Status::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Der,
    PreEinstein,
    Ricci,
    Nu,
    Criterion,
    Flow,
    Certify,
    Report,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Validate,
        Command::Der,
        Command::PreEinstein,
        Command::Ricci,
        Command::Nu,
        Command::Criterion,
        Command::Flow,
        Command::Certify,
        Command::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Der => "der",
            Command::PreEinstein => "pre-einstein",
            Command::Ricci => "ricci",
            Command::Nu => "nu",
            Command::Criterion => "criterion",
            Command::Flow => "flow",
            Command::Certify => "certify",
            Command::Report => "report",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub seed: u64,
    /// Frames sampled by the basis search; 0 disables it.
    pub search_budget: usize,
    pub workers: usize,
    pub flow: FlowConfig,
    /// Norm of a seeded random starting point for the flow; 0 starts at the origin.
    pub start_radius: f64,
    pub timings: bool,
    /// Direction for `nu`, in the input basis.
    pub lambda: Option<Mat>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            seed: DEFAULT_SEED,
            search_budget: 32,
            workers: 1,
            flow: FlowConfig::default(),
            start_radius: 0.0,
            timings: false,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    pub support: usize,
    pub digest: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationBlock {
    pub jacobi_residual: f64,
    pub lower_central_series: Vec<usize>,
    pub nilpotency_step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivationBlock {
    pub dim: usize,
    pub basis: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Eigenspace {
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreEinsteinBlock {
    /// In the input basis.
    pub phi: Vec<Vec<f64>>,
    pub spectrum: Vec<Eigenspace>,
    pub simple_spectrum: bool,
    pub is_zero: bool,
    pub trace_residual: f64,
    pub derivation_dim: usize,
    pub resamples: usize,
    /// Change of basis from the input basis to the working basis, in which `phi` is diagonal.
    pub working_frame: Vec<Vec<f64>>,
    pub working_phi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RicciBlock {
    /// Ricci endomorphism of the inner product making the input basis orthonormal.
    pub ricci: Vec<Vec<f64>>,
    pub trace: f64,
    /// Fit `Ric = c (I - phi) + residual` for the working basis.
    pub c: f64,
    pub relative_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightBlock {
    pub nu: f64,
    pub witness: [usize; 3],
    pub eigenvalues: Vec<f64>,
    pub is_derivation: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionBlock {
    pub triples: Vec<[usize; 3]>,
    pub points: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
    pub p0_norm_sq: f64,
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub margin: f64,
    pub gram_margin: f64,
    pub verdict: &'static str,
    pub definitive: bool,
}

impl CriterionBlock {
    fn new(r: &CriterionReport) -> Self {
        CriterionBlock {
            triples: r.triples.iter().map(|&(i, j, k)| [i, j, k]).collect(),
            points: r.points.clone(),
            p0: r.p0.clone(),
            p0_norm_sq: r.p0_norm_sq,
            beta: r.beta.clone(),
            alpha: r.alpha.clone(),
            margin: r.margin,
            gram_margin: r.gram_margin,
            verdict: r.verdict.as_str(),
            definitive: r.definitive,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchBlock {
    pub budget: usize,
    pub seed: u64,
    pub worst_margin: f64,
    pub worst_verdict: &'static str,
    pub worst_frame: Vec<Vec<f64>>,
    pub outcome: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowBlock {
    pub outcome: &'static str,
    pub iterations: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub residual: f64,
    pub a_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

fn check_records(v: &Verification) -> Vec<CheckRecord> {
    v.checks.iter().map(|c| CheckRecord { name: c.name, value: c.value, bound: c.bound, passed: c.passed() }).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictBlock {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_kind: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub stage: &'static str,
    pub code: &'static str,
    pub module: &'static str,
    pub message: String,
}

impl StageError {
    fn new(stage: &'static str, e: &Error) -> Self {
        StageError { stage, code: e.code(), module: e.module(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivations: Option<DerivationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_einstein: Option<PreEinsteinBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ricci: Option<RicciBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub quick_checks: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<StageError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
    #[serde(skip)]
    pub exit_code: i32,
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl RunReport {
    fn new(command: Command, seed: u64) -> Self {
        RunReport {
            tool: TOOL,
            version: VERSION,
            command: command.as_str(),
            seed,
            input: None,
            warnings: Vec::new(),
            validation: None,
            derivations: None,
            pre_einstein: None,
            ricci: None,
            weight: None,
            quick_checks: Vec::new(),
            criterion: None,
            search: None,
            flow: None,
            checks: Vec::new(),
            certificate: None,
            verdict: None,
            errors: Vec::new(),
            timings: None,
            exit_code: 0,
            summary: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    fn conclude(&mut self, status: Status, kind: Option<String>, reason: impl Into<String>) {
        let reason = reason.into();
        self.summary.push(format!("verdict: {} ({reason})", status.as_str()));
        self.exit_code = status.exit_code();
        self.verdict = Some(VerdictBlock { status, certificate_kind: kind, reason });
    }
}

struct Clock {
    enabled: bool,
    start: Instant,
    laps: BTreeMap<String, f64>,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock { enabled, start: Instant::now(), laps: BTreeMap::new() }
    }

    fn lap(&mut self, stage: &str) {
        if self.enabled {
            let now = Instant::now();
            self.laps.insert(stage.to_owned(), (now - self.start).as_secs_f64());
            self.start = now;
        }
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.laps)
    }
}

fn pre_einstein_block(pe: &PreEinstein) -> PreEinsteinBlock {
    let diag = pe.phi_diag();
    let mut spectrum: Vec<Eigenspace> =
        pe.groups.iter().map(|g| Eigenspace { value: diag[g[0]], multiplicity: g.len() }).collect();
    spectrum.sort_by(|a, b| a.value.total_cmp(&b.value));
    PreEinsteinBlock {
        phi: rows(&pe.phi_input),
        spectrum,
        simple_spectrum: pe.has_simple_spectrum(),
        is_zero: pe.is_zero,
        trace_residual: pe.trace_residual,
        derivation_dim: pe.derivation_dim,
        resamples: pe.resamples,
        working_frame: rows(pe.frame.matrix()),
        working_phi: diag,
    }
}

/// Verifies a certificate and, if it passes, attaches it to the report.
fn attach(report: &mut RunReport, pe: &PreEinstein, cert: Certificate, stage: &'static str) -> bool {
    match verify_certificate(&cert, pe) {
        Ok(v) if v.passed() => {
            report.certificate = Some(CertificateFile::new(&cert, &pe.bracket, &pe.phi_diag()));
            true
        }
        Ok(v) => {
            let e = v.into_result().expect_err("failed verification");
            report.errors.push(StageError::new(stage, &e));
            false
        }
        Err(e) => {
            report.errors.push(StageError::new(stage, &e));
            false
        }
    }
}

fn obstruction_kind(cert: &ObstructionCertificate) -> Option<String> {
    Some(cert.kind.as_str().to_owned())
}

/// Runs `command` on an algebra document.
pub fn run(doc: &AlgebraDocument, warnings: &[String], command: Command, opts: &Options) -> Result<RunReport> {
    let mut report = RunReport::new(command, opts.seed);
    let mut clock = Clock::new(opts.timings);
    report.warnings = warnings.to_vec();
    let mu = doc.to_tensor()?;
    report.input = Some(InputBlock { name: doc.name.clone(), dim: doc.dim, support: mu.support_len(), digest: doc.digest() });
    let label = doc.name.clone().unwrap_or_else(|| format!("dim {}", doc.dim));
    report.summary.push(format!("{label}: {} nonzero structure constants", mu.support_len()));

    let v = validate(&mu)?;
    report.validation = Some(ValidationBlock {
        jacobi_residual: v.jacobi_residual,
        lower_central_series: v.lower_central_series.clone(),
        nilpotency_step: v.nilpotency_step,
    });
    report.summary.push(format!("nilpotent of step {}, lower central series {:?}", v.nilpotency_step, v.lower_central_series));
    clock.lap("validate");
    match command {
        Command::Validate => {}
        Command::Der => {
            let der = derivation_space(&mu)?;
            report.summary.push(format!("derivation algebra of dimension {}", der.dim()));
            report.derivations = Some(DerivationBlock { dim: der.dim(), basis: der.basis.iter().map(rows).collect() });
        }
        Command::PreEinstein => {
            let pe = pre_einstein(&mu)?;
            report.summary.push(format!("pre-Einstein eigenvalues {:?}", pe.eigenvalues));
            report.pre_einstein = Some(pre_einstein_block(&pe));
        }
        Command::Ricci => {
            let pe = pre_einstein(&mu)?;
            let ric = ricci_endo(&mu);
            let fit = soliton_fit(&ricci_endo(&pe.bracket), &pe.phi);
            report.summary.push(format!("Ricci trace {:.6}, soliton fit c = {:.6}", ric.trace(), fit.c));
            report.ricci = Some(RicciBlock {
                ricci: rows(&ric),
                trace: ric.trace(),
                c: fit.c,
                relative_residual: fit.residual / pe.bracket.norm_sq(),
            });
            report.pre_einstein = Some(pre_einstein_block(&pe));
        }
        Command::Nu => {
            let lambda = opts.lambda.as_ref().ok_or_else(|| Error::ConfigInvalid { reason: "nu needs --lambda".into() })?;
            if lambda.nrows() != mu.dim() {
                return Err(Error::DimensionMismatch { expected: mu.dim(), found: lambda.nrows() });
            }
            let w = hm_weight(lambda, &mu)?;
            report.summary.push(format!("weight nu = {:.9}", w.nu));
            report.weight = Some(WeightBlock {
                nu: w.nu,
                witness: [w.witness.0, w.witness.1, w.witness.2],
                eigenvalues: w.eigenvalues,
                is_derivation: is_derivation(lambda, &mu),
            });
        }
        Command::Criterion => run_criterion(&mut report, &mu, opts, &mut clock)?,
        Command::Flow => {
            let pe = pre_einstein(&mu)?;
            report.pre_einstein = Some(pre_einstein_block(&pe));
            clock.lap("pre-einstein");
            run_flow(&mut report, &pe, opts)?;
            clock.lap("flow");
        }
        Command::Report => run_report(&mut report, &mu, opts, &mut clock)?,
        Command::Certify => return Err(Error::ConfigInvalid { reason: "certify takes a certificate file".into() }),
    }
    report.timings = clock.finish();
    Ok(report)
}

fn run_criterion(report: &mut RunReport, mu: &StructureTensor, opts: &Options, clock: &mut Clock) -> Result<()> {
    let pe = pre_einstein(mu)?;
    report.pre_einstein = Some(pre_einstein_block(&pe));
    clock.lap("pre-einstein");
    if pe.is_zero {
        let cert = zero_phi_obstruction(&pe)?;
        let kind = obstruction_kind(&cert);
        if attach(report, &pe, Certificate::Obstruction(cert), "quick-checks") {
            report.conclude(Status::NoSoliton, kind, "pre-Einstein derivation vanishes");
        } else {
            report.conclude(Status::Inconclusive, None, "pre-Einstein derivation vanishes; certificate failed");
        }
        return Ok(());
    }
    criterion_stage(report, &pe, opts, clock)?;
    if report.verdict.is_none() {
        let c = report.criterion.as_ref().expect("criterion ran");
        match c.verdict {
            "interior" => {
                report.summary.push("criterion: interior in every frame examined".into());
                report.exit_code = 0;
            }
            _ => report.conclude(Status::Inconclusive, None, format!("criterion verdict {} without a certificate", c.verdict)),
        }
    }
    Ok(())
}

/// Criterion in the working frame, plus the search when the spectrum repeats. Concludes the
/// report only when a verified obstruction is found.
fn criterion_stage(report: &mut RunReport, pe: &PreEinstein, opts: &Options, clock: &mut Clock) -> Result<()> {
    let n = pe.dim();
    let base = criterion_verdict(pe, &Mat::identity(n, n))?;
    report.summary.push(format!(
        "criterion: {} with margin {:.6} ({})",
        base.verdict.as_str(),
        base.margin,
        if base.definitive { "definitive" } else { "repeated spectrum" }
    ));
    report.criterion = Some(CriterionBlock::new(&base));
    clock.lap("criterion");
    if base.definitive {
        if let Some(cert) = separation_certificate(&base, pe)? {
            let kind = obstruction_kind(&cert);
            if attach(report, pe, Certificate::Obstruction(cert), "criterion") {
                report.conclude(Status::NoSoliton, kind, "origin projection outside the convex hull");
            }
        }
        return Ok(());
    }
    if opts.search_budget == 0 {
        return Ok(());
    }
    let cfg = SearchConfig { budget: opts.search_budget, seed: opts.seed, workers: opts.workers, ..SearchConfig::default() };
    let search = basis_search(pe, &cfg)?;
    clock.lap("search");
    let outcome = match &search.outcome {
        SearchOutcome::Certificate(_) => "certificate",
        SearchOutcome::InconclusivePositive { .. } => "inconclusive-positive",
    };
    report.summary.push(format!(
        "basis search over {} frames: lowest margin {:.6}, {outcome}",
        search.frames_tried, search.worst.margin
    ));
    report.search = Some(SearchBlock {
        budget: search.frames_tried,
        seed: opts.seed,
        worst_margin: search.worst.margin,
        worst_verdict: search.worst.verdict.as_str(),
        worst_frame: rows(&search.worst.frame),
        outcome,
    });
    if let SearchOutcome::Certificate(cert) = search.outcome {
        let kind = obstruction_kind(&cert);
        if attach(report, pe, Certificate::Obstruction(cert), "search") {
            report.conclude(Status::NoSoliton, kind, "a diagonalising frame violates the criterion");
        }
    }
    Ok(())
}

fn random_start(pe: &PreEinstein, radius: f64, seed: u64) -> Option<Vec<f64>> {
    if radius <= 0.0 {
        return None;
    }
    let d = PBasis::new(pe).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|x| x * radius / norm).collect())
}

fn flow_block(trace: &FlowTrace) -> FlowBlock {
    let last = trace.records.last().expect("flow records its start");
    let (candidate_nu, c) = match &trace.outcome {
        FlowOutcome::Diverged { nu, .. } => (Some(*nu), None),
        FlowOutcome::Converged(cert) => (None, Some(cert.c)),
        _ => (None, None),
    };
    FlowBlock {
        outcome: trace.outcome.tag(),
        iterations: trace.iterations(),
        energy: last.energy,
        grad_norm: last.grad_norm,
        residual: last.residual,
        a_norm: last.a_norm,
        candidate_nu,
        c,
    }
}

/// Runs the flow and concludes the report from its outcome.
fn run_flow(report: &mut RunReport, pe: &PreEinstein, opts: &Options) -> Result<()> {
    let start = random_start(pe, opts.start_radius, opts.seed);
    let trace = match flow(pe, &opts.flow, start.as_deref()) {
        Ok(t) => t,
        Err(e @ Error::ConfigInvalid { .. }) => return Err(e),
        Err(e) => {
            report.errors.push(StageError::new("flow", &e));
            report.conclude(Status::Inconclusive, None, format!("flow failed: {}", e.code()));
            return Ok(());
        }
    };
    report.flow = Some(flow_block(&trace));
    report.summary.push(format!(
        "flow: {} after {} iterations (residual {:.3e})",
        trace.outcome.tag(),
        trace.iterations(),
        trace.records.last().map_or(f64::NAN, |r| r.residual)
    ));
    match trace.outcome {
        FlowOutcome::Converged(cert) => {
            let c = cert.c;
            if attach(report, pe, Certificate::Soliton(cert), "flow") {
                report.conclude(Status::SolitonFound, Some("soliton".into()), format!("flow converged, c = {c:.9}"));
            } else {
                report.conclude(Status::Inconclusive, None, "flow converged but the certificate failed verification");
            }
        }
        FlowOutcome::Diverged { certificate: Some(cert), .. } => {
            let kind = obstruction_kind(&cert);
            if attach(report, pe, Certificate::Obstruction(cert), "flow") {
                report.conclude(Status::NoSoliton, kind, "flow diverged along a destabilising direction");
            } else {
                report.conclude(Status::Inconclusive, None, "flow diverged; candidate failed verification");
            }
        }
        FlowOutcome::Diverged { certificate: None, .. } => {
            report.conclude(Status::Inconclusive, None, "flow diverged without a verifiable direction")
        }
        FlowOutcome::MaxIter => report.conclude(Status::Inconclusive, None, "flow reached the iteration limit"),
        FlowOutcome::Stalled { .. } => report.conclude(Status::Inconclusive, None, "flow line search stalled"),
    }
    Ok(())
}

fn run_report(report: &mut RunReport, mu: &StructureTensor, opts: &Options, clock: &mut Clock) -> Result<()> {
    let pe = pre_einstein(mu)?;
    report.pre_einstein = Some(pre_einstein_block(&pe));
    report.summary.push(format!("pre-Einstein eigenvalues {:?}", pe.eigenvalues));
    let ric = ricci_endo(mu);
    let fit = soliton_fit(&ricci_endo(&pe.bracket), &pe.phi);
    report.ricci = Some(RicciBlock {
        ricci: rows(&ric),
        trace: ric.trace(),
        c: fit.c,
        relative_residual: fit.residual / pe.bracket.norm_sq(),
    });
    clock.lap("pre-einstein");

    if pe.is_zero {
        report.quick_checks.push("zero-phi".into());
        let cert = zero_phi_obstruction(&pe)?;
        let kind = obstruction_kind(&cert);
        if attach(report, &pe, Certificate::Obstruction(cert), "quick-checks") {
            report.conclude(Status::NoSoliton, kind, "pre-Einstein derivation vanishes");
        } else {
            report.conclude(Status::Inconclusive, None, "pre-Einstein derivation vanishes; certificate failed");
        }
        return Ok(());
    }
    report.quick_checks.push("scaling".into());
    match scaling_obstruction(&pe, &PBasis::new(&pe)) {
        Ok(Some(cert)) => {
            let kind = obstruction_kind(&cert);
            if attach(report, &pe, Certificate::Obstruction(cert), "quick-checks") {
                report.conclude(Status::NoSoliton, kind, "scaling direction in the tangent space");
                return Ok(());
            }
        }
        Ok(None) => {}
        Err(e) => report.errors.push(StageError::new("quick-checks", &e)),
    }
    clock.lap("quick-checks");

    if let Err(e) = criterion_stage(report, &pe, opts, clock) {
        report.errors.push(StageError::new("criterion", &e));
    }
    if report.verdict.is_some() {
        return Ok(());
    }
    run_flow(report, &pe, opts)?;
    clock.lap("flow");
    Ok(())
}

/// Re-verifies a certificate file, including that its `phi` is a pre-Einstein derivation.
pub fn certify(text: &str, opts: &Options) -> Result<RunReport> {
    let mut report = RunReport::new(Command::Certify, opts.seed);
    let file = CertificateFile::parse(text)?;
    let mu = file.bracket()?;
    let cert = file.certificate()?;
    let pe = PreEinstein::from_diagonal(&mu, &file.phi);
    let mut checks = pre_einstein_checks(&pe)?;
    let v = verify_certificate(&cert, &pe)?;
    checks.checks.extend(v.checks);
    report.checks = check_records(&checks);
    report.input = Some(InputBlock {
        name: None,
        dim: mu.dim(),
        support: mu.support_len(),
        digest: AlgebraDocument::from_tensor(None, &mu).digest(),
    });
    checks.into_result()?;
    let (status, kind) = match &cert {
        Certificate::Soliton(_) => (Status::SolitonFound, "soliton".to_owned()),
        Certificate::Obstruction(o) => (Status::NoSoliton, o.kind.as_str().to_owned()),
    };
    report.summary.push(format!("certificate of kind {kind}: all {} checks passed", report.checks.len()));
    report.conclude(status, Some(kind), "certificate verified");
    report.certificate = Some(file);
    Ok(report)
}

/// `phi` must be a derivation with `tr(phi psi) = tr(psi)` for every derivation `psi`.
fn pre_einstein_checks(pe: &PreEinstein) -> Result<Verification> {
    let mu = &pe.bracket;
    let mut v = Verification { checks: Vec::new() };
    let der = derivation_space(mu)?;
    let defect = crate::derivations::derivation_defect(&pe.phi, mu) / (pe.phi.norm().max(1.0) * mu.norm());
    let trace = der
        .basis
        .iter()
        .map(|psi| ((&pe.phi * psi).trace() - psi.trace()).abs() / psi.norm())
        .fold(0.0, f64::max);
    v.checks.push(crate::certificate::Check { name: "relative derivation defect of phi", value: defect, bound: 1e-10 });
    v.checks.push(crate::certificate::Check { name: "pre-Einstein trace condition", value: trace, bound: 1e-9 });
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::corpus_document;

    fn run_named(name: &str, command: Command) -> RunReport {
        run(&corpus_document(name).unwrap(), &[], command, &Options::default()).unwrap()
    }

    #[test]
    fn report_on_heisenberg() {
        let r = run_named("h3", Command::Report);
        let v = r.verdict.as_ref().unwrap();
        assert_eq!(v.status, Status::SolitonFound);
        assert!((r.flow.as_ref().unwrap().c.unwrap() + 1.5).abs() < 1e-6);
        assert_eq!(r.exit_code, 0);
    }

    #[test]
    fn report_on_n4_is_definitive() {
        let r = run_named("n4", Command::Report);
        assert_eq!(r.verdict.as_ref().unwrap().status, Status::SolitonFound);
        assert!(r.criterion.as_ref().unwrap().definitive);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run_named("h5", Command::Report).to_json();
        let b = run_named("h5", Command::Report).to_json();
        assert_eq!(a, b);
        assert!(!a.contains("timings"));
    }

    #[test]
    fn certificate_round_trip() {
        let r = run_named("n4", Command::Report);
        let text = serde_json::to_string(r.certificate.as_ref().unwrap()).unwrap();
        let back = certify(&text, &Options::default()).unwrap();
        assert_eq!(back.exit_code, 0);
        let mut file: CertificateFile = CertificateFile::parse(&text).unwrap();
        file.soliton.as_mut().unwrap().c += 1e-3;
        let bad = serde_json::to_string(&file).unwrap();
        assert!(matches!(certify(&bad, &Options::default()), Err(Error::MalformedCertificate { .. })));
    }
}
