use thiserror::Error;

/// Every failure surfaced by the library, tagged with a stable code and the module that raised it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}: {field}: {message}")]
    ParseError { line: usize, field: String, message: String },
    #[error("index out of range in bracket record {record}: ({i},{j},{k}) with dim {dim}")]
    IndexOutOfRange { record: usize, i: usize, j: usize, k: usize, dim: usize },
    #[error("duplicate triple ({i},{j},{k})")]
    DuplicateTriple { i: usize, j: usize, k: usize },
    #[error("bracket is not antisymmetric: defect {defect:e}")]
    NonAntisymmetric { defect: f64 },
    #[error("Jacobi identity fails on ({i},{j},{k}) with residual {residual:e}")]
    JacobiViolation { i: usize, j: usize, k: usize, residual: f64 },
    #[error("lower central series does not terminate within {dim} steps")]
    NotNilpotent { dim: usize },
    #[error("numerical rank is ambiguous: singular value {value:e} near cutoff {cutoff:e}")]
    RankAmbiguity { value: f64, cutoff: f64 },
    #[error("semisimplicity of the pre-Einstein derivation could not be verified: {reason}")]
    SemisimplicityUnverified { reason: String },
    #[error("endomorphism is not diagonalisable: {reason}")]
    NonDiagonalizable { reason: String },
    #[error("frame change is singular or ill-conditioned: defect {defect:e}")]
    SingularFrame { defect: f64 },
    #[error("bracket is zero; abelian algebras are rejected")]
    Commutative,
    #[error("frame does not commute with the pre-Einstein derivation: defect {defect:e}")]
    FrameNotCommuting { defect: f64 },
    #[error("endomorphism is not in the admissible tangent space: {reason}")]
    NotInP { reason: String },
    #[error("matrix is not symmetric: defect {defect:e}")]
    AsymmetricInput { defect: f64 },
    #[error("frame does not diagonalise the pre-Einstein derivation: defect {defect:e}")]
    FrameNotDiagonalizing { defect: f64 },
    #[error("projection routes disagree by {gap:e}")]
    ProjectionMismatch { gap: f64 },
    #[error("pre-Einstein derivation has repeated eigenvalues")]
    NotSimpleSpectrum,
    #[error("linear program failed: {reason}")]
    LPNumericalFailure { reason: String },
    #[error("interior test and Gram-system route disagree: margin {margin:e}, gram margin {gram_margin:e}")]
    TestsDisagree { margin: f64, gram_margin: f64 },
    #[error("energy evaluation overflow at radius {radius:e}")]
    Overflow { radius: f64 },
    #[error("malformed certificate: {reason}")]
    MalformedCertificate { reason: String },
    #[error("pre-Einstein derivation is nonzero")]
    PhiNonzero,
    #[error("invalid configuration: {reason}")]
    ConfigInvalid { reason: String },
    #[error("unknown corpus name {0}")]
    UnknownName(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ParseError { .. } => "ParseError",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::DuplicateTriple { .. } => "DuplicateTriple",
            Error::NonAntisymmetric { .. } => "NonAntisymmetric",
            Error::JacobiViolation { .. } => "JacobiViolation",
            Error::NotNilpotent { .. } => "NotNilpotent",
            Error::Commutative => "Commutative",
            Error::SingularFrame { .. } => "SingularFrame",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::RankAmbiguity { .. } => "RankAmbiguity",
            Error::SemisimplicityUnverified { .. } => "SemisimplicityUnverified",
            Error::NonDiagonalizable { .. } => "NonDiagonalizable",
            Error::FrameNotCommuting { .. } => "FrameNotCommuting",
            Error::NotInP { .. } => "NotInP",
            Error::AsymmetricInput { .. } => "AsymmetricInput",
            Error::PhiNonzero => "PhiNonzero",
            Error::FrameNotDiagonalizing { .. } => "FrameNotDiagonalizing",
            Error::ProjectionMismatch { .. } => "ProjectionMismatch",
            Error::NotSimpleSpectrum => "NotSimpleSpectrum",
            Error::LPNumericalFailure { .. } => "LPNumericalFailure",
            Error::TestsDisagree { .. } => "TestsDisagree",
            Error::Overflow { .. } => "Overflow",
            Error::ConfigInvalid { .. } => "ConfigInvalid",
            Error::MalformedCertificate { .. } => "MalformedCertificate",
            Error::UnknownName(_) => "UnknownName",
            Error::Io(_) => "Io",
        }
    }

    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::ParseError { .. }
            | Error::IndexOutOfRange { .. }
            | Error::DuplicateTriple { .. }
            | Error::UnknownName(_)
            | Error::Io(_) => "cli",
            Error::NonAntisymmetric { .. }
            | Error::JacobiViolation { .. }
            | Error::NotNilpotent { .. }
            | Error::Commutative
            | Error::SingularFrame { .. }
            | Error::DimensionMismatch { .. } => "algebra-core",
            Error::RankAmbiguity { .. }
            | Error::SemisimplicityUnverified { .. }
            | Error::NonDiagonalizable { .. } => "derivations",
            Error::FrameNotCommuting { .. }
            | Error::NotInP { .. }
            | Error::AsymmetricInput { .. }
            | Error::PhiNonzero => "stability",
            Error::MalformedCertificate { .. } => "ricci",
            Error::Overflow { .. } | Error::ConfigInvalid { .. } => "kempf-ness",
            Error::FrameNotDiagonalizing { .. }
            | Error::ProjectionMismatch { .. }
            | Error::NotSimpleSpectrum
            | Error::LPNumericalFailure { .. }
            | Error::TestsDisagree { .. } => "criterion",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
