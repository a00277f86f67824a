//! Numerical tolerances. Relative ones are scaled as documented at their use sites.

/// Structure constants below this fraction of the largest one are pruned.
pub const EPS_MU: f64 = 1e-10;
/// Jacobi residual, relative to the squared bracket norm.
pub const EPS_JAC: f64 = 1e-9;
/// Defect allowed in `g g^-1 = I`.
pub const EPS_INV: f64 = 1e-8;
/// Derivation defect, relative to the bracket norm.
pub const EPS_DER: f64 = 1e-9;
/// Trace-system residual for the pre-Einstein derivation.
pub const EPS_PE: f64 = 1e-8;
/// Relative singular-value cutoff for numerical rank.
pub const EPS_RANK: f64 = 1e-9;
/// Eigenvalue grouping tolerance.
pub const EPS_EIG: f64 = 1e-7;
/// Margin by which a weight must be negative before it certifies instability.
pub const EPS_CERT: f64 = 1e-7;
/// Soliton residual threshold.
pub const EPS_SOL: f64 = 1e-8;
/// Linear-programming feasibility and margin tolerance.
pub const EPS_LP: f64 = 1e-9;
/// Largest acceptable condition number of a diagonalising frame.
pub const KAPPA_MAX: f64 = 1e8;
