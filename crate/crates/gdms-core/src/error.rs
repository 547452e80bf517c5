use thiserror::Error;

/// Errors produced by the library.
///
/// Variants split into two broad families: input/schema problems (the
/// document is malformed or inconsistent) and computation failures
/// (iterations did not converge, budgets were exceeded, orbits escaped).
/// [`Error::is_input_error`] distinguishes them for exit-code mapping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unknown vertex {name:?} referenced by edge {edge:?}")]
    UnknownVertex { edge: String, name: String },

    #[error("duplicate vertex name {0:?}")]
    DuplicateVertex(String),

    #[error("duplicate edge id {0:?}")]
    DuplicateEdge(String),

    #[error("edge {0:?} carries no maps")]
    EmptyEdgeMaps(String),

    #[error("edge {0:?} carries two maps with identical coefficient lists")]
    DuplicateMap(String),

    #[error("zero denominator polynomial on edge {0:?}")]
    ZeroDenominator(String),

    #[error("map on edge {0:?} has degree 0; generators must be non-constant")]
    DegreeZero(String),

    #[error("numerator and denominator share a root within tolerance (map on edge {0:?})")]
    NotCoprime(String),

    #[error("system is not irreducible")]
    NotIrreducible,

    #[error("evaluation at a pole: |den(z)| = {abs_den:.3e} below tolerance at z = {z}")]
    PoleAt { z: num_complex::Complex64, abs_den: f64 },

    #[error("root finder did not converge after {iterations} iterations (worst residual {worst_residual:.3e})")]
    RootsDidNotConverge { iterations: usize, worst_residual: f64 },

    #[error("power iteration did not converge after {0} iterations")]
    PowerIterationDidNotConverge(usize),

    #[error("fixed-point iteration for the vertex distribution did not converge after {0} iterations")]
    StationaryDidNotConverge(usize),

    #[error("enumeration budget exceeded: {needed:.3e} items needed, budget {budget:.3e}; use the matrix form instead")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("backward orbit escaped: |z| = {modulus:.3e} exceeds the bound {bound:.1e}; the Julia set may not be a bounded subset of the plane")]
    Blowup { modulus: f64, bound: f64 },

    #[error("preimages at infinity encountered while pulling back a hole centre (degree drop of {missing} on generator {generator})")]
    PreimageAtInfinity { generator: u32, missing: usize },

    #[error("no repelling fixed point found at vertex {vertex} scanning loops up to length {max_loop_len}")]
    NoRepellingPoint { vertex: usize, max_loop_len: usize },

    #[error("no admissible word of length {depth} starts at vertex {vertex}")]
    NoAdmissiblePath { vertex: usize, depth: usize },

    #[error("no valid hole centre at vertex {vertex} for radius {radius}: best clearance {best_clearance:.6} does not exceed 2R = {two_r:.6}; try a smaller radius")]
    HoleClearance { vertex: usize, radius: f64, best_clearance: f64, two_r: f64 },

    #[error("no hole preimage atoms to report on")]
    EmptyAtoms,

    #[error("pressure estimate has no sign change for u in [0, {0}]; the system does not look expanding")]
    NoSignChange(f64),

    #[error("pressure samples are not strictly decreasing in u; derivative moduli below 1 on backward orbits suggest expansion fails")]
    NonMonotonePressure,

    #[error("window {lo}:{hi} is invalid: need 2 <= lo < hi and at least two sample depths at stride {stride}")]
    InvalidWindow { lo: usize, hi: usize, stride: usize },
}

impl Error {
    /// True when the error is the caller's input rather than a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::UnknownVertex { .. }
                | Error::DuplicateVertex(_)
                | Error::DuplicateEdge(_)
                | Error::EmptyEdgeMaps(_)
                | Error::DuplicateMap(_)
                | Error::ZeroDenominator(_)
                | Error::DegreeZero(_)
                | Error::NotCoprime(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
