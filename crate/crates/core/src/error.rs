use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("boundary strips of width {width} overlap on a lattice of size {size}")]
    StripOverlap { width: usize, size: usize },
    #[error("strip width {width} is narrower than the model range requires ({required})")]
    StripTooNarrow { width: usize, required: usize },
    #[error("region is empty")]
    EmptyRegion,
    #[error("site {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("operators live on different Fock bases")]
    BasisMismatch,
    #[error("term has a monomial with an odd number of fermionic factors")]
    OddTerm,
    #[error("cannot parse term `{input}`: {reason}")]
    TermParse { input: String, reason: String },
    #[error("dimerized ring needs an even length, got {0}")]
    OddLength(usize),
    #[error("operator is not hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("iterative eigensolver did not converge (residual {residual:.3e})")]
    IterationDivergence { residual: f64 },
    #[error("no spectral gap above the ground cluster (gap {gap:.3e})")]
    NoGap { gap: f64 },
    #[error("operation requires the full spectrum")]
    RequiresFullSpectrum,
    #[error("time-domain quadrature not converged (error {0:.3e})")]
    QuadratureNotConverged(f64),
    #[error("unitarity defect {defect:.3e} exceeds tolerance; refine the step")]
    StepSizeTooCoarse { defect: f64 },
    #[error("ground projector is not invariant under the unitary (‖[U,P]‖ = {0:.3e})")]
    ProjectorNotInvariant(f64),
    #[error("Fermi gap closed along the path at s = {s}")]
    GapClosedAlongPath { s: f64 },
    #[error("model is not quadratic: {0}")]
    NotQuadratic(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("log fit requires positive values")]
    NonPositiveValues,
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
