use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("poisson solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("length scale {l} is below the resolvable bound {min} for this grid")]
    UnresolvedScale { l: f64, min: f64 },

    #[error("matrix field is not positive definite at ({x:.4}, {y:.4}): min eigenvalue {min_eig:e}")]
    NotPositiveDefinite { x: f64, y: f64, min_eig: f64 },

    #[error("conformal flattening diverged after {iterations} iterations (update {update:e})")]
    FlattenDiverged { iterations: usize, update: f64 },

    #[error("metric curvature {curvature:e} too large for a developing map")]
    CurvatureTooLarge { curvature: f64 },

    #[error("|sin theta| = {value:e} below required bound {bound} at ({x:.4}, {y:.4})")]
    PhaseTooSmall { x: f64, y: f64, value: f64, bound: f64 },

    #[error("phase leaves (-pi, pi) at ({x:.4}, {y:.4})")]
    PhaseOutOfRange { x: f64, y: f64 },

    #[error("initial data check failed: {0}")]
    InitialData(String),

    #[error("deficit trace {trace:e} negative at ({x:.4}, {y:.4})")]
    NegativeTrace { x: f64, y: f64, trace: f64 },

    #[error("schedule not resolvable: frequency {frequency:.1} at stage {stage} exceeds {limit:.1}; largest feasible q_max is {feasible}")]
    Unresolvable { stage: usize, frequency: f64, limit: f64, feasible: usize },

    #[error("picard iteration is not contracting (residual {residual:e}); reduce |tan theta|")]
    NotContracting { residual: f64 },

    #[error("small-phase bound violated: |tan theta| = {value:e} exceeds mu = {mu}")]
    PhaseNotSmall { value: f64, mu: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::GridMismatch => "grid_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoConvergence { .. } => "solver_no_convergence",
            Error::UnresolvedScale { .. } => "unresolved_scale",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::FlattenDiverged { .. } => "flatten_diverged",
            Error::CurvatureTooLarge { .. } => "curvature_too_large",
            Error::PhaseTooSmall { .. } => "c2_violation",
            Error::PhaseOutOfRange { .. } => "phase_out_of_range",
            Error::InitialData(_) => "initial_data",
            Error::NegativeTrace { .. } => "negative_trace",
            Error::Unresolvable { .. } => "unresolvable_schedule",
            Error::NotContracting { .. } => "not_contracting",
            Error::PhaseNotSmall { .. } => "phase_not_small",
            Error::Expr(_) => "expression",
            Error::Format(_) => "field_format",
            Error::Io(_) => "io",
        }
    }
}
