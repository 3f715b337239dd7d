use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tabulated measure cannot resolve the requested integral.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Parameters outside the integrable, infinite-variance regime this crate handles.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("infinite variance: {0}")]
    InfiniteVariance(String),

    #[error("truncated covariance is singular at cutoff {cutoff}")]
    Singular { cutoff: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error(
        "degenerate matrix at t = {t}: smallest eigenvalue {eigenvalue:e} below floor {floor:e}"
    )]
    Degeneracy { t: f64, eigenvalue: f64, floor: f64 },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("instability at t = {t}: norm {norm:e} exceeds {limit:e}")]
    Instability { t: f64, norm: f64, limit: f64 },

    #[error("model error: {0}")]
    Model(String),

    #[error("second-moment bound violated at t = {t}: ||S|| = {norm} > {bound}")]
    MomentBound { t: f64, norm: f64, bound: f64 },

    #[error("registration error: {0}")]
    Registration(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
