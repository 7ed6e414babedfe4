use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("closures of Ω and W intersect: {0}")]
    Overlap(String),
    #[error("grid resolution too coarse: {0}")]
    Resolution(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("coefficient is not uniformly elliptic at node {node}: smallest eigenvalue {value}")]
    Ellipticity { node: usize, value: f64 },
    #[error("unsupported coefficient: {0}")]
    UnsupportedCoefficient(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("eigendecomposition failed: {0}")]
    Eig(String),
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("calibration drifted: fitted c_s = {fitted}, analytic candidate {analytic}")]
    Calibration { fitted: f64, analytic: f64 },
    #[error("vertical tail bound {bound:e} exceeds the allowed fraction {allowed:e}")]
    Tail { bound: f64, allowed: f64 },
    #[error("decay fit: {0}")]
    Fit(String),
    #[error("data operator is numerically rank deficient: rank {rank} of {cols}")]
    Rank { rank: usize, cols: usize },
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
