use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite result in {0}")]
    Overflow(&'static str),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("newton iteration did not converge; best iterate ({:e}, {:e}) with residual {residual:e}", best[0], best[1])]
    NewtonStalled { best: [f64; 2], residual: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("function evaluated to a non-finite value at x = {0}")]
    Evaluation(f64),

    #[error("degenerate orbit at d = {0:e} s: I - e^(A1 d) e^(A2 (T-d)) is singular")]
    DegenerateOrbit(f64),

    #[error("grazing switching condition at d = {0:e} s: y slope equals ramp slope")]
    Grazing(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no saddle-node bifurcation in bracket [{lo}, {hi}] (root counts {count_lo} and {count_hi})")]
    NoSnbInBracket {
        lo: f64,
        hi: f64,
        count_lo: usize,
        count_hi: usize,
    },

    #[error("cross-check failed: {0}")]
    CrossCheck(String),

    #[error("config: {0}")]
    Config(String),

    #[error("no critical source voltage: denominator vanishes at D = {0}")]
    NoCriticalVs(f64),
}
