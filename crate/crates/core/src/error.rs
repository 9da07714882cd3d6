use thiserror::Error;

/// Errors raised by the pumping library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("site index {index} out of range 1..={len}")]
    SiteIndex { index: usize, len: usize },

    #[error("quasi-momentum {k} is not on the {cells}-point grid")]
    OffGrid { k: f64, cells: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error(
        "band-touching: gap between bands {lower} and {upper} is {gap:.3e} \
         (tolerance {tolerance:.3e}) at k = {k:.6}, t = {t:.6}"
    )]
    BandTouching {
        lower: usize,
        upper: usize,
        gap: f64,
        tolerance: f64,
        k: f64,
        t: f64,
    },

    #[error("time grid does not close a full period: {0}")]
    OpenTimeGrid(String),

    #[error("gauge optimization did not converge (residual Omega_D = {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("incomplete Wannier basis: {0}")]
    IncompleteBasis(String),

    #[error("phase unwrap failed between k-points {index} and {next}: step {step:.4} exceeds pi")]
    Unwrap {
        index: usize,
        next: usize,
        step: f64,
    },

    #[error("time-gauge discontinuity at k index {k_index}, t index {t_index}: overlap modulus {overlap:.4}; refine the time grid")]
    GaugeDiscontinuity {
        k_index: usize,
        t_index: usize,
        overlap: f64,
    },

    #[error("state is not normalized (norm {0:.12})")]
    Unnormalized(f64),

    #[error("time step {dt:.4e} exceeds dt_max {dt_max:.4e}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("integrator norm drift {drift:.3e} at t = {t:.4}")]
    NormDrift { drift: f64, t: f64 },

    #[error("wave packet reached the ring seam: density {density:.3e} at t = {t:.4}")]
    SeamContact { density: f64, t: f64 },

    #[error("invalid protocol: {0}")]
    Protocol(String),

    #[error("divergent denominator: energy gap {gap:.3e} below floor {floor:.3e}")]
    SmallDenominator { gap: f64, floor: f64 },

    #[error("phase {phi:.4} rad lies outside region {region}")]
    RegionMismatch { phi: f64, region: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
