//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout must contain at least one subsystem")]
    EmptyLayout,
    #[error("subsystem {index} has invalid dimension {dim}")]
    BadSubsystemDim { index: usize, dim: usize },
    #[error("matrix dimension {found} does not match layout dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("operands live on different layouts")]
    LayoutMismatch,
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("density matrix has zero trace")]
    ZeroTrace,
    #[error("partial trace keep set is empty")]
    EmptyKeepSet,
    #[error("partial trace keep set contains duplicate indices")]
    DuplicateKeepIndex,
    #[error("Fock truncation n_max = {n_max} must be at least 1")]
    BadFockTruncation { n_max: usize },

    #[error("chain config invalid: {0}")]
    InvalidConfig(String),
    #[error("chain topology does not match the requested model: {0}")]
    Topology(String),
    #[error(
        "Bessel evaluation outside operating envelope (order {order}, x {x}); \
         |order| must be ≤ 12 and |x| ≤ 20"
    )]
    BesselEnvelope { order: i32, x: f64 },
    #[error("Floquet resonance requires integer Bessel indices; non-integer: {0}")]
    NonIntegerBesselIndex(String),

    #[error("integration step dt = {dt:.3e} exceeds the ceiling {ceiling:.3e} = 2π/(50·f_max)")]
    StepTooLarge { dt: f64, ceiling: f64 },
    #[error("integration spec invalid: {0}")]
    InvalidSpec(String),
    #[error("integration diverged at t = {t:.3} (max |ρ| element {magnitude:.3e})")]
    StepInstability { t: f64, magnitude: f64 },
    #[error("trajectory record has no observable named '{0}'")]
    KeyAbsent(String),
    #[error("detection window {window:.3} does not fit inside the record span {span:.3}")]
    WindowTooLong { window: f64, span: f64 },

    #[error("observable undefined: {0}")]
    UndefinedObservable(String),
    #[error("min-max normalization needs at least two distinct values")]
    ConstantList,

    #[error("sweep plan invalid: {0}")]
    InvalidPlan(String),
}
