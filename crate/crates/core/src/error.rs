use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("trace node count {0} is not a power of two >= 8")]
    NotPowerOfTwo(usize),
    #[error("curve self-intersects between segments {0} and {1}")]
    SelfIntersection(usize, usize),
    #[error("curve is not closed (end gap {gap:.3e} vs median spacing {spacing:.3e})")]
    NotClosed { gap: f64, spacing: f64 },
    #[error("point at r = {r:.4e} lies outside the tubular chart |r| < {r0:.4e}")]
    OutOfChart { r: f64, r0: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("interior depth {value:.4e} falls below the floor c0 = {c0:.4e}")]
    DepthFloor { value: f64, c0: f64 },
    #[error("non-positive water depth h = {0:.4e}")]
    NonPositiveDepth(f64),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("DtN invariant violated ({what}): defect {defect:.3e}")]
    DtnInvariant { what: &'static str, defect: f64 },
    #[error("unsupported interior configuration: {0}")]
    Unsupported(String),
    #[error("wet-dry transition at cell ({i}, {j}): h = {h:.4e}")]
    WetDry { i: usize, j: usize, h: f64 },
    #[error("subcriticality lost at cell ({i}, {j}): margin gh - |v|^2 = {margin:.4e}")]
    Subcritical { i: usize, j: usize, margin: f64 },
    #[error("non-finite state at cell ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("trace ODE blew up at node {node}")]
    TraceNonFinite { node: usize },
    #[error("jet order {requested} exceeds the supported maximum {max}")]
    JetOrder { requested: usize, max: usize },
    #[error("boundary system is unsolvable: F.(0, N_perp) = {defect:.3e}")]
    Unsolvable { defect: f64 },
    #[error("degenerate normal system: determinant {0:.3e}")]
    Degenerate(f64),
    #[error("not enough data: {0}")]
    NotEnoughData(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("step {step} (t = {t:.6e}): {source}")]
    AtStep { step: usize, t: f64, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures raised by the time integrator when the flow leaves the
    /// admissible regime (dry cells, supercritical flow, blow-up).
    pub fn is_solver_abort(&self) -> bool {
        if let Error::AtStep { source, .. } = self {
            return source.is_solver_abort();
        }
        matches!(
            self,
            Error::WetDry { .. }
                | Error::Subcritical { .. }
                | Error::NonFinite { .. }
                | Error::TraceNonFinite { .. }
        )
    }

    /// Innermost error, looking through step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }
}
