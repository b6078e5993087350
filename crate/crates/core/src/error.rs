use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectrum is empty")]
    EmptySpectrum,

    #[error("{0}: fundamental component is zero")]
    ZeroFundamental(&'static str),

    #[error("fundamental frequency mismatch: {0} Hz vs {1} Hz")]
    FundamentalMismatch(f64, f64),

    #[error(
        "sample rate {sample_rate} Hz cannot carry harmonic order {requested}; \
         highest representable order is {highest}"
    )]
    Nyquist {
        sample_rate: f64,
        requested: usize,
        highest: usize,
    },

    #[error("waveform of {len} samples is not an integer number of fundamental periods ({per_period} samples per period)")]
    NonIntegerPeriods { len: usize, per_period: f64 },

    #[error("shift-invariance problem is rank deficient: numerical rank {achieved} of {required}")]
    RankDeficient { achieved: usize, required: usize },

    #[error("node `{0}` has no conductive path to ground")]
    FloatingNode(String),

    #[error("singular MNA matrix at unknown `{0}`")]
    SingularMatrix(String),

    #[error("switch states did not settle within {iterations} re-solves at t = {time} s; oscillating: {switches:?}")]
    SwitchOscillation {
        time: f64,
        iterations: usize,
        switches: Vec<String>,
    },

    #[error("steady state not reached within {cycles} cycles; last relative RMS changes: {trace:?}")]
    NoSteadyState { cycles: usize, trace: Vec<f64> },

    #[error("case {case} at alpha {alpha}: {source}")]
    SweepPoint {
        case: u8,
        alpha: f64,
        source: alloc::boxed::Box<Error>,
    },

    #[error("at least {required} training points are needed, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("voltage spectrum lacks harmonic order {0}")]
    MissingOrder(usize),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
