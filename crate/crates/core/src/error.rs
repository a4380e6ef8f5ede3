use thiserror::Error;

/// Errors raised anywhere in the simulator, game engine or harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state size {num_qubits} outside supported range 1..={max}")]
    SizeOutOfRange { num_qubits: usize, max: usize },

    #[error("expected {expected} amplitudes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("amplitudes not normalized: squared norm {norm_sqr}")]
    Normalization { norm_sqr: f64 },

    #[error("qubit {qubit} out of range for {num_qubits}-qubit state")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("gate targets must be distinct, got {0:?}")]
    DuplicateTargets(Vec<usize>),

    #[error("matrix is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("branch qubit {qubit} = {bit} has zero probability")]
    ZeroProbabilityBranch { qubit: usize, bit: u8 },

    #[error("operation requires {expected} players, coin has {got}")]
    WrongArity { expected: usize, got: usize },

    #[error("player {player} out of range for {num_players} players")]
    PlayerOutOfRange { player: usize, num_players: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{design} supports {min}..={max} players, got {got}")]
    PlayerCountOutOfRange {
        design: &'static str,
        min: usize,
        max: usize,
        got: usize,
    },

    #[error("order {0:?} is not a permutation of the players")]
    BadPermutation(Vec<usize>),

    #[error("qubit {qubit} is not a confirmation qubit owned by player {player}")]
    TargetNotOwned { player: usize, qubit: usize },

    #[error("{0} has not completed confirmation measurements")]
    NotYetMeasured(String),

    #[error("review report incomplete for player {0}")]
    IncompleteReport(usize),

    #[error("no decision source for appealed player {0}")]
    Unresolved(usize),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("need at least {required} trials, got {got}")]
    InsufficientSample { required: u64, got: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
