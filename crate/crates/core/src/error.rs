use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("duplicate mode label `{0}` in registry")]
    DuplicateModeLabel(String),

    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("states belong to different mode registries")]
    RegistryMismatch,

    #[error("occupation of mode `{mode}` is {count}, exceeding the photon cap {cap}")]
    PhotonCapExceeded { mode: String, count: u32, cap: u32 },

    #[error("occupation vector has {got} entries, registry has {want} modes")]
    OccupationLength { got: usize, want: usize },

    #[error("matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("parameter `{name}` = {value} outside {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("detection pattern is empty or repeats a mode")]
    InvalidPattern,

    #[error("state has zero total weight")]
    ZeroWeight,

    #[error("conclusive-outcome probability is zero; conditional quantities undefined")]
    NoConclusiveOutcomes,

    #[error("{0}")]
    InvalidConfig(String),

    #[error("optimizer supports at most {max} grid variables, got {got}")]
    GridTooLarge { got: usize, max: usize },
}
