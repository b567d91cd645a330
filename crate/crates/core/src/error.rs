use std::path::PathBuf;

/// Errors surfaced by the library. Every variant carries enough context to
/// print a useful diagnostic from the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("probability {name}={value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("delay {delay} exceeds the maximum delay {max} of a {switches}-switch network")]
    DelayOutOfRange { delay: u64, max: u64, switches: u32 },

    #[error("no (p1, p2) on the search grid reaches p_s = {target}")]
    Infeasible { target: f64 },

    #[error("percolation probability at zero loss ({at_zero:.4}) is already below the target {target}")]
    TargetUnreachable { target: f64, at_zero: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("malformed stream text: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Probability { name, value })
    }
}
