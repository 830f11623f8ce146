use std::path::PathBuf;

use marketmode::{
    ClusterError, CorrError, IngestError, NetError, ReturnPanel, SamplerError, SpectralError,
    SynthError,
};
use thiserror::Error;

/// Every failure the CLI reports, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or preconditions. Exit 1.
    #[error("{0}")]
    Usage(String),
    /// Input data the analysis cannot use. Exit 2.
    #[error("{0}")]
    Data(String),
    /// A solver failed even after fallback. Exit 3.
    #[error("{0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Output { .. } => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    pub fn output(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Output {
            path: path.into(),
            source,
        }
    }
}

/// Error mapping that can name the date of an offending window.
pub(crate) struct Ctx<'a>(pub Option<&'a ReturnPanel>);

impl Ctx<'_> {
    fn date(&self, end_index: usize) -> String {
        self.0
            .and_then(|p| p.dates().get(end_index.wrapping_sub(1)))
            .map_or_else(|| format!("t={end_index}"), |d| d.to_string())
    }

    pub fn corr(&self, e: CorrError) -> CliError {
        match e {
            CorrError::OutOfRangeWindow { .. } => CliError::Usage(e.to_string()),
            CorrError::ZeroVarianceWindow { ticker, end_index } => CliError::Data(format!(
                "ticker {ticker} has zero return variance in the window ending {}",
                self.date(end_index)
            )),
            other => CliError::Data(other.to_string()),
        }
    }

    pub fn spectral(&self, e: SpectralError) -> CliError {
        match e {
            SpectralError::Corr { scope, source } => match self.corr(source) {
                CliError::Data(m) => CliError::Data(format!("scope {scope}: {m}")),
                CliError::Usage(m) => CliError::Usage(format!("scope {scope}: {m}")),
                other => other,
            },
            SpectralError::Window {
                scope,
                end_index,
                source,
            } => CliError::Numerical(format!(
                "scope {scope}, window ending {}: {source}",
                self.date(end_index)
            )),
            e if e.is_numerical() => CliError::Numerical(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }

    pub fn net(&self, e: NetError) -> CliError {
        match e {
            NetError::Corr(c) => self.corr(c),
            NetError::EmptyGraph => CliError::Numerical(e.to_string()),
            NetError::PartitionMismatch(_) => CliError::Data(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }

    pub fn sampler(&self, e: SamplerError) -> CliError {
        match e {
            SamplerError::Cell { m, n, draw, source } => match self.spectral(source) {
                CliError::Data(msg) => CliError::Data(format!("cell ({m},{n}) draw {draw}: {msg}")),
                CliError::Usage(msg) => CliError::Usage(format!("cell ({m},{n}): {msg}")),
                CliError::Numerical(msg) => {
                    CliError::Numerical(format!("cell ({m},{n}) draw {draw}: {msg}"))
                }
                other => other,
            },
            SamplerError::Spectral(s) => self.spectral(s),
            SamplerError::InvalidConfig(_) | SamplerError::BadProbability(_) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::PriceOverflow => Self::Numerical(e.to_string()),
            SynthError::Panel(p) => p.into(),
            e => Self::Usage(e.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::BadK { .. } => Self::Usage(e.to_string()),
            e => Self::Data(e.to_string()),
        }
    }
}
