use std::fmt;

use mmda_core::corpus::CorpusError;
use mmda_core::hitgen::HitError;
use mmda_core::qc::QcError;
use mmda_core::ranking::RankingError;
use mmda_core::raster::RasterError;
use mmda_core::report::ReportError;
use mmda_core::tts::TtsError;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Io(String),
    Upstream(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Io(_) => 3,
            Failure::Upstream(_) => 4,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Io(m) => write!(f, "io error: {m}"),
            Failure::Upstream(m) => write!(f, "upstream service error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::InvalidData {
            Failure::Validation(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<HitError> for Failure {
    fn from(e: HitError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<QcError> for Failure {
    fn from(e: QcError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<RankingError> for Failure {
    fn from(e: RankingError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => Failure::Io(e.to_string()),
            ReportError::Parse(_) => Failure::Validation(e.to_string()),
        }
    }
}

impl From<RasterError> for Failure {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn tts_root(e: &TtsError) -> &TtsError {
    match e {
        TtsError::Item { source, .. } => tts_root(source),
        other => other,
    }
}

impl From<TtsError> for Failure {
    fn from(e: TtsError) -> Self {
        match tts_root(&e) {
            TtsError::ProviderUnavailable(_) | TtsError::ProviderRejected(_) | TtsError::AuthFailure(_) => {
                Failure::Upstream(e.to_string())
            }
            TtsError::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}
