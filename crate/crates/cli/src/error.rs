// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use causelens::analysis::AnalysisError;
use causelens::chaingen::{DatasetError, LexiconError};
use causelens::metrics::MetricsError;
use causelens::simrep::SimrepError;
use causelens::traceio::TraceError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    MissingTraces(String),
    #[error("{path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simrep(#[from] SimrepError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0} bundle(s) failed validation")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Config(_) => "config".into(),
            CliError::MissingTraces(_) => "missing_traces".into(),
            CliError::Trace { source, .. } => source.kind().into(),
            CliError::Io { .. } => "io".into(),
            CliError::Lexicon(_) => "lexicon".into(),
            CliError::Dataset(_) => "dataset".into(),
            CliError::Analysis(_) => "analysis".into(),
            CliError::Metrics(_) => "metrics".into(),
            CliError::Simrep(_) => "similarity".into(),
            CliError::Invalid(_) => "invalid_argument".into(),
            CliError::ValidationFailed(_) => "validation_failed".into(),
        }
    }

    /// Single-line machine-readable form.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}
