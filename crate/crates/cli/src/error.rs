use std::fmt;
use std::path::Path;

use udmeta::conllu::ConlluError;
use udmeta::evaluate::EvalError;
use udmeta::experiment::ExperimentError;
use udmeta::meta::MetaError;
use udmeta::model::ModelError;
use udmeta::numeric::NumericError;
use udmeta::typology::TypologyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numerical,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numerical => 4,
            Kind::Internal => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::Data => "data",
            Kind::Numerical => "numerical",
            Kind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::data(format!("{}: {e}", path.display()))
    }

    /// The single machine-readable line printed on failure.
    pub fn json_line(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind.name(), "code": self.kind.exit_code(), "message": self.message }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.name(), self.message)
    }
}

fn numeric_kind(e: &NumericError) -> Kind {
    match e {
        NumericError::NonFinite(_) => Kind::Numerical,
        _ => Kind::Internal,
    }
}

fn model_kind(e: &ModelError) -> Kind {
    match e {
        ModelError::Numeric(n) => numeric_kind(n),
        ModelError::Config(_) => Kind::Config,
        ModelError::ConfigHash { .. } => Kind::Config,
        ModelError::Decode(_) => Kind::Internal,
        _ => Kind::Data,
    }
}

fn meta_kind(e: &MetaError) -> Kind {
    match e {
        MetaError::Model(m) => model_kind(m),
        MetaError::Numeric(n) => numeric_kind(n),
        MetaError::NonFinite(_) => Kind::Numerical,
        MetaError::Config(_) => Kind::Config,
        _ => Kind::Data,
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let kind = match &e {
            ExperimentError::Meta(m) => meta_kind(m),
            ExperimentError::Model(m) => model_kind(m),
            ExperimentError::Config(_) => Kind::Config,
            ExperimentError::Typology(_) | ExperimentError::Eval(_) => Kind::Data,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        CliError { kind: meta_kind(&e), message: e.to_string() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError { kind: model_kind(&e), message: e.to_string() }
    }
}

impl From<ConlluError> for CliError {
    fn from(e: ConlluError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<TypologyError> for CliError {
    fn from(e: TypologyError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(format!("malformed artifact: {e}"))
    }
}
