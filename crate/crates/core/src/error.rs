use thiserror::Error;

/// Violations of the [`ApiModel`](crate::model::ApiModel) invariants and
/// lookups against it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("duplicate operation id `{0}`")]
    DuplicateOperation(String),
    #[error("operation `{operation}` declares parameter `{name}` twice in the same location")]
    DuplicateParameter { operation: String, name: String },
    #[error("operation `{operation}`: path variable `{name}` needs exactly one path parameter")]
    UnboundPathVariable { operation: String, name: String },
    #[error("operation `{operation}`: path parameter `{name}` must be required")]
    OptionalPathParameter { operation: String, name: String },
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    /// The document is not well-formed JSON or YAML.
    #[error("malformed specification document: {0}")]
    Parse(String),
    /// The document parsed but does not describe a usable API.
    #[error("invalid specification: {0}")]
    Semantic(String),
}

impl From<ModelError> for SpecError {
    fn from(e: ModelError) -> Self {
        SpecError::Semantic(e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenarios document: {0}")]
    Parse(String),
    #[error("invalid scenario `{scenario}`: {reason}")]
    Semantic { scenario: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgeError {
    #[error("cannot generate a value: {0}")]
    Generation(String),
    #[error("mutation {op} does not apply to a {kind} value")]
    InapplicableMutation { op: &'static str, kind: &'static str },
    #[error("input vector has no parameter `{0}`")]
    UnknownParameter(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("extraction failed: {0}")]
pub struct ExtractionError(pub String);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("missing required path parameter `{0}`")]
    MissingPathParameter(String),
    #[error("cannot form request URL: {0}")]
    Url(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("coverage unavailable: {0}")]
pub struct CoverageUnavailable(pub String);

/// Anything that stops a run before or while it starts. Failures during the
/// fuzzing loop itself are recorded as data instead.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario `{scenario}`: {source}")]
    Generation {
        scenario: String,
        #[source]
        source: ForgeError,
    },
    #[error("target unreachable at {url}: {reason}")]
    Unreachable { url: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
