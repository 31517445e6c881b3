//! Reinforcement-learning guided black-box fuzzer for REST APIs described
//! by OpenAPI 3.0 documents.
//!
//! The pipeline: [`openapi::parse_spec`] builds an [`model::ApiModel`],
//! [`scenario`] turns it into operation sequences, [`forge`] seeds and
//! mutates inputs, [`agent`] picks mutations by tabular Q-learning,
//! [`http`] sends requests, [`oracle`] judges responses and [`report`]
//! folds everything into a [`report::TestReport`]. [`runner`] wires it up.

pub mod agent;
pub mod coverage;
pub mod dictionary;
pub mod error;
mod extract;
pub mod forge;
pub mod http;
pub mod model;
pub mod openapi;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod validate;
pub mod value;

pub use error::{RunError, SpecError};
pub use model::ApiModel;
pub use runner::{run, Campaign, RunConfig, RunOutcome};
pub use value::FuzzValue;
