use std::fmt;

use thiserror::Error;

/// Broad failure class, used by front-ends to choose an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters, shapes or documents.
    Validation,
    /// A role, transport or phase failed.
    Protocol,
    /// A cryptographic integrity check failed.
    Integrity,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Protocol => 3,
            ErrorClass::Integrity => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("mismatched operands: {0}")]
    Mismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("missing galois key for element {element}")]
    MissingGaloisKey { element: u64 },

    #[error("ciphertext is under the {found} key, expected the {expected} key")]
    KeyOwner {
        expected: &'static str,
        found: &'static str,
    },

    #[error("layout capacity exceeded: {0}")]
    Capacity(String),

    #[error("model validation failed at layer {layer}: {reason}")]
    Model { layer: usize, reason: String },

    #[error("model document: {0}")]
    Document(String),

    #[error("noise budget infeasible at layer {layer}: {reason}")]
    Infeasible { layer: usize, reason: String },

    #[error("malformed encoding: {0}")]
    Decode(String),

    #[error("garbled table integrity check failed at gate {gate}")]
    GarbledIntegrity { gate: usize },

    #[error("oblivious transfer integrity check failed at index {index}")]
    OtIntegrity { index: usize },

    #[error("decrypted result does not match the reference: {0}")]
    ResultMismatch(String),

    #[error("garbled instance {0} was already evaluated")]
    Reused(u64),

    #[error("{party} failed in {phase} (layer {layer}): {source}")]
    Phase {
        party: &'static str,
        phase: &'static str,
        layer: LayerTag,
        #[source]
        source: Box<Error>,
    },

    #[error("{party} aborted: {message}")]
    Remote {
        party: &'static str,
        class: ErrorClass,
        message: String,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("transport: {0}")]
    Transport(#[from] std::io::Error),
}

/// Layer index attached to phase errors; `None` for session-level phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerTag(pub Option<usize>);

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(l) => write!(f, "{l}"),
            None => f.write_str("-"),
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Params(_)
            | Error::Mismatch(_)
            | Error::OutOfRange(_)
            | Error::Capacity(_)
            | Error::Model { .. }
            | Error::Document(_)
            | Error::Infeasible { .. } => ErrorClass::Validation,
            Error::GarbledIntegrity { .. }
            | Error::OtIntegrity { .. }
            | Error::ResultMismatch(_) => ErrorClass::Integrity,
            Error::Phase { source, .. } => match source.class() {
                ErrorClass::Integrity => ErrorClass::Integrity,
                _ => ErrorClass::Protocol,
            },
            Error::Remote { class, .. } => *class,
            Error::MissingGaloisKey { .. }
            | Error::KeyOwner { .. }
            | Error::Decode(_)
            | Error::Reused(_)
            | Error::Protocol(_)
            | Error::Transport(_) => ErrorClass::Protocol,
        }
    }

    pub(crate) fn in_phase(self, party: &'static str, phase: &'static str, layer: Option<usize>) -> Error {
        match self {
            e @ Error::Phase { .. } => e,
            e => Error::Phase {
                party,
                phase,
                layer: LayerTag(layer),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
