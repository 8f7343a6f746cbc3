use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use menger_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    BadInput,
    Infeasible,
    Internal,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::BadInput => 2,
            Kind::Infeasible => 3,
            Kind::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: Kind,
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, stage: &str, message: impl Into<String>) -> Self {
        Self { kind, stage: stage.into(), message: message.into() }
    }

    pub fn bad_input(stage: &str, message: impl Into<String>) -> Self {
        Self::new(Kind::BadInput, stage, message)
    }

    pub fn internal(stage: &str, message: impl Into<String>) -> Self {
        Self::new(Kind::Internal, stage, message)
    }

    /// Library errors: malformed data is bad input, everything the input
    /// parses into but the computation cannot accept is infeasible.
    pub fn core(stage: &str, e: Error) -> Self {
        let kind = match e {
            Error::BadSpec(_)
            | Error::Parse { .. }
            | Error::EmptyMeasure
            | Error::EmptySupport
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. } => Kind::BadInput,
            _ => Kind::Infeasible,
        };
        Self::new(kind, stage, e.to_string())
    }
}

pub trait Stage<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> Stage<T> for menger_core::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::core(stage, e))
    }
}

pub fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", json!({ "error": e }));
    ExitCode::from(e.kind.code())
}

/// Report envelope shared by every verb.
pub fn envelope(command: &str, params: Value, input: Option<Value>, result: Value) -> Value {
    let mut v = json!({
        "tool": "menger",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "params": params,
        "result": result,
    });
    if let Some(i) = input {
        v["input"] = i;
    }
    v
}

pub fn to_value<T: Serialize>(stage: &str, t: &T) -> Result<Value, CliError> {
    serde_json::to_value(t).map_err(|e| CliError::internal(stage, e.to_string()))
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::internal("output", format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::internal("output", e.to_string()))
        }
    }
}

pub fn write_json(path: Option<&Path>, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::internal("output", e.to_string()))?;
    s.push('\n');
    write_text(path, &s)
}
