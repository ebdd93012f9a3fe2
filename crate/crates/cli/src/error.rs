use std::fmt;

use hdvb_core::ErrorClass;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Input,
    Estimation,
    Bootstrap,
    Internal,
}

impl Class {
    pub fn exit_code(self) -> u8 {
        match self {
            Class::Input => 2,
            Class::Estimation => 3,
            Class::Bootstrap => 4,
            Class::Internal => 5,
        }
    }
}

impl From<ErrorClass> for Class {
    fn from(c: ErrorClass) -> Self {
        match c {
            ErrorClass::Input => Class::Input,
            ErrorClass::Estimation => Class::Estimation,
            ErrorClass::Bootstrap => Class::Bootstrap,
            ErrorClass::Internal => Class::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub class: Class,
    pub message: String,
    /// 1-based file coordinates for ingestion errors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl CliError {
    pub fn new(class: Class, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
            row: None,
            column: None,
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Class::Input, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(Class::Internal, message)
    }

    pub fn at(mut self, row: usize, column: Option<usize>) -> Self {
        self.row = Some(row);
        self.column = column;
        self
    }

    pub fn exit_code(&self) -> u8 {
        self.class.exit_code()
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: &'a CliError,
            exit_code: u8,
        }
        serde_json::to_string(&Envelope {
            error: self,
            exit_code: self.exit_code(),
        })
        .unwrap_or_else(|_| format!("{{\"error\":{{\"class\":\"internal\",\"message\":{:?}}},\"exit_code\":5}}", self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<hdvb_core::Error> for CliError {
    fn from(e: hdvb_core::Error) -> Self {
        Self::new(e.class().into(), e.to_string())
    }
}
