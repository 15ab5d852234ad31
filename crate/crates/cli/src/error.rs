use std::fmt;

use conceptcarve::characterizer::CarveError;
use conceptcarve::corpus::CorpusError;
use conceptcarve::evaluation::EvalError;
use conceptcarve::llm::LlmError;
use conceptcarve::retriever::RetrieverError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: message.to_string(),
        }
    }

    pub fn provider(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_PROVIDER,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Self::io(e)
    }
}

impl From<RetrieverError> for Failure {
    fn from(e: RetrieverError) -> Self {
        match e {
            RetrieverError::ZeroK => Self::usage(e),
            _ => Self::io(e),
        }
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(_) => Self::usage(e),
            LlmError::Fixture(_) => Self::io(e),
            _ => Self::provider(e),
        }
    }
}

impl From<CarveError> for Failure {
    fn from(e: CarveError) -> Self {
        match e {
            CarveError::Config(_) | CarveError::NotExpandable(..) => Self::usage(e),
            CarveError::Llm(inner) => inner.into(),
            CarveError::Embed(_) => Self::provider(e),
            CarveError::Retriever(inner) => inner.into(),
            CarveError::MissingDocument(_) | CarveError::Tree(_) => Self::io(e),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ZeroK => Self::usage(e),
            EvalError::Llm(inner) => inner.into(),
            _ => Self::io(e),
        }
    }
}
