//! Text-generation client abstraction shared by the CoT polisher, the judge,
//! and remote comparators.

use thiserror::Error;

use crate::model::CreativeImageRef;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected")]
    Auth,
    #[error("upstream returned status {0}")]
    UpstreamStatus(u16),
    #[error("transport error: {0}")]
    Transport(String),
}

/// A single chat-style completion: prompt text plus image references in,
/// raw text out.
pub trait TextClient: Send + Sync {
    fn complete(&self, prompt: &str, images: &[CreativeImageRef]) -> Result<String, ClientError>;
}

impl<F> TextClient for F
where
    F: Fn(&str) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, prompt: &str, _images: &[CreativeImageRef]) -> Result<String, ClientError> {
        self(prompt)
    }
}
