use std::time::Duration;

use tarjama_core::ranking::{RewardScorer, ScorerError, ScorerRequest, ScorerResponse};
use tarjama_core::{Candidate, Conversation};

use crate::backend::{Backoff, BackendError, JsonPoster};

/// Reward model behind an HTTP endpoint. The request body is a
/// [`ScorerRequest`] and the reply a `{"score": x}` object.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    poster: JsonPoster,
}

impl HttpScorer {
    pub fn new(
        endpoint: impl Into<String>,
        api_key_env: Option<&str>,
        timeout: Duration,
        backoff: Backoff,
    ) -> Result<Self, BackendError> {
        Ok(Self { poster: JsonPoster::new(endpoint.into(), api_key_env, timeout, backoff)? })
    }
}

impl RewardScorer for HttpScorer {
    fn score(&self, source: &Conversation, candidate: &Candidate) -> Result<f64, ScorerError> {
        let request = ScorerRequest {
            source,
            candidate: &candidate.conversation,
            translator_id: &candidate.translator_id,
        };
        let response: ScorerResponse = self.poster.post(&request).map_err(|e| match e {
            BackendError::Http { .. } | BackendError::MissingApiKey(_) => ScorerError::Unavailable(e.to_string()),
            other => ScorerError::InvalidResponse(other.to_string()),
        })?;
        response.checked()
    }
}
