use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Candidate, Conversation};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("scorer returned an invalid response: {0}")]
    InvalidResponse(String),
    #[error("scorer returned {0}, expected a finite value in [0, 1]")]
    OutOfRange(f64),
}

/// External reward model returning one scalar in `[0, 1]` per candidate.
pub trait RewardScorer: Send + Sync {
    fn score(&self, source: &Conversation, candidate: &Candidate) -> Result<f64, ScorerError>;
}

/// Request body sent to a reward scorer.
#[derive(Debug, Clone, Serialize)]
pub struct ScorerRequest<'a> {
    pub source: &'a Conversation,
    pub candidate: &'a Conversation,
    pub translator_id: &'a str,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerResponse {
    pub score: f64,
}

impl ScorerResponse {
    pub fn checked(self) -> Result<f64, ScorerError> {
        if self.score.is_finite() && (0.0..=1.0).contains(&self.score) {
            Ok(self.score)
        } else {
            Err(ScorerError::OutOfRange(self.score))
        }
    }
}

/// Runs an executable per candidate: the request JSON goes to stdin and a
/// `{"score": x}` object is read from stdout.
#[derive(Debug, Clone)]
pub struct CommandScorer {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandScorer {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self { program: program.into(), args }
    }
}

impl RewardScorer for CommandScorer {
    fn score(&self, source: &Conversation, candidate: &Candidate) -> Result<f64, ScorerError> {
        let request = ScorerRequest {
            source,
            candidate: &candidate.conversation,
            translator_id: &candidate.translator_id,
        };
        let body = serde_json::to_vec(&request).map_err(|e| ScorerError::InvalidResponse(e.to_string()))?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Unavailable(format!("{}: {e}", self.program)))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin.write_all(&body).map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        }
        let output = child.wait_with_output().map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(ScorerError::Unavailable(format!("{} exited with {}", self.program, output.status)));
        }
        let response: ScorerResponse = serde_json::from_slice(&output.stdout)
            .map_err(|e| ScorerError::InvalidResponse(e.to_string()))?;
        response.checked()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Role;

    fn pair() -> (Conversation, Candidate) {
        let c = Conversation::new("c", "train", vec![(Role::User, "x".to_string())]);
        let cand = Candidate { conversation_id: "c".into(), translator_id: "t".into(), conversation: c.clone() };
        (c, cand)
    }

    #[test]
    fn command_scorer_reads_stdout() {
        let (src, cand) = pair();
        let s = CommandScorer::new("sh", vec!["-c".into(), "cat >/dev/null; echo '{\"score\": 0.25}'".into()]);
        assert_eq!(s.score(&src, &cand).unwrap(), 0.25);
    }

    #[test]
    fn command_scorer_errors() {
        let (src, cand) = pair();
        let bad = CommandScorer::new("sh", vec!["-c".into(), "cat >/dev/null; echo '{\"score\": 3}'".into()]);
        assert!(matches!(bad.score(&src, &cand), Err(ScorerError::OutOfRange(_))));
        let fails = CommandScorer::new("sh", vec!["-c".into(), "cat >/dev/null; exit 3".into()]);
        assert!(matches!(fails.score(&src, &cand), Err(ScorerError::Unavailable(_))));
        let missing = CommandScorer::new("/nonexistent/scorer", vec![]);
        assert!(matches!(missing.score(&src, &cand), Err(ScorerError::Unavailable(_))));
    }
}
