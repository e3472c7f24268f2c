//! Blocking HTTP client for the store service contract.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::engine::{ScoredApp, SessionState, UserAction};
use crate::model::SessionEvent;
use crate::service::{ActionResponse, ELAPSED_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("{status}: {message}")]
    Status { status: u16, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Http(e) => e.status().map(|s| s.as_u16()),
        }
    }
}

pub struct HttpStore {
    base: String,
    http: reqwest::blocking::Client,
}

impl HttpStore {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpStore {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::blocking::Client::new(),
        }
    }

    fn finish<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json()?);
        }
        let body: serde_json::Value = resp.json().unwrap_or(serde_json::Value::Null);
        Err(ClientError::Status {
            status: status.as_u16(),
            message: body["error"].as_str().unwrap_or_default().to_string(),
        })
    }

    fn get<T: DeserializeOwned>(&self, path: &str, elapsed_ms: Option<u64>) -> Result<T, ClientError> {
        let mut req = self.http.get(format!("{}{path}", self.base));
        if let Some(ms) = elapsed_ms {
            req = req.header(ELAPSED_HEADER, ms);
        }
        Self::finish(req.send()?)
    }

    fn post<T: DeserializeOwned, B: Serialize>(
        &self,
        path: &str,
        body: &B,
        elapsed_ms: Option<u64>,
    ) -> Result<T, ClientError> {
        let mut req = self.http.post(format!("{}{path}", self.base)).json(body);
        if let Some(ms) = elapsed_ms {
            req = req.header(ELAPSED_HEADER, ms);
        }
        Self::finish(req.send()?)
    }

    /// Raw body of `GET /catalog` or `GET /profiles`.
    pub fn document(&self, path: &str) -> Result<String, ClientError> {
        let resp = self.http.get(format!("{}{path}", self.base)).send()?;
        let status = resp.status();
        let text = resp.text()?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                message: text,
            });
        }
        Ok(text)
    }

    pub fn create_session(&self, entry_concern: Option<u8>) -> Result<ActionResponse, ClientError> {
        self.post("/session", &json!({ "entry_concern": entry_concern }), None)
    }

    /// Sends one action. `elapsed_ms` is required when the service runs with
    /// the client clock.
    pub fn act(&self, session: &str, action: &UserAction, elapsed_ms: Option<u64>) -> Result<ActionResponse, ClientError> {
        let s = format!("/session/{session}");
        match action {
            UserAction::SelectProfile { profile_id } => {
                self.post(&format!("{s}/profile"), &json!({ "profile_id": profile_id }), elapsed_ms)
            }
            UserAction::ViewApp { app_id } => self.post(&format!("{s}/view/{app_id}"), &json!({}), elapsed_ms),
            UserAction::Download { app_id } => {
                self.post(&format!("{s}/download/{app_id}"), &json!({}), elapsed_ms)
            }
            UserAction::Ignore { reason } => self.post(&format!("{s}/ignore"), &json!({ "reason": reason }), elapsed_ms),
            UserAction::OpenAlternatives { app_id } => self.get(&format!("{s}/alternatives/{app_id}"), elapsed_ms),
            UserAction::AnswerExploratory {
                kept_profile,
                new_profile_id,
            } => self.post(
                &format!("{s}/exploratory-answer"),
                &json!({ "kept_profile": kept_profile, "new_profile_id": new_profile_id }),
                elapsed_ms,
            ),
            UserAction::Remove { app_id } => self.post(&format!("{s}/remove/{app_id}"), &json!({}), elapsed_ms),
        }
    }

    pub fn scores(&self, session: &str) -> Result<Vec<ScoredApp>, ClientError> {
        self.get(&format!("/session/{session}/scores"), None)
    }

    pub fn state(&self, session: &str) -> Result<SessionState, ClientError> {
        self.get(&format!("/session/{session}"), None)
    }

    pub fn log(&self, session: &str) -> Result<Vec<SessionEvent>, ClientError> {
        self.get(&format!("/session/{session}/log"), None)
    }
}
