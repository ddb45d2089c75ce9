//! Blocking client for the admin API, used by the CLI.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use servnet_core::admin::{DemoAction, DemoStatus, ExperimentInstall, LinkEdit, NetworkView};
use servnet_core::autonomic::LinkSummary;
use thiserror::Error;
use ureq::http::Response;
use ureq::{Agent, Body, RequestBuilder};

use crate::http::{ApiError, ExperimentRequest, StateDigest, ADMIN_TOKEN_HEADER};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {message}")]
    Connect { url: String, message: String },
    #[error("{status} {}: {}", .error.error, .error.message)]
    Api { status: u16, error: ApiError },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// 4xx answers are the caller's fault.
    pub fn is_user_error(&self) -> bool {
        matches!(self, ClientError::Api { status, .. } if (400..500).contains(status))
    }
}

pub struct ApiClient {
    base: String,
    token: Option<String>,
    agent: Agent,
}

impl ApiClient {
    pub fn new(base: impl Into<String>, token: Option<String>) -> Self {
        let config = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build();
        ApiClient {
            base: base.into().trim_end_matches('/').to_owned(),
            token,
            agent: Agent::new_with_config(config),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn auth<B>(&self, r: RequestBuilder<B>) -> RequestBuilder<B> {
        match &self.token {
            Some(t) => r.header(ADMIN_TOKEN_HEADER, t),
            None => r,
        }
    }

    fn check(&self, url: &str, r: Result<Response<Body>, ureq::Error>) -> Result<Response<Body>, ClientError> {
        let mut resp = r.map_err(|e| ClientError::Connect {
            url: url.to_owned(),
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return Ok(resp);
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        let error = serde_json::from_str(&text).unwrap_or(ApiError {
            error: "Http".into(),
            message: text,
        });
        Err(ClientError::Api { status, error })
    }

    fn get_text(&self, path: &str) -> Result<String, ClientError> {
        let url = self.url(path);
        let resp = self.check(&url, self.auth(self.agent.get(&url)).call());
        resp?.body_mut().read_to_string().map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        serde_json::from_str(&self.get_text(path)?).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<Option<T>, ClientError> {
        let url = self.url(path);
        let mut resp = self.check(&url, self.auth(self.agent.post(&url)).send_json(body))?;
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Decode(e.to_string()))?;
        if text.is_empty() {
            return Ok(None);
        }
        serde_json::from_str(&text).map(Some).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn view(&self, depth: usize) -> Result<NetworkView, ClientError> {
        self.get_json(&format!("/admin/view?depth={depth}"))
    }

    pub fn network_meta(&self) -> Result<String, ClientError> {
        self.get_text("/admin/meta")
    }

    pub fn meta(&self, path: &str) -> Result<String, ClientError> {
        self.get_text(&format!("/admin/meta/{}", path.trim_matches('/')))
    }

    pub fn link(&self, edit: &LinkEdit) -> Result<(), ClientError> {
        self.post_json::<_, serde_json::Value>("/admin/link", edit).map(drop)
    }

    pub fn dynamic_links(&self, path: &str) -> Result<Vec<LinkSummary>, ClientError> {
        self.get_json(&format!("/admin/dynlinks/{}", path.trim_matches('/')))
    }

    pub fn demo(&self, action: &DemoAction) -> Result<DemoStatus, ClientError> {
        self.post_json("/admin/demo", action)?
            .ok_or_else(|| ClientError::Decode("empty demo status".into()))
    }

    pub fn experiment(&self, req: &ExperimentRequest) -> Result<ExperimentInstall, ClientError> {
        self.post_json("/admin/experiment", req)?
            .ok_or_else(|| ClientError::Decode("empty experiment report".into()))
    }

    pub fn state_digest(&self) -> Result<String, ClientError> {
        self.get_json::<StateDigest>("/admin/state").map(|d| d.digest)
    }
}
