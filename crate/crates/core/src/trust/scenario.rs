//! Declarative transaction scenarios: a list of steps plus the expected
//! final state, run against the state machine with a JSON-lines log.
//!
//! ```json
//! {
//!   "name": "dispute settled by registry",
//!   "credentials": [{"key": "REG-7", "company": "Acme", "registry": "EU", "status": "valid"}],
//!   "steps": [
//!     {"event": "agree"},
//!     {"event": "deposit", "token": "card-1234"},
//!     {"event": "provider_executes", "result": "<s>report</s>"},
//!     {"event": "deliver_result", "route": "direct"},
//!     {"event": "client_disputes", "note": "looks fake"},
//!     {"verify_credential": "REG-7"},
//!     {"event": "release"}
//!   ],
//!   "expect": "PaymentReleased"
//! }
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::Handle;

use super::{advance, MediatedTransaction, TrustError, TxnEvent, TxnState, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CredentialStatus {
    Valid,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub key: String,
    pub company: String,
    pub registry: String,
    pub status: CredentialStatus,
}

/// Registration keys the verifier can look up. Unknown keys cannot be
/// settled automatically.
#[derive(Debug, Clone, Default)]
pub struct CredentialRegistry {
    entries: HashMap<String, Credential>,
}

impl CredentialRegistry {
    pub fn new(creds: impl IntoIterator<Item = Credential>) -> Self {
        CredentialRegistry {
            entries: creds.into_iter().map(|c| (c.key.clone(), c)).collect(),
        }
    }

    pub fn lookup(&self, key: &str) -> Option<&Credential> {
        self.entries.get(key)
    }

    pub fn verdict(&self, key: &str) -> Verdict {
        match self.lookup(key).map(|c| c.status) {
            Some(CredentialStatus::Valid) => Verdict::Genuine,
            Some(CredentialStatus::Revoked) => Verdict::NotGenuine,
            None => Verdict::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    /// Verify a disputed result by looking the provider's key up.
    VerifyCredential { verify_credential: String },
    Event(TxnEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub credentials: Vec<Credential>,
    pub steps: Vec<Step>,
    pub expect: TxnState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub scenario: String,
    pub step: usize,
    pub event: String,
    pub state: TxnState,
    pub escrow_held: bool,
    pub release_count: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub final_state: TxnState,
    pub expected: TxnState,
    pub passed: bool,
    pub log: Vec<LogLine>,
}

/// Runs the steps in order. An illegal step is logged and ends the run.
pub fn run_scenario(s: &Scenario) -> ScenarioResult {
    let registry = CredentialRegistry::new(s.credentials.clone());
    let root = Handle::root("sim://txn").expect("valid uri");
    let mut txn = MediatedTransaction::new(
        s.name.clone(),
        root.child("client").expect("valid"),
        root.child("provider").expect("valid"),
        root.child("mediator").expect("valid"),
    );
    let mut log = Vec::new();
    for (i, step) in s.steps.iter().enumerate() {
        let event = match step {
            Step::Event(e) => e.clone(),
            Step::VerifyCredential { verify_credential } => TxnEvent::Verify {
                verdict: registry.verdict(verify_credential),
            },
        };
        let outcome = advance(&txn, &event);
        let error = outcome.as_ref().err().map(TrustError::to_string);
        if let Ok(next) = outcome {
            txn = next;
        }
        log.push(LogLine {
            scenario: s.name.clone(),
            step: i + 1,
            event: format!("{:?}", event.kind()),
            state: txn.state,
            escrow_held: txn.escrow.is_some(),
            release_count: txn.release_count,
            error: error.clone(),
        });
        if error.is_some() {
            break;
        }
    }
    let passed = txn.state == s.expect && log.iter().all(|l| l.error.is_none());
    ScenarioResult {
        name: s.name.clone(),
        final_state: txn.state,
        expected: s.expect,
        passed,
        log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_example_runs() {
        let src = r#"{
          "name": "dispute settled by registry",
          "credentials": [{"key": "REG-7", "company": "Acme", "registry": "EU", "status": "valid"}],
          "steps": [
            {"event": "agree"},
            {"event": "deposit", "token": "card-1234"},
            {"event": "provider_executes", "result": "<s>report</s>"},
            {"event": "deliver_result", "route": "direct"},
            {"event": "client_disputes", "note": "looks fake"},
            {"verify_credential": "REG-7"},
            {"event": "release"}
          ],
          "expect": "PaymentReleased"
        }"#;
        let s: Scenario = serde_json::from_str(src).unwrap();
        let r = run_scenario(&s);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.log.len(), 7);
        assert!(!r.log.last().unwrap().escrow_held);
    }

    #[test]
    fn unknown_credential_escalates() {
        let reg = CredentialRegistry::default();
        assert_eq!(reg.verdict("nope"), Verdict::Unknown);
    }

    #[test]
    fn illegal_step_stops_the_run() {
        let s = Scenario {
            name: "bad".into(),
            credentials: vec![],
            steps: vec![Step::Event(TxnEvent::Release), Step::Event(TxnEvent::Agree)],
            expect: TxnState::Proposed,
        };
        let r = run_scenario(&s);
        assert!(!r.passed);
        assert_eq!(r.log.len(), 1);
        assert!(r.log[0].error.is_some());
    }
}
