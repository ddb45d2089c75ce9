//! Mediated transactions with payment escrow, and the known-answer
//! question game.

mod questions;
mod scenario;

pub use questions::{cheat_evasion_estimate, question_game_round, Outcome, QuestionGame, Strategy};
pub use scenario::{run_scenario, CredentialRegistry, CredentialStatus, LogLine, Scenario, ScenarioResult, Step};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Handle;
use crate::wire::ParamValue;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrustError {
    #[error("{event:?} is not enabled in state {state:?}")]
    IllegalTransition { state: TxnState, event: EventKind },
    #[error("question game needs k >= 2 and a genuine index below k (k={k}, index={index})")]
    InvalidGame { k: usize, index: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxnState {
    Proposed,
    Agreed,
    PaymentEscrowed,
    Executed,
    ResultDelivered,
    Accepted,
    Disputed,
    VerifiedGenuine,
    EscalatedToHuman,
    PaymentReleased,
    Refunded,
    Closed,
}

impl TxnState {
    pub const ALL: [TxnState; 12] = [
        TxnState::Proposed,
        TxnState::Agreed,
        TxnState::PaymentEscrowed,
        TxnState::Executed,
        TxnState::ResultDelivered,
        TxnState::Accepted,
        TxnState::Disputed,
        TxnState::VerifiedGenuine,
        TxnState::EscalatedToHuman,
        TxnState::PaymentReleased,
        TxnState::Refunded,
        TxnState::Closed,
    ];

    pub fn is_terminal(self) -> bool {
        enabled_events(self).is_empty()
    }

    /// States in which the mediator holds the client's token.
    pub fn holds_escrow(self) -> bool {
        use TxnState::*;
        matches!(
            self,
            PaymentEscrowed | Executed | ResultDelivered | Accepted | Disputed | VerifiedGenuine | EscalatedToHuman
        )
    }
}

/// Stands in for the client's payment details.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PaymentToken(pub String);

impl std::fmt::Debug for PaymentToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PaymentToken(..)")
    }
}

/// How the result travels to the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    ViaMediator,
    Direct,
}

/// Outcome of checking a disputed result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Genuine,
    NotGenuine,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Agree,
    Deposit,
    ProviderExecutes,
    DeliverResult,
    ClientAccepts,
    ClientDisputes,
    Verify,
    Release,
    Close,
}

mod param_xml {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::wire::ParamValue;
    use crate::xml;

    pub fn serialize<S: Serializer>(v: &ParamValue, s: S) -> Result<S::Ok, S::Error> {
        let el = v.to_xml_element();
        el.to_xml().map_err(serde::ser::Error::custom)?.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ParamValue, D::Error> {
        let raw = String::deserialize(d)?;
        let el = xml::parse_document(&raw).map_err(serde::de::Error::custom)?;
        ParamValue::from_xml_element(&el).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TxnEvent {
    Agree,
    Deposit {
        token: PaymentToken,
    },
    ProviderExecutes {
        /// XML form of the result value, e.g. `<s>done</s>`.
        #[serde(with = "param_xml")]
        result: ParamValue,
    },
    DeliverResult {
        route: Route,
    },
    ClientAccepts,
    ClientDisputes {
        note: String,
    },
    Verify {
        verdict: Verdict,
    },
    Release,
    Close,
}

impl TxnEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            TxnEvent::Agree => EventKind::Agree,
            TxnEvent::Deposit { .. } => EventKind::Deposit,
            TxnEvent::ProviderExecutes { .. } => EventKind::ProviderExecutes,
            TxnEvent::DeliverResult { .. } => EventKind::DeliverResult,
            TxnEvent::ClientAccepts => EventKind::ClientAccepts,
            TxnEvent::ClientDisputes { .. } => EventKind::ClientDisputes,
            TxnEvent::Verify { .. } => EventKind::Verify,
            TxnEvent::Release => EventKind::Release,
            TxnEvent::Close => EventKind::Close,
        }
    }

    /// One event of every kind and payload variant that changes behavior.
    pub fn alphabet() -> Vec<TxnEvent> {
        vec![
            TxnEvent::Agree,
            TxnEvent::Deposit {
                token: PaymentToken("token".into()),
            },
            TxnEvent::ProviderExecutes {
                result: ParamValue::from("result"),
            },
            TxnEvent::DeliverResult { route: Route::ViaMediator },
            TxnEvent::DeliverResult { route: Route::Direct },
            TxnEvent::ClientAccepts,
            TxnEvent::ClientDisputes { note: "wrong".into() },
            TxnEvent::Verify { verdict: Verdict::Genuine },
            TxnEvent::Verify { verdict: Verdict::NotGenuine },
            TxnEvent::Verify { verdict: Verdict::Unknown },
            TxnEvent::Release,
            TxnEvent::Close,
        ]
    }
}

/// The event kinds accepted in `state`.
pub fn enabled_events(state: TxnState) -> Vec<EventKind> {
    use EventKind as E;
    use TxnState as S;
    match state {
        S::Proposed => vec![E::Agree],
        S::Agreed => vec![E::Deposit],
        S::PaymentEscrowed => vec![E::ProviderExecutes],
        S::Executed => vec![E::DeliverResult],
        S::ResultDelivered => vec![E::ClientAccepts, E::ClientDisputes],
        S::Disputed => vec![E::Verify],
        S::Accepted | S::VerifiedGenuine => vec![E::Release],
        S::PaymentReleased => vec![E::Close],
        S::EscalatedToHuman | S::Refunded | S::Closed => vec![],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediatedTransaction {
    pub txn_id: String,
    pub client: Handle,
    pub provider: Handle,
    pub mediator: Handle,
    pub state: TxnState,
    /// Held by the mediator.
    pub escrow: Option<PaymentToken>,
    pub result: Option<ParamValue>,
    pub route: Option<Route>,
    pub dispute_note: Option<String>,
    /// Set once the provider has been paid.
    provider_token: Option<PaymentToken>,
    /// Set once a refund has returned the token to the client.
    pub refunded: Option<PaymentToken>,
    pub release_count: u32,
    pub client_notified: bool,
    /// Every state entered, starting with `Proposed`.
    pub history: Vec<TxnState>,
}

/// What the provider can observe of a transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderView {
    pub state: TxnState,
    pub token: Option<PaymentToken>,
}

impl MediatedTransaction {
    pub fn new(txn_id: impl Into<String>, client: Handle, provider: Handle, mediator: Handle) -> Self {
        MediatedTransaction {
            txn_id: txn_id.into(),
            client,
            provider,
            mediator,
            state: TxnState::Proposed,
            escrow: None,
            result: None,
            route: None,
            dispute_note: None,
            provider_token: None,
            refunded: None,
            release_count: 0,
            client_notified: false,
            history: vec![TxnState::Proposed],
        }
    }

    pub fn provider_view(&self) -> ProviderView {
        ProviderView {
            state: self.state,
            token: self.provider_token.clone(),
        }
    }
}

/// Applies `event`, returning the next transaction value.
pub fn advance(t: &MediatedTransaction, event: &TxnEvent) -> Result<MediatedTransaction, TrustError> {
    use TxnState as S;
    let illegal = || TrustError::IllegalTransition {
        state: t.state,
        event: event.kind(),
    };
    let mut n = t.clone();
    n.state = match (t.state, event) {
        (S::Proposed, TxnEvent::Agree) => S::Agreed,
        (S::Agreed, TxnEvent::Deposit { token }) => {
            n.escrow = Some(token.clone());
            S::PaymentEscrowed
        }
        (S::PaymentEscrowed, TxnEvent::ProviderExecutes { result }) => {
            n.result = Some(result.clone());
            S::Executed
        }
        (S::Executed, TxnEvent::DeliverResult { route }) => {
            n.route = Some(*route);
            S::ResultDelivered
        }
        (S::ResultDelivered, TxnEvent::ClientAccepts) => S::Accepted,
        (S::ResultDelivered, TxnEvent::ClientDisputes { note }) => {
            n.dispute_note = Some(note.clone());
            S::Disputed
        }
        (S::Disputed, TxnEvent::Verify { verdict }) => match verdict {
            Verdict::Genuine => S::VerifiedGenuine,
            Verdict::NotGenuine => {
                n.refunded = n.escrow.take();
                S::Refunded
            }
            // Escrow stays frozen with the mediator.
            Verdict::Unknown => S::EscalatedToHuman,
        },
        (S::Accepted | S::VerifiedGenuine, TxnEvent::Release) => {
            n.provider_token = n.escrow.take();
            n.release_count += 1;
            if t.state == S::VerifiedGenuine {
                n.client_notified = true;
            }
            S::PaymentReleased
        }
        (S::PaymentReleased, TxnEvent::Close) => S::Closed,
        _ => return Err(illegal()),
    };
    n.history.push(n.state);
    Ok(n)
}

/// Results of exploring every event sequence up to a length.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SafetyReport {
    pub max_len: usize,
    /// Legal sequences explored, including the empty one.
    pub sequences: u64,
    /// Events tried and rejected as illegal.
    pub rejected: u64,
    pub violations: Vec<String>,
}

fn check_invariants(t: &MediatedTransaction, out: &mut Vec<String>) {
    let trace = || format!("{:?}", t.history);
    if t.release_count > 1 {
        out.push(format!("token released {} times: {}", t.release_count, trace()));
    }
    for w in t.history.windows(2) {
        if w[1] == TxnState::PaymentReleased && !matches!(w[0], TxnState::Accepted | TxnState::VerifiedGenuine) {
            out.push(format!("payment released from {:?}: {}", w[0], trace()));
        }
    }
    let released = t.history.contains(&TxnState::PaymentReleased);
    if t.provider_view().token.is_some() != released {
        out.push(format!("provider token visibility wrong in {:?}: {}", t.state, trace()));
    }
    if t.state.holds_escrow() != t.escrow.is_some() {
        out.push(format!("escrow {:?} in state {:?}: {}", t.escrow.is_some(), t.state, trace()));
    }
    if t.state >= TxnState::ResultDelivered && t.state != TxnState::Refunded && t.result.is_none() {
        out.push(format!("no result in {:?}: {}", t.state, trace()));
    }
    if t.state == TxnState::PaymentReleased && t.history.contains(&TxnState::Disputed) && !t.client_notified {
        out.push(format!("client not notified after dispute: {}", trace()));
    }
}

/// Tries every event of [`TxnEvent::alphabet`] at every step, depth first,
/// and checks the escrow invariants in every reached transaction.
pub fn explore_sequences(max_len: usize) -> SafetyReport {
    fn go(t: &MediatedTransaction, depth: usize, alphabet: &[TxnEvent], report: &mut SafetyReport) {
        report.sequences += 1;
        check_invariants(t, &mut report.violations);
        if depth == report.max_len {
            return;
        }
        let enabled = enabled_events(t.state);
        for e in alphabet {
            let result = advance(t, e);
            if result.is_ok() != enabled.contains(&e.kind()) {
                report
                    .violations
                    .push(format!("{:?} in {:?} disagrees with the enabling table", e.kind(), t.state));
            }
            match result {
                Ok(next) => go(&next, depth + 1, alphabet, report),
                Err(_) => report.rejected += 1,
            }
        }
    }
    let root = Handle::root("sim://trust").expect("valid uri");
    let t = MediatedTransaction::new(
        "explore",
        root.child("client").expect("valid"),
        root.child("provider").expect("valid"),
        root.child("mediator").expect("valid"),
    );
    let mut report = SafetyReport {
        max_len,
        ..Default::default()
    };
    go(&t, 0, &TxnEvent::alphabet(), &mut report);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txn() -> MediatedTransaction {
        let r = Handle::root("http://m:1").unwrap();
        MediatedTransaction::new("t1", r.child("c").unwrap(), r.child("p").unwrap(), r.child("m").unwrap())
    }

    fn run(events: &[TxnEvent]) -> Result<MediatedTransaction, TrustError> {
        events.iter().try_fold(txn(), |t, e| advance(&t, e))
    }

    fn prefix() -> Vec<TxnEvent> {
        vec![
            TxnEvent::Agree,
            TxnEvent::Deposit { token: PaymentToken("k".into()) },
            TxnEvent::ProviderExecutes { result: ParamValue::from(7) },
            TxnEvent::DeliverResult { route: Route::ViaMediator },
        ]
    }

    #[test]
    fn happy_path_releases_once() {
        let mut events = prefix();
        events.extend([TxnEvent::ClientAccepts, TxnEvent::Release, TxnEvent::Close]);
        let t = run(&events).unwrap();
        assert_eq!(t.state, TxnState::Closed);
        assert_eq!(t.release_count, 1);
        assert_eq!(t.provider_view().token, Some(PaymentToken("k".into())));
        assert!(!t.client_notified);
    }

    #[test]
    fn verified_dispute_notifies_client() {
        let mut events = prefix();
        events.extend([
            TxnEvent::ClientDisputes { note: "bad".into() },
            TxnEvent::Verify { verdict: Verdict::Genuine },
            TxnEvent::Release,
        ]);
        let t = run(&events).unwrap();
        assert_eq!(t.state, TxnState::PaymentReleased);
        assert!(t.client_notified);
    }

    #[test]
    fn escalation_freezes_escrow_and_refund_returns_it() {
        let mut events = prefix();
        events.extend([TxnEvent::ClientDisputes { note: "bad".into() }, TxnEvent::Verify { verdict: Verdict::Unknown }]);
        let t = run(&events).unwrap();
        assert_eq!(t.state, TxnState::EscalatedToHuman);
        assert!(t.escrow.is_some() && t.state.is_terminal());

        events.pop();
        events.push(TxnEvent::Verify { verdict: Verdict::NotGenuine });
        let t = run(&events).unwrap();
        assert_eq!(t.state, TxnState::Refunded);
        assert_eq!(t.refunded, Some(PaymentToken("k".into())));
        assert_eq!(t.provider_view().token, None);
    }

    #[test]
    fn release_in_proposed_is_illegal() {
        assert_eq!(
            advance(&txn(), &TxnEvent::Release),
            Err(TrustError::IllegalTransition { state: TxnState::Proposed, event: EventKind::Release })
        );
    }

    #[test]
    fn enabling_sets() {
        assert!(enabled_events(TxnState::Closed).is_empty());
        assert_eq!(enabled_events(TxnState::ResultDelivered), vec![EventKind::ClientAccepts, EventKind::ClientDisputes]);
        assert_eq!(enabled_events(TxnState::PaymentEscrowed), vec![EventKind::ProviderExecutes]);
        let terminal: Vec<_> = TxnState::ALL.iter().filter(|s| s.is_terminal()).collect();
        assert_eq!(terminal, vec![&TxnState::EscalatedToHuman, &TxnState::Refunded, &TxnState::Closed]);
    }

    #[test]
    fn events_serialize_as_tagged_json() {
        let e = TxnEvent::ProviderExecutes { result: ParamValue::from("ok") };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"event":"provider_executes","result":"<s>ok</s>"}"#);
        assert_eq!(serde_json::from_str::<TxnEvent>(&s).unwrap(), e);
    }
}
