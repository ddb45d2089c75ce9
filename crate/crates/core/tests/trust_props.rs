use proptest::prelude::*;
use servnet_core::model::Handle;
use servnet_core::par::Execution;
use servnet_core::trust::{
    advance, cheat_evasion_estimate, enabled_events, question_game_round, MediatedTransaction, Outcome, QuestionGame,
    Strategy, TxnEvent, TxnState,
};

fn txn() -> MediatedTransaction {
    let r = Handle::root("sim://t").unwrap();
    MediatedTransaction::new("p", r.child("c").unwrap(), r.child("p").unwrap(), r.child("m").unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    /// Random walks through the alphabet, illegal events included.
    #[test]
    fn token_is_never_duplicated_or_lost(picks in prop::collection::vec(0usize..12, 0..25)) {
        let alphabet = TxnEvent::alphabet();
        let mut t = txn();
        let mut deposited = false;
        for i in picks {
            let e = &alphabet[i];
            let enabled = enabled_events(t.state).contains(&e.kind());
            match advance(&t, e) {
                Ok(n) => {
                    prop_assert!(enabled);
                    deposited |= matches!(e, TxnEvent::Deposit { .. });
                    t = n;
                }
                Err(_) => prop_assert!(!enabled),
            }
            let places = [t.escrow.is_some(), t.provider_view().token.is_some(), t.refunded.is_some()];
            let held = places.iter().filter(|p| **p).count();
            prop_assert_eq!(held, usize::from(deposited));
            prop_assert!(t.release_count <= 1);
            if t.provider_view().token.is_some() {
                let before = t.history[t.history.iter().position(|s| *s == TxnState::PaymentReleased).unwrap() - 1];
                prop_assert!(matches!(before, TxnState::Accepted | TxnState::VerifiedGenuine));
            }
        }
    }
}

#[test]
fn terminal_states_accept_nothing() {
    for s in TxnState::ALL {
        assert_eq!(s.is_terminal(), enabled_events(s).is_empty());
    }
    assert!(TxnState::Closed.is_terminal());
    assert!(TxnState::Refunded.is_terminal());
    assert!(TxnState::EscalatedToHuman.is_terminal());
}

/// Exact evasion probability by enumerating genuine index and wrong answer.
fn exact_evasion(k: usize) -> f64 {
    let mut undetected = 0;
    for g in 0..k {
        for w in 0..k {
            let game = QuestionGame::new(k, g).unwrap();
            if question_game_round(&game, &Strategy::WrongOn(w)) == Outcome::CheatUndetected {
                undetected += 1;
            }
        }
    }
    undetected as f64 / (k * k) as f64
}

#[test]
fn evasion_estimate_converges_to_enumeration() {
    for k in 2..=6 {
        let exact = exact_evasion(k);
        assert!((exact - 1.0 / k as f64).abs() < 1e-12);
        let est = cheat_evasion_estimate(k, 50_000, k as u64, Execution::Parallel).unwrap();
        assert!((est - exact).abs() < 0.01, "k={k}: {est} vs {exact}");
        assert_eq!(est, cheat_evasion_estimate(k, 50_000, k as u64, Execution::Sequential).unwrap());
    }
    assert!(cheat_evasion_estimate(1, 10, 0, Execution::Sequential).is_err());
}
