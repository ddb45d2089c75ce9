//! The known-answer question game. The client asks `k` questions and knows
//! the answers to all but one, so a provider that answers one question
//! wrongly is caught unless it happened to pick the genuine one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::Execution;

use super::TrustError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionGame {
    k: usize,
    /// `(position, answer)` for the `k - 1` questions with known answers.
    known_answers: Vec<(usize, i64)>,
    genuine_index: usize,
}

impl QuestionGame {
    pub fn new(k: usize, genuine_index: usize) -> Result<Self, TrustError> {
        if k < 2 || genuine_index >= k {
            return Err(TrustError::InvalidGame { k, index: genuine_index });
        }
        let known_answers = (0..k).filter(|&i| i != genuine_index).map(|i| (i, i as i64 * 7 + 3)).collect();
        Ok(QuestionGame {
            k,
            known_answers,
            genuine_index,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn genuine_index(&self) -> usize {
        self.genuine_index
    }

    pub fn known_answers(&self) -> &[(usize, i64)] {
        &self.known_answers
    }

    pub fn is_known(&self, i: usize) -> bool {
        self.known_answers.iter().any(|(p, _)| *p == i)
    }
}

/// How the provider answers the `k` questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Honest,
    /// Answers only question `i` wrongly.
    WrongOn(usize),
    /// `correct[i]` says whether question `i` is answered correctly.
    Answers(Vec<bool>),
}

impl Strategy {
    fn correct(&self, i: usize) -> bool {
        match self {
            Strategy::Honest => true,
            Strategy::WrongOn(w) => *w != i,
            Strategy::Answers(c) => c.get(i).copied().unwrap_or(true),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Honest,
    CheatUndetected,
    CheatDetected,
}

pub fn question_game_round(g: &QuestionGame, strategy: &Strategy) -> Outcome {
    if (0..g.k).any(|i| g.is_known(i) && !strategy.correct(i)) {
        Outcome::CheatDetected
    } else if !strategy.correct(g.genuine_index) {
        Outcome::CheatUndetected
    } else {
        Outcome::Honest
    }
}

const CHUNK: usize = 8192;

/// Fraction of rounds in which a provider answering one uniformly chosen
/// question wrongly goes undetected. Trials run in fixed-size chunks, each
/// with its own ChaCha stream, so the estimate depends only on `seed` and
/// not on the execution mode.
pub fn cheat_evasion_estimate(k: usize, trials: usize, seed: u64, exec: Execution) -> Result<f64, TrustError> {
    if k < 2 || trials < 1 {
        return Err(TrustError::InvalidGame { k, index: 0 });
    }
    let chunks = trials.div_ceil(CHUNK);
    let counts = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK.min(trials - c * CHUNK);
        let mut undetected = 0usize;
        for _ in 0..n {
            let g = QuestionGame::new(k, rng.random_range(0..k)).expect("k >= 2");
            let wrong = Strategy::WrongOn(rng.random_range(0..k));
            if question_game_round(&g, &wrong) == Outcome::CheatUndetected {
                undetected += 1;
            }
        }
        undetected
    });
    Ok(counts.iter().sum::<usize>() as f64 / trials as f64)
}
