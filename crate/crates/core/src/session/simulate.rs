//! Synthetic players for exercising the session engine at scale.

use serde::{Deserialize, Serialize};

use super::eventlog::{answer_events, SessionEvent};
use super::{Answer, SessionConfig, SessionError, SessionState, Status};
use crate::sampler::Rng;

/// A player who sees up to `capacity` dots exactly and guesses a uniform
/// digit beyond that. `None` means unlimited capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedPlayer {
    pub capacity: Option<u8>,
    pub reaction_ms: u64,
}

impl SimulatedPlayer {
    pub fn ideal(reaction_ms: u64) -> Self {
        Self {
            capacity: None,
            reaction_ms,
        }
    }

    pub fn answer(&self, numerosity: u8, rng: &mut Rng) -> Answer {
        match self.capacity {
            Some(cap) if numerosity > cap => Answer::Digit(rng.uniform_index(10) as u8),
            _ => Answer::Digit(numerosity),
        }
    }
}

pub const DEFAULT_MAX_TRIALS: u64 = 200_000;

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub session_id: String,
    pub state: SessionState,
    pub events: Vec<SessionEvent>,
}

/// Plays one session until it completes or `max_trials` answers were given,
/// in which case the session is ended.
pub fn simulate_session(
    session_id: String,
    config: SessionConfig,
    player: &SimulatedPlayer,
    max_trials: u64,
    rng: &mut Rng,
) -> Result<SimulatedSession, SessionError> {
    let mut state = SessionState::new(config);
    let mut events = vec![SessionEvent::Created {
        session_id: session_id.clone(),
        created_at_ms: 0,
        config,
    }];
    while state.status == Status::Active {
        if state.answers >= max_trials {
            state.end();
            events.push(SessionEvent::Ended);
            break;
        }
        let trial = state.next_trial(rng)?;
        let answer = player.answer(trial.numerosity, rng);
        events.push(SessionEvent::TrialIssued { trial });
        let verdict = state.submit_answer(answer, player.reaction_ms)?;
        events.extend(answer_events(answer, player.reaction_ms, &verdict));
    }
    Ok(SimulatedSession {
        session_id,
        state,
        events,
    })
}

/// Runs `players` sessions, session `k` on random stream `k` of `seed`.
pub fn simulate_many(
    players: usize,
    player: &SimulatedPlayer,
    config: SessionConfig,
    seed: u64,
    max_trials: u64,
) -> Result<Vec<SimulatedSession>, SessionError> {
    use rayon::prelude::*;
    (0..players)
        .into_par_iter()
        .map(|k| {
            let mut rng = Rng::new(seed, k as u64);
            simulate_session(format!("sim-{seed}-{k:05}"), config, player, max_trials, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{aggregate, FINAL_LEVEL};

    #[test]
    fn ideal_player_completes() {
        let mut rng = Rng::new(1, 0);
        let s = simulate_session(
            "a".into(),
            SessionConfig::default(),
            &SimulatedPlayer::ideal(400),
            DEFAULT_MAX_TRIALS,
            &mut rng,
        )
        .unwrap();
        assert_eq!(s.state.status, Status::Completed);
        assert_eq!(s.state.level, FINAL_LEVEL);
        assert_eq!(s.state.answers, 80);
        assert_eq!(s.state.clock_ms, 80 * 400);
    }

    #[test]
    fn slow_player_never_levels() {
        let player = SimulatedPlayer::ideal(5000);
        let mut rng = Rng::new(1, 0);
        let s = simulate_session("b".into(), SessionConfig::default(), &player, 50, &mut rng).unwrap();
        assert_eq!(s.state.status, Status::Ended);
        assert!(s.state.records.is_empty());
    }

    #[test]
    fn zero_players_aggregate_to_nothing() {
        let sims = simulate_many(0, &SimulatedPlayer::ideal(1), SessionConfig::default(), 1, 10).unwrap();
        assert!(aggregate(sims.iter().map(|s| s.state.records.as_slice())).is_empty());
    }

    #[test]
    fn simulation_is_deterministic() {
        let p = SimulatedPlayer {
            capacity: Some(4),
            reaction_ms: 700,
        };
        let a = simulate_many(4, &p, SessionConfig::default(), 9, 20_000).unwrap();
        let b = simulate_many(4, &p, SessionConfig::default(), 9, 20_000).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.events, y.events);
        }
    }
}
