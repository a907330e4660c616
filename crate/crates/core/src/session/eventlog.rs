//! Append-only JSON-lines session logs and their replay.
//!
//! Each line is one [`SessionEvent`]. Replaying the events of a log through
//! a fresh [`SessionState`] reproduces the state the log was written from.
//! A torn final line (no trailing newline) is treated as never written.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Answer, LevelChangeRecord, SessionConfig, SessionError, SessionState, Trial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        created_at_ms: u64,
        config: SessionConfig,
    },
    TrialIssued {
        trial: Trial,
    },
    Answered {
        answer: Answer,
        elapsed_ms: u64,
        correct: bool,
    },
    LevelChanged {
        record: LevelChangeRecord,
    },
    Ended,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("event {index}: {source}")]
    Session {
        index: usize,
        source: SessionError,
    },
    #[error("event {index}: {detail}")]
    Inconsistent { index: usize, detail: String },
    #[error("log does not start with a created event")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_line(event: &SessionEvent) -> String {
    let mut line = serde_json::to_string(event).expect("session events always serialize");
    line.push('\n');
    line
}

/// Appends events and flushes them to disk before returning.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, event: &SessionEvent) -> io::Result<()> {
        self.file.write_all(encode_line(event).as_bytes())?;
        self.file.sync_data()
    }

    pub fn append_all<'a>(&mut self, events: impl IntoIterator<Item = &'a SessionEvent>) -> io::Result<()> {
        let mut buf = String::new();
        for e in events {
            buf.push_str(&encode_line(e));
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_data()
    }
}

pub fn parse_events(reader: impl BufRead) -> Result<Vec<SessionEvent>, LogError> {
    let mut out = Vec::new();
    let mut reader = reader;
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        number += 1;
        if !line.ends_with('\n') {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let event = serde_json::from_str(text).map_err(|source| LogError::Parse {
            line: number,
            source,
        })?;
        out.push(event);
    }
    Ok(out)
}

pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>, LogError> {
    parse_events(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayedSession {
    pub session_id: String,
    pub created_at_ms: u64,
    pub state: SessionState,
}

/// Rebuilds a session from its events, checking every logged verdict and
/// level change against the recomputed ones.
pub fn replay(events: &[SessionEvent]) -> Result<ReplayedSession, LogError> {
    let Some(SessionEvent::Created {
        session_id,
        created_at_ms,
        config,
    }) = events.first()
    else {
        return Err(LogError::MissingHeader);
    };
    let mut state = SessionState::new(*config);
    let mut pending_record: Option<LevelChangeRecord> = None;
    for (index, event) in events.iter().enumerate().skip(1) {
        let session = |source| LogError::Session { index, source };
        match event {
            SessionEvent::Created { .. } => {
                return Err(LogError::Inconsistent {
                    index,
                    detail: "second created event".into(),
                })
            }
            SessionEvent::TrialIssued { trial } => state.issue(trial.clone()).map_err(session)?,
            SessionEvent::Answered {
                answer,
                elapsed_ms,
                correct,
            } => {
                if let Some(r) = pending_record.take() {
                    return Err(LogError::Inconsistent {
                        index,
                        detail: format!("level change at level {} was not logged", r.i),
                    });
                }
                let verdict = state.submit_answer(*answer, *elapsed_ms).map_err(session)?;
                if verdict.correct != *correct {
                    return Err(LogError::Inconsistent {
                        index,
                        detail: format!("logged correct={correct}, replay says {}", verdict.correct),
                    });
                }
                pending_record = verdict.record;
            }
            SessionEvent::LevelChanged { record } => {
                if pending_record.take().as_ref() != Some(record) {
                    return Err(LogError::Inconsistent {
                        index,
                        detail: format!("unexpected level change record {record:?}"),
                    });
                }
            }
            SessionEvent::Ended => state.end(),
        }
    }
    Ok(ReplayedSession {
        session_id: session_id.clone(),
        created_at_ms: *created_at_ms,
        state,
    })
}

pub fn replay_file(path: &Path) -> Result<ReplayedSession, LogError> {
    replay(&read_events(path)?)
}

/// Replays every `*.jsonl` log in `dir`, sorted by file name.
pub fn replay_dir(dir: &Path) -> Result<Vec<ReplayedSession>, LogError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    paths.sort();
    paths.iter().map(|p| replay_file(p)).collect()
}

/// Events for one answer, in log order.
pub fn answer_events(answer: Answer, elapsed_ms: u64, verdict: &super::Verdict) -> Vec<SessionEvent> {
    let mut out = vec![SessionEvent::Answered {
        answer,
        elapsed_ms,
        correct: verdict.correct,
    }];
    if let Some(record) = verdict.record {
        out.push(SessionEvent::LevelChanged { record });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Rng;

    fn scripted() -> (SessionState, Vec<SessionEvent>) {
        let config = SessionConfig::default();
        let mut state = SessionState::new(config);
        let mut events = vec![SessionEvent::Created {
            session_id: "s1".into(),
            created_at_ms: 42,
            config,
        }];
        let mut rng = Rng::new(3, 0);
        for k in 0..40 {
            let trial = state.next_trial(&mut rng).unwrap();
            events.push(SessionEvent::TrialIssued { trial: trial.clone() });
            let answer = if k % 13 == 12 {
                Answer::Timeout
            } else {
                Answer::Digit(trial.numerosity)
            };
            let elapsed = 300 + k as u64 * 7;
            let verdict = state.submit_answer(answer, elapsed).unwrap();
            events.extend(answer_events(answer, elapsed, &verdict));
        }
        (state, events)
    }

    #[test]
    fn replay_reconstructs_state() {
        let (state, events) = scripted();
        let text: String = events.iter().map(encode_line).collect();
        let parsed = parse_events(text.as_bytes()).unwrap();
        assert_eq!(parsed, events);
        let replayed = replay(&parsed).unwrap();
        assert_eq!(replayed.state, state);
        assert_eq!(replayed.session_id, "s1");
    }

    #[test]
    fn torn_tail_is_ignored() {
        let (_, events) = scripted();
        let mut text: String = events.iter().map(encode_line).collect();
        text.push_str("{\"event\":\"tri");
        assert_eq!(parse_events(text.as_bytes()).unwrap().len(), events.len());
    }

    #[test]
    fn tampered_verdict_is_rejected() {
        let (_, mut events) = scripted();
        let at = events
            .iter()
            .position(|e| matches!(e, SessionEvent::Answered { .. }))
            .unwrap();
        if let SessionEvent::Answered { correct, .. } = &mut events[at] {
            *correct = !*correct;
        }
        assert!(matches!(replay(&events), Err(LogError::Inconsistent { .. })));
        assert!(matches!(replay(&events[1..]), Err(LogError::MissingHeader)));
    }

    #[test]
    fn writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (state, events) = scripted();
        let path = dir.path().join("logs").join("s1.jsonl");
        let mut w = LogWriter::create(&path).unwrap();
        w.append(&events[0]).unwrap();
        w.append_all(&events[1..]).unwrap();
        assert_eq!(replay_file(&path).unwrap().state, state);
        assert_eq!(replay_dir(path.parent().unwrap()).unwrap().len(), 1);
    }
}
