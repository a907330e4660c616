//! The human subitizing test: trials, the level/streak state machine,
//! level-change records, the heuristic score and cross-session aggregation.
//!
//! Play starts at level 3. At level `l` a trial shows `0..l` dots; ten
//! consecutive correct answers complete the level, emit a record and move
//! the player up. A wrong or late answer clears the streak. Completing
//! level 10 ends the run.

pub mod eventlog;
pub mod simulate;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::Rng;

pub const START_LEVEL: u8 = 3;
pub const FINAL_LEVEL: u8 = 10;
pub const STREAK_LENGTH: usize = 10;
pub const DEFAULT_ANSWER_WINDOW_MS: u64 = 3000;
/// Dot radius relative to the disc radius.
pub const DOT_RADIUS: f64 = 1.0 / 20.0;
/// Minimum distance between dot centers: two diameters.
pub const MIN_SEPARATION: f64 = 4.0 * DOT_RADIUS;
/// Clock granularity: every answer advances the session clock by at least this.
pub const MIN_ANSWER_MS: u64 = 1;

const PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("session is not active")]
    NotActive,
    #[error("no trial is outstanding")]
    NoOutstandingTrial,
    #[error("a trial is already outstanding")]
    TrialOutstanding,
    #[error("answer {0} is not a single digit")]
    MalformedDigit(i64),
    #[error("trial with {numerosity} dots is invalid at level {level}")]
    InvalidTrial { numerosity: u8, level: u8 },
    #[error("level theoretical mean needs a label of at least 4, got {0}")]
    LabelTooSmall(u32),
    #[error("could not place {0} separated dots in the disc")]
    Placement(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub answer_window_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            answer_window_ms: DEFAULT_ANSWER_WINDOW_MS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Completed,
    Ended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub numerosity: u8,
    /// Dot centers inside the unit disc, as (x, y).
    pub positions: Vec<[f64; 2]>,
    pub dot_radius: f64,
    pub deadline_ms: u64,
}

impl Trial {
    /// Draws a trial at `level`: a uniform count in `0..level` and
    /// rejection-sampled, pairwise separated positions.
    pub fn generate(level: u8, deadline_ms: u64, rng: &mut Rng) -> Result<Self, SessionError> {
        let numerosity = rng.uniform_index(level as usize) as u8;
        let positions = place_dots(numerosity, rng)?;
        Ok(Self {
            numerosity,
            positions,
            dot_radius: DOT_RADIUS,
            deadline_ms,
        })
    }
}

fn place_dots(n: u8, rng: &mut Rng) -> Result<Vec<[f64; 2]>, SessionError> {
    let reach = 1.0 - DOT_RADIUS;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n as usize);
    let mut attempts = 0;
    while out.len() < n as usize {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(SessionError::Placement(n));
        }
        let x = (2.0 * rng.unit() - 1.0) * reach;
        let y = (2.0 * rng.unit() - 1.0) * reach;
        if x * x + y * y > reach * reach {
            continue;
        }
        let clear = out.iter().all(|p| {
            let (dx, dy) = (p[0] - x, p[1] - y);
            dx * dx + dy * dy >= MIN_SEPARATION * MIN_SEPARATION
        });
        if clear {
            out.push([x, y]);
        }
    }
    Ok(out)
}

/// Emitted when a streak of ten completes a level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelChangeRecord {
    /// Level at which the streak completed.
    pub i: u8,
    /// Sum of the ten streak numerosities; the mean is `l_sum / 10`.
    pub l_sum: u32,
    pub l_i: f64,
    pub l_int: u32,
    /// Session clock at the change, in milliseconds.
    pub s_i: u64,
}

impl LevelChangeRecord {
    pub fn new(i: u8, l_sum: u32, s_i: u64) -> Self {
        Self {
            i,
            l_sum,
            l_i: l_sum as f64 / STREAK_LENGTH as f64,
            l_int: l_sum / STREAK_LENGTH as u32,
            s_i,
        }
    }

    /// Level label shown to the player: the level that was unlocked.
    pub fn label(&self) -> u32 {
        self.i as u32 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "digit")]
pub enum Answer {
    Digit(u8),
    Timeout,
}

impl Answer {
    pub fn digit(value: i64) -> Result<Self, SessionError> {
        u8::try_from(value)
            .ok()
            .filter(|&d| d <= 9)
            .map(Answer::Digit)
            .ok_or(SessionError::MalformedDigit(value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub late: bool,
    pub numerosity: u8,
    pub streak: usize,
    pub level: u8,
    pub record: Option<LevelChangeRecord>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub config: SessionConfig,
    pub level: u8,
    pub streak: usize,
    pub clock_ms: u64,
    /// Numerosities of the current streak.
    pub draw_log: Vec<u8>,
    pub records: Vec<LevelChangeRecord>,
    pub status: Status,
    pub outstanding: Option<Trial>,
    pub answers: u64,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            level: START_LEVEL,
            streak: 0,
            clock_ms: 0,
            draw_log: Vec::with_capacity(STREAK_LENGTH),
            records: Vec::new(),
            status: Status::Active,
            outstanding: None,
            answers: 0,
        }
    }

    pub fn next_trial(&mut self, rng: &mut Rng) -> Result<Trial, SessionError> {
        self.ensure_ready()?;
        let trial = Trial::generate(self.level, self.config.answer_window_ms, rng)?;
        self.issue(trial.clone())?;
        Ok(trial)
    }

    fn ensure_ready(&self) -> Result<(), SessionError> {
        if self.status != Status::Active {
            return Err(SessionError::NotActive);
        }
        if self.outstanding.is_some() {
            return Err(SessionError::TrialOutstanding);
        }
        Ok(())
    }

    /// Installs an externally produced trial (used when replaying logs).
    pub fn issue(&mut self, trial: Trial) -> Result<(), SessionError> {
        self.ensure_ready()?;
        if trial.numerosity >= self.level || trial.positions.len() != trial.numerosity as usize {
            return Err(SessionError::InvalidTrial {
                numerosity: trial.numerosity,
                level: self.level,
            });
        }
        self.outstanding = Some(trial);
        Ok(())
    }

    pub fn submit_answer(&mut self, answer: Answer, elapsed_ms: u64) -> Result<Verdict, SessionError> {
        if self.status != Status::Active {
            return Err(SessionError::NotActive);
        }
        let trial = self.outstanding.take().ok_or(SessionError::NoOutstandingTrial)?;
        self.answers += 1;
        self.clock_ms += elapsed_ms.max(MIN_ANSWER_MS);
        let late = elapsed_ms > trial.deadline_ms;
        let correct = !late && answer == Answer::Digit(trial.numerosity);

        let mut record = None;
        if correct {
            self.streak += 1;
            self.draw_log.push(trial.numerosity);
            if self.streak == STREAK_LENGTH {
                let sum = self.draw_log.iter().map(|&n| n as u32).sum();
                let r = LevelChangeRecord::new(self.level, sum, self.clock_ms);
                self.records.push(r);
                record = Some(r);
                self.streak = 0;
                self.draw_log.clear();
                if self.level == FINAL_LEVEL {
                    self.status = Status::Completed;
                } else {
                    self.level += 1;
                }
            }
        } else {
            self.streak = 0;
            self.draw_log.clear();
        }
        Ok(Verdict {
            correct,
            late,
            numerosity: trial.numerosity,
            streak: self.streak,
            level: self.level,
            record,
            status: self.status,
        })
    }

    pub fn end(&mut self) {
        if self.status == Status::Active {
            self.status = Status::Ended;
            self.outstanding = None;
        }
    }

    pub fn score(&self) -> f64 {
        heuristic_score(&self.records)
    }

    /// The millisecond row of the status display.
    pub fn millis_row(&self) -> String {
        let parts: Vec<String> = self.records.iter().map(|r| r.s_i.to_string()).collect();
        parts.join(" ")
    }

    /// The level row of the status display, e.g.
    /// `(9) 4/0 5/1 6/2 7/2 8/2 9/2 0/0 <0.14078243>`.
    pub fn level_row(&self) -> String {
        display_row(self.level, &self.records)
    }
}

/// Formats the level row for `level` and `records`. Labels up to 10 that
/// have not been unlocked yet show as `0/0`.
pub fn display_row(level: u8, records: &[LevelChangeRecord]) -> String {
    let by_label: BTreeMap<u32, u32> = records.iter().map(|r| (r.label(), r.l_int)).collect();
    let last = by_label.keys().max().copied().unwrap_or(0).max(FINAL_LEVEL as u32);
    let mut out = format!("({level})");
    for label in START_LEVEL as u32 + 1..=last {
        match by_label.get(&label) {
            Some(l_int) => write!(out, " {label}/{l_int}").unwrap(),
            None => out.push_str(" 0/0"),
        }
    }
    write!(out, " <{:.8}>", heuristic_score(records)).unwrap();
    out
}

/// Sum over records of `(l_i + 1)(i + 1) / s_i`, with `s_i` in milliseconds.
pub fn heuristic_score(records: &[LevelChangeRecord]) -> f64 {
    records
        .iter()
        .map(|r| (r.l_i + 1.0) * (r.i as f64 + 1.0) / r.s_i as f64)
        .fold(0.0, |acc, x| acc + x)
}

/// Expected streak mean `(L - 2) / 2` for level label `L`.
pub fn theoretical_mean(label: u32) -> Result<f64, SessionError> {
    if label < 4 {
        return Err(SessionError::LabelTooSmall(label));
    }
    Ok((label as f64 - 2.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub level_label: u32,
    /// Mean over sessions of the integer part of the streak mean.
    pub measured: f64,
    /// Mean over sessions of the untruncated streak mean.
    pub measured_exact: f64,
    pub theoretical: f64,
    pub n: usize,
}

/// Per level label, averages the records of every session that reached it.
pub fn aggregate<'a, I>(sessions: I) -> Vec<AggregateRow>
where
    I: IntoIterator<Item = &'a [LevelChangeRecord]>,
{
    let mut acc: BTreeMap<u32, (u64, u64, usize)> = BTreeMap::new();
    for records in sessions {
        for r in records {
            let e = acc.entry(r.label()).or_default();
            e.0 += r.l_int as u64;
            e.1 += r.l_sum as u64;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(label, (ints, sums, n))| AggregateRow {
            level_label: label,
            measured: ints as f64 / n as f64,
            measured_exact: sums as f64 / (n * STREAK_LENGTH) as f64,
            theoretical: theoretical_mean(label).expect("labels start at 4"),
            n,
        })
        .collect()
}

/// CSV with columns `level_label,measured,theoretical,n`.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("level_label,measured,theoretical,n\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.level_label, r.measured, r.theoretical, r.n).unwrap();
    }
    out
}
