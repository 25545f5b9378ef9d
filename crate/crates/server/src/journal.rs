//! Append-only JSON Lines event log plus the record replayed from it.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::Utc;
use ethgame_core::engine::{assign_treatment, draw_period_starts, SystemStep, Treatment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::event::{Event, EventKind};
use crate::prices::LoadedPrices;
use crate::record::{replay, ApplyError, ExperimentRecord, ReplayError};

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("state conflict: {0}")]
    StateConflict(#[from] ApplyError),
    #[error("log IO failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("corrupt log line {line}: {reason}")]
    Unparseable { line: usize, reason: String },
}

/// Reads every event from a JSON Lines file. Blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<Event>, JournalError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    parse_log(BufReader::new(file))
}

pub fn parse_log(reader: impl BufRead) -> Result<Vec<Event>, JournalError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| JournalError::Unparseable {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn serialize_log(events: &[Event]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
        .collect()
}

pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

pub struct Journal {
    file: Option<File>,
    events: Vec<Event>,
    record: ExperimentRecord,
    prices: Arc<LoadedPrices>,
}

impl Journal {
    /// Opens (or creates) a log file and replays it.
    pub fn open(path: &Path, prices: Arc<LoadedPrices>) -> Result<Self, JournalError> {
        let events = read_log(path)?;
        let record = replay(&events, &prices)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file: Some(file),
            events,
            record,
            prices,
        })
    }

    /// A journal that keeps events in memory only.
    pub fn in_memory(prices: Arc<LoadedPrices>) -> Self {
        Self {
            file: None,
            events: Vec::new(),
            record: ExperimentRecord::default(),
            prices,
        }
    }

    pub fn from_events(
        events: Vec<Event>,
        prices: Arc<LoadedPrices>,
    ) -> Result<Self, JournalError> {
        let record = replay(&events, &prices)?;
        Ok(Self {
            file: None,
            events,
            record,
            prices,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn record(&self) -> &ExperimentRecord {
        &self.record
    }

    pub fn prices(&self) -> &LoadedPrices {
        &self.prices
    }

    /// Validates `kind` against the replayed state, makes it durable, then
    /// applies it. On error nothing is written and the state is unchanged.
    pub fn append(
        &mut self,
        subject_id: Option<&str>,
        kind: EventKind,
    ) -> Result<u64, JournalError> {
        let staged = self.record.stage(subject_id, &kind, &self.prices.series)?;
        let event = Event {
            seq: self.events.len() as u64 + 1,
            timestamp: Utc::now(),
            subject_id: subject_id.map(str::to_owned),
            kind,
        };
        if let Some(file) = self.file.as_mut() {
            let mut line = serde_json::to_vec(&event).expect("events serialize");
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.record.commit(staged);
        let seq = event.seq;
        self.events.push(event);
        Ok(seq)
    }

    /// Generator for the draw recorded in the next event.
    fn next_rng(&self) -> ChaCha8Rng {
        let seed = self.record.config().map(|c| c.seed).unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.events.len() as u64 + 1);
        rng
    }

    /// Appends the system events a subject is waiting on: treatment
    /// assignment, session starts and settlements.
    pub fn advance(&mut self, subject_id: &str) -> Result<(), JournalError> {
        loop {
            let entry = self
                .record
                .subject(subject_id)
                .ok_or_else(|| ApplyError::UnknownSubject(subject_id.to_owned()))?;
            let cfg = self.record.config().ok_or(ApplyError::NoExperiment)?;
            let kind = match entry.state.pending_step() {
                None => return Ok(()),
                Some(SystemStep::AssignTreatment) => EventKind::TreatmentAssigned {
                    treatment: assign_treatment(&mut self.next_rng()),
                },
                Some(SystemStep::StartSession(mode)) => {
                    let period_starts =
                        draw_period_starts(&self.prices.series, cfg, &mut self.next_rng())
                            .map_err(ApplyError::from)?;
                    EventKind::SessionStarted {
                        session: entry.state.sessions.len() as u8 + 1,
                        mode,
                        start_index: period_starts[0],
                        period_starts,
                    }
                }
                Some(SystemStep::Settle) => {
                    let mut session = entry
                        .state
                        .active_session()
                        .cloned()
                        .expect("settle is pending on an active session");
                    let roi = session
                        .settle(&self.prices.series, cfg)
                        .map_err(ApplyError::from)?;
                    EventKind::SessionSettled { roi }
                }
            };
            self.append(Some(subject_id), kind)?;
        }
    }

    pub fn advance_all(&mut self) -> Result<(), JournalError> {
        let ids: Vec<String> = self
            .record
            .subjects()
            .iter()
            .map(|s| s.state.subject_id.clone())
            .collect();
        for id in ids {
            self.advance(&id)?;
        }
        Ok(())
    }

    /// Registers a subject and assigns a treatment. Returns the new id and
    /// the treatment.
    pub fn register(
        &mut self,
        name: &str,
        token: &str,
    ) -> Result<(String, Treatment), JournalError> {
        let id = format!("S{:04}", self.record.subjects().len() + 1);
        self.append(
            Some(&id),
            EventKind::SubjectRegistered {
                name: name.to_owned(),
                token_sha256: token_digest(token),
            },
        )?;
        self.advance(&id)?;
        let treatment = self
            .record
            .subject(&id)
            .and_then(|s| s.state.treatment)
            .expect("treatment assigned on registration");
        Ok((id, treatment))
    }
}
