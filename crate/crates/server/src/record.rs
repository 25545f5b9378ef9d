//! The experiment state folded from the event log.

use std::collections::HashMap;

use ethgame_core::engine::{EngineError, ExperimentConfig, SubjectState, Transition};
use ethgame_core::pricedata::PriceSeries;

use crate::event::{Event, EventKind};
use crate::prices::{LoadedPrices, PriceSource};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApplyError {
    #[error("no experiment has been created")]
    NoExperiment,
    #[error("experiment already created")]
    ExperimentExists,
    #[error("event {0} needs a subject_id")]
    MissingSubject(&'static str),
    #[error("event {0} must not carry a subject_id")]
    UnexpectedSubject(&'static str),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("subject {0} already registered")]
    DuplicateSubject(String),
    #[error("recorded {field} does not match the engine ({recorded} vs {computed})")]
    Mismatch {
        field: &'static str,
        recorded: String,
        computed: String,
    },
    #[error("price file hash {found} differs from the one recorded at creation ({recorded})")]
    PriceHashMismatch { recorded: String, found: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub price_source: PriceSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEntry {
    pub name: String,
    pub token_sha256: String,
    pub state: SubjectState,
}

/// Every field is a pure function of the event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentRecord {
    pub experiment: Option<Experiment>,
    subjects: Vec<SubjectEntry>,
    index: HashMap<String, usize>,
}

/// A validated change, ready to be committed once the event is durable.
#[derive(Debug)]
pub enum Staged {
    Experiment(Experiment),
    Register(SubjectEntry),
    Subject(usize, SubjectState),
}

impl ExperimentRecord {
    pub fn subjects(&self) -> &[SubjectEntry] {
        &self.subjects
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectEntry> {
        self.index.get(id).map(|&i| &self.subjects[i])
    }

    pub fn config(&self) -> Option<&ExperimentConfig> {
        self.experiment.as_ref().map(|e| &e.config)
    }

    /// Checks `kind` against the current state without changing it.
    pub fn stage(
        &self,
        subject_id: Option<&str>,
        kind: &EventKind,
        series: &PriceSeries,
    ) -> Result<Staged, ApplyError> {
        let name = kind.name();
        if let EventKind::ExperimentCreated {
            config,
            price_source,
        } = kind
        {
            if subject_id.is_some() {
                return Err(ApplyError::UnexpectedSubject(name));
            }
            if self.experiment.is_some() {
                return Err(ApplyError::ExperimentExists);
            }
            config.validate()?;
            return Ok(Staged::Experiment(Experiment {
                config: config.clone(),
                price_source: price_source.clone(),
            }));
        }

        let cfg = self.config().ok_or(ApplyError::NoExperiment)?;
        let id = subject_id.ok_or(ApplyError::MissingSubject(name))?;

        if let EventKind::SubjectRegistered { name, token_sha256 } = kind {
            if self.index.contains_key(id) {
                return Err(ApplyError::DuplicateSubject(id.to_owned()));
            }
            return Ok(Staged::Register(SubjectEntry {
                name: name.clone(),
                token_sha256: token_sha256.clone(),
                state: SubjectState::new(id),
            }));
        }

        let slot = *self
            .index
            .get(id)
            .ok_or_else(|| ApplyError::UnknownSubject(id.to_owned()))?;
        let mut state = self.subjects[slot].state.clone();
        let transition = match kind {
            EventKind::TreatmentAssigned { treatment } => Transition::AssignTreatment(*treatment),
            EventKind::LocSubmitted { answers, .. } => Transition::SubmitLoc(*answers),
            EventKind::SessionStarted { period_starts, .. } => Transition::StartSession {
                period_starts: period_starts.clone(),
            },
            EventKind::StrategyChosen { period, strategy } => Transition::ChooseStrategy {
                period: *period,
                strategy: *strategy,
            },
            EventKind::DecisionSubmitted {
                period,
                day,
                action,
            } => Transition::SubmitDecision {
                period: *period,
                day: *day,
                action: *action,
            },
            EventKind::SessionSettled { .. } => Transition::Settle,
            EventKind::ModeSelected { mode } => Transition::SelectMode(*mode),
            EventKind::SurveySubmitted { answers } => Transition::SubmitSurvey(*answers),
            EventKind::ExperimentCreated { .. } | EventKind::SubjectRegistered { .. } => {
                unreachable!("handled above")
            }
        };
        state.apply(&transition, series, cfg)?;
        check_recorded(kind, &state)?;
        Ok(Staged::Subject(slot, state))
    }

    pub fn commit(&mut self, staged: Staged) {
        match staged {
            Staged::Experiment(e) => self.experiment = Some(e),
            Staged::Register(entry) => {
                self.index
                    .insert(entry.state.subject_id.clone(), self.subjects.len());
                self.subjects.push(entry);
            }
            Staged::Subject(slot, state) => self.subjects[slot].state = state,
        }
    }

    pub fn apply(&mut self, event: &Event, series: &PriceSeries) -> Result<(), ApplyError> {
        let staged = self.stage(event.subject_id.as_deref(), &event.kind, series)?;
        self.commit(staged);
        Ok(())
    }
}

/// Values carried in a payload that the engine also derives must agree.
fn check_recorded(kind: &EventKind, state: &SubjectState) -> Result<(), ApplyError> {
    let mismatch = |field, recorded: String, computed: String| {
        Err(ApplyError::Mismatch {
            field,
            recorded,
            computed,
        })
    };
    match kind {
        EventKind::LocSubmitted { score, .. } => {
            let computed = state.loc_score().unwrap_or_default();
            if *score != computed {
                return mismatch("score", score.to_string(), computed.to_string());
            }
        }
        EventKind::SessionStarted {
            session,
            mode,
            start_index,
            period_starts,
        } => {
            let s = state.sessions.last().expect("session just started");
            if usize::from(*session) != state.sessions.len() {
                return mismatch(
                    "session",
                    session.to_string(),
                    state.sessions.len().to_string(),
                );
            }
            if *mode != s.mode {
                return mismatch("mode", format!("{mode:?}"), format!("{:?}", s.mode));
            }
            if period_starts.first() != Some(start_index) {
                return mismatch(
                    "start_index",
                    start_index.to_string(),
                    format!("{period_starts:?}"),
                );
            }
        }
        EventKind::SessionSettled { roi } => {
            let computed = state
                .sessions
                .iter()
                .rev()
                .find_map(|s| s.roi())
                .expect("session just settled");
            if roi.to_bits() != computed.to_bits() {
                return mismatch("roi", roi.to_string(), computed.to_string());
            }
        }
        _ => {}
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

/// Folds a log through the engine. Recorded draws are used as-is.
pub fn replay(events: &[Event], prices: &LoadedPrices) -> Result<ExperimentRecord, ReplayError> {
    let mut record = ExperimentRecord::default();
    for (i, event) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        let corrupt = |reason: String| ReplayError::CorruptLog {
            seq: event.seq,
            reason,
        };
        if event.seq != expected {
            return Err(corrupt(format!("expected seq {expected}")));
        }
        if let EventKind::ExperimentCreated { price_source, .. } = &event.kind {
            if price_source.sha256 != prices.source.sha256 {
                return Err(corrupt(
                    ApplyError::PriceHashMismatch {
                        recorded: price_source.sha256.clone(),
                        found: prices.source.sha256.clone(),
                    }
                    .to_string(),
                ));
            }
        }
        record
            .apply(event, &prices.series)
            .map_err(|e| corrupt(e.to_string()))?;
    }
    Ok(record)
}
