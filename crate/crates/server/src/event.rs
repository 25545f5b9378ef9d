//! Event log records. One JSON object per line:
//! `{"seq":1,"timestamp":"…","subject_id":"S0001","kind":"…","payload":{…}}`.

use chrono::{DateTime, Utc};
use ethgame_core::engine::{AiStrategy, ExperimentConfig, SessionMode, TradeAction, Treatment};
use ethgame_core::instruments::{LikertResponse, LocResponse};
use serde::{Deserialize, Serialize};

use crate::prices::PriceSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_id: Option<String>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventKind {
    ExperimentCreated {
        config: ExperimentConfig,
        price_source: PriceSource,
    },
    SubjectRegistered {
        name: String,
        token_sha256: String,
    },
    TreatmentAssigned {
        treatment: Treatment,
    },
    LocSubmitted {
        answers: LocResponse,
        score: u8,
    },
    SessionStarted {
        session: u8,
        mode: SessionMode,
        start_index: usize,
        period_starts: Vec<usize>,
    },
    StrategyChosen {
        period: usize,
        strategy: AiStrategy,
    },
    DecisionSubmitted {
        period: usize,
        day: usize,
        action: TradeAction,
    },
    SessionSettled {
        roi: f64,
    },
    ModeSelected {
        mode: SessionMode,
    },
    SurveySubmitted {
        answers: LikertResponse,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ExperimentCreated { .. } => "ExperimentCreated",
            EventKind::SubjectRegistered { .. } => "SubjectRegistered",
            EventKind::TreatmentAssigned { .. } => "TreatmentAssigned",
            EventKind::LocSubmitted { .. } => "LocSubmitted",
            EventKind::SessionStarted { .. } => "SessionStarted",
            EventKind::StrategyChosen { .. } => "StrategyChosen",
            EventKind::DecisionSubmitted { .. } => "DecisionSubmitted",
            EventKind::SessionSettled { .. } => "SessionSettled",
            EventKind::ModeSelected { .. } => "ModeSelected",
            EventKind::SurveySubmitted { .. } => "SurveySubmitted",
        }
    }
}
