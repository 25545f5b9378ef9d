//! CSV export of the replayed experiment and the readers the analysis CLI
//! uses to load it back.
//!
//! Schemas:
//! - `subjects.csv`: subject_id, treatment, loc_score
//! - `loc.csv`: subject_id, item_id, answer (`T`/`F`)
//! - `decisions.csv`: subject_id, session, period, day, action, exec_price
//! - `sessions.csv`: subject_id, session, mode, start_index, roi
//! - `survey.csv`: subject_id, q1..q7

use std::collections::HashMap;
use std::path::Path;

use ethgame_core::analysis::{SessionRow, SubjectRow, SurveyRow};
use ethgame_core::engine::SessionMode;
use ethgame_core::instruments::LikertResponse;
use serde::{Deserialize, Serialize};

use crate::event::{Event, EventKind};
use crate::record::ExperimentRecord;

pub const TABLE_NAMES: [&str; 5] = [
    "subjects.csv",
    "loc.csv",
    "decisions.csv",
    "sessions.csv",
    "survey.csv",
];

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{table}: {source}")]
    Csv { table: String, source: csv::Error },
    #[error("{table} row {row}: {reason}")]
    BadRow {
        table: String,
        row: usize,
        reason: String,
    },
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportTables {
    pub subjects: String,
    pub loc: String,
    pub decisions: String,
    pub sessions: String,
    pub survey: String,
}

impl ExportTables {
    pub fn named(&self) -> [(&'static str, &str); 5] {
        [
            (TABLE_NAMES[0], &self.subjects),
            (TABLE_NAMES[1], &self.loc),
            (TABLE_NAMES[2], &self.decisions),
            (TABLE_NAMES[3], &self.sessions),
            (TABLE_NAMES[4], &self.survey),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in self.named() {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct LocRow<'a> {
    subject_id: &'a str,
    item_id: usize,
    answer: &'static str,
}

#[derive(Serialize)]
struct DecisionRow<'a> {
    subject_id: &'a str,
    session: usize,
    period: usize,
    day: usize,
    action: String,
    exec_price: f64,
}

#[derive(Serialize, Deserialize)]
struct SurveyCsvRow {
    subject_id: String,
    q1: u8,
    q2: u8,
    q3: u8,
    q4: u8,
    q5: u8,
    q6: u8,
    q7: u8,
}

fn write_table<T: Serialize>(headers: &[&str], rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(headers).expect("write to memory");
    for row in rows {
        w.serialize(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is UTF-8")
}

fn survey_csv_row(id: &str, r: &LikertResponse) -> SurveyCsvRow {
    let [q1, q2, q3, q4, q5, q6, q7] = *r.answers();
    SurveyCsvRow {
        subject_id: id.to_owned(),
        q1,
        q2,
        q3,
        q4,
        q5,
        q6,
        q7,
    }
}

const SUBJECT_HEADERS: [&str; 3] = ["subject_id", "treatment", "loc_score"];
const SESSION_HEADERS: [&str; 5] = ["subject_id", "session", "mode", "start_index", "roi"];
const SURVEY_HEADERS: [&str; 8] = ["subject_id", "q1", "q2", "q3", "q4", "q5", "q6", "q7"];

/// Renders the five tables from a replayed record. Rows follow registration
/// order, then session, period and day.
pub fn export_tables(record: &ExperimentRecord) -> ExportTables {
    let subjects = record.subjects();
    let states = subjects.iter().map(|s| &s.state);

    let subject_rows = states.clone().map(|s| SubjectRow {
        subject_id: s.subject_id.clone(),
        treatment: s.treatment,
        loc_score: s.loc_score(),
    });

    let loc_rows = states.clone().flat_map(|s| {
        s.loc.iter().flat_map(move |loc| {
            loc.response
                .answers()
                .iter()
                .enumerate()
                .map(move |(i, &a)| LocRow {
                    subject_id: &s.subject_id,
                    item_id: i + 1,
                    answer: if a { "T" } else { "F" },
                })
        })
    });

    let decision_rows = states.clone().flat_map(|s| {
        s.sessions.iter().enumerate().flat_map(move |(n, session)| {
            session
                .trade_log
                .iter()
                .enumerate()
                .flat_map(move |(period, trades)| {
                    trades.iter().map(move |t| DecisionRow {
                        subject_id: &s.subject_id,
                        session: n + 1,
                        period,
                        day: t.day,
                        action: match session.mode {
                            SessionMode::Automated => {
                                format!("{:?}", session.period_choices[period])
                            }
                            SessionMode::Discretion => format!("{:?}", t.requested),
                        },
                        exec_price: t.price,
                    })
                })
        })
    });

    let session_rows = states.clone().flat_map(|s| {
        s.sessions
            .iter()
            .enumerate()
            .map(move |(n, session)| SessionRow {
                subject_id: s.subject_id.clone(),
                session: n as u8 + 1,
                mode: session.mode,
                start_index: session.start_index(),
                roi: session.roi(),
            })
    });

    let survey_rows = states.filter_map(|s| {
        s.survey_response
            .as_ref()
            .map(|r| survey_csv_row(&s.subject_id, r))
    });

    ExportTables {
        subjects: write_table(&SUBJECT_HEADERS, subject_rows),
        loc: write_table(&["subject_id", "item_id", "answer"], loc_rows),
        decisions: write_table(
            &[
                "subject_id",
                "session",
                "period",
                "day",
                "action",
                "exec_price",
            ],
            decision_rows,
        ),
        sessions: write_table(&SESSION_HEADERS, session_rows),
        survey: write_table(&SURVEY_HEADERS, survey_rows),
    }
}

/// The tables the studies consume.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyTables {
    pub subjects: Vec<SubjectRow>,
    pub sessions: Vec<SessionRow>,
    pub survey: Vec<SurveyRow>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(table: &str, text: &str) -> Result<Vec<T>, ExportError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| ExportError::Csv {
            table: table.to_owned(),
            source,
        })
}

impl StudyTables {
    pub fn from_csv(subjects: &str, sessions: &str, survey: &str) -> Result<Self, ExportError> {
        let survey = read_rows::<SurveyCsvRow>("survey.csv", survey)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                LikertResponse::new([r.q1, r.q2, r.q3, r.q4, r.q5, r.q6, r.q7])
                    .map(|response| SurveyRow {
                        subject_id: r.subject_id,
                        response,
                    })
                    .map_err(|e| ExportError::BadRow {
                        table: "survey.csv".into(),
                        row: i + 1,
                        reason: e.to_string(),
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            subjects: read_rows("subjects.csv", subjects)?,
            sessions: read_rows("sessions.csv", sessions)?,
            survey,
        })
    }

    /// Loads `subjects.csv`, `sessions.csv` and `survey.csv` from an export
    /// directory. A missing file reads as an empty table.
    pub fn from_dir(dir: &Path) -> Result<Self, ExportError> {
        let read = |name: &str| -> Result<String, ExportError> {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(ExportError::BadRow {
                    table: name.into(),
                    row: 0,
                    reason: e.to_string(),
                }),
            }
        };
        Self::from_csv(
            &read("subjects.csv")?,
            &read("sessions.csv")?,
            &read("survey.csv")?,
        )
    }

    /// Builds the study tables straight from events, without a price file.
    /// Only sequence numbers and subject references are checked; full
    /// validation is `replay`'s job.
    pub fn from_events(events: &[Event]) -> Result<Self, ExportError> {
        let mut tables = StudyTables::default();
        let mut subject_slot: HashMap<String, usize> = HashMap::new();
        let mut sessions_of: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in events.iter().enumerate() {
            let corrupt = |reason: String| ExportError::CorruptLog { seq: e.seq, reason };
            if e.seq != i as u64 + 1 {
                return Err(corrupt(format!("expected seq {}", i + 1)));
            }
            let Some(id) = e.subject_id.as_deref() else {
                continue;
            };
            if let EventKind::SubjectRegistered { .. } = e.kind {
                subject_slot.insert(id.to_owned(), tables.subjects.len());
                tables.subjects.push(SubjectRow {
                    subject_id: id.to_owned(),
                    treatment: None,
                    loc_score: None,
                });
                continue;
            }
            let slot = *subject_slot
                .get(id)
                .ok_or_else(|| corrupt(format!("unknown subject {id}")))?;
            match &e.kind {
                EventKind::TreatmentAssigned { treatment } => {
                    tables.subjects[slot].treatment = Some(*treatment)
                }
                EventKind::LocSubmitted { score, .. } => {
                    tables.subjects[slot].loc_score = Some(*score)
                }
                EventKind::SessionStarted {
                    session,
                    mode,
                    start_index,
                    ..
                } => {
                    sessions_of
                        .entry(id.to_owned())
                        .or_default()
                        .push(tables.sessions.len());
                    tables.sessions.push(SessionRow {
                        subject_id: id.to_owned(),
                        session: *session,
                        mode: *mode,
                        start_index: *start_index,
                        roi: None,
                    });
                }
                EventKind::SessionSettled { roi } => {
                    let row = sessions_of
                        .get(id)
                        .and_then(|v| v.last())
                        .ok_or_else(|| corrupt("settlement without a session".into()))?;
                    tables.sessions[*row].roi = Some(*roi);
                }
                EventKind::SurveySubmitted { answers } => tables.survey.push(SurveyRow {
                    subject_id: id.to_owned(),
                    response: *answers,
                }),
                _ => {}
            }
        }
        // Registration order, as in the export.
        let order: HashMap<&str, usize> = tables
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.subject_id.as_str(), i))
            .collect();
        let mut sessions = std::mem::take(&mut tables.sessions);
        sessions.sort_by_key(|r| (order[r.subject_id.as_str()], r.session));
        let mut survey = std::mem::take(&mut tables.survey);
        survey.sort_by_key(|r| order[r.subject_id.as_str()]);
        tables.sessions = sessions;
        tables.survey = survey;
        Ok(tables)
    }
}
