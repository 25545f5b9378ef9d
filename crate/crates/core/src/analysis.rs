//! The three post-game studies and the survey summary.
//!
//! Inputs are the flat rows of the exported tables. Only sessions 1 and 2
//! feed the performance and rationality comparisons; session 3's mode is the
//! subject's selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{SessionMode, Treatment};
use crate::instruments::{aggregate_likert, InstrumentError, LikertResponse, QuestionShare};
use crate::stats::{self, SignedRank};

/// Non-zero pairs required before a signed-rank p-value is reported.
pub const MIN_PAIRS_FOR_TEST: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no subject has settled Automated and Discretion sessions")]
    NoPairedSubjects,
    #[error("no subject has a selection and a strict ROI ranking of the first two sessions")]
    NoEligibleSubjects,
    #[error("correlation needs variation in both scores and selections")]
    ZeroVariance,
    #[error("need at least {required} subjects, have {got}")]
    InsufficientN { required: usize, got: usize },
    #[error("no survey responses")]
    EmptyResponseSet,
}

impl From<InstrumentError> for AnalysisError {
    fn from(_: InstrumentError) -> Self {
        AnalysisError::EmptyResponseSet
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject_id: String,
    pub treatment: Option<Treatment>,
    pub loc_score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub subject_id: String,
    /// 1, 2 or 3.
    pub session: u8,
    pub mode: SessionMode,
    pub start_index: usize,
    /// Absent until the session is settled.
    pub roi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyRow {
    pub subject_id: String,
    pub response: LikertResponse,
}

#[derive(Debug, Default)]
struct SubjectSessions {
    automated: Option<f64>,
    discretion: Option<f64>,
    selected: Option<SessionMode>,
}

fn by_subject(sessions: &[SessionRow]) -> BTreeMap<&str, SubjectSessions> {
    let mut map: BTreeMap<&str, SubjectSessions> = BTreeMap::new();
    for row in sessions {
        let entry = map.entry(row.subject_id.as_str()).or_default();
        match (row.session, row.mode) {
            (1 | 2, SessionMode::Automated) => entry.automated = row.roi,
            (1 | 2, SessionMode::Discretion) => entry.discretion = row.roi,
            (3, mode) => entry.selected = Some(mode),
            _ => {}
        }
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SignedRankOutcome {
    Applicable(SignedRank),
    NotApplicable { nonzero_pairs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub n_pairs: usize,
    pub automated: ModeSummary,
    pub discretion: ModeSummary,
    /// Mean of `roi_automated - roi_discretion`.
    pub mean_diff: f64,
    pub median_diff: f64,
    pub test: SignedRankOutcome,
}

pub fn performance_study(sessions: &[SessionRow]) -> Result<PerformanceReport, AnalysisError> {
    let (ai, disc): (Vec<f64>, Vec<f64>) = by_subject(sessions)
        .values()
        .filter_map(|s| Some((s.automated?, s.discretion?)))
        .unzip();
    performance_from_pairs(&ai, &disc)
}

/// Paired comparison of per-subject ROIs, `ai[i]` and `disc[i]` belonging to
/// the same subject.
pub fn performance_from_pairs(
    ai: &[f64],
    disc: &[f64],
) -> Result<PerformanceReport, AnalysisError> {
    if ai.is_empty() || ai.len() != disc.len() {
        return Err(AnalysisError::NoPairedSubjects);
    }
    let diffs: Vec<f64> = ai.iter().zip(disc).map(|(a, d)| a - d).collect();
    let summary = |xs: &[f64]| ModeSummary {
        mean: stats::mean(xs).unwrap_or(f64::NAN),
        median: stats::median(xs).unwrap_or(f64::NAN),
    };
    let rank = stats::wilcoxon_signed_rank(&diffs);
    let test = if rank.n < MIN_PAIRS_FOR_TEST {
        SignedRankOutcome::NotApplicable {
            nonzero_pairs: rank.n,
        }
    } else {
        SignedRankOutcome::Applicable(rank)
    };
    Ok(PerformanceReport {
        n_pairs: diffs.len(),
        automated: summary(ai),
        discretion: summary(disc),
        mean_diff: stats::mean(&diffs).unwrap_or(f64::NAN),
        median_diff: stats::median(&diffs).unwrap_or(f64::NAN),
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalityReport {
    pub rate: f64,
    pub n_consistent: usize,
    pub n_inconsistent: usize,
    pub n_eligible: usize,
    pub n_ties_excluded: usize,
}

/// Whether a selection favours the strictly better prior mode. `None` on an
/// exact tie.
pub fn is_consistent(
    selected: SessionMode,
    roi_automated: f64,
    roi_discretion: f64,
) -> Option<bool> {
    if roi_automated == roi_discretion {
        return None;
    }
    let better = if roi_automated > roi_discretion {
        SessionMode::Automated
    } else {
        SessionMode::Discretion
    };
    Some(selected == better)
}

pub fn rationality_study(sessions: &[SessionRow]) -> Result<RationalityReport, AnalysisError> {
    let mut report = RationalityReport {
        rate: 0.0,
        n_consistent: 0,
        n_inconsistent: 0,
        n_eligible: 0,
        n_ties_excluded: 0,
    };
    for s in by_subject(sessions).values() {
        let (Some(ai), Some(disc), Some(selected)) = (s.automated, s.discretion, s.selected) else {
            continue;
        };
        match is_consistent(selected, ai, disc) {
            None => report.n_ties_excluded += 1,
            Some(true) => report.n_consistent += 1,
            Some(false) => report.n_inconsistent += 1,
        }
    }
    report.n_eligible = report.n_consistent + report.n_inconsistent;
    if report.n_eligible == 0 {
        return Err(AnalysisError::NoEligibleSubjects);
    }
    report.rate = report.n_consistent as f64 / report.n_eligible as f64;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    /// Point-biserial correlation of score with the Automated dummy.
    pub r: f64,
    pub n: usize,
}

/// Pearson correlation between scores and a 0/1 indicator.
pub fn point_biserial(scores: &[f64], dummies: &[bool]) -> Result<BehaviorReport, AnalysisError> {
    let n = scores.len().min(dummies.len());
    if n < 2 {
        return Err(AnalysisError::InsufficientN {
            required: 2,
            got: n,
        });
    }
    let d: Vec<f64> = dummies[..n]
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let r = stats::pearson(&scores[..n], &d).ok_or(AnalysisError::ZeroVariance)?;
    Ok(BehaviorReport { r, n })
}

pub fn behavior_study(
    subjects: &[SubjectRow],
    sessions: &[SessionRow],
) -> Result<BehaviorReport, AnalysisError> {
    let selections = by_subject(sessions);
    let (scores, dummies): (Vec<f64>, Vec<bool>) = subjects
        .iter()
        .filter_map(|s| {
            let score = s.loc_score?;
            let mode = selections.get(s.subject_id.as_str())?.selected?;
            Some((f64::from(score), mode == SessionMode::Automated))
        })
        .unzip();
    point_biserial(&scores, &dummies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub n: usize,
    pub questions: Vec<QuestionShare>,
}

pub fn survey_report(rows: &[SurveyRow]) -> Result<SurveyReport, AnalysisError> {
    let responses: Vec<LikertResponse> = rows.iter().map(|r| r.response).collect();
    Ok(SurveyReport {
        n: responses.len(),
        questions: aggregate_likert(&responses)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub performance: Result<PerformanceReport, AnalysisError>,
    pub rationality: Result<RationalityReport, AnalysisError>,
    pub behavior: Result<BehaviorReport, AnalysisError>,
    pub survey: Result<SurveyReport, AnalysisError>,
}

pub fn study_report(
    subjects: &[SubjectRow],
    sessions: &[SessionRow],
    survey: &[SurveyRow],
) -> StudyReport {
    StudyReport {
        performance: performance_study(sessions),
        rationality: rationality_study(sessions),
        behavior: behavior_study(subjects, sessions),
        survey: survey_report(survey),
    }
}
