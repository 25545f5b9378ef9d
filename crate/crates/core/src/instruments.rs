//! Locus of Control test and the 7-item reflection survey.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub const LOC_ITEM_COUNT: usize = 20;
pub const LIKERT_QUESTION_COUNT: usize = 7;
/// Lowest answer counted as agreement ("somewhat agree").
pub const LIKERT_AGREE_MIN: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstrumentError {
    #[error("expected {expected} answers, got {got}")]
    IncompleteResponse { expected: usize, got: usize },
    #[error("Likert answer {value} for question {question} is outside 1..=7")]
    AnswerOutOfRange { question: usize, value: u8 },
    #[error("locus of control key refers to item {0}, items are numbered 1..=20")]
    InvalidKey(u8),
    #[error("no survey responses")]
    EmptyResponseSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Keying {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocItem {
    pub id: u8,
    pub text: &'static str,
    pub keying: Keying,
}

const LOC_TEXT: [&str; LOC_ITEM_COUNT] = [
    "I usually get what I want in life.",
    "I need to be kept informed about news events.",
    "I never know where I stand with other people.",
    "I do not really believe in luck or chance.",
    "I think that I could easily win the lottery.",
    "If I do not succeed in a task, I tend to give up.",
    "I usually convince others to do things my way.",
    "People make a difference in controlling crime.",
    "The success I have is largely a matter of chance.",
    "Marriage is largely a gamble for most people.",
    "People must be the master of their own fate.",
    "It is not important for me to vote.",
    "My life seems like a series of random events.",
    "I never try anything that I am not sure of.",
    "I earn the respect and honors I receive.",
    "A person can get rich by taking risks.",
    "Leaders are successful when they work hard.",
    "Persistence and hard work usually lead to success.",
    "It is difficult to know who my real friends are.",
    "Other people usually control my life.",
];

/// Which items count toward the external score when answered True.
/// Every other item counts when answered False.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawKey")]
pub struct LocKey {
    external_ids: BTreeSet<u8>,
}

#[derive(Deserialize)]
struct RawKey {
    external_ids: BTreeSet<u8>,
}

impl TryFrom<RawKey> for LocKey {
    type Error = InstrumentError;
    fn try_from(raw: RawKey) -> Result<Self, Self::Error> {
        LocKey::new(raw.external_ids)
    }
}

impl LocKey {
    pub fn new(external_ids: impl IntoIterator<Item = u8>) -> Result<Self, InstrumentError> {
        let external_ids: BTreeSet<u8> = external_ids.into_iter().collect();
        if let Some(&bad) = external_ids
            .iter()
            .find(|&&id| id == 0 || id as usize > LOC_ITEM_COUNT)
        {
            return Err(InstrumentError::InvalidKey(bad));
        }
        Ok(Self { external_ids })
    }

    pub fn is_external(&self, id: u8) -> bool {
        self.external_ids.contains(&id)
    }

    pub fn external_ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.external_ids.iter().copied()
    }
}

impl Default for LocKey {
    /// Face-content keying. Items 2, 5, 14 and 16 are the least clear-cut;
    /// instructors with a validated key should override this in the
    /// experiment config.
    fn default() -> Self {
        Self {
            external_ids: [3, 5, 6, 9, 10, 12, 13, 14, 19, 20].into_iter().collect(),
        }
    }
}

/// The 20 items with keying taken from `key`.
pub fn loc_items(key: &LocKey) -> Vec<LocItem> {
    LOC_TEXT
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let id = i as u8 + 1;
            LocItem {
                id,
                text,
                keying: if key.is_external(id) {
                    Keying::External
                } else {
                    Keying::Internal
                },
            }
        })
        .collect()
}

/// True/False answers to items 1..=20, `true` meaning "T".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<bool>", into = "Vec<bool>")]
pub struct LocResponse {
    answers: [bool; LOC_ITEM_COUNT],
}

impl LocResponse {
    pub fn new(answers: [bool; LOC_ITEM_COUNT]) -> Self {
        Self { answers }
    }

    pub fn answers(&self) -> &[bool; LOC_ITEM_COUNT] {
        &self.answers
    }

    pub fn complement(&self) -> Self {
        Self {
            answers: self.answers.map(|a| !a),
        }
    }
}

impl TryFrom<Vec<bool>> for LocResponse {
    type Error = InstrumentError;
    fn try_from(v: Vec<bool>) -> Result<Self, Self::Error> {
        let got = v.len();
        let answers = v
            .try_into()
            .map_err(|_| InstrumentError::IncompleteResponse {
                expected: LOC_ITEM_COUNT,
                got,
            })?;
        Ok(Self { answers })
    }
}

impl From<LocResponse> for Vec<bool> {
    fn from(r: LocResponse) -> Self {
        r.answers.to_vec()
    }
}

/// Number of answers in the external direction, 0..=20.
pub fn score_loc(response: &LocResponse, key: &LocKey) -> u8 {
    response
        .answers
        .iter()
        .enumerate()
        .filter(|&(i, &answer)| key.is_external(i as u8 + 1) == answer)
        .count() as u8
}

/// Answers to Q1..Q7 on a 1 (extremely disagree) to 7 (extremely agree) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct LikertResponse {
    answers: [u8; LIKERT_QUESTION_COUNT],
}

impl LikertResponse {
    pub fn new(answers: [u8; LIKERT_QUESTION_COUNT]) -> Result<Self, InstrumentError> {
        if let Some((q, &value)) = answers
            .iter()
            .enumerate()
            .find(|(_, &a)| !(1..=7).contains(&a))
        {
            return Err(InstrumentError::AnswerOutOfRange {
                question: q + 1,
                value,
            });
        }
        Ok(Self { answers })
    }

    pub fn answers(&self) -> &[u8; LIKERT_QUESTION_COUNT] {
        &self.answers
    }
}

impl TryFrom<Vec<u8>> for LikertResponse {
    type Error = InstrumentError;
    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        let got = v.len();
        let answers = v
            .try_into()
            .map_err(|_| InstrumentError::IncompleteResponse {
                expected: LIKERT_QUESTION_COUNT,
                got,
            })?;
        Self::new(answers)
    }
}

impl From<LikertResponse> for Vec<u8> {
    fn from(r: LikertResponse) -> Self {
        r.answers.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionShare {
    pub question: usize,
    /// Percent answering 5..=7, rounded to two decimals.
    pub top3: f64,
    /// `100 - top3`.
    pub bottom4: f64,
}

pub(crate) fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Top-3-box and bottom-4-box percentages per question.
pub fn aggregate_likert(
    responses: &[LikertResponse],
) -> Result<Vec<QuestionShare>, InstrumentError> {
    if responses.is_empty() {
        return Err(InstrumentError::EmptyResponseSet);
    }
    let n = responses.len() as f64;
    Ok((0..LIKERT_QUESTION_COUNT)
        .map(|q| {
            let agree = responses
                .iter()
                .filter(|r| r.answers[q] >= LIKERT_AGREE_MIN)
                .count();
            let top3 = round2(100.0 * agree as f64 / n);
            QuestionShare {
                question: q + 1,
                top3,
                bottom4: round2(100.0 - top3),
            }
        })
        .collect())
}
