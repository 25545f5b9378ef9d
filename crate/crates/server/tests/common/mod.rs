#![allow(dead_code)]

use std::sync::Arc;

use chrono::NaiveDate;
use ethgame_core::engine::{AiStrategy, AllowedAction, ExperimentConfig, SessionMode, TradeAction};
use ethgame_core::instruments::{LikertResponse, LocResponse};
use ethgame_core::pricedata::{PricePoint, PriceSeries};
use ethgame_server::{EventKind, Journal, LoadedPrices};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Geometric random walk starting at 730.37, one point per calendar day.
pub fn random_walk(n: usize, seed: u64) -> PriceSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let mut close = 730.37;
    PriceSeries::new(
        (0..n)
            .map(|i| {
                let p = PricePoint {
                    date: base + chrono::Days::new(i as u64),
                    close,
                };
                close *= 1.0 + rng.random_range(-0.05..0.05);
                p
            })
            .collect(),
    )
    .unwrap()
}

pub fn prices(n: usize, seed: u64) -> Arc<LoadedPrices> {
    Arc::new(LoadedPrices::from_series(
        "prices.csv",
        random_walk(n, seed),
    ))
}

pub fn created_journal(cfg: &ExperimentConfig, prices: Arc<LoadedPrices>) -> Journal {
    let mut j = Journal::in_memory(prices.clone());
    j.append(
        None,
        EventKind::ExperimentCreated {
            config: cfg.clone(),
            price_source: prices.source.clone(),
        },
    )
    .unwrap();
    j
}

/// Choices a scripted subject makes.
#[derive(Clone)]
pub struct Script {
    pub loc: [bool; 20],
    pub strategies: Vec<AiStrategy>,
    pub actions: Vec<TradeAction>,
    pub selection: SessionMode,
    pub survey: [u8; 7],
}

impl Script {
    pub fn cycling(k: usize, selection: SessionMode) -> Self {
        let mut loc = [false; 20];
        for (i, a) in loc.iter_mut().enumerate() {
            *a = (i + k).is_multiple_of(3);
        }
        Self {
            loc,
            strategies: AiStrategy::ALL
                .iter()
                .cycle()
                .skip(k)
                .take(3)
                .copied()
                .collect(),
            actions: [
                TradeAction::Buy,
                TradeAction::Sell,
                TradeAction::Hold,
                TradeAction::Buy,
            ]
            .iter()
            .cycle()
            .skip(k)
            .take(7)
            .copied()
            .collect(),
            selection,
            survey: [((k % 7) + 1) as u8, 5, 6, 4, 3, 7, 2],
        }
    }
}

/// The event a scripted subject submits for an allowed action.
pub fn scripted_event(script: &Script, action: &AllowedAction, step: usize) -> EventKind {
    match action {
        AllowedAction::SubmitLoc => {
            let answers = LocResponse::new(script.loc);
            EventKind::LocSubmitted { score: 0, answers }
        }
        AllowedAction::ChooseStrategy { period } => EventKind::StrategyChosen {
            period: *period,
            strategy: script.strategies[period % script.strategies.len()],
        },
        AllowedAction::SubmitDecision { period, day } => EventKind::DecisionSubmitted {
            period: *period,
            day: *day,
            action: script.actions[step % script.actions.len()],
        },
        AllowedAction::SelectMode => EventKind::ModeSelected {
            mode: script.selection,
        },
        AllowedAction::SubmitSurvey => EventKind::SurveySubmitted {
            answers: LikertResponse::new(script.survey).unwrap(),
        },
    }
}

/// Registers a subject and plays it to the end through the journal.
pub fn play_subject(j: &mut Journal, name: &str, script: &Script) -> String {
    let (id, _) = j.register(name, &format!("token-{name}")).unwrap();
    let mut step = 0;
    loop {
        let state = &j.record().subject(&id).unwrap().state;
        let Some(action) = state.allowed_actions().into_iter().next() else {
            break;
        };
        let mut kind = scripted_event(script, &action, step);
        if let EventKind::LocSubmitted { score, answers } = &mut kind {
            let cfg = j.record().config().unwrap();
            *score = ethgame_core::instruments::score_loc(answers, &cfg.loc_key);
        }
        j.append(Some(&id), kind).unwrap();
        j.advance(&id).unwrap();
        step += 1;
    }
    id
}

/// Minimal in-process HTTP client over the router.
pub struct Client {
    pub app: axum::Router,
    pub state: Arc<ethgame_server::api::AppState>,
}

pub const ADMIN: &str = "admin-secret";

impl Client {
    pub fn new(cfg: ExperimentConfig, prices: Arc<LoadedPrices>) -> Self {
        let state = ethgame_server::api::AppState::new(Journal::in_memory(prices), ADMIN, cfg);
        Self {
            app: ethgame_server::api::router(state.clone()),
            state,
        }
    }

    pub fn log_len(&self) -> usize {
        self.state.journal().len()
    }

    pub async fn call(
        &self,
        method: &str,
        uri: &str,
        token: Option<&str>,
        body: Option<&str>,
    ) -> (axum::http::StatusCode, serde_json::Value) {
        use http_body_util::BodyExt;
        use tower::ServiceExt;
        let mut req = axum::http::Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req
            .body(axum::body::Body::from(body.unwrap_or("").to_owned()))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            serde_json::Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    pub async fn create(&self) {
        let (s, _) = self.call("POST", "/experiments", Some(ADMIN), None).await;
        assert_eq!(s, axum::http::StatusCode::CREATED);
    }

    /// Returns (subject_id, token, treatment).
    pub async fn register(&self, name: &str) -> (String, String, String) {
        let (s, v) = self
            .call(
                "POST",
                "/subjects",
                None,
                Some(&serde_json::json!({ "name": name }).to_string()),
            )
            .await;
        assert_eq!(s, axum::http::StatusCode::CREATED, "{v}");
        (
            v["subject_id"].as_str().unwrap().to_owned(),
            v["token"].as_str().unwrap().to_owned(),
            v["treatment"].as_str().unwrap().to_owned(),
        )
    }
}
