//! Game state machine.
//!
//! A subject moves strictly forward through
//! `Registered -> LoC -> Session1 -> Session2 -> Session3 -> Survey -> Done`.
//! Sessions 1 and 2 are played in the order fixed by the subject's treatment,
//! session 3 in the mode the subject picks after settling the first two.
//! Every mutation is a [`Transition`] applied to a [`SubjectState`]; a
//! transition that fails leaves the state untouched.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::instruments::{score_loc, LikertResponse, LocKey, LocResponse};
use crate::pricedata::{chart_window, start_range, ChartWindow, PriceError, PriceSeries};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("action requires a {expected:?} session")]
    WrongMode { expected: SessionMode },
    #[error("session already settled")]
    SessionSettled,
    #[error("out of turn: expected period {period}, day {day}")]
    OutOfTurn { period: usize, day: usize },
    #[error("a strategy was already committed for period {0}")]
    PeriodAlreadyCommitted(usize),
    #[error("session has unplayed periods")]
    SessionIncomplete,
    #[error("expected {expected} closes for the period, got {got}")]
    PriceCountMismatch { expected: usize, got: usize },
    #[error("sessions 1 and 2 must be settled first")]
    PrerequisiteSessionsIncomplete,
    #[error("session 3 mode already selected")]
    AlreadySelected,
    #[error("not allowed in stage {0:?}")]
    StageMismatch(Stage),
    #[error("invalid period start {start}: {reason}")]
    InvalidPeriodStart { start: usize, reason: &'static str },
    #[error(transparent)]
    Price(#[from] PriceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartDrawPolicy {
    /// One draw when a session begins; its periods run back to back.
    #[default]
    PerSession,
    /// An independent draw for every period.
    PerPeriod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub initial_usd: f64,
    pub initial_eth: f64,
    pub lot_size: f64,
    pub period_len: usize,
    pub periods_per_session: usize,
    pub lookback: usize,
    pub allow_negative_balances: bool,
    pub start_draw_policy: StartDrawPolicy,
    pub seed: u64,
    pub loc_key: LocKey,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            initial_usd: 20507.6,
            initial_eth: 100.0,
            lot_size: 10.0,
            period_len: 10,
            periods_per_session: 3,
            lookback: 30,
            allow_negative_balances: true,
            start_draw_policy: StartDrawPolicy::PerSession,
            seed: 0,
            loc_key: LocKey::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.lot_size.is_finite() && self.lot_size > 0.0) {
            return Err(EngineError::InvalidConfig("lot_size must be positive"));
        }
        if self.period_len < 1 {
            return Err(EngineError::InvalidConfig("period_len must be at least 1"));
        }
        if self.periods_per_session < 1 {
            return Err(EngineError::InvalidConfig(
                "periods_per_session must be at least 1",
            ));
        }
        if self.lookback < 1 {
            return Err(EngineError::InvalidConfig("lookback must be at least 1"));
        }
        if !(self.initial_usd.is_finite() && self.initial_eth.is_finite()) {
            return Err(EngineError::InvalidConfig("endowment must be finite"));
        }
        Ok(())
    }

    pub fn endowment(&self) -> Portfolio {
        Portfolio {
            usd: self.initial_usd,
            eth: self.initial_eth,
        }
    }

    /// Trading days in one session.
    pub fn session_days(&self) -> usize {
        self.period_len * self.periods_per_session
    }

    /// Minimum series length that admits at least one draw.
    pub fn required_series_len(&self) -> usize {
        self.lookback
            + match self.start_draw_policy {
                StartDrawPolicy::PerSession => self.session_days(),
                StartDrawPolicy::PerPeriod => self.period_len,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TradeAction {
    Buy,
    Hold,
    Sell,
}

impl TradeAction {
    pub fn sign(self) -> f64 {
        match self {
            TradeAction::Buy => 1.0,
            TradeAction::Hold => 0.0,
            TradeAction::Sell => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AiStrategy {
    Long,
    Holding,
    Short,
}

impl AiStrategy {
    pub const ALL: [AiStrategy; 3] = [AiStrategy::Long, AiStrategy::Holding, AiStrategy::Short];

    /// The daily action the strategy executes.
    pub fn action(self) -> TradeAction {
        match self {
            AiStrategy::Long => TradeAction::Buy,
            AiStrategy::Holding => TradeAction::Hold,
            AiStrategy::Short => TradeAction::Sell,
        }
    }
}

pub fn strategy_action(strategy: AiStrategy) -> TradeAction {
    strategy.action()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionMode {
    Automated,
    Discretion,
}

impl SessionMode {
    pub fn other(self) -> Self {
        match self {
            SessionMode::Automated => SessionMode::Discretion,
            SessionMode::Discretion => SessionMode::Automated,
        }
    }
}

/// A plays Automated then Discretion, B the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Treatment {
    A,
    B,
}

impl Treatment {
    pub fn order(self) -> [SessionMode; 2] {
        match self {
            Treatment::A => [SessionMode::Automated, SessionMode::Discretion],
            Treatment::B => [SessionMode::Discretion, SessionMode::Automated],
        }
    }

    /// Maps a uniform draw in `[0, 1)` to a treatment.
    pub fn from_unit(u: f64) -> Self {
        if u < 0.5 {
            Treatment::A
        } else {
            Treatment::B
        }
    }
}

pub fn assign_treatment<R: Rng + ?Sized>(rng: &mut R) -> Treatment {
    Treatment::from_unit(rng.random::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub usd: f64,
    pub eth: f64,
}

impl Portfolio {
    pub fn value(&self, price: f64) -> f64 {
        self.usd + self.eth * price
    }
}

pub fn portfolio_value(p: &Portfolio, price: f64) -> f64 {
    p.value(price)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeOutcome {
    pub portfolio: Portfolio,
    pub executed: TradeAction,
    /// The requested trade would have overdrawn a balance and was replaced
    /// by Hold.
    pub degraded: bool,
}

pub fn execute_trade(
    p: Portfolio,
    action: TradeAction,
    price: f64,
    lot: f64,
    allow_negative: bool,
) -> TradeOutcome {
    let next = Portfolio {
        usd: p.usd - action.sign() * lot * price,
        eth: p.eth + action.sign() * lot,
    };
    if !allow_negative && (next.usd < 0.0 || next.eth < 0.0) {
        return TradeOutcome {
            portfolio: p,
            executed: TradeAction::Hold,
            degraded: true,
        };
    }
    TradeOutcome {
        portfolio: next,
        executed: action,
        degraded: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    /// Day within the period, 0-based.
    pub day: usize,
    pub requested: TradeAction,
    pub executed: TradeAction,
    /// Close of the trading day, USD per ETH.
    pub price: f64,
}

impl Trade {
    pub fn degraded(&self) -> bool {
        self.requested != self.executed
    }
}

/// Runs one committed strategy over a period's closes, one trade per day.
pub fn run_period_automated(
    p: Portfolio,
    strategy: AiStrategy,
    prices: &[f64],
    cfg: &ExperimentConfig,
) -> Result<(Portfolio, Vec<Trade>), EngineError> {
    if prices.len() != cfg.period_len {
        return Err(EngineError::PriceCountMismatch {
            expected: cfg.period_len,
            got: prices.len(),
        });
    }
    let action = strategy.action();
    let mut portfolio = p;
    let mut trades = Vec::with_capacity(prices.len());
    for (day, &price) in prices.iter().enumerate() {
        let out = execute_trade(
            portfolio,
            action,
            price,
            cfg.lot_size,
            cfg.allow_negative_balances,
        );
        portfolio = out.portfolio;
        trades.push(Trade {
            day,
            requested: action,
            executed: out.executed,
            price,
        });
    }
    Ok((portfolio, trades))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub initial_value: f64,
    pub final_value: f64,
    pub roi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub mode: SessionMode,
    /// First trading day of each period, as series indices.
    pub period_starts: Vec<usize>,
    pub current_period: usize,
    pub current_day: usize,
    pub portfolio: Portfolio,
    /// Automated sessions only, one entry per committed period.
    pub period_choices: Vec<AiStrategy>,
    /// Trades grouped by period.
    pub trade_log: Vec<Vec<Trade>>,
    pub settlement: Option<Settlement>,
}

impl SessionState {
    /// Opens a session with a fresh endowment.
    pub fn open(
        mode: SessionMode,
        period_starts: Vec<usize>,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
    ) -> Result<Self, EngineError> {
        if period_starts.len() != cfg.periods_per_session {
            return Err(EngineError::InvalidConfig(
                "one start index per period is required",
            ));
        }
        let admissible = start_range(series.len(), cfg.lookback, cfg.period_len)?;
        for (k, &start) in period_starts.iter().enumerate() {
            if !admissible.contains(&start) {
                return Err(EngineError::InvalidPeriodStart {
                    start,
                    reason: "outside the admissible range",
                });
            }
            if cfg.start_draw_policy == StartDrawPolicy::PerSession
                && k > 0
                && start != period_starts[k - 1] + cfg.period_len
            {
                return Err(EngineError::InvalidPeriodStart {
                    start,
                    reason: "periods of a session must be consecutive",
                });
            }
        }
        Ok(Self {
            mode,
            period_starts,
            current_period: 0,
            current_day: 0,
            portfolio: cfg.endowment(),
            period_choices: Vec::new(),
            trade_log: Vec::new(),
            settlement: None,
        })
    }

    pub fn start_index(&self) -> usize {
        self.period_starts[0]
    }

    pub fn is_settled(&self) -> bool {
        self.settlement.is_some()
    }

    pub fn roi(&self) -> Option<f64> {
        self.settlement.map(|s| s.roi)
    }

    pub fn is_complete(&self) -> bool {
        self.current_period == self.period_starts.len()
    }

    /// Series index of the next trading day, if any remain.
    pub fn trading_index(&self) -> Option<usize> {
        (!self.is_complete()).then(|| self.period_starts[self.current_period] + self.current_day)
    }

    /// The chart shown before the next decision: before each day in
    /// Discretion, before each period's commitment in Automated.
    pub fn chart(&self, series: &PriceSeries, cfg: &ExperimentConfig) -> Option<ChartWindow> {
        if self.is_settled() {
            return None;
        }
        let index = match self.mode {
            SessionMode::Discretion => self.trading_index()?,
            SessionMode::Automated => *self.period_starts.get(self.current_period)?,
        };
        chart_window(series, index, cfg.lookback).ok()
    }

    pub fn apply_discretion_day(
        &mut self,
        period: usize,
        day: usize,
        action: TradeAction,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
    ) -> Result<Trade, EngineError> {
        if self.mode != SessionMode::Discretion {
            return Err(EngineError::WrongMode {
                expected: SessionMode::Discretion,
            });
        }
        if self.is_settled() {
            return Err(EngineError::SessionSettled);
        }
        let index = match self.trading_index() {
            Some(i) if period == self.current_period && day == self.current_day => i,
            _ => {
                return Err(EngineError::OutOfTurn {
                    period: self.current_period,
                    day: self.current_day,
                })
            }
        };
        let price = series.close(index);
        let out = execute_trade(
            self.portfolio,
            action,
            price,
            cfg.lot_size,
            cfg.allow_negative_balances,
        );
        let trade = Trade {
            day,
            requested: action,
            executed: out.executed,
            price,
        };
        self.portfolio = out.portfolio;
        if self.current_day == 0 {
            self.trade_log.push(Vec::with_capacity(cfg.period_len));
        }
        self.trade_log[period].push(trade);
        self.current_day += 1;
        if self.current_day == cfg.period_len {
            self.current_day = 0;
            self.current_period += 1;
        }
        Ok(trade)
    }

    /// Commits `strategy` for `period` and simulates the whole period.
    pub fn choose_ai_strategy(
        &mut self,
        period: usize,
        strategy: AiStrategy,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
    ) -> Result<(), EngineError> {
        if self.mode != SessionMode::Automated {
            return Err(EngineError::WrongMode {
                expected: SessionMode::Automated,
            });
        }
        if self.is_settled() {
            return Err(EngineError::SessionSettled);
        }
        if period < self.current_period {
            return Err(EngineError::PeriodAlreadyCommitted(period));
        }
        if period != self.current_period || self.is_complete() {
            return Err(EngineError::OutOfTurn {
                period: self.current_period,
                day: 0,
            });
        }
        let start = self.period_starts[period];
        let closes: Vec<f64> = series.closes(start..start + cfg.period_len).collect();
        let (portfolio, trades) = run_period_automated(self.portfolio, strategy, &closes, cfg)?;
        self.portfolio = portfolio;
        self.period_choices.push(strategy);
        self.trade_log.push(trades);
        self.current_period += 1;
        Ok(())
    }

    /// ROI from the close before the first trading day to the close of the
    /// last trading day.
    pub fn settle(
        &mut self,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
    ) -> Result<f64, EngineError> {
        if self.is_settled() {
            return Err(EngineError::SessionSettled);
        }
        if !self.is_complete() {
            return Err(EngineError::SessionIncomplete);
        }
        let reference = series.close(self.start_index() - 1);
        let last = self.period_starts[self.period_starts.len() - 1] + cfg.period_len - 1;
        let initial_value = cfg.endowment().value(reference);
        let final_value = self.portfolio.value(series.close(last));
        let roi = (final_value - initial_value) / initial_value;
        self.settlement = Some(Settlement {
            initial_value,
            final_value,
            roi,
        });
        Ok(roi)
    }
}

/// Draws one start index per period according to the configured policy.
pub fn draw_period_starts<R: Rng + ?Sized>(
    series: &PriceSeries,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<Vec<usize>, EngineError> {
    Ok(match cfg.start_draw_policy {
        StartDrawPolicy::PerSession => {
            let first = crate::pricedata::draw_session_start(
                series,
                cfg.lookback,
                cfg.session_days(),
                rng,
            )?;
            (0..cfg.periods_per_session)
                .map(|k| first + k * cfg.period_len)
                .collect()
        }
        StartDrawPolicy::PerPeriod => (0..cfg.periods_per_session)
            .map(|_| {
                crate::pricedata::draw_session_start(series, cfg.lookback, cfg.period_len, rng)
            })
            .collect::<Result<_, _>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Registered,
    LoC,
    Session1,
    Session2,
    Session3,
    Survey,
    Done,
}

impl Stage {
    /// 1-based session number for session stages.
    pub fn session_number(self) -> Option<usize> {
        match self {
            Stage::Session1 => Some(1),
            Stage::Session2 => Some(2),
            Stage::Session3 => Some(3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocRecord {
    pub response: LocResponse,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Transition {
    AssignTreatment(Treatment),
    SubmitLoc(LocResponse),
    StartSession {
        period_starts: Vec<usize>,
    },
    ChooseStrategy {
        period: usize,
        strategy: AiStrategy,
    },
    SubmitDecision {
        period: usize,
        day: usize,
        action: TradeAction,
    },
    Settle,
    SelectMode(SessionMode),
    SubmitSurvey(LikertResponse),
}

/// Transitions the platform performs on the subject's behalf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemStep {
    AssignTreatment,
    StartSession(SessionMode),
    Settle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectState {
    pub subject_id: String,
    pub treatment: Option<Treatment>,
    pub stage: Stage,
    pub loc: Option<LocRecord>,
    pub sessions: Vec<SessionState>,
    pub self_selected_mode: Option<SessionMode>,
    pub survey_response: Option<LikertResponse>,
}

impl SubjectState {
    pub fn new(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            treatment: None,
            stage: Stage::Registered,
            loc: None,
            sessions: Vec::new(),
            self_selected_mode: None,
            survey_response: None,
        }
    }

    pub fn loc_score(&self) -> Option<u8> {
        self.loc.as_ref().map(|l| l.score)
    }

    /// Mode of session `number` (1-based), when it is known.
    fn mode_for(&self, number: usize) -> Option<SessionMode> {
        match number {
            1 | 2 => self.treatment.map(|t| t.order()[number - 1]),
            3 => self.self_selected_mode,
            _ => None,
        }
    }

    /// The session belonging to the current stage, once it has started.
    pub fn active_session(&self) -> Option<&SessionState> {
        let n = self.stage.session_number()?;
        self.sessions.get(n - 1)
    }

    fn active_session_mut(&mut self) -> Result<&mut SessionState, EngineError> {
        let stage = self.stage;
        let n = stage
            .session_number()
            .ok_or(EngineError::StageMismatch(stage))?;
        self.sessions
            .get_mut(n - 1)
            .ok_or(EngineError::StageMismatch(stage))
    }

    pub fn pending_step(&self) -> Option<SystemStep> {
        match self.stage {
            Stage::Registered => Some(SystemStep::AssignTreatment),
            stage => {
                let n = stage.session_number()?;
                match self.sessions.get(n - 1) {
                    None => self.mode_for(n).map(SystemStep::StartSession),
                    Some(s) if s.is_complete() && !s.is_settled() => Some(SystemStep::Settle),
                    Some(_) => None,
                }
            }
        }
    }

    pub fn apply(
        &mut self,
        transition: &Transition,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
    ) -> Result<(), EngineError> {
        let stage = self.stage;
        let mismatch = EngineError::StageMismatch(stage);
        match transition {
            Transition::AssignTreatment(t) => {
                if stage != Stage::Registered {
                    return Err(mismatch);
                }
                self.treatment = Some(*t);
                self.stage = Stage::LoC;
            }
            Transition::SubmitLoc(response) => {
                if stage != Stage::LoC {
                    return Err(mismatch);
                }
                self.loc = Some(LocRecord {
                    response: *response,
                    score: score_loc(response, &cfg.loc_key),
                });
                self.stage = Stage::Session1;
            }
            Transition::StartSession { period_starts } => {
                let n = stage.session_number().ok_or(mismatch.clone())?;
                if self.sessions.len() != n - 1 {
                    return Err(mismatch);
                }
                let mode = self.mode_for(n).ok_or(EngineError::StageMismatch(stage))?;
                let session = SessionState::open(mode, period_starts.clone(), series, cfg)?;
                self.sessions.push(session);
            }
            Transition::ChooseStrategy { period, strategy } => {
                self.active_session_mut()?
                    .choose_ai_strategy(*period, *strategy, series, cfg)?;
            }
            Transition::SubmitDecision {
                period,
                day,
                action,
            } => {
                self.active_session_mut()?
                    .apply_discretion_day(*period, *day, *action, series, cfg)?;
            }
            Transition::Settle => {
                self.active_session_mut()?.settle(series, cfg)?;
                self.stage = match stage {
                    Stage::Session1 => Stage::Session2,
                    Stage::Session2 => Stage::Session3,
                    _ => Stage::Survey,
                };
            }
            Transition::SelectMode(mode) => self.self_select(*mode)?,
            Transition::SubmitSurvey(response) => {
                if stage != Stage::Survey {
                    return Err(mismatch);
                }
                self.survey_response = Some(*response);
                self.stage = Stage::Done;
            }
        }
        Ok(())
    }

    /// Records the session 3 mode. The session itself opens on the next
    /// `StartSession`, with a fresh endowment and a fresh start draw.
    pub fn self_select(&mut self, mode: SessionMode) -> Result<(), EngineError> {
        if self.self_selected_mode.is_some() || self.stage > Stage::Session3 {
            return Err(EngineError::AlreadySelected);
        }
        let settled = self
            .sessions
            .iter()
            .take(2)
            .filter(|s| s.is_settled())
            .count();
        if self.stage < Stage::Session3 || settled < 2 {
            return Err(EngineError::PrerequisiteSessionsIncomplete);
        }
        self.self_selected_mode = Some(mode);
        Ok(())
    }

    /// What the subject is allowed to see right now. Balances and ROI of a
    /// session appear only once that session is settled.
    pub fn visible_state(&self, series: &PriceSeries, cfg: &ExperimentConfig) -> SubjectView {
        let current = self
            .active_session()
            .filter(|s| !s.is_settled())
            .map(|s| SessionView {
                session: self.stage.session_number().unwrap_or(0),
                mode: s.mode,
                period: s.current_period,
                day: s.current_day,
                periods_per_session: cfg.periods_per_session,
                period_len: cfg.period_len,
                committed: s.period_choices.clone(),
                chart: s.chart(series, cfg),
            });
        let results = self
            .sessions
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let settlement = s.settlement?;
                Some(SessionResult {
                    session: i + 1,
                    mode: s.mode,
                    final_usd: s.portfolio.usd,
                    final_eth: s.portfolio.eth,
                    initial_value: settlement.initial_value,
                    final_value: settlement.final_value,
                    roi: settlement.roi,
                })
            })
            .collect();
        SubjectView {
            subject_id: self.subject_id.clone(),
            stage: self.stage,
            treatment: self.treatment,
            current,
            allowed_actions: self.allowed_actions(),
            results,
        }
    }

    pub fn allowed_actions(&self) -> Vec<AllowedAction> {
        let mut out = Vec::new();
        match self.stage {
            Stage::LoC => out.push(AllowedAction::SubmitLoc),
            Stage::Survey => out.push(AllowedAction::SubmitSurvey),
            Stage::Session3 if self.self_selected_mode.is_none() => {
                out.push(AllowedAction::SelectMode)
            }
            _ => {}
        }
        if let Some(s) = self.active_session().filter(|s| !s.is_complete()) {
            out.push(match s.mode {
                SessionMode::Automated => AllowedAction::ChooseStrategy {
                    period: s.current_period,
                },
                SessionMode::Discretion => AllowedAction::SubmitDecision {
                    period: s.current_period,
                    day: s.current_day,
                },
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AllowedAction {
    SubmitLoc,
    ChooseStrategy { period: usize },
    SubmitDecision { period: usize, day: usize },
    SelectMode,
    SubmitSurvey,
}

/// An in-progress session as the subject sees it: counters and chart only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: usize,
    pub mode: SessionMode,
    pub period: usize,
    pub day: usize,
    pub periods_per_session: usize,
    pub period_len: usize,
    pub committed: Vec<AiStrategy>,
    pub chart: Option<ChartWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub mode: SessionMode,
    pub final_usd: f64,
    pub final_eth: f64,
    pub initial_value: f64,
    pub final_value: f64,
    pub roi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectView {
    pub subject_id: String,
    pub stage: Stage,
    pub treatment: Option<Treatment>,
    pub current: Option<SessionView>,
    pub allowed_actions: Vec<AllowedAction>,
    pub results: Vec<SessionResult>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricedata::PricePoint;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series_from(closes: &[f64]) -> PriceSeries {
        let base = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        PriceSeries::new(
            closes
                .iter()
                .enumerate()
                .map(|(i, &close)| PricePoint {
                    date: base + chrono::Days::new(i as u64),
                    close,
                })
                .collect(),
        )
        .unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            period_len: 2,
            periods_per_session: 2,
            lookback: 3,
            ..ExperimentConfig::default()
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn default_config_matches_game_setup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.initial_usd, 20507.6);
        assert_eq!(cfg.initial_eth, 100.0);
        assert_eq!(cfg.lot_size, 10.0);
        assert_eq!((cfg.periods_per_session, cfg.period_len), (3, 10));
        assert_eq!(cfg.lookback, 30);
        assert!(cfg.allow_negative_balances);
        assert_eq!(cfg.start_draw_policy, StartDrawPolicy::PerSession);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            ExperimentConfig {
                lot_size: 0.0,
                ..Default::default()
            },
            ExperimentConfig {
                period_len: 0,
                ..Default::default()
            },
            ExperimentConfig {
                periods_per_session: 0,
                ..Default::default()
            },
            ExperimentConfig {
                lookback: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(cfg.validate(), Err(EngineError::InvalidConfig(_))));
        }
    }

    #[test]
    fn treatment_mapping() {
        assert_eq!(Treatment::from_unit(0.0), Treatment::A);
        assert_eq!(Treatment::from_unit(0.4999), Treatment::A);
        assert_eq!(Treatment::from_unit(0.5), Treatment::B);
        assert_eq!(Treatment::A.order()[0], SessionMode::Automated);
        assert_eq!(Treatment::B.order()[0], SessionMode::Discretion);
    }

    #[test]
    fn treatment_is_balanced() {
        // 3 sigma of a binomial(10^4, 1/2) proportion is 0.015.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let a = (0..n)
            .filter(|_| assign_treatment(&mut rng) == Treatment::A)
            .count();
        assert!((a as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn strategies_map_to_actions() {
        assert_eq!(strategy_action(AiStrategy::Long), TradeAction::Buy);
        assert_eq!(strategy_action(AiStrategy::Holding), TradeAction::Hold);
        assert_eq!(strategy_action(AiStrategy::Short), TradeAction::Sell);
    }

    #[test]
    fn trade_examples() {
        let p = Portfolio {
            usd: 20507.6,
            eth: 100.0,
        };
        let out = execute_trade(p, TradeAction::Buy, 730.37, 10.0, true);
        assert!(close(out.portfolio.usd, 13203.9));
        assert_eq!(out.portfolio.eth, 110.0);
        assert!(!out.degraded);

        assert_eq!(
            execute_trade(p, TradeAction::Hold, 730.37, 10.0, true).portfolio,
            p
        );

        let poor = Portfolio {
            usd: 100.0,
            eth: 5.0,
        };
        let out = execute_trade(poor, TradeAction::Sell, 50.0, 10.0, false);
        assert_eq!(out.portfolio, poor);
        assert!(out.degraded);
        assert_eq!(out.executed, TradeAction::Hold);
        let out = execute_trade(poor, TradeAction::Buy, 50.0, 10.0, false);
        assert!(out.degraded);
        assert!(!execute_trade(poor, TradeAction::Sell, 50.0, 5.0, false).degraded);
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(
            portfolio_value(
                &Portfolio {
                    usd: 100.0,
                    eth: 2.0
                },
                50.0
            ),
            200.0
        );
        assert_eq!(
            portfolio_value(
                &Portfolio {
                    usd: 100.0,
                    eth: 0.0
                },
                1234.5
            ),
            100.0
        );
        assert_eq!(
            portfolio_value(
                &Portfolio {
                    usd: 12100.0,
                    eth: -20.0
                },
                110.0
            ),
            9900.0
        );
    }

    #[test]
    fn automated_period_examples() {
        let cfg = ExperimentConfig {
            period_len: 2,
            ..Default::default()
        };
        let start = Portfolio {
            usd: 10000.0,
            eth: 0.0,
        };
        let prices = [100.0, 110.0];

        let (p, trades) = run_period_automated(start, AiStrategy::Long, &prices, &cfg).unwrap();
        assert_eq!(
            p,
            Portfolio {
                usd: 7900.0,
                eth: 20.0
            }
        );
        assert_eq!(p.value(110.0), 10100.0);
        assert_eq!(trades.len(), 2);
        assert_eq!(trades[1].price, 110.0);

        let (p, _) = run_period_automated(start, AiStrategy::Holding, &prices, &cfg).unwrap();
        assert_eq!(p.value(110.0), 10000.0);

        let (p, _) = run_period_automated(start, AiStrategy::Short, &prices, &cfg).unwrap();
        assert_eq!(
            p,
            Portfolio {
                usd: 12100.0,
                eth: -20.0
            }
        );
        assert_eq!(p.value(110.0), 9900.0);

        assert_eq!(
            run_period_automated(start, AiStrategy::Long, &[1.0], &cfg),
            Err(EngineError::PriceCountMismatch {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn discretion_day_steps_and_rolls_over() {
        let cfg = ExperimentConfig {
            lookback: 1,
            ..Default::default()
        };
        let mut closes = vec![700.0];
        closes.extend((0..30).map(|i| 730.37 + i as f64));
        let series = series_from(&closes);
        let starts = vec![1, 11, 21];
        let mut s = SessionState::open(SessionMode::Discretion, starts, &series, &cfg).unwrap();

        let trade = s
            .apply_discretion_day(0, 0, TradeAction::Buy, &series, &cfg)
            .unwrap();
        assert_eq!(
            (trade.day, trade.requested, trade.price),
            (0, TradeAction::Buy, 730.37)
        );
        assert_eq!(s.trade_log[0], vec![trade]);
        assert_eq!(s.current_day, 1);
        assert!(close(s.portfolio.usd, 13203.9));

        for day in 1..10 {
            s.apply_discretion_day(0, day, TradeAction::Hold, &series, &cfg)
                .unwrap();
        }
        assert_eq!((s.current_period, s.current_day), (1, 0));

        assert_eq!(
            s.apply_discretion_day(0, 3, TradeAction::Hold, &series, &cfg),
            Err(EngineError::OutOfTurn { period: 1, day: 0 })
        );
        assert_eq!(
            s.choose_ai_strategy(1, AiStrategy::Long, &series, &cfg),
            Err(EngineError::WrongMode {
                expected: SessionMode::Automated
            })
        );
        assert_eq!(s.settle(&series, &cfg), Err(EngineError::SessionIncomplete));

        for period in 1..3 {
            for day in 0..10 {
                s.apply_discretion_day(period, day, TradeAction::Hold, &series, &cfg)
                    .unwrap();
            }
        }
        assert!(s.is_complete());
        s.settle(&series, &cfg).unwrap();
        assert_eq!(
            s.apply_discretion_day(3, 0, TradeAction::Buy, &series, &cfg),
            Err(EngineError::SessionSettled)
        );
        assert_eq!(s.settle(&series, &cfg), Err(EngineError::SessionSettled));
    }

    #[test]
    fn automated_commitments() {
        let cfg = small_cfg();
        let series = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let mut s = SessionState::open(SessionMode::Automated, vec![3, 5], &series, &cfg).unwrap();
        assert_eq!(s.chart(&series, &cfg).unwrap().closes, vec![1.0, 2.0, 3.0]);
        s.choose_ai_strategy(0, AiStrategy::Long, &series, &cfg)
            .unwrap();
        assert_eq!(s.current_period, 1);
        assert_eq!(s.trade_log[0].len(), 2);
        assert_eq!(s.chart(&series, &cfg).unwrap().closes, vec![3.0, 4.0, 5.0]);
        assert_eq!(
            s.choose_ai_strategy(0, AiStrategy::Short, &series, &cfg),
            Err(EngineError::PeriodAlreadyCommitted(0))
        );
        assert_eq!(
            s.apply_discretion_day(1, 0, TradeAction::Buy, &series, &cfg),
            Err(EngineError::WrongMode {
                expected: SessionMode::Discretion
            })
        );
        s.choose_ai_strategy(1, AiStrategy::Short, &series, &cfg)
            .unwrap();
        assert!(s.is_complete());
        assert_eq!(s.period_choices, vec![AiStrategy::Long, AiStrategy::Short]);
        assert_eq!(
            s.choose_ai_strategy(2, AiStrategy::Short, &series, &cfg),
            Err(EngineError::OutOfTurn { period: 2, day: 0 })
        );
        s.settle(&series, &cfg).unwrap();
        assert_eq!(
            s.choose_ai_strategy(2, AiStrategy::Short, &series, &cfg),
            Err(EngineError::SessionSettled)
        );
    }

    #[test]
    fn three_commitments_complete_default_session() {
        let cfg = ExperimentConfig::default();
        let series = series_from(&vec![500.0; 60]);
        let mut s =
            SessionState::open(SessionMode::Automated, vec![30, 40, 50], &series, &cfg).unwrap();
        for (k, strat) in [AiStrategy::Long, AiStrategy::Holding, AiStrategy::Short]
            .into_iter()
            .enumerate()
        {
            assert!(!s.is_complete());
            s.choose_ai_strategy(k, strat, &series, &cfg).unwrap();
        }
        assert!(s.is_complete());
        assert_eq!(s.settle(&series, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn settlement_roi_example() {
        // V0 = 20507.6 + 100 * 700 = 90507.6; final portfolio worth 95000.
        let cfg = ExperimentConfig {
            period_len: 1,
            periods_per_session: 1,
            lookback: 1,
            ..Default::default()
        };
        let series = series_from(&[700.0, 744.924]);
        let mut s = SessionState::open(SessionMode::Discretion, vec![1], &series, &cfg).unwrap();
        s.apply_discretion_day(0, 0, TradeAction::Hold, &series, &cfg)
            .unwrap();
        let roi = s.settle(&series, &cfg).unwrap();
        let expected = (95000.0 - 90507.6) / 90507.6;
        assert!((roi - expected).abs() < 1e-9);
        assert!((roi - 0.049_635_610_711).abs() < 1e-9);
        assert!(close(s.settlement.unwrap().initial_value, 90507.6));
    }

    #[test]
    fn open_validates_starts() {
        let cfg = small_cfg();
        let series = series_from(&[1.0; 8]);
        assert!(SessionState::open(SessionMode::Automated, vec![3, 6], &series, &cfg).is_err());
        assert!(SessionState::open(SessionMode::Automated, vec![2, 4], &series, &cfg).is_err());
        assert!(SessionState::open(SessionMode::Automated, vec![3], &series, &cfg).is_err());
        let per_period = ExperimentConfig {
            start_draw_policy: StartDrawPolicy::PerPeriod,
            ..small_cfg()
        };
        assert!(
            SessionState::open(SessionMode::Automated, vec![6, 3], &series, &per_period).is_ok()
        );
    }

    #[test]
    fn period_starts_follow_policy() {
        let series = series_from(&vec![10.0; 200]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ExperimentConfig::default();
        for _ in 0..50 {
            let s = draw_period_starts(&series, &cfg, &mut rng).unwrap();
            assert_eq!(s.len(), 3);
            assert!(s[0] >= 30 && s[0] <= 170);
            assert_eq!((s[1] - s[0], s[2] - s[1]), (10, 10));
        }
        let cfg = ExperimentConfig {
            start_draw_policy: StartDrawPolicy::PerPeriod,
            ..cfg
        };
        let s = draw_period_starts(&series, &cfg, &mut rng).unwrap();
        assert!(s.iter().all(|&i| (30..=190).contains(&i)));
    }

    fn to_survey(
        subj: &mut SubjectState,
        series: &PriceSeries,
        cfg: &ExperimentConfig,
        third: SessionMode,
    ) {
        subj.apply(&Transition::AssignTreatment(Treatment::A), series, cfg)
            .unwrap();
        subj.apply(
            &Transition::SubmitLoc(LocResponse::new([true; 20])),
            series,
            cfg,
        )
        .unwrap();
        for n in 1..=3 {
            if n == 3 {
                subj.apply(&Transition::SelectMode(third), series, cfg)
                    .unwrap();
            }
            assert!(matches!(
                subj.pending_step(),
                Some(SystemStep::StartSession(_))
            ));
            subj.apply(
                &Transition::StartSession {
                    period_starts: vec![3, 5],
                },
                series,
                cfg,
            )
            .unwrap();
            play_out(subj, series, cfg);
            assert_eq!(subj.pending_step(), Some(SystemStep::Settle));
            subj.apply(&Transition::Settle, series, cfg).unwrap();
        }
    }

    fn play_out(subj: &mut SubjectState, series: &PriceSeries, cfg: &ExperimentConfig) {
        while let Some(a) = subj.allowed_actions().into_iter().find(|a| {
            matches!(
                a,
                AllowedAction::ChooseStrategy { .. } | AllowedAction::SubmitDecision { .. }
            )
        }) {
            let t = match a {
                AllowedAction::ChooseStrategy { period } => Transition::ChooseStrategy {
                    period,
                    strategy: AiStrategy::Long,
                },
                AllowedAction::SubmitDecision { period, day } => Transition::SubmitDecision {
                    period,
                    day,
                    action: TradeAction::Sell,
                },
                _ => unreachable!(),
            };
            subj.apply(&t, series, cfg).unwrap();
        }
    }

    #[test]
    fn subject_flow_and_guards() {
        let cfg = small_cfg();
        let series = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let mut subj = SubjectState::new("s1");
        assert_eq!(subj.pending_step(), Some(SystemStep::AssignTreatment));
        assert_eq!(
            subj.apply(
                &Transition::SubmitLoc(LocResponse::new([true; 20])),
                &series,
                &cfg
            ),
            Err(EngineError::StageMismatch(Stage::Registered))
        );
        assert_eq!(
            subj.self_select(SessionMode::Automated),
            Err(EngineError::PrerequisiteSessionsIncomplete)
        );
        to_survey(&mut subj, &series, &cfg, SessionMode::Automated);
        assert_eq!(subj.stage, Stage::Survey);
        assert_eq!(subj.sessions[2].mode, SessionMode::Automated);
        assert_eq!(
            subj.sessions.iter().map(|s| s.mode).collect::<Vec<_>>(),
            vec![
                SessionMode::Automated,
                SessionMode::Discretion,
                SessionMode::Automated
            ]
        );
        assert_eq!(
            subj.self_select(SessionMode::Discretion),
            Err(EngineError::AlreadySelected)
        );
        subj.apply(
            &Transition::SubmitSurvey(LikertResponse::new([4; 7]).unwrap()),
            &series,
            &cfg,
        )
        .unwrap();
        assert_eq!(subj.stage, Stage::Done);
        assert_eq!(subj.pending_step(), None);
    }

    #[test]
    fn self_selection_resets_endowment_and_guards() {
        let cfg = small_cfg();
        let series = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let mut subj = SubjectState::new("s1");
        subj.apply(&Transition::AssignTreatment(Treatment::B), &series, &cfg)
            .unwrap();
        subj.apply(
            &Transition::SubmitLoc(LocResponse::new([false; 20])),
            &series,
            &cfg,
        )
        .unwrap();
        for _ in 0..2 {
            subj.apply(
                &Transition::StartSession {
                    period_starts: vec![3, 5],
                },
                &series,
                &cfg,
            )
            .unwrap();
            if subj.stage == Stage::Session2 {
                // Session 2 in progress.
                assert_eq!(
                    subj.self_select(SessionMode::Automated),
                    Err(EngineError::PrerequisiteSessionsIncomplete)
                );
            }
            play_out(&mut subj, &series, &cfg);
            subj.apply(&Transition::Settle, &series, &cfg).unwrap();
        }
        assert_eq!(subj.pending_step(), None);
        subj.self_select(SessionMode::Automated).unwrap();
        assert_eq!(
            subj.self_select(SessionMode::Automated),
            Err(EngineError::AlreadySelected)
        );
        subj.apply(
            &Transition::StartSession {
                period_starts: vec![3, 5],
            },
            &series,
            &cfg,
        )
        .unwrap();
        assert_eq!(subj.sessions[2].mode, SessionMode::Automated);
        assert_eq!(
            subj.sessions[2].portfolio,
            Portfolio {
                usd: 20507.6,
                eth: 100.0
            }
        );
        assert_eq!(
            subj.apply(
                &Transition::StartSession {
                    period_starts: vec![3, 5]
                },
                &series,
                &cfg
            ),
            Err(EngineError::StageMismatch(Stage::Session3))
        );
    }

    #[test]
    fn visibility_examples() {
        let cfg = small_cfg();
        let series = series_from(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let mut subj = SubjectState::new("s1");
        let v = subj.visible_state(&series, &cfg);
        assert!(v.current.is_none() && v.results.is_empty());

        subj.apply(&Transition::AssignTreatment(Treatment::B), &series, &cfg)
            .unwrap();
        subj.apply(
            &Transition::SubmitLoc(LocResponse::new([false; 20])),
            &series,
            &cfg,
        )
        .unwrap();
        subj.apply(
            &Transition::StartSession {
                period_starts: vec![3, 5],
            },
            &series,
            &cfg,
        )
        .unwrap();
        subj.apply(
            &Transition::SubmitDecision {
                period: 0,
                day: 0,
                action: TradeAction::Buy,
            },
            &series,
            &cfg,
        )
        .unwrap();
        let v = subj.visible_state(&series, &cfg);
        let cur = v.current.unwrap();
        assert_eq!((cur.period, cur.day), (0, 1));
        assert_eq!(cur.chart.unwrap().closes, vec![2.0, 3.0, 4.0]);
        assert!(v.results.is_empty());

        play_out(&mut subj, &series, &cfg);
        subj.apply(&Transition::Settle, &series, &cfg).unwrap();
        let v = subj.visible_state(&series, &cfg);
        assert_eq!(v.results.len(), 1);
        assert_eq!(v.results[0].final_eth, 100.0 + 10.0 - 30.0);
    }

    proptest! {
        #[test]
        fn trades_conserve(usd in -1e6f64..1e6, eth in -1e3f64..1e3, price in 0.01f64..1e4, lot in 0.1f64..100.0,
                           action in prop_oneof![Just(TradeAction::Buy), Just(TradeAction::Hold), Just(TradeAction::Sell)]) {
            let p = Portfolio { usd, eth };
            let out = execute_trade(p, action, price, lot, true);
            let tol = 1e-9 * usd.abs().max(eth.abs()).max(1.0);
            prop_assert!((out.portfolio.usd - p.usd + action.sign() * lot * price).abs() <= tol);
            prop_assert!((out.portfolio.eth - p.eth - action.sign() * lot).abs() <= tol);
        }

        #[test]
        fn clamp_mode_never_overdraws(closes in proptest::collection::vec(1.0f64..5000.0, 4),
                                      strategy in prop_oneof![Just(AiStrategy::Long), Just(AiStrategy::Short)]) {
            let cfg = ExperimentConfig { period_len: 4, initial_usd: 5000.0, initial_eth: 15.0,
                                         allow_negative_balances: false, ..Default::default() };
            let (p, trades) = run_period_automated(cfg.endowment(), strategy, &closes, &cfg).unwrap();
            prop_assert!(p.usd >= 0.0 && p.eth >= 0.0);
            prop_assert!(trades.iter().all(|t| t.executed == t.requested || t.executed == TradeAction::Hold));
        }
    }
}
