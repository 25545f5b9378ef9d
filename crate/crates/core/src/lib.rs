//! Pure game logic for the ETH investment classroom experiment.
//!
//! Everything here is deterministic and free of IO: the caller supplies the
//! price series, the random source and the sequence of subject actions, and
//! gets back state transitions. The `ethgame-server` crate layers
//! persistence, HTTP and the command line on top.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod engine;
pub mod instruments;
pub mod pricedata;
pub mod stats;

pub use engine::{
    AiStrategy, EngineError, ExperimentConfig, Portfolio, SessionMode, SessionState, Stage,
    StartDrawPolicy, SubjectState, TradeAction, Transition, Treatment,
};
pub use instruments::{LikertResponse, LocKey, LocResponse};
pub use pricedata::{ChartWindow, PriceError, PricePoint, PriceSeries};
