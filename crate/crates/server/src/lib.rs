//! Std companion to `ethgame-core`: the price file format, the JSON Lines
//! event log and its replay, CSV export, the HTTP session server and the
//! study reports behind the `ethgame` command line.

pub mod api;
pub mod event;
pub mod export;
pub mod journal;
pub mod prices;
pub mod record;
pub mod report;

pub use event::{Event, EventKind};
pub use journal::{Journal, JournalError};
pub use prices::{parse_price_csv, LoadedPrices, PriceSource};
pub use record::{replay, ExperimentRecord};
