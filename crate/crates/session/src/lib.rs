//! Interactive missions served over HTTP.
//!
//! Each session is a mission played by a person against one recommendation
//! strategy. Every state change is an event appended to the session's
//! journal before the response is sent, and an exported session replays
//! through the same checks as a simulated mission log.

pub mod api;
pub mod model;
pub mod store;

pub use api::{router, system_clock, AppState, Clock};
pub use model::{ClockMode, CreateRequest, Event, Phase, Session, SessionError};
pub use store::{Store, StoreError};
