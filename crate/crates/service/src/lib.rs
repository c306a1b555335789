//! Live compensatory-tracking sessions for human participants.
//!
//! A session drives the scheduled plant from the participant's axis input
//! at 100 Hz and streams the tracking error at 50 Hz over a WebSocket.
//! Finished runs are kept as a CSV record plus a JSON sidecar, which the
//! analysis pipeline ingests directly.
//!
//! HTTP routes: `POST /sessions`, `GET /sessions`, `GET /sessions/{id}`,
//! `POST /sessions/{id}/start`, `POST /sessions/{id}/abort`,
//! `POST /sessions/{id}/finalize`, `GET /sessions/{id}/record` (CSV),
//! `GET /sessions/{id}/ws` and `GET /healthz`.

pub mod error;
pub mod live;
pub mod record;
pub mod server;
pub mod trial;

pub use error::{Result, ServiceError};
pub use live::{LiveSession, Phase, SessionConfig, SessionStatus, StepOutput, FRAME_DIVIDER};
pub use record::{load, replay, save, RecordMeta, RecordPaths, RunRecord, RECORD_COLUMNS};
pub use server::{bind, router, serve, AppState, ClientMessage, ServerMessage, ServiceConfig};
pub use trial::{TrialSpec, WARM_UP_PRESET};
