//! Multi-profile preference adaptation service.
//!
//! Each profile is a base embedding plus an append-only log of
//! `winner ≻ loser` events. The current embedding is always the fold of the
//! per-event update over the log, so it can be rebuilt bit for bit after a
//! restart. Writes to one profile are serialized; different profiles do not
//! contend.

pub mod config;
pub mod error;
pub mod http;
pub mod persist;
pub mod profile;
pub mod store;

pub use config::ServiceConfig;
pub use error::{ErrorBody, Result, ServiceError};
pub use http::{router, serve};
pub use profile::{apply_event, replay, replay_from, EventAck, PreferenceEvent, ProfileSummary, RankedItem};
pub use store::{BaseRef, ConfigPatch, ProfileStore, StoreOptions};
