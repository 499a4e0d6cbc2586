use prefadapt::{adapt, AdaptConfig, Embedding, EmbeddingTable, PreferencePair};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// One acknowledged `winner ≻ loser` observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceEvent {
    pub seq: u64,
    pub winner_id: String,
    pub loser_id: String,
    pub timestamp_ms: u64,
}

/// Read-only view of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub profile_id: String,
    pub dim: usize,
    pub seq_count: u64,
    pub current: Vec<f64>,
    pub drift_cosine: f64,
    pub config: AdaptConfig,
    pub created_ms: u64,
    pub updated_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventAck {
    pub seq: u64,
    pub drift_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub id: String,
    pub score: f64,
}

/// The update applied for one event, shared by the online path and replay.
pub fn apply_event(current: &Embedding, winner: &Embedding, loser: &Embedding, cfg: &AdaptConfig) -> Result<Embedding> {
    let pair = PreferencePair::new(winner, loser)?;
    Ok(adapt(current, &[pair], cfg)?.0)
}

/// Folds events onto `start`, which already reflects every event up to `after_seq`.
pub fn replay_from(
    start: &Embedding,
    after_seq: u64,
    events: &[PreferenceEvent],
    cfg: &AdaptConfig,
    corpus: &EmbeddingTable,
) -> Result<Embedding> {
    let mut current = start.clone();
    for (e, expected) in events.iter().zip(after_seq + 1..) {
        if e.seq != expected {
            return Err(ServiceError::Integrity(format!(
                "expected seq {expected}, found {}",
                e.seq
            )));
        }
        let lookup = |id: &str| {
            corpus
                .get(id)
                .ok_or_else(|| ServiceError::Integrity(format!("event {} references unknown id '{id}'", e.seq)))
        };
        current = apply_event(&current, lookup(&e.winner_id)?, lookup(&e.loser_id)?, cfg)?;
    }
    Ok(current)
}

/// Rebuilds a profile's current embedding from its base and full log.
pub fn replay(
    base: &Embedding,
    events: &[PreferenceEvent],
    cfg: &AdaptConfig,
    corpus: &EmbeddingTable,
) -> Result<Embedding> {
    replay_from(&base.normalized()?, 0, events, cfg, corpus)
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
