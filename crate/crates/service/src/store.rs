//! Profile registry with per-profile serialized writes.
//!
//! Each profile has a writer mutex, held for the whole
//! validate → compute → fsync → publish sequence, and a separately locked
//! snapshot that readers clone. Readers therefore never wait on disk I/O
//! and always see a whole vector from before or after an event. Different
//! profiles share nothing but the registry map, which is only write-locked
//! while a profile is being created.

use std::collections::HashMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use prefadapt::{rank_candidates, AdaptConfig, Embedding, EmbeddingTable};
use serde::{Deserialize, Serialize};
use tracing::info;

use crate::error::{Result, ServiceError};
use crate::persist::{self, Checkpoint, ProfileRecord};
use crate::profile::{apply_event, now_ms, replay_from, EventAck, PreferenceEvent, ProfileSummary, RankedItem};

/// Where a new profile's base embedding comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseRef {
    /// Row id in the corpus.
    Id(String),
    Vector(Vec<f64>),
}

/// Fields of [`AdaptConfig`] to override for one profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub epsilon: Option<f64>,
    pub steps: Option<usize>,
    pub temperature: Option<f64>,
    pub renormalize: Option<bool>,
}

impl ConfigPatch {
    pub fn apply(&self, mut cfg: AdaptConfig) -> AdaptConfig {
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.renormalize {
            cfg.renormalize = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StoreOptions {
    /// Checkpoint and truncate a profile's log after this many events; 0 disables compaction.
    pub compact_every: u64,
}

#[derive(Debug)]
struct Snapshot {
    current: Embedding,
    seq: u64,
    updated_ms: u64,
}

#[derive(Debug)]
struct Writer {
    log: Option<File>,
    /// Events after the last checkpoint (all events when never compacted).
    tail: Vec<PreferenceEvent>,
    checkpoint: Option<(u64, Embedding)>,
}

#[derive(Debug)]
struct ProfileEntry {
    id: String,
    base: Embedding,
    cfg: AdaptConfig,
    created_ms: u64,
    dir: Option<PathBuf>,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl ProfileEntry {
    fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock poisoned"))
    }
}

#[derive(Debug)]
pub struct ProfileStore {
    corpus: Arc<EmbeddingTable>,
    data_dir: Option<PathBuf>,
    defaults: AdaptConfig,
    options: StoreOptions,
    profiles: RwLock<HashMap<String, Arc<ProfileEntry>>>,
    next_id: AtomicU64,
}

fn valid_profile_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn drift(current: &Embedding, base: &Embedding) -> f64 {
    current.cosine(base).map(|c| c.clamp(-1.0, 1.0)).unwrap_or(0.0)
}

impl ProfileStore {
    /// Store without persistence.
    pub fn in_memory(corpus: Arc<EmbeddingTable>, defaults: AdaptConfig) -> Result<Self> {
        defaults.validate()?;
        Ok(Self {
            corpus,
            data_dir: None,
            defaults,
            options: StoreOptions::default(),
            profiles: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }

    /// Opens (or creates) a data directory and recovers every profile in it by replay.
    pub fn open(
        corpus: Arc<EmbeddingTable>,
        data_dir: impl AsRef<Path>,
        defaults: AdaptConfig,
        options: StoreOptions,
    ) -> Result<Self> {
        defaults.validate()?;
        let data_dir = data_dir.as_ref().to_path_buf();
        let root = persist::profiles_root(&data_dir);
        fs::create_dir_all(&root)?;
        let mut profiles = HashMap::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(persist::PROFILE_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let entry = Self::recover(&corpus, &dir)?;
            profiles.insert(entry.id.clone(), Arc::new(entry));
        }
        info!(profiles = profiles.len(), dir = %data_dir.display(), "profile store opened");
        Ok(Self {
            corpus,
            data_dir: Some(data_dir),
            defaults,
            options,
            profiles: RwLock::new(profiles),
            next_id: AtomicU64::new(1),
        })
    }

    fn recover(corpus: &EmbeddingTable, dir: &Path) -> Result<ProfileEntry> {
        let record: ProfileRecord = persist::read_json(&dir.join(persist::PROFILE_FILE))?;
        let base = Embedding::new(record.base)?;
        let checkpoint_path = dir.join(persist::CHECKPOINT_FILE);
        let checkpoint = if checkpoint_path.is_file() {
            let cp: Checkpoint = persist::read_json(&checkpoint_path)?;
            Some((cp.seq, Embedding::new(cp.current)?))
        } else {
            None
        };
        let after = checkpoint.as_ref().map_or(0, |c| c.0);
        let tail: Vec<PreferenceEvent> = persist::read_events(dir)?
            .into_iter()
            .filter(|e| e.seq > after)
            .collect();
        let start = match &checkpoint {
            Some((_, current)) => current.clone(),
            None => base.normalized()?,
        };
        let current = replay_from(&start, after, &tail, &record.config, corpus)?;
        let seq = after + tail.len() as u64;
        let updated_ms = tail.last().map_or(record.created_ms, |e| e.timestamp_ms);
        Ok(ProfileEntry {
            id: record.profile_id,
            base,
            cfg: record.config,
            created_ms: record.created_ms,
            dir: Some(dir.to_path_buf()),
            writer: Mutex::new(Writer {
                log: Some(persist::open_log(dir)?),
                tail,
                checkpoint,
            }),
            snapshot: RwLock::new(Arc::new(Snapshot {
                current,
                seq,
                updated_ms,
            })),
        })
    }

    pub fn corpus(&self) -> &Arc<EmbeddingTable> {
        &self.corpus
    }

    pub fn defaults(&self) -> AdaptConfig {
        self.defaults
    }

    pub fn profile_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .profiles
            .read()
            .expect("registry lock poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    fn entry(&self, profile_id: &str) -> Result<Arc<ProfileEntry>> {
        self.profiles
            .read()
            .expect("registry lock poisoned")
            .get(profile_id)
            .cloned()
            .ok_or_else(|| ServiceError::ProfileNotFound(profile_id.to_owned()))
    }

    fn resolve_base(&self, base: BaseRef) -> Result<Embedding> {
        match base {
            BaseRef::Id(id) => self.corpus.get(&id).cloned().ok_or(ServiceError::UnknownIds(vec![id])),
            BaseRef::Vector(v) => {
                if v.len() != self.corpus.dim() {
                    return Err(ServiceError::DimensionMismatch {
                        expected: self.corpus.dim(),
                        found: v.len(),
                    });
                }
                Ok(Embedding::new(v)?)
            }
        }
    }

    pub fn create_profile(&self, base: BaseRef, profile_id: Option<String>, config: ConfigPatch) -> Result<String> {
        let cfg = config.apply(self.defaults);
        cfg.validate()?;
        let base = self.resolve_base(base)?;
        let current = base.normalized()?;

        let mut profiles = self.profiles.write().expect("registry lock poisoned");
        let id = match profile_id {
            Some(id) => {
                if !valid_profile_id(&id) {
                    return Err(ServiceError::Invalid(format!(
                        "profile id '{id}' must be 1-64 characters of [A-Za-z0-9_-]"
                    )));
                }
                if profiles.contains_key(&id) {
                    return Err(ServiceError::DuplicateProfile(id));
                }
                id
            }
            None => loop {
                let candidate = format!("p-{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
                if !profiles.contains_key(&candidate) {
                    break candidate;
                }
            },
        };

        let created_ms = now_ms();
        let (dir, log) = match &self.data_dir {
            Some(data_dir) => {
                let dir = persist::profiles_root(data_dir).join(&id);
                fs::create_dir_all(&dir)?;
                let log = persist::open_log(&dir)?;
                persist::write_json(
                    &dir.join(persist::PROFILE_FILE),
                    &ProfileRecord {
                        profile_id: id.clone(),
                        base: base.as_slice().to_vec(),
                        config: cfg,
                        created_ms,
                    },
                )?;
                (Some(dir), Some(log))
            }
            None => (None, None),
        };
        profiles.insert(
            id.clone(),
            Arc::new(ProfileEntry {
                id: id.clone(),
                base,
                cfg,
                created_ms,
                dir,
                writer: Mutex::new(Writer {
                    log,
                    tail: Vec::new(),
                    checkpoint: None,
                }),
                snapshot: RwLock::new(Arc::new(Snapshot {
                    current,
                    seq: 0,
                    updated_ms: created_ms,
                })),
            }),
        );
        Ok(id)
    }

    /// Applies one preference; returns after the event is durable.
    pub fn record_preference(&self, profile_id: &str, winner_id: &str, loser_id: &str) -> Result<EventAck> {
        let entry = self.entry(profile_id)?;
        if winner_id == loser_id {
            return Err(ServiceError::SelfPair(winner_id.to_owned()));
        }
        let unknown: Vec<String> = [winner_id, loser_id]
            .into_iter()
            .filter(|id| self.corpus.index_of(id).is_none())
            .map(str::to_owned)
            .collect();
        if !unknown.is_empty() {
            return Err(ServiceError::UnknownIds(unknown));
        }
        let winner = self.corpus.get(winner_id).expect("resolved");
        let loser = self.corpus.get(loser_id).expect("resolved");

        let mut writer = entry.writer.lock().expect("writer lock poisoned");
        let before = entry.snapshot();
        let next = apply_event(&before.current, winner, loser, &entry.cfg)?;
        let event = PreferenceEvent {
            seq: before.seq + 1,
            winner_id: winner_id.to_owned(),
            loser_id: loser_id.to_owned(),
            timestamp_ms: now_ms(),
        };
        if let Some(log) = writer.log.as_mut() {
            persist::append_event(log, &event)?;
        }
        writer.tail.push(event.clone());
        let ack = EventAck {
            seq: event.seq,
            drift_cosine: drift(&next, &entry.base),
        };
        *entry.snapshot.write().expect("snapshot lock poisoned") = Arc::new(Snapshot {
            current: next,
            seq: event.seq,
            updated_ms: event.timestamp_ms,
        });

        if self.options.compact_every > 0 && writer.tail.len() as u64 >= self.options.compact_every {
            Self::compact(&entry, &mut writer)?;
        }
        Ok(ack)
    }

    fn compact(entry: &ProfileEntry, writer: &mut Writer) -> Result<()> {
        let snap = entry.snapshot();
        if let Some(dir) = &entry.dir {
            persist::write_json(
                &dir.join(persist::CHECKPOINT_FILE),
                &Checkpoint {
                    seq: snap.seq,
                    current: snap.current.as_slice().to_vec(),
                },
            )?;
            persist::truncate_log_through(dir, &writer.tail, snap.seq)?;
            writer.log = Some(persist::open_log(dir)?);
        }
        writer.tail.clear();
        writer.checkpoint = Some((snap.seq, snap.current.clone()));
        Ok(())
    }

    pub fn get_profile(&self, profile_id: &str) -> Result<ProfileSummary> {
        let entry = self.entry(profile_id)?;
        let snap = entry.snapshot();
        Ok(ProfileSummary {
            profile_id: entry.id.clone(),
            dim: snap.current.dim(),
            seq_count: snap.seq,
            current: snap.current.as_slice().to_vec(),
            drift_cosine: drift(&snap.current, &entry.base),
            config: entry.cfg,
            created_ms: entry.created_ms,
            updated_ms: snap.updated_ms,
        })
    }

    /// Current embedding of a profile.
    pub fn current(&self, profile_id: &str) -> Result<Embedding> {
        Ok(self.entry(profile_id)?.snapshot().current.clone())
    }

    /// Events still held in the log (everything after the last checkpoint).
    pub fn events(&self, profile_id: &str) -> Result<Vec<PreferenceEvent>> {
        let entry = self.entry(profile_id)?;
        let writer = entry.writer.lock().expect("writer lock poisoned");
        Ok(writer.tail.clone())
    }

    /// Replays the stored log and checks it reproduces the live embedding bit for bit.
    pub fn verify(&self, profile_id: &str) -> Result<()> {
        let entry = self.entry(profile_id)?;
        let writer = entry.writer.lock().expect("writer lock poisoned");
        let (after, start) = match &writer.checkpoint {
            Some((seq, current)) => (*seq, current.clone()),
            None => (0, entry.base.normalized()?),
        };
        let rebuilt = replay_from(&start, after, &writer.tail, &entry.cfg, &self.corpus)?;
        let live = entry.snapshot();
        if rebuilt != live.current {
            return Err(ServiceError::Integrity(format!(
                "replay of profile '{profile_id}' diverges from the live embedding"
            )));
        }
        Ok(())
    }

    /// Top `k` candidates for a profile; `None` ranks the whole corpus.
    pub fn rank(&self, profile_id: &str, candidate_ids: Option<&[String]>, k: usize) -> Result<Vec<RankedItem>> {
        let entry = self.entry(profile_id)?;
        if k == 0 {
            return Err(ServiceError::Invalid("k must be at least 1".into()));
        }
        let candidates: Vec<(&str, &Embedding)> = match candidate_ids {
            None => self
                .corpus
                .ids()
                .iter()
                .zip(self.corpus.rows())
                .map(|(id, row)| (id.as_str(), row))
                .collect(),
            Some(ids) => {
                let unknown: Vec<String> = ids
                    .iter()
                    .filter(|id| self.corpus.index_of(id).is_none())
                    .cloned()
                    .collect();
                if !unknown.is_empty() {
                    return Err(ServiceError::UnknownIds(unknown));
                }
                ids.iter()
                    .map(|id| (id.as_str(), self.corpus.get(id).expect("resolved")))
                    .collect()
            }
        };
        let current = entry.snapshot();
        let mut ranked = rank_candidates(&current.current, &candidates)?;
        ranked.truncate(k);
        Ok(ranked
            .into_iter()
            .map(|(id, score)| RankedItem {
                id: id.to_owned(),
                score,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Arc<EmbeddingTable> {
        let rows = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-1.0, 0.0]]
            .iter()
            .map(|r| Embedding::new(r.to_vec()).unwrap())
            .collect();
        Arc::new(EmbeddingTable::new(2, vec!["a".into(), "b".into(), "c".into(), "d".into()], rows).unwrap())
    }

    fn store() -> ProfileStore {
        ProfileStore::in_memory(corpus(), AdaptConfig::default()).unwrap()
    }

    #[test]
    fn create_then_get() {
        let s = store();
        let id = s
            .create_profile(BaseRef::Vector(vec![3.0, 4.0]), None, ConfigPatch::default())
            .unwrap();
        let p = s.get_profile(&id).unwrap();
        assert_eq!(p.current, vec![0.6, 0.8]);
        assert_eq!(p.seq_count, 0);
        assert!((p.drift_cosine - 1.0).abs() < 1e-12);
        let other = s
            .create_profile(BaseRef::Id("a".into()), None, ConfigPatch::default())
            .unwrap();
        assert_ne!(id, other);
    }

    #[test]
    fn create_errors() {
        let s = store();
        assert!(matches!(
            s.create_profile(BaseRef::Vector(vec![1.0, 0.0, 0.0]), None, ConfigPatch::default()),
            Err(ServiceError::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(matches!(
            s.create_profile(BaseRef::Id("zz".into()), None, ConfigPatch::default()),
            Err(ServiceError::UnknownIds(_))
        ));
        s.create_profile(BaseRef::Id("a".into()), Some("me".into()), ConfigPatch::default())
            .unwrap();
        let dup = s.create_profile(BaseRef::Id("a".into()), Some("me".into()), ConfigPatch::default());
        assert!(matches!(dup, Err(ServiceError::DuplicateProfile(_))));
        assert_eq!(dup.unwrap_err().status(), 409);
        let bad = s.create_profile(BaseRef::Id("a".into()), Some("../x".into()), ConfigPatch::default());
        assert_eq!(bad.unwrap_err().status(), 422);
        let bad_cfg = ConfigPatch {
            steps: Some(0),
            ..Default::default()
        };
        assert_eq!(
            s.create_profile(BaseRef::Id("a".into()), None, bad_cfg)
                .unwrap_err()
                .status(),
            422
        );
    }

    #[test]
    fn events_validate_ids() {
        let s = store();
        let id = s
            .create_profile(BaseRef::Id("c".into()), None, ConfigPatch::default())
            .unwrap();
        let e = s.record_preference(&id, "a", "a").unwrap_err();
        assert_eq!((e.status(), e.code()), (422, "self_pair"));
        let e = s.record_preference(&id, "x", "y").unwrap_err();
        assert_eq!(e.status(), 404);
        assert_eq!(e.body().details["unknown_ids"], serde_json::json!(["x", "y"]));
        assert_eq!(s.record_preference("nope", "a", "b").unwrap_err().status(), 404);
        let ack = s.record_preference(&id, "a", "b").unwrap();
        assert_eq!(ack.seq, 1);
        assert_eq!(s.get_profile(&id).unwrap().seq_count, 1);
        s.verify(&id).unwrap();
    }

    #[test]
    fn rank_behaviour() {
        let s = store();
        let id = s
            .create_profile(BaseRef::Id("a".into()), None, ConfigPatch::default())
            .unwrap();
        let all = s.rank(&id, None, 10).unwrap();
        assert_eq!(
            all.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            ["a", "c", "b", "d"]
        );
        assert_eq!(s.rank(&id, None, 2).unwrap().len(), 2);
        assert!(s.rank(&id, Some(&[]), 3).unwrap().is_empty());
        let e = s.rank(&id, Some(&["a".into(), "q".into(), "r".into()]), 1).unwrap_err();
        assert_eq!(e.body().details["unknown_ids"], serde_json::json!(["q", "r"]));
        assert_eq!(s.rank(&id, None, 0).unwrap_err().status(), 422);
    }

    #[test]
    fn winner_gains_on_loser() {
        let s = store();
        let id = s
            .create_profile(BaseRef::Id("a".into()), None, ConfigPatch::default())
            .unwrap();
        let ids = vec!["b".to_string(), "d".to_string()];
        let score = |s: &ProfileStore| {
            let r = s.rank(&id, Some(&ids), 2).unwrap();
            let get = |k: &str| r.iter().find(|x| x.id == k).unwrap().score;
            get("d") - get("b")
        };
        let before = score(&s);
        s.record_preference(&id, "d", "b").unwrap();
        assert!(score(&s) > before);
    }
}
