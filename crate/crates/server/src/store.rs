//! Append-only event log with an in-memory snapshot folded from it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use happimeter_core::domain::{pair_key, Friendship, MoodInput, ParticipantProfile, SensorSample, UserId};
use happimeter_core::sampling::PromptId;

pub const LOG_FILE: &str = "events.ndjson";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Sensor(SensorSample),
    Mood { id: u64, input: MoodInput },
    Profile(ParticipantProfile),
    /// Creates or replaces the friendship of the pair.
    Friendship(Friendship),
    Unfriend { a: UserId, b: UserId },
    PromptAnswered { user: UserId, prompt: PromptId, mood_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredMood {
    pub id: u64,
    pub input: MoodInput,
}

/// Deterministic fold of the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sensors: BTreeMap<UserId, BTreeMap<DateTime<Utc>, SensorSample>>,
    /// Per user, in arrival order.
    pub moods: BTreeMap<UserId, Vec<StoredMood>>,
    pub profiles: BTreeMap<UserId, ParticipantProfile>,
    #[serde(with = "as_list")]
    pub friendships: BTreeMap<(UserId, UserId), Friendship>,
    pub answered: BTreeMap<UserId, BTreeSet<PromptId>>,
    pub next_mood_id: u64,
    pub n_events: u64,
}

mod as_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(UserId, UserId), Friendship>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(UserId, UserId), Friendship>, D::Error> {
        let v: Vec<Friendship> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|f| (f.key(), f)).collect())
    }
}

impl Snapshot {
    pub fn apply(&mut self, e: &Event) {
        self.n_events += 1;
        match e {
            Event::Sensor(s) => {
                self.sensors.entry(s.user.clone()).or_default().insert(s.timestamp, s.clone());
            }
            Event::Mood { id, input } => {
                self.moods.entry(input.user.clone()).or_default().push(StoredMood { id: *id, input: input.clone() });
                self.next_mood_id = self.next_mood_id.max(id + 1);
            }
            Event::Profile(p) => {
                self.profiles.insert(p.user.clone(), p.clone());
            }
            Event::Friendship(f) => {
                self.friendships.insert(f.key(), f.clone());
            }
            Event::Unfriend { a, b } => {
                self.friendships.remove(&pair_key(a, b));
            }
            Event::PromptAnswered { user, prompt, .. } => {
                self.answered.entry(user.clone()).or_default().insert(*prompt);
            }
        }
    }

    pub fn sensor_history(&self, user: &UserId) -> Vec<SensorSample> {
        self.sensors.get(user).map(|m| m.values().cloned().collect()).unwrap_or_default()
    }

    pub fn friendship(&self, x: &UserId, y: &UserId) -> Option<&Friendship> {
        self.friendships.get(&pair_key(x, y))
    }

    pub fn friendships_of<'a>(&'a self, user: &'a UserId) -> impl Iterator<Item = &'a Friendship> + 'a {
        self.friendships.values().filter(move |f| f.involves(user))
    }

    pub fn users(&self) -> BTreeSet<UserId> {
        let mut u: BTreeSet<UserId> = self.sensors.keys().cloned().collect();
        u.extend(self.moods.keys().cloned());
        u.extend(self.profiles.keys().cloned());
        for (a, b) in self.friendships.keys() {
            u.insert(a.clone());
            u.insert(b.clone());
        }
        u
    }

    pub fn all_moods(&self) -> Vec<MoodInput> {
        let mut all: Vec<&StoredMood> = self.moods.values().flatten().collect();
        all.sort_by_key(|m| m.id);
        all.into_iter().map(|m| m.input.clone()).collect()
    }

    pub fn all_sensors(&self) -> BTreeMap<UserId, Vec<SensorSample>> {
        self.sensors.iter().map(|(u, m)| (u.clone(), m.values().cloned().collect())).collect()
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("snapshot serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Writes are serialized; readers see the snapshot between writes.
pub struct Store {
    log: Option<(PathBuf, Mutex<BufWriter<File>>)>,
    snapshot: RwLock<Snapshot>,
    writer: Mutex<()>,
}

impl Store {
    pub fn in_memory() -> Store {
        Store { log: None, snapshot: RwLock::new(Snapshot::default()), writer: Mutex::new(()) }
    }

    /// Opens (or creates) the log in `dir` and replays it.
    pub fn open(dir: &Path) -> Result<Store, StoreError> {
        let path = dir.join(LOG_FILE);
        let io = |source| StoreError::Io { path: path.clone(), source };
        std::fs::create_dir_all(dir).map_err(io)?;
        let snapshot = if path.exists() { replay(&path)? } else { Snapshot::default() };
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Store {
            log: Some((path, Mutex::new(BufWriter::new(file)))),
            snapshot: RwLock::new(snapshot),
            writer: Mutex::new(()),
        })
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Snapshot> {
        self.snapshot.read().expect("snapshot lock")
    }

    /// Appends events built from the current snapshot. The closure runs under
    /// the writer lock, so check-then-append sequences are atomic.
    pub fn transact<T>(&self, f: impl FnOnce(&Snapshot) -> (Vec<Event>, T)) -> Result<T, StoreError> {
        let _w = self.writer.lock().expect("writer lock");
        let (events, out) = {
            let snap = self.read();
            f(&snap)
        };
        if events.is_empty() {
            return Ok(out);
        }
        if let Some((path, file)) = &self.log {
            let mut file = file.lock().expect("log lock");
            let io = |source| StoreError::Io { path: path.clone(), source };
            for e in &events {
                serde_json::to_writer(&mut *file, e).map_err(|e| io(e.into()))?;
                file.write_all(b"\n").map_err(io)?;
            }
            file.flush().map_err(io)?;
        }
        let mut snap = self.snapshot.write().expect("snapshot lock");
        for e in &events {
            snap.apply(e);
        }
        Ok(out)
    }

    pub fn append(&self, events: Vec<Event>) -> Result<(), StoreError> {
        self.transact(|_| (events, ()))
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }
}

pub fn replay(path: &Path) -> Result<Snapshot, StoreError> {
    let f = File::open(path).map_err(|source| StoreError::Io { path: path.into(), source })?;
    let mut snap = Snapshot::default();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Event = serde_json::from_str(&line)
            .map_err(|e| StoreError::Corrupt { path: path.into(), line: i + 1, message: e.to_string() })?;
        snap.apply(&e);
    }
    Ok(snap)
}
