//! Label store: an append-only JSON-lines journal plus periodic snapshots.
//!
//! Every write is appended and synced to `journal.jsonl` before the
//! in-memory state is swapped, so an acknowledged label survives a crash.
//! Readers load the current state without locking. The journal is never
//! truncated except to drop a torn final line left by an interrupted write.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

const SNAPSHOT_SCHEMA_VERSION: u32 = 1;
const JOURNAL: &str = "journal.jsonl";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub class_id: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub class_id: String,
    pub by: String,
    pub timestamp: DateTime<Utc>,
}

/// Labels and resolutions of one sample.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLabels {
    /// post id → annotator id → label.
    pub labels: BTreeMap<String, BTreeMap<String, LabelEntry>>,
    pub resolutions: BTreeMap<String, Resolution>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreState {
    /// Sequence number of the last applied journal entry.
    pub seq: u64,
    pub samples: BTreeMap<String, Arc<SampleLabels>>,
}

impl StoreState {
    pub fn sample(&self, id: &str) -> Option<&SampleLabels> {
        self.samples.get(id).map(Arc::as_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Label {
        sample_id: String,
        post_id: String,
        annotator_id: String,
        class_id: String,
        /// Class this label replaced, if any.
        previous: Option<String>,
    },
    Resolve {
        sample_id: String,
        post_id: String,
        class_id: String,
        by: String,
        previous: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    schema_version: u32,
    seq: u64,
    samples: BTreeMap<String, SampleLabels>,
}

/// Result of a write request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteOutcome {
    Created,
    Updated,
    /// Same value as already stored; nothing was journaled.
    Unchanged,
}

fn apply(state: &mut StoreState, entry: &JournalEntry) {
    state.seq = entry.seq;
    match &entry.event {
        Event::Label {
            sample_id,
            post_id,
            annotator_id,
            class_id,
            ..
        } => {
            let sample = Arc::make_mut(state.samples.entry(sample_id.clone()).or_default());
            sample.labels.entry(post_id.clone()).or_default().insert(
                annotator_id.clone(),
                LabelEntry {
                    class_id: class_id.clone(),
                    timestamp: entry.timestamp,
                },
            );
        }
        Event::Resolve {
            sample_id,
            post_id,
            class_id,
            by,
            ..
        } => {
            let sample = Arc::make_mut(state.samples.entry(sample_id.clone()).or_default());
            sample.resolutions.insert(
                post_id.clone(),
                Resolution {
                    class_id: class_id.clone(),
                    by: by.clone(),
                    timestamp: entry.timestamp,
                },
            );
        }
    }
}

struct Writer {
    journal: File,
    since_snapshot: usize,
}

pub struct Store {
    dir: PathBuf,
    state: ArcSwap<StoreState>,
    writer: Mutex<Writer>,
    snapshot_every: usize,
}

impl Store {
    /// Opens or creates a store in `dir`, replaying the journal past the
    /// latest snapshot.
    pub fn open(dir: &Path, snapshot_every: usize) -> ServiceResult<Self> {
        fs::create_dir_all(dir)?;
        let mut state = StoreState::default();
        let snap_path = dir.join(SNAPSHOT);
        if snap_path.exists() {
            let snap: Snapshot = serde_json::from_reader(BufReader::new(File::open(&snap_path)?))
                .map_err(|e| ServiceError::Corrupt(format!("{}: {e}", snap_path.display())))?;
            if snap.schema_version != SNAPSHOT_SCHEMA_VERSION {
                return Err(ServiceError::Corrupt(format!(
                    "snapshot schema version {} is not supported",
                    snap.schema_version
                )));
            }
            state.seq = snap.seq;
            state.samples = snap.samples.into_iter().map(|(k, v)| (k, Arc::new(v))).collect();
        }

        let journal_path = dir.join(JOURNAL);
        let mut replayed = 0usize;
        if journal_path.exists() {
            let mut good_len = 0u64;
            let mut reader = BufReader::new(File::open(&journal_path)?);
            let mut line = String::new();
            let mut lineno = 0usize;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                // A torn tail was never acknowledged; drop it.
                if !line.ends_with('\n') {
                    break;
                }
                let entry: JournalEntry = serde_json::from_str(line.trim_end())
                    .map_err(|e| ServiceError::Corrupt(format!("journal line {lineno}: {e}")))?;
                good_len += n as u64;
                if entry.seq <= state.seq {
                    continue;
                }
                if entry.seq != state.seq + 1 {
                    return Err(ServiceError::Corrupt(format!(
                        "journal line {lineno}: sequence {} follows {}",
                        entry.seq, state.seq
                    )));
                }
                apply(&mut state, &entry);
                replayed += 1;
            }
            let file = OpenOptions::new().write(true).open(&journal_path)?;
            if file.metadata()?.len() != good_len {
                tracing::warn!(path = %journal_path.display(), "dropping torn journal tail");
                file.set_len(good_len)?;
                file.sync_all()?;
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        Ok(Store {
            dir: dir.to_owned(),
            state: ArcSwap::from_pointee(state),
            writer: Mutex::new(Writer {
                journal,
                since_snapshot: replayed,
            }),
            snapshot_every: snapshot_every.max(1),
        })
    }

    pub fn state(&self) -> Arc<StoreState> {
        self.state.load_full()
    }

    /// Records `annotator`'s label for a post. Fails once the post is resolved.
    pub fn submit_label(
        &self,
        sample_id: &str,
        post_id: &str,
        annotator_id: &str,
        class_id: &str,
    ) -> ServiceResult<WriteOutcome> {
        self.write(|state| {
            let sample = state.sample(sample_id);
            if sample.is_some_and(|s| s.resolutions.contains_key(post_id)) {
                return Err(ServiceError::Conflict(format!("post `{post_id}` is already resolved")));
            }
            let previous = sample
                .and_then(|s| s.labels.get(post_id))
                .and_then(|m| m.get(annotator_id))
                .map(|e| e.class_id.clone());
            if previous.as_deref() == Some(class_id) {
                return Ok(None);
            }
            Ok(Some(Event::Label {
                sample_id: sample_id.to_owned(),
                post_id: post_id.to_owned(),
                annotator_id: annotator_id.to_owned(),
                class_id: class_id.to_owned(),
                previous,
            }))
        })
    }

    /// Sets the final class of a post carrying at least two labels.
    pub fn resolve(&self, sample_id: &str, post_id: &str, class_id: &str, by: &str) -> ServiceResult<WriteOutcome> {
        self.write(|state| {
            let sample = state.sample(sample_id);
            let n_labels = sample.and_then(|s| s.labels.get(post_id)).map_or(0, |m| m.len());
            if n_labels < 2 {
                return Err(ServiceError::Conflict(format!(
                    "post `{post_id}` has {n_labels} label(s); resolution needs at least 2"
                )));
            }
            let previous = sample
                .and_then(|s| s.resolutions.get(post_id))
                .map(|r| r.class_id.clone());
            if previous.as_deref() == Some(class_id) {
                return Ok(None);
            }
            Ok(Some(Event::Resolve {
                sample_id: sample_id.to_owned(),
                post_id: post_id.to_owned(),
                class_id: class_id.to_owned(),
                by: by.to_owned(),
                previous,
            }))
        })
    }

    fn write(&self, decide: impl FnOnce(&StoreState) -> ServiceResult<Option<Event>>) -> ServiceResult<WriteOutcome> {
        let mut writer = self.writer.lock().map_err(|_| ServiceError::Corrupt("writer lock poisoned".into()))?;
        let current = self.state.load_full();
        let Some(event) = decide(&current)? else {
            return Ok(WriteOutcome::Unchanged);
        };
        let outcome = match &event {
            Event::Label { previous, .. } | Event::Resolve { previous, .. } => {
                if previous.is_some() {
                    WriteOutcome::Updated
                } else {
                    WriteOutcome::Created
                }
            }
        };
        let entry = JournalEntry {
            seq: current.seq + 1,
            timestamp: Utc::now(),
            event,
        };
        let mut line = serde_json::to_vec(&entry).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
        line.push(b'\n');
        writer.journal.write_all(&line)?;
        writer.journal.sync_data()?;

        let mut next = StoreState::clone(&current);
        apply(&mut next, &entry);
        let next = Arc::new(next);
        self.state.store(next.clone());

        writer.since_snapshot += 1;
        if writer.since_snapshot >= self.snapshot_every {
            self.write_snapshot(&next)?;
            writer.since_snapshot = 0;
        }
        Ok(outcome)
    }

    fn write_snapshot(&self, state: &StoreState) -> ServiceResult<()> {
        let snap = Snapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            seq: state.seq,
            samples: state
                .samples
                .iter()
                .map(|(k, v)| (k.clone(), SampleLabels::clone(v)))
                .collect(),
        };
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, &snap).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
        f.sync_all()?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT))?;
        Ok(())
    }

    /// Every journal entry in order, for auditing.
    pub fn journal(&self) -> ServiceResult<Vec<JournalEntry>> {
        let _guard = self.writer.lock().map_err(|_| ServiceError::Corrupt("writer lock poisoned".into()))?;
        let reader = BufReader::new(File::open(self.dir.join(JOURNAL))?);
        reader
            .lines()
            .map(|l| serde_json::from_str(&l?).map_err(|e| ServiceError::Corrupt(e.to_string())))
            .collect()
    }
}
