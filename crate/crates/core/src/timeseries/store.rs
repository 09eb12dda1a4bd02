//! In-memory channel store with optional append-only persistence.
//!
//! Layout of a data directory:
//!
//! ```text
//! channels.json            channel definitions
//! ch-<id>.snapshot.json    periodic snapshot of a channel's state
//! ch-<id>.log              JSON lines appended after the snapshot
//! ```
//!
//! Every accepted write is appended to the log and flushed before `append`
//! returns. Every `snapshot_every` accepted writes the state is snapshotted
//! (write to a temp file, rename) and the log truncated. Opening replays the
//! snapshot and then the log; entries already covered by the snapshot are
//! skipped.
//!
//! Locking: the channel map sits behind one `RwLock`, each channel behind its
//! own. Appends to different channels proceed in parallel; appends to one
//! channel are serialised, and the rate-limit check happens under the same
//! write lock as the append.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_points, AggregateError, AggregatedPoint};
use super::channel::{Channel, ChannelId, Retention};
use super::csv_io::{self, CsvError, DeviceRecord};
use crate::par::Exec;
use crate::sensing::ConcentrationSample;
use crate::time::Timestamp;

pub const DEFAULT_SNAPSHOT_EVERY: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("channel {0} already exists")]
    ChannelExists(ChannelId),
    #[error("invalid channel definition: {0}")]
    InvalidChannel(String),
    #[error("bad write key")]
    BadWriteKey,
    #[error("rate limited, retry after {}s", retry_after_secs(.retry_after))]
    RateLimited { retry_after: Duration },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("sample at {got} is not after the last accepted sample {last} for sensor `{sensor}`")]
    OutOfOrder {
        sensor: String,
        last: Timestamp,
        got: Timestamp,
    },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("channel has no samples")]
    EmptyChannel,
    #[error(transparent)]
    Aggregate(AggregateError),
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whole seconds a client should wait, rounded up.
pub fn retry_after_secs(d: &Duration) -> u64 {
    let ms = d.as_millis() as u64;
    ms.div_ceil(1000)
}

impl StoreError {
    pub fn retry_after_secs(&self) -> Option<u64> {
        match self {
            StoreError::RateLimited { retry_after } => Some(retry_after_secs(retry_after)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub entry_id: u64,
    pub field: String,
    /// Server time the write was accepted, epoch milliseconds.
    pub received_at_ms: i64,
    pub sample: ConcentrationSample,
}

/// Half-open `[start, end)` interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> Result<Self, String> {
        if start < end {
            Ok(TimeRange { start, end })
        } else {
            Err(format!("range start {start} must precede end {end}"))
        }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SensorMark {
    field: String,
    sensor: String,
    last: Timestamp,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    next_entry_id: u64,
    last_accept_ms: Option<i64>,
    marks: Vec<SensorMark>,
    entries: Vec<Entry>,
}

#[derive(Debug)]
struct ChannelState {
    entries: VecDeque<Entry>,
    next_entry_id: u64,
    last_accept_ms: Option<i64>,
    last_sample: HashMap<(String, String), Timestamp>,
    log: Option<File>,
    since_snapshot: usize,
}

impl ChannelState {
    fn empty() -> Self {
        ChannelState {
            entries: VecDeque::new(),
            next_entry_id: 1,
            last_accept_ms: None,
            last_sample: HashMap::new(),
            log: None,
            since_snapshot: 0,
        }
    }

    fn apply(&mut self, entry: Entry, retention: Retention) {
        self.next_entry_id = self.next_entry_id.max(entry.entry_id + 1);
        self.last_accept_ms = Some(
            self.last_accept_ms
                .map_or(entry.received_at_ms, |t| t.max(entry.received_at_ms)),
        );
        let key = (entry.field.clone(), entry.sample.sensor_id.clone());
        let ts = entry.sample.timestamp;
        self.last_sample
            .entry(key)
            .and_modify(|t| *t = (*t).max(ts))
            .or_insert(ts);
        self.entries.push_back(entry);
        self.enforce_retention(retention);
    }

    fn enforce_retention(&mut self, retention: Retention) {
        match retention {
            Retention::Unlimited => {}
            Retention::Count(n) => {
                while self.entries.len() > n {
                    self.entries.pop_front();
                }
            }
            Retention::MaxAgeSecs(age) => {
                let newest = self.entries.iter().map(|e| e.sample.timestamp).max();
                if let Some(newest) = newest {
                    let cutoff = newest.epoch_seconds() - age;
                    self.entries.retain(|e| e.sample.timestamp.epoch_seconds() >= cutoff);
                }
            }
        }
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            next_entry_id: self.next_entry_id,
            last_accept_ms: self.last_accept_ms,
            marks: self
                .last_sample
                .iter()
                .map(|((field, sensor), last)| SensorMark {
                    field: field.clone(),
                    sensor: sensor.clone(),
                    last: *last,
                })
                .collect(),
            entries: self.entries.iter().cloned().collect(),
        }
    }
}

#[derive(Debug)]
struct ChannelSlot {
    def: Channel,
    state: RwLock<ChannelState>,
}

#[derive(Debug)]
pub struct ChannelStore {
    dir: Option<PathBuf>,
    snapshot_every: usize,
    channels: RwLock<BTreeMap<ChannelId, Arc<ChannelSlot>>>,
}

impl Default for ChannelStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn read_lock<T>(l: &RwLock<T>) -> std::sync::RwLockReadGuard<'_, T> {
    l.read().unwrap_or_else(|p| p.into_inner())
}

fn write_lock<T>(l: &RwLock<T>) -> std::sync::RwLockWriteGuard<'_, T> {
    l.write().unwrap_or_else(|p| p.into_inner())
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl ChannelStore {
    pub fn in_memory() -> Self {
        ChannelStore {
            dir: None,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            channels: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens (creating if needed) a persistent store rooted at `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(dir, DEFAULT_SNAPSHOT_EVERY)
    }

    pub fn open_with(dir: impl AsRef<Path>, snapshot_every: usize) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let store = ChannelStore {
            dir: Some(dir.clone()),
            snapshot_every: snapshot_every.max(1),
            channels: RwLock::new(BTreeMap::new()),
        };
        let defs_path = dir.join("channels.json");
        if defs_path.exists() {
            let defs: Vec<Channel> = serde_json::from_slice(&fs::read(&defs_path)?)
                .map_err(|e| StoreError::Corrupt {
                    path: defs_path.clone(),
                    message: e.to_string(),
                })?;
            let mut map = write_lock(&store.channels);
            for def in defs {
                let state = store.load_channel(&def)?;
                map.insert(
                    def.id,
                    Arc::new(ChannelSlot {
                        def,
                        state: RwLock::new(state),
                    }),
                );
            }
        }
        Ok(store)
    }

    pub fn is_persistent(&self) -> bool {
        self.dir.is_some()
    }

    fn log_path(&self, id: ChannelId) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("ch-{id}.log")))
    }

    fn snapshot_path(&self, id: ChannelId) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("ch-{id}.snapshot.json")))
    }

    fn load_channel(&self, def: &Channel) -> Result<ChannelState, StoreError> {
        let mut state = ChannelState::empty();
        if let Some(path) = self.snapshot_path(def.id).filter(|p| p.exists()) {
            let snap: Snapshot =
                serde_json::from_slice(&fs::read(&path)?).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            state.next_entry_id = snap.next_entry_id;
            state.last_accept_ms = snap.last_accept_ms;
            state.last_sample = snap
                .marks
                .into_iter()
                .map(|m| ((m.field, m.sensor), m.last))
                .collect();
            state.entries = snap.entries.into();
        }
        let log_path = self.log_path(def.id).expect("persistent store");
        if log_path.exists() {
            let lines: Vec<String> =
                BufReader::new(File::open(&log_path)?).lines().collect::<Result<_, _>>()?;
            let n = lines.len();
            for (k, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Entry>(&line) {
                    Ok(entry) if entry.entry_id >= state.next_entry_id => {
                        state.apply(entry, def.retention)
                    }
                    Ok(_) => {}
                    // A torn final line can only come from a crash mid-write;
                    // that write was never acknowledged.
                    Err(_) if k + 1 == n => {}
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path: log_path.clone(),
                            message: format!("line {}: {e}", k + 1),
                        })
                    }
                }
            }
        }
        state.log = Some(OpenOptions::new().create(true).append(true).open(&log_path)?);
        Ok(state)
    }

    fn persist_definitions(&self, map: &BTreeMap<ChannelId, Arc<ChannelSlot>>) -> Result<(), StoreError> {
        if let Some(dir) = &self.dir {
            let defs: Vec<&Channel> = map.values().map(|s| &s.def).collect();
            let json = serde_json::to_vec_pretty(&defs).expect("channel definitions serialise");
            write_atomically(&dir.join("channels.json"), &json)?;
        }
        Ok(())
    }

    pub fn create_channel(&self, def: Channel) -> Result<(), StoreError> {
        def.validate().map_err(StoreError::InvalidChannel)?;
        let mut map = write_lock(&self.channels);
        if map.contains_key(&def.id) {
            return Err(StoreError::ChannelExists(def.id));
        }
        let state = if self.dir.is_some() {
            self.load_channel(&def)?
        } else {
            ChannelState::empty()
        };
        map.insert(
            def.id,
            Arc::new(ChannelSlot {
                def,
                state: RwLock::new(state),
            }),
        );
        self.persist_definitions(&map)
    }

    /// Creates the channel unless one with the same id exists; an existing
    /// channel keeps its data and has its definition replaced.
    pub fn ensure_channel(&self, def: Channel) -> Result<(), StoreError> {
        def.validate().map_err(StoreError::InvalidChannel)?;
        let mut map = write_lock(&self.channels);
        if let Some(existing) = map.get(&def.id) {
            if existing.def == def {
                return Ok(());
            }
            let slot = existing.clone();
            let state = std::mem::replace(&mut *write_lock(&slot.state), ChannelState::empty());
            map.insert(
                def.id,
                Arc::new(ChannelSlot {
                    def,
                    state: RwLock::new(state),
                }),
            );
            return self.persist_definitions(&map);
        }
        drop(map);
        self.create_channel(def)
    }

    fn slot(&self, id: ChannelId) -> Result<Arc<ChannelSlot>, StoreError> {
        read_lock(&self.channels)
            .get(&id)
            .cloned()
            .ok_or(StoreError::UnknownChannel(id))
    }

    pub fn channel(&self, id: ChannelId) -> Result<Channel, StoreError> {
        Ok(self.slot(id)?.def.clone())
    }

    pub fn channel_ids(&self) -> Vec<ChannelId> {
        read_lock(&self.channels).keys().copied().collect()
    }

    /// Rate-limited, authenticated write. `now_ms` is the server clock.
    pub fn append(
        &self,
        id: ChannelId,
        write_key: &str,
        field: &str,
        sample: ConcentrationSample,
        now_ms: i64,
    ) -> Result<u64, StoreError> {
        let slot = self.slot(id)?;
        if slot.def.write_key != write_key {
            return Err(StoreError::BadWriteKey);
        }
        let mut state = write_lock(&slot.state);
        if let Some(last) = state.last_accept_ms {
            let elapsed = now_ms.saturating_sub(last).max(0) as u128;
            let interval = slot.def.min_write_interval.as_millis();
            if elapsed < interval {
                return Err(StoreError::RateLimited {
                    retry_after: Duration::from_millis((interval - elapsed) as u64),
                });
            }
        }
        self.insert_locked(&slot, &mut state, field, sample, now_ms)
    }

    /// Bulk load that skips authentication and rate limiting (used for
    /// imports and replays of historical data). Per-sensor ordering is still
    /// enforced.
    pub fn import_records(&self, id: ChannelId, records: &[DeviceRecord], now_ms: i64) -> Result<usize, StoreError> {
        let slot = self.slot(id)?;
        let mut state = write_lock(&slot.state);
        for r in records {
            self.insert_locked(&slot, &mut state, &r.field, r.to_sample(), now_ms)?;
        }
        Ok(records.len())
    }

    fn insert_locked(
        &self,
        slot: &ChannelSlot,
        state: &mut ChannelState,
        field: &str,
        sample: ConcentrationSample,
        now_ms: i64,
    ) -> Result<u64, StoreError> {
        if !slot.def.has_field(field) {
            return Err(StoreError::UnknownField(field.to_string()));
        }
        if !(sample.pm25.is_finite() && sample.pm25 >= 0.0) {
            return Err(StoreError::InvalidSample(format!(
                "concentration must be finite and >= 0, got {}",
                sample.pm25
            )));
        }
        let key = (field.to_string(), sample.sensor_id.clone());
        if let Some(last) = state.last_sample.get(&key) {
            if sample.timestamp <= *last {
                return Err(StoreError::OutOfOrder {
                    sensor: sample.sensor_id.clone(),
                    last: *last,
                    got: sample.timestamp,
                });
            }
        }
        let entry = Entry {
            entry_id: state.next_entry_id,
            field: field.to_string(),
            received_at_ms: now_ms,
            sample,
        };
        if let Some(log) = state.log.as_mut() {
            let mut line = serde_json::to_vec(&entry).expect("entries serialise");
            line.push(b'\n');
            log.write_all(&line)?;
            log.flush()?;
        }
        let id = entry.entry_id;
        state.apply(entry, slot.def.retention);
        state.since_snapshot += 1;
        if state.since_snapshot >= self.snapshot_every {
            self.snapshot_locked(slot.def.id, state)?;
        }
        Ok(id)
    }

    fn snapshot_locked(&self, id: ChannelId, state: &mut ChannelState) -> Result<(), StoreError> {
        if let (Some(snap_path), Some(log_path)) = (self.snapshot_path(id), self.log_path(id)) {
            let json = serde_json::to_vec(&state.snapshot()).expect("snapshot serialises");
            write_atomically(&snap_path, &json)?;
            state.log = None;
            state.log = Some(File::create(&log_path)?);
        }
        state.since_snapshot = 0;
        Ok(())
    }

    /// Writes a snapshot of every channel and truncates the logs.
    pub fn checkpoint(&self) -> Result<(), StoreError> {
        let slots: Vec<Arc<ChannelSlot>> = read_lock(&self.channels).values().cloned().collect();
        for slot in slots {
            let mut state = write_lock(&slot.state);
            self.snapshot_locked(slot.def.id, &mut state)?;
        }
        Ok(())
    }

    /// Entries in id order, optionally restricted to a field and a range of
    /// sample timestamps.
    pub fn entries(
        &self,
        id: ChannelId,
        field: Option<&str>,
        range: Option<TimeRange>,
    ) -> Result<Vec<Entry>, StoreError> {
        let slot = self.slot(id)?;
        let state = read_lock(&slot.state);
        Ok(state
            .entries
            .iter()
            .filter(|e| field.is_none_or(|f| e.field == f))
            .filter(|e| range.is_none_or(|r| r.contains(e.sample.timestamp)))
            .cloned()
            .collect())
    }

    pub fn points(
        &self,
        id: ChannelId,
        field: &str,
        range: Option<TimeRange>,
    ) -> Result<Vec<(Timestamp, f64)>, StoreError> {
        let slot = self.slot(id)?;
        if !slot.def.has_field(field) {
            return Err(StoreError::UnknownField(field.to_string()));
        }
        let state = read_lock(&slot.state);
        Ok(state
            .entries
            .iter()
            .filter(|e| e.field == field)
            .filter(|e| range.is_none_or(|r| r.contains(e.sample.timestamp)))
            .map(|e| (e.sample.timestamp, e.sample.pm25))
            .collect())
    }

    pub fn aggregate(
        &self,
        id: ChannelId,
        field: &str,
        bucket_minutes: u32,
        exec: Exec,
    ) -> Result<Vec<AggregatedPoint>, StoreError> {
        let points = self.points(id, field, None)?;
        aggregate_points(&points, bucket_minutes, exec).map_err(|e| match e {
            AggregateError::Empty => StoreError::EmptyChannel,
            other => StoreError::Aggregate(other),
        })
    }

    pub fn export_records(&self, id: ChannelId) -> Result<Vec<DeviceRecord>, StoreError> {
        Ok(self
            .entries(id, None, None)?
            .iter()
            .map(|e| DeviceRecord::from_sample(&e.sample, e.field.clone()))
            .collect())
    }

    pub fn export_csv<W: Write>(&self, id: ChannelId, output: W) -> Result<(), StoreError> {
        csv_io::write_device_csv(output, &self.export_records(id)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(ts: i64, v: f64) -> ConcentrationSample {
        ConcentrationSample {
            timestamp: Timestamp(ts),
            pm25: v,
            pm1: None,
            sensor_id: "s1".into(),
            location: String::new(),
        }
    }

    fn store() -> ChannelStore {
        let s = ChannelStore::in_memory();
        s.create_channel(Channel::new(1, "ibes", "secret")).unwrap();
        s
    }

    #[test]
    fn thirty_seconds_apart_both_accepted() {
        let s = store();
        assert_eq!(s.append(1, "secret", "pm25", sample(0, 1.0), 0).unwrap(), 1);
        assert_eq!(s.append(1, "secret", "pm25", sample(30, 2.0), 30_000).unwrap(), 2);
    }

    #[test]
    fn five_seconds_apart_is_rate_limited() {
        let s = store();
        s.append(1, "secret", "pm25", sample(0, 1.0), 0).unwrap();
        let err = s.append(1, "secret", "pm25", sample(5, 2.0), 5_000).unwrap_err();
        assert_eq!(err.retry_after_secs(), Some(25));
        // partial seconds round up
        let err = s.append(1, "secret", "pm25", sample(5, 2.0), 5_500).unwrap_err();
        assert_eq!(err.retry_after_secs(), Some(25));
        let err = s.append(1, "secret", "pm25", sample(5, 2.0), 29_999).unwrap_err();
        assert_eq!(err.retry_after_secs(), Some(1));
        assert_eq!(s.entries(1, None, None).unwrap().len(), 1);
    }

    #[test]
    fn auth_and_lookup_errors() {
        let s = store();
        assert!(matches!(
            s.append(1, "wrong", "pm25", sample(0, 1.0), 0),
            Err(StoreError::BadWriteKey)
        ));
        assert!(matches!(
            s.append(9, "secret", "pm25", sample(0, 1.0), 0),
            Err(StoreError::UnknownChannel(9))
        ));
        assert!(matches!(
            s.append(1, "secret", "pm10", sample(0, 1.0), 0),
            Err(StoreError::UnknownField(_))
        ));
        assert!(matches!(s.aggregate(1, "pm25", 60, Exec::Sequential), Err(StoreError::EmptyChannel)));
    }

    #[test]
    fn out_of_order_rejected() {
        let s = store();
        s.append(1, "secret", "pm25", sample(100, 1.0), 0).unwrap();
        assert!(matches!(
            s.append(1, "secret", "pm25", sample(100, 1.0), 60_000),
            Err(StoreError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn retention_count() {
        let s = ChannelStore::in_memory();
        s.create_channel(Channel::new(2, "x", "k").with_retention(Retention::Count(3))).unwrap();
        for k in 0..10 {
            s.append(2, "k", "pm25", sample(k * 30, k as f64), k * 30_000).unwrap();
        }
        let e = s.entries(2, None, None).unwrap();
        assert_eq!(e.iter().map(|e| e.entry_id).collect::<Vec<_>>(), vec![8, 9, 10]);
    }

    #[test]
    fn persistence_survives_reopen_across_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = ChannelStore::open_with(dir.path(), 4).unwrap();
            s.create_channel(Channel::new(1, "ibes", "secret")).unwrap();
            for k in 0..10 {
                s.append(1, "secret", "pm25", sample(k * 30, k as f64 * 1.5), k * 30_000).unwrap();
            }
        }
        let s = ChannelStore::open_with(dir.path(), 4).unwrap();
        let e = s.entries(1, None, None).unwrap();
        assert_eq!(e.len(), 10);
        assert_eq!(e[9].sample.pm25, 13.5);
        // rate-limit and id state carried over
        assert!(matches!(
            s.append(1, "secret", "pm25", sample(400, 1.0), 9 * 30_000 + 1000),
            Err(StoreError::RateLimited { .. })
        ));
        assert_eq!(s.append(1, "secret", "pm25", sample(400, 1.0), 10 * 30_000).unwrap(), 11);
    }

    #[test]
    fn export_import_identity() {
        let s = store();
        for (k, v) in [(0, 1.25), (30, 2.5), (60, 3.0)] {
            s.append(1, "secret", "pm25", sample(k, v), k * 1000).unwrap();
        }
        let mut first = Vec::new();
        s.export_csv(1, &mut first).unwrap();

        let records = csv_io::read_device_csv(first.as_slice()).unwrap();
        let t = ChannelStore::in_memory();
        t.create_channel(Channel::new(1, "copy", "k")).unwrap();
        t.import_records(1, &records, 0).unwrap();
        let mut second = Vec::new();
        t.export_csv(1, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
