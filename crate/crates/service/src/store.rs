use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use imis_core::proposer::{Prompt, Segmenter};
use imis_core::storage::{decode_image, encode_csr, encode_png, CsrMask};
use serde::{Deserialize, Serialize};

use crate::session::LiveSession;

struct Slot {
    session: Arc<tokio::sync::Mutex<LiveSession>>,
    touched: Arc<Mutex<Instant>>,
}

/// In-memory sessions with idle expiry. Each session sits behind its own
/// async mutex, so requests to one session are applied one at a time in
/// arrival order while different sessions proceed in parallel.
pub struct SessionStore {
    slots: Mutex<HashMap<String, Slot>>,
    next: AtomicU64,
    /// Distinguishes ids across restarts.
    epoch: u64,
    idle_timeout: Duration,
    snapshot_dir: Option<PathBuf>,
}

/// On-disk form of a session. Steps are not stored; they are replayed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub seed: u64,
    /// Base64 PNG.
    pub image: String,
    pub gt: Option<CsrMask>,
    pub gt_category: Option<u32>,
    pub categories: BTreeMap<String, u32>,
    pub history: Vec<Prompt>,
    pub created_unix: u64,
}

impl Snapshot {
    pub fn of(s: &LiveSession) -> Self {
        Self {
            id: s.id.clone(),
            seed: s.seed,
            image: STANDARD.encode(encode_png(&s.image)),
            gt: s.gt.as_ref().map(encode_csr),
            gt_category: s.gt_category,
            categories: s.categories.clone(),
            history: s.history.clone(),
            created_unix: s.created_unix,
        }
    }

    pub fn restore(&self, segmenter: &dyn Segmenter) -> imis_core::Result<LiveSession> {
        let bytes = STANDARD
            .decode(&self.image)
            .map_err(|e| imis_core::Error::InvalidImage(e.to_string()))?;
        let mut s = LiveSession::new(self.id.clone(), decode_image(&bytes)?, self.seed);
        s.gt = self.gt.as_ref().map(|g| g.decode()).transpose()?;
        s.gt_category = self.gt_category;
        s.categories = self.categories.clone();
        s.history = self.history.clone();
        s.created_unix = self.created_unix;
        s.steps = s.replay(segmenter)?;
        Ok(s)
    }
}

impl SessionStore {
    pub fn new(idle_timeout: Duration, snapshot_dir: Option<PathBuf>) -> Self {
        let epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Self {
            slots: Mutex::new(HashMap::new()),
            next: AtomicU64::new(1),
            epoch,
            idle_timeout,
            snapshot_dir,
        }
    }

    pub fn next_id(&self) -> String {
        format!(
            "{:x}-{}",
            self.epoch,
            self.next.fetch_add(1, Ordering::Relaxed)
        )
    }

    pub fn insert(&self, session: LiveSession) -> Arc<tokio::sync::Mutex<LiveSession>> {
        let id = session.id.clone();
        let arc = Arc::new(tokio::sync::Mutex::new(session));
        let slot = Slot {
            session: arc.clone(),
            touched: Arc::new(Mutex::new(Instant::now())),
        };
        self.slots.lock().expect("store lock").insert(id, slot);
        arc
    }

    /// Looks up a session and marks it as used.
    pub fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<LiveSession>>> {
        let slots = self.slots.lock().expect("store lock");
        let slot = slots.get(id)?;
        *slot.touched.lock().expect("touch lock") = Instant::now();
        Some(slot.session.clone())
    }

    pub fn remove(&self, id: &str) -> bool {
        let removed = self.slots.lock().expect("store lock").remove(id).is_some();
        if removed {
            if let Some(p) = self.snapshot_path(id) {
                let _ = fs::remove_file(p);
            }
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    pub fn expire(&self, now: Instant) -> usize {
        let mut slots = self.slots.lock().expect("store lock");
        let before = slots.len();
        slots.retain(|_, s| {
            now.duration_since(*s.touched.lock().expect("touch lock")) <= self.idle_timeout
        });
        before - slots.len()
    }

    fn snapshot_path(&self, id: &str) -> Option<PathBuf> {
        self.snapshot_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.json")))
    }

    /// Writes the session's snapshot when a snapshot directory is configured.
    pub fn persist(&self, session: &LiveSession) -> std::io::Result<()> {
        let Some(path) = self.snapshot_path(&session.id) else {
            return Ok(());
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string(&Snapshot::of(session)).expect("snapshot serializes");
        fs::write(path, text)
    }

    /// Loads every snapshot in the snapshot directory; unreadable files are
    /// skipped with a warning. Returns the number restored.
    pub fn restore_all(&self, segmenter: &dyn Segmenter) -> usize {
        let Some(dir) = &self.snapshot_dir else {
            return 0;
        };
        let Ok(entries) = fs::read_dir(dir) else {
            return 0;
        };
        let mut n = 0;
        for path in entries.filter_map(|e| e.ok().map(|e| e.path())) {
            match load_snapshot(&path).and_then(|s| s.restore(segmenter).map_err(|e| e.to_string()))
            {
                Ok(session) => {
                    self.insert(session);
                    n += 1;
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "snapshot skipped"),
            }
        }
        n
    }
}

fn load_snapshot(path: &Path) -> Result<Snapshot, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}
