//! Append-only JSON-lines persistence for news, usage events and follows.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::model::{FollowEdge, NewsItem, UsageEvent};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage full while writing {}", path.display())]
    StorageFull { path: PathBuf },
    #[error("{}:{line}: corrupt record: {message}", path.display())]
    CorruptRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::StorageFull {
            StoreError::StorageFull {
                path: path.to_path_buf(),
            }
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

/// File names inside a data directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreLayout {
    pub data_dir: PathBuf,
}

impl StoreLayout {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
        }
    }

    pub fn news(&self) -> PathBuf {
        self.data_dir.join("news.jsonl")
    }

    pub fn events(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }

    pub fn follows(&self) -> PathBuf {
        self.data_dir.join("follows.jsonl")
    }

    pub fn profiles(&self) -> PathBuf {
        self.data_dir.join("profiles.jsonl")
    }

    pub fn news_similarity(&self) -> PathBuf {
        self.data_dir.join("news_similarity.csv")
    }

    pub fn user_news_base(&self) -> PathBuf {
        self.data_dir.join("user_news_base.csv")
    }

    pub fn batch_meta(&self) -> PathBuf {
        self.data_dir.join("batch_meta.json")
    }
}

/// Appends one JSON record per line and syncs after every write.
pub struct JsonlWriter<T> {
    path: PathBuf,
    file: File,
    offset: u64,
    _record: PhantomData<fn(&T)>,
}

impl<T: Serialize> JsonlWriter<T> {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::io(path, e))?;
        let offset = file.metadata().map_err(|e| StoreError::io(path, e))?.len();
        Ok(Self {
            path: path.to_path_buf(),
            file,
            offset,
            _record: PhantomData,
        })
    }

    /// Writes the record and returns the byte offset at which it starts.
    pub fn append(&mut self, record: &T) -> Result<u64, StoreError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|()| self.file.sync_data())
            .map_err(|e| StoreError::io(&self.path, e))?;
        let at = self.offset;
        self.offset += line.len() as u64;
        Ok(at)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Records read before the first bad line, plus that line's error if any.
pub struct Replay<T> {
    pub records: Vec<T>,
    pub error: Option<StoreError>,
}

/// Reads every record, stopping at the first corrupt line. A missing file
/// replays as empty.
pub fn replay_jsonl<T: DeserializeOwned>(path: &Path) -> Replay<T> {
    let mut records = Vec::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Replay {
                records,
                error: None,
            }
        }
        Err(e) => {
            return Replay {
                records,
                error: Some(StoreError::io(path, e)),
            }
        }
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                return Replay {
                    records,
                    error: Some(StoreError::CorruptRecord {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    }),
                }
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                return Replay {
                    records,
                    error: Some(StoreError::CorruptRecord {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    Replay {
        records,
        error: None,
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let replay = replay_jsonl(path);
    match replay.error {
        Some(e) => Err(e),
        None => Ok(replay.records),
    }
}

/// Full contents of a data directory.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    pub news: Vec<NewsItem>,
    pub events: Vec<UsageEvent>,
    pub follows: Vec<FollowEdge>,
}

impl StoreSnapshot {
    pub fn load(layout: &StoreLayout) -> Result<Self, StoreError> {
        Ok(Self {
            news: read_jsonl(&layout.news())?,
            events: read_jsonl(&layout.events())?,
            follows: read_jsonl(&layout.follows())?,
        })
    }
}

/// Writers for the three append-only logs of one data directory.
pub struct Store {
    layout: StoreLayout,
    news: Mutex<JsonlWriter<NewsItem>>,
    events: Mutex<JsonlWriter<UsageEvent>>,
    follows: Mutex<JsonlWriter<FollowEdge>>,
}

impl Store {
    pub fn open(layout: StoreLayout) -> Result<Self, StoreError> {
        Ok(Self {
            news: Mutex::new(JsonlWriter::open(&layout.news())?),
            events: Mutex::new(JsonlWriter::open(&layout.events())?),
            follows: Mutex::new(JsonlWriter::open(&layout.follows())?),
            layout,
        })
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    pub fn append_news(&self, item: &NewsItem) -> Result<u64, StoreError> {
        self.news.lock().append(item)
    }

    pub fn append_event(&self, event: &UsageEvent) -> Result<u64, StoreError> {
        self.events.lock().append(event)
    }

    pub fn append_follow(&self, edge: &FollowEdge) -> Result<u64, StoreError> {
        self.follows.lock().append(edge)
    }
}
