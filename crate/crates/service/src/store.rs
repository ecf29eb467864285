//! Durable state: one JSON file per session, an append-only advisor event
//! log, and the catalog file. Whole-file writes go through a temporary file
//! and a rename so a crash never leaves a torn file behind.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nl2bi_core::dialogue::SessionState;
use nl2bi_core::selector::{AdvisorEvent, AdvisorState};

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn invalid(e: impl std::fmt::Display, path: &Path) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("{}: {e}", path.display()),
    )
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn save(&self, session: &SessionState) -> io::Result<()> {
        let body = serde_json::to_vec_pretty(session).map_err(io::Error::other)?;
        write_atomic(&self.path(&session.session_id), &body)
    }

    /// Every stored session, in id order. A missing directory is empty.
    pub fn load_all(&self) -> io::Result<Vec<SessionState>> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read(&path)?;
            let s: SessionState = serde_json::from_slice(&text).map_err(|e| invalid(e, &path))?;
            out.push(s);
        }
        out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        Ok(out)
    }
}

/// Reads a session file, or starts a new session if it does not exist.
pub fn load_session_file(path: &Path, fresh_id: &str) -> io::Result<SessionState> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| invalid(e, path)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(SessionState::new(fresh_id)),
        Err(e) => Err(e),
    }
}

/// Append-only JSON-lines log of advisor events.
#[derive(Debug)]
pub struct AdvisorLog {
    file: File,
}

impl AdvisorLog {
    /// Opens (creating if needed) the log and replays it. A torn final line
    /// from an interrupted append is ignored.
    pub fn open(path: &Path) -> io::Result<(Self, AdvisorState)> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut state = AdvisorState::default();
        if let Ok(f) = File::open(path) {
            let lines: Vec<String> = BufReader::new(f).lines().collect::<io::Result<_>>()?;
            let n = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<AdvisorEvent>(line) {
                    Ok(ev) => state.apply(&ev),
                    Err(_) if i + 1 == n => {}
                    Err(e) => return Err(invalid(format!("line {}: {e}", i + 1), path)),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((Self { file }, state))
    }

    pub fn append(&mut self, events: &[AdvisorEvent]) -> io::Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for ev in events {
            serde_json::to_writer(&mut buf, ev).map_err(io::Error::other)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}
