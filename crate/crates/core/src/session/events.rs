use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::SessionPlan;
use crate::error::{Error, Result};
use crate::schema::{self, SESSION_EVENT_SCHEMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Created { subject_alias: String, plan: SessionPlan },
    ItemIssued { item_id: String },
    Responded { item_id: String, choice_index: u8, response_ms: u64 },
}

/// One durable state change of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// UTC milliseconds.
    pub at: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

enum Sink {
    Memory(Vec<String>),
    File { path: PathBuf, file: File },
}

/// Append-only, line-delimited event stream.
pub struct EventLog {
    sink: Sink,
    next_seq: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            sink: Sink::Memory(Vec::new()),
            next_seq: 1,
        }
    }

    /// Opens (or creates) a log file and returns it with the events it already holds.
    ///
    /// A final line without its newline is the remains of an interrupted
    /// append; it is cut off before new events are written.
    pub fn open(path: &Path) -> Result<(Self, Vec<SessionEvent>)> {
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
        let complete = text.rfind('\n').map_or(0, |k| k + 1);
        if complete < text.len() {
            warn!("dropping {} bytes of an interrupted append at the end of {}", text.len() - complete, path.display());
            file.set_len(complete as u64).map_err(|e| Error::io(path, e))?;
            file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
        }
        let events = parse_events(&text[..complete], &path.display().to_string())?;
        let next_seq = events.last().map_or(1, |e| e.seq + 1);
        Ok((
            Self {
                sink: Sink::File {
                    path: path.to_path_buf(),
                    file,
                },
                next_seq,
            },
            events,
        ))
    }

    /// Durably appends an event and returns it with its sequence number.
    pub fn append(&mut self, at: u64, session_id: &str, kind: EventKind) -> Result<SessionEvent> {
        let event = SessionEvent {
            seq: self.next_seq,
            at,
            session_id: session_id.to_string(),
            kind,
        };
        let mut line = schema::to_record(SESSION_EVENT_SCHEMA, &event)?;
        line.push('\n');
        match &mut self.sink {
            Sink::Memory(lines) => lines.push(line),
            Sink::File { path, file } => {
                file.write_all(line.as_bytes()).map_err(|e| Error::io(&*path, e))?;
                file.sync_data().map_err(|e| Error::io(&*path, e))?;
            }
        }
        self.next_seq += 1;
        Ok(event)
    }

    /// Lines held by an in-memory log; empty for file logs.
    pub fn memory_lines(&self) -> &[String] {
        match &self.sink {
            Sink::Memory(lines) => lines,
            Sink::File { .. } => &[],
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::Memory(_) => None,
            Sink::File { path, .. } => Some(path),
        }
    }
}

pub fn parse_events(text: &str, origin: &str) -> Result<Vec<SessionEvent>> {
    let mut events: Vec<SessionEvent> = Vec::new();
    for (n, line) in BufReader::new(text.as_bytes()).lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent = schema::from_document(SESSION_EVENT_SCHEMA, &line, &format!("{origin}:{}", n + 1))?;
        if let Some(prev) = events.last() {
            if event.seq <= prev.seq {
                return Err(Error::Parse(format!("{origin}:{}: sequence {} follows {}", n + 1, event.seq, prev.seq)));
            }
        }
        events.push(event);
    }
    Ok(events)
}
