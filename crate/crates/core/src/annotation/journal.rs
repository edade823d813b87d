//! Append-only JSONL judgment journal.
//!
//! One judgment per line: `{"pair_id", "annotator_id", "label", "ts"}` with
//! `ts` in RFC 3339 UTC. A trailing segment without a newline is an
//! interrupted write; [`Journal::open`] moves it to `<journal>.quarantine`
//! and truncates the journal back to its last complete line.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{AnnotationError, Judgment, Label};

#[derive(Serialize, Deserialize)]
struct JournalLine {
    pair_id: String,
    annotator_id: String,
    label: String,
    ts: String,
}

pub(crate) fn to_line(j: &Judgment) -> String {
    let line = JournalLine {
        pair_id: j.pair_id.clone(),
        annotator_id: j.annotator_id.clone(),
        label: j.label.to_string(),
        ts: j.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
    };
    let mut s = serde_json::to_string(&line).expect("journal line serializes");
    s.push('\n');
    s
}

fn parse_line(line: &str) -> Result<Judgment, String> {
    let raw: JournalLine = serde_json::from_str(line).map_err(|e| format!("malformed judgment: {e}"))?;
    let label: Label = raw.label.parse().map_err(|e: AnnotationError| e.to_string())?;
    let ts = DateTime::parse_from_rfc3339(&raw.ts)
        .map_err(|e| format!("bad timestamp {:?}: {e}", raw.ts))?
        .with_timezone(&Utc);
    Judgment::new(raw.pair_id, raw.annotator_id, label, ts).map_err(|e| e.to_string())
}

/// Result of reading a journal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replay {
    pub judgments: Vec<Judgment>,
    /// Bytes after the last newline, if any.
    pub truncated_tail: Option<Vec<u8>>,
    /// Set when [`Journal::open`] moved a truncated tail aside.
    pub quarantined: Option<PathBuf>,
    /// 1-based journal line of each judgment.
    pub(crate) line_numbers: Vec<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AnnotationError + '_ {
    move |source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_bytes(path: &Path, bytes: &[u8]) -> Result<Replay, AnnotationError> {
    let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let (complete, tail) = bytes.split_at(complete_len);
    let mut judgments = Vec::new();
    let mut line_numbers = Vec::new();
    for (idx, raw) in complete.split(|&b| b == b'\n').enumerate() {
        let line_no = idx + 1;
        let corrupt = |message: String| AnnotationError::Corrupt {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let text = std::str::from_utf8(raw).map_err(|e| corrupt(format!("invalid UTF-8: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        judgments.push(parse_line(text).map_err(corrupt)?);
        line_numbers.push(line_no);
    }
    Ok(Replay {
        judgments,
        truncated_tail: (!tail.is_empty()).then(|| tail.to_vec()),
        quarantined: None,
        line_numbers,
    })
}

/// Reads a journal without modifying it. A truncated tail is reported, not
/// parsed.
pub fn read_journal(path: &Path) -> Result<Replay, AnnotationError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_bytes(path, &bytes)
}

pub fn quarantine_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".quarantine");
    PathBuf::from(name)
}

/// Writable journal handle. Appends are flushed to disk before returning.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (creating if needed) and replays the journal. A corrupt complete
    /// line is an error naming that line.
    pub fn open(path: &Path) -> Result<(Self, Replay), AnnotationError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(io_err(path))?;
        let mut replay = parse_bytes(path, &bytes)?;

        if let Some(tail) = &replay.truncated_tail {
            let qpath = quarantine_path(path);
            let mut q = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&qpath)
                .map_err(io_err(&qpath))?;
            q.write_all(tail).and_then(|_| q.write_all(b"\n")).map_err(io_err(&qpath))?;
            q.sync_all().map_err(io_err(&qpath))?;
            let keep = (bytes.len() - tail.len()) as u64;
            file.set_len(keep).map_err(io_err(path))?;
            file.sync_all().map_err(io_err(path))?;
            log::warn!(
                "{}: quarantined {} byte truncated tail to {}",
                path.display(),
                tail.len(),
                qpath.display()
            );
            replay.quarantined = Some(qpath);
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            replay,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, judgment: &Judgment) -> Result<(), AnnotationError> {
        let line = to_line(judgment);
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn judgment(pair: &str, who: &str, label: Label) -> Judgment {
        let ts = Utc.with_ymd_and_hms(2024, 5, 6, 7, 8, 9).unwrap() + chrono::Duration::milliseconds(123);
        Judgment::new(pair, who, label, ts).unwrap()
    }

    #[test]
    fn line_format() {
        assert_eq!(
            to_line(&judgment("m1-p0001", "ann", Label::NotParaphrase)),
            "{\"pair_id\":\"m1-p0001\",\"annotator_id\":\"ann\",\"label\":\"not_paraphrase\",\"ts\":\"2024-05-06T07:08:09.123Z\"}\n"
        );
    }

    #[test]
    fn append_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let written = vec![
            judgment("a", "x", Label::Paraphrase),
            judgment("b", "x", Label::Skip),
        ];
        {
            let (mut journal, replay) = Journal::open(&path).unwrap();
            assert!(replay.judgments.is_empty());
            for j in &written {
                journal.append(j).unwrap();
            }
        }
        let (_, replay) = Journal::open(&path).unwrap();
        assert_eq!(replay.judgments, written);
        assert_eq!(replay.quarantined, None);
    }

    #[test]
    fn truncated_tail_is_quarantined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let good = to_line(&judgment("a", "x", Label::Paraphrase));
        std::fs::write(&path, format!("{good}{{\"pair_id\":\"b\",\"annot")).unwrap();

        let (_, replay) = Journal::open(&path).unwrap();
        assert_eq!(replay.judgments.len(), 1);
        let qpath = replay.quarantined.unwrap();
        assert_eq!(std::fs::read_to_string(&qpath).unwrap(), "{\"pair_id\":\"b\",\"annot\n");
        assert_eq!(std::fs::read_to_string(&path).unwrap(), good);
    }

    #[test]
    fn corrupt_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let good = to_line(&judgment("a", "x", Label::Paraphrase));
        std::fs::write(&path, format!("{good}not json\n{good}")).unwrap();
        match Journal::open(&path) {
            Err(AnnotationError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corrupt error, got {other:?}"),
        }
        let bad_label = good.replace("\"paraphrase\"", "\"maybe\"");
        std::fs::write(&path, bad_label).unwrap();
        let err = read_journal(&path).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("maybe"), "{err}");
    }

    #[test]
    fn read_only_reports_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        std::fs::write(&path, "{\"pair").unwrap();
        let replay = read_journal(&path).unwrap();
        assert!(replay.judgments.is_empty());
        assert_eq!(replay.truncated_tail.as_deref(), Some(&b"{\"pair"[..]));
        assert_eq!(std::fs::read(&path).unwrap(), b"{\"pair");
    }
}
