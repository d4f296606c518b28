//! Append-only answer log and exports replayed from it.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sirl_core::oracle::Record;
use sirl_core::{Error, Result};

use crate::session::Phase;

/// One submitted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub session: String,
    pub query_id: u64,
    pub phase: Phase,
    pub record: Record,
}

/// In-memory copy of the log plus an optional backing file that only ever
/// grows.
#[derive(Debug, Default)]
pub struct AnswerLog {
    path: Option<PathBuf>,
    file: Option<File>,
    entries: Vec<LogEntry>,
}

impl AnswerLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a log file and replays its existing entries.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                entries.push(
                    serde_json::from_str(&line)
                        .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
                );
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn append(&mut self, entry: LogEntry) -> Result<()> {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_string(&entry).expect("entries serialize");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }
}

/// Recorded answers of one phase, grouped by responder (responders sorted
/// by id, answers in submission order). Practice answers never appear.
pub fn export(entries: &[LogEntry], phase: Phase) -> Result<Vec<Record>> {
    if phase.is_practice() {
        return Err(Error::InvalidArgument("practice answers are not exported".into()));
    }
    let mut chosen: Vec<&LogEntry> = entries.iter().filter(|e| e.phase == phase).collect();
    if chosen.is_empty() {
        return Err(Error::InvalidArgument(format!("no recorded answers for {phase:?}")));
    }
    chosen.sort_by(|a, b| a.session.cmp(&b.session));
    Ok(chosen.into_iter().map(|e| e.record.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sirl_core::oracle::SimilarityAnswer;

    fn entry(session: &str, id: u64, phase: Phase) -> LogEntry {
        LogEntry {
            session: session.into(),
            query_id: id,
            phase,
            record: Record::SimilarityAnswer(SimilarityAnswer {
                query_id: id,
                p1: 0,
                p2: 1,
                odd: 2,
                responder: session.into(),
                response_ms: Some(900),
            }),
        }
    }

    #[test]
    fn export_skips_practice_and_groups_by_responder() {
        let log = vec![
            entry("b", 0, Phase::PracticeSimilarity),
            entry("b", 1, Phase::Similarity),
            entry("a", 1, Phase::Similarity),
            entry("b", 2, Phase::Similarity),
        ];
        let out = export(&log, Phase::Similarity).unwrap();
        let who: Vec<(String, u64)> = out
            .iter()
            .map(|r| match r {
                Record::SimilarityAnswer(a) => (a.responder.clone(), a.query_id),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(who, [("a".into(), 1), ("b".into(), 1), ("b".into(), 2)]);
        assert!(export(&log, Phase::Preference).is_err());
        assert!(export(&log, Phase::PracticeSimilarity).is_err());
    }

    #[test]
    fn reopened_log_replays_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("answers.jsonl");
        {
            let mut log = AnswerLog::open(&path).unwrap();
            log.append(entry("a", 0, Phase::PracticeSimilarity)).unwrap();
            log.append(entry("a", 1, Phase::Similarity)).unwrap();
        }
        let mut log = AnswerLog::open(&path).unwrap();
        assert_eq!(log.entries().len(), 2);
        log.append(entry("a", 2, Phase::Similarity)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
    }
}
