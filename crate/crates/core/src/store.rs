//! Append-only JSON Lines event log.
//!
//! Line 1 is a header carrying the format version and the context (schema,
//! grid, periods) the log was written under. Every following line is one
//! event: `{"seq":..,"ts":..,"kind":..,"body":{..}}`. The field layout is
//! documented in `docs/log-format.md`.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Ledger, LedgerContext, LedgerError, StoredReport};
use crate::trust::DetectionWindow;
use crate::user::UserProfile;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body")]
pub enum Event {
    UserRegistered(UserProfile),
    ReportSubmitted(StoredReport),
    DetectionRun(DetectionWindow),
    UserBlacklisted {
        user_id: String,
        region: usize,
        period: u64,
    },
    /// Stands in for a purged user's `ReportSubmitted`.
    ReportTombstoned {
        report_id: String,
        user_id: String,
    },
    /// Written once by [`purge_rewrite`] after the user's reports are tombstoned.
    UserPurged {
        user_id: String,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::UserRegistered(_) => "UserRegistered",
            Event::ReportSubmitted(_) => "ReportSubmitted",
            Event::DetectionRun(_) => "DetectionRun",
            Event::UserBlacklisted { .. } => "UserBlacklisted",
            Event::ReportTombstoned { .. } => "ReportTombstoned",
            Event::UserPurged { .. } => "UserPurged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: i64,
    #[serde(flatten)]
    pub event: Event,
}

// Flattened enums are buffered by serde, and the buffer cannot turn JSON
// object keys back into integers, so records are read in two steps.
impl<'de> Deserialize<'de> for EventRecord {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        use serde_json::Value;

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            seq: u64,
            ts: i64,
            kind: String,
            body: Value,
        }
        #[derive(Deserialize)]
        struct Blacklisted {
            user_id: String,
            region: usize,
            period: u64,
        }
        #[derive(Deserialize)]
        struct Tombstone {
            report_id: String,
            user_id: String,
        }
        #[derive(Deserialize)]
        struct Purged {
            user_id: String,
        }

        let raw = Raw::deserialize(deserializer)?;
        let body = raw.body;
        let event = match raw.kind.as_str() {
            "UserRegistered" => serde_json::from_value(body).map(Event::UserRegistered),
            "ReportSubmitted" => serde_json::from_value(body).map(Event::ReportSubmitted),
            "DetectionRun" => serde_json::from_value(body).map(Event::DetectionRun),
            "UserBlacklisted" => {
                serde_json::from_value(body).map(|b: Blacklisted| Event::UserBlacklisted {
                    user_id: b.user_id,
                    region: b.region,
                    period: b.period,
                })
            }
            "ReportTombstoned" => {
                serde_json::from_value(body).map(|b: Tombstone| Event::ReportTombstoned {
                    report_id: b.report_id,
                    user_id: b.user_id,
                })
            }
            "UserPurged" => serde_json::from_value(body)
                .map(|b: Purged| Event::UserPurged { user_id: b.user_id }),
            other => return Err(D::Error::custom(format!("unknown event kind {other:?}"))),
        }
        .map_err(D::Error::custom)?;
        Ok(EventRecord {
            seq: raw.seq,
            ts: raw.ts,
            event,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    #[serde(flatten)]
    pub context: LedgerContext,
}

impl LogHeader {
    pub fn new(context: LedgerContext) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            context,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("event rejected: {0}")]
    InvariantViolation(#[from] LedgerError),
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("log was written for a different schema, grid or period configuration")]
    ContextMismatch,
}

/// Result of reading a log from the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub header: LogHeader,
    pub records: Vec<EventRecord>,
    pub ledger: Ledger,
}

impl Replayed {
    pub fn last_seq(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq)
    }
}

/// Folds a log into a ledger, validating every event on the way.
pub fn replay<R: BufRead>(reader: R) -> Result<Replayed, StoreError> {
    let mut lines = reader.lines().enumerate();
    let header: LogHeader = match lines.next() {
        None => {
            return Err(StoreError::CorruptLog {
                line: 1,
                reason: "missing header".into(),
            })
        }
        Some((_, line)) => serde_json::from_str(&line?).map_err(|e| StoreError::CorruptLog {
            line: 1,
            reason: e.to_string(),
        })?,
    };
    if header.format_version != FORMAT_VERSION {
        return Err(StoreError::CorruptLog {
            line: 1,
            reason: format!("unsupported format_version {}", header.format_version),
        });
    }
    let mut ledger = Ledger::new(header.context.clone());
    let mut records: Vec<EventRecord> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let corrupt = |reason: String| StoreError::CorruptLog {
            line: line_no,
            reason,
        };
        let record: EventRecord =
            serde_json::from_str(&line?).map_err(|e| corrupt(e.to_string()))?;
        if let Some(prev) = records.last() {
            if record.seq <= prev.seq {
                return Err(corrupt(format!(
                    "sequence {} does not follow {}",
                    record.seq, prev.seq
                )));
            }
        }
        ledger
            .check_and_apply(&record.event)
            .map_err(|e| corrupt(e.to_string()))?;
        records.push(record);
    }
    Ok(Replayed {
        header,
        records,
        ledger,
    })
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Replayed, StoreError> {
    replay(BufReader::new(File::open(path)?))
}

/// Serialises a complete log.
pub fn render_log(header: &LogHeader, records: &[EventRecord]) -> String {
    let mut out = serde_json::to_string(header).expect("header serialises");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialises"));
        out.push('\n');
    }
    out
}

pub fn write_log(
    path: impl AsRef<Path>,
    header: &LogHeader,
    records: &[EventRecord],
) -> Result<(), StoreError> {
    let mut f = File::create(path)?;
    f.write_all(render_log(header, records).as_bytes())?;
    f.sync_all()?;
    Ok(())
}

/// Compacts a log after `user_id` was blacklisted: their reports become
/// tombstones, their consolidated rows leave every detection window, and a
/// closing `UserPurged` marker is appended with timestamp `ts`.
pub fn purge_rewrite(
    header: &LogHeader,
    records: &[EventRecord],
    user_id: &str,
    ts: i64,
) -> Result<Vec<EventRecord>, StoreError> {
    let mut ledger = Ledger::new(header.context.clone());
    for r in records {
        ledger.check_and_apply(&r.event)?;
    }
    if ledger.user(user_id).is_none() {
        return Err(StoreError::UnknownUser(user_id.to_owned()));
    }
    if !ledger.is_blacklisted(user_id) {
        return Err(LedgerError::Invalid(format!("user {user_id} is not blacklisted")).into());
    }
    let mut out: Vec<EventRecord> = records
        .iter()
        .map(|r| {
            let event = match &r.event {
                Event::ReportSubmitted(s) if s.report.user_id == user_id => {
                    Event::ReportTombstoned {
                        report_id: s.report.report_id.clone(),
                        user_id: user_id.to_owned(),
                    }
                }
                Event::DetectionRun(w) => {
                    let mut w = w.clone();
                    w.rows.retain(|row| row.user_id != user_id);
                    Event::DetectionRun(w)
                }
                other => other.clone(),
            };
            EventRecord {
                seq: r.seq,
                ts: r.ts,
                event,
            }
        })
        .collect();
    let seq = records.last().map_or(1, |r| r.seq + 1);
    out.push(EventRecord {
        seq,
        ts,
        event: Event::UserPurged {
            user_id: user_id.to_owned(),
        },
    });
    Ok(out)
}

enum Sink {
    File { file: File, path: PathBuf },
    Memory(Vec<EventRecord>),
}

/// Single appender over a log plus the ledger it produces.
pub struct Store {
    header: LogHeader,
    ledger: Ledger,
    next_seq: u64,
    sink: Sink,
}

impl Store {
    pub fn in_memory(context: LedgerContext) -> Self {
        Self {
            ledger: Ledger::new(context.clone()),
            header: LogHeader::new(context),
            next_seq: 1,
            sink: Sink::Memory(Vec::new()),
        }
    }

    /// Opens an existing log for appending, or starts a new one when the
    /// file is missing or empty. An existing log must match `context`.
    pub fn open_or_create(
        path: impl AsRef<Path>,
        context: LedgerContext,
    ) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let empty = match std::fs::metadata(path) {
            Ok(m) => m.len() == 0,
            Err(e) if e.kind() == io::ErrorKind::NotFound => true,
            Err(e) => return Err(e.into()),
        };
        if empty {
            let header = LogHeader::new(context);
            let mut file = File::create(path)?;
            let mut line = serde_json::to_string(&header).expect("header serialises");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_all()?;
            return Ok(Self {
                ledger: Ledger::new(header.context.clone()),
                header,
                next_seq: 1,
                sink: Sink::File {
                    file,
                    path: path.to_owned(),
                },
            });
        }
        let store = Self::open(path)?;
        if store.header.context != context {
            return Err(StoreError::ContextMismatch);
        }
        Ok(store)
    }

    /// Replays an existing log and positions for appending.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let replayed = read_log(path)?;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            next_seq: replayed.last_seq() + 1,
            header: replayed.header,
            ledger: replayed.ledger,
            sink: Sink::File {
                file,
                path: path.to_owned(),
            },
        })
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.sink {
            Sink::File { path, .. } => Some(path),
            Sink::Memory(_) => None,
        }
    }

    /// Records kept by an in-memory store; empty for file-backed stores.
    pub fn memory_records(&self) -> &[EventRecord] {
        match &self.sink {
            Sink::Memory(records) => records,
            Sink::File { .. } => &[],
        }
    }

    /// Validates, persists (fsync before returning) and applies an event.
    pub fn append(&mut self, event: Event, ts: i64) -> Result<u64, StoreError> {
        self.ledger.check(&event)?;
        let record = EventRecord {
            seq: self.next_seq,
            ts,
            event,
        };
        match &mut self.sink {
            Sink::File { file, .. } => {
                let mut line = serde_json::to_string(&record).expect("record serialises");
                line.push('\n');
                file.write_all(line.as_bytes())?;
                file.sync_data()?;
            }
            Sink::Memory(records) => records.push(record.clone()),
        }
        self.ledger.apply(&record.event);
        self.next_seq += 1;
        Ok(record.seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::PeriodConfig;
    use crate::report::{AnswerValue, Report};
    use crate::schema::QuestionnaireSchema;

    fn ctx() -> LedgerContext {
        LedgerContext {
            schema: QuestionnaireSchema::default_flood(),
            grid: "0,1,0,1,1,1".parse().unwrap(),
            period: PeriodConfig::default(),
        }
    }

    fn report(id: &str, user: &str) -> StoredReport {
        StoredReport {
            report: Report {
                report_id: id.into(),
                user_id: user.into(),
                latitude: 0.5,
                longitude: 0.5,
                timestamp: 5,
                answers: vec![AnswerValue::Skipped; 17],
                attachments: vec![],
            },
            region: 0,
            period: 0,
            late: false,
        }
    }

    #[test]
    fn sequence_starts_at_one_and_increases() {
        let mut s = Store::in_memory(ctx());
        assert_eq!(
            s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
                .unwrap(),
            1
        );
        assert_eq!(
            s.append(Event::UserRegistered(UserProfile::new("b", "x")), 1)
                .unwrap(),
            2
        );
    }

    #[test]
    fn blacklisted_report_is_invariant_violation() {
        let mut s = Store::in_memory(ctx());
        s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
            .unwrap();
        s.append(
            Event::UserBlacklisted {
                user_id: "a".into(),
                region: 0,
                period: 0,
            },
            2,
        )
        .unwrap();
        let err = s
            .append(Event::ReportSubmitted(report("r", "a")), 3)
            .unwrap_err();
        assert!(matches!(
            err,
            StoreError::InvariantViolation(LedgerError::BlacklistedUser(_))
        ));
        assert_eq!(s.memory_records().len(), 2);
    }

    #[test]
    fn record_line_layout() {
        let rec = EventRecord {
            seq: 7,
            ts: 99,
            event: Event::UserPurged {
                user_id: "a".into(),
            },
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            line,
            r#"{"seq":7,"ts":99,"kind":"UserPurged","body":{"user_id":"a"}}"#
        );
        assert_eq!(serde_json::from_str::<EventRecord>(&line).unwrap(), rec);
    }

    #[test]
    fn empty_log_replays_to_empty_state() {
        let text = render_log(&LogHeader::new(ctx()), &[]);
        let r = replay(text.as_bytes()).unwrap();
        assert_eq!(r.ledger, Ledger::new(ctx()));
        assert!(r.records.is_empty());
        assert!(matches!(
            replay("".as_bytes()),
            Err(StoreError::CorruptLog { line: 1, .. })
        ));
    }

    #[test]
    fn truncated_line_is_corrupt_at_that_line() {
        let mut s = Store::in_memory(ctx());
        s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
            .unwrap();
        s.append(Event::ReportSubmitted(report("r", "a")), 2)
            .unwrap();
        let text = render_log(s.header(), s.memory_records());
        let cut = &text[..text.len() - 10];
        match replay(cut.as_bytes()) {
            Err(StoreError::CorruptLog { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_increasing_sequence_is_corrupt() {
        let recs = vec![
            EventRecord {
                seq: 2,
                ts: 0,
                event: Event::UserRegistered(UserProfile::new("a", "x")),
            },
            EventRecord {
                seq: 2,
                ts: 0,
                event: Event::UserRegistered(UserProfile::new("b", "x")),
            },
        ];
        let text = render_log(&LogHeader::new(ctx()), &recs);
        assert!(matches!(
            replay(text.as_bytes()),
            Err(StoreError::CorruptLog { line: 3, .. })
        ));
    }

    #[test]
    fn file_store_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        {
            let mut s = Store::open_or_create(&path, ctx()).unwrap();
            s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
                .unwrap();
            s.append(Event::ReportSubmitted(report("r", "a")), 2)
                .unwrap();
        }
        let mut s = Store::open_or_create(&path, ctx()).unwrap();
        assert!(s.ledger().report("r").is_some());
        assert_eq!(
            s.append(Event::UserRegistered(UserProfile::new("b", "x")), 3)
                .unwrap(),
            3
        );
        let mut other = ctx();
        other.grid = "0,2,0,1,1,1".parse().unwrap();
        assert!(matches!(
            Store::open_or_create(&path, other),
            Err(StoreError::ContextMismatch)
        ));
    }

    fn blacklisted_history() -> Store {
        let mut s = Store::in_memory(ctx());
        s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
            .unwrap();
        s.append(Event::UserRegistered(UserProfile::new("b", "x")), 1)
            .unwrap();
        s.append(Event::ReportSubmitted(report("r1", "a")), 2)
            .unwrap();
        s.append(Event::ReportSubmitted(report("r2", "b")), 2)
            .unwrap();
        s.append(
            Event::UserBlacklisted {
                user_id: "a".into(),
                region: 0,
                period: 0,
            },
            3,
        )
        .unwrap();
        s
    }

    #[test]
    fn purge_rewrite_matches_purge() {
        let s = blacklisted_history();
        let new = purge_rewrite(s.header(), s.memory_records(), "a", 10).unwrap();
        assert_eq!(new.len(), s.memory_records().len() + 1);
        assert!(matches!(new[2].event, Event::ReportTombstoned { .. }));
        let replayed = replay(render_log(s.header(), &new).as_bytes()).unwrap();
        let mut expected = s.ledger().clone();
        expected.purge_user("a").unwrap();
        assert_eq!(replayed.ledger, expected);
        let text = render_log(s.header(), &new);
        assert!(!text.contains(r#""report_id":"r1","user_id":"a","latitude""#));
    }

    #[test]
    fn purge_rewrite_without_reports_adds_only_marker() {
        let mut s = Store::in_memory(ctx());
        s.append(Event::UserRegistered(UserProfile::new("a", "x")), 1)
            .unwrap();
        s.append(
            Event::UserBlacklisted {
                user_id: "a".into(),
                region: 0,
                period: 0,
            },
            2,
        )
        .unwrap();
        let new = purge_rewrite(s.header(), s.memory_records(), "a", 5).unwrap();
        assert_eq!(&new[..2], s.memory_records());
        assert_eq!(
            new[2].event,
            Event::UserPurged {
                user_id: "a".into()
            }
        );
        assert_eq!(new[2].seq, 3);
    }

    #[test]
    fn purge_rewrite_unknown_user() {
        let s = blacklisted_history();
        assert!(matches!(
            purge_rewrite(s.header(), s.memory_records(), "zz", 0),
            Err(StoreError::UnknownUser(_))
        ));
        assert!(matches!(
            purge_rewrite(s.header(), s.memory_records(), "b", 0),
            Err(StoreError::InvariantViolation(_))
        ));
    }
}
