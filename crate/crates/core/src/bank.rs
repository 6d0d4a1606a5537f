//! File-backed question bank.
//!
//! A bank is an immutable value: every mutation returns a new [`Bank`]. On
//! disk it is one UTF-8 text file, a `giftsmith-bank v1` header line followed
//! by one JSON object per line:
//!
//! ```text
//! giftsmith-bank v1
//! {"kind":"bank","next_record_id":2}
//! {"kind":"course","course_id":"C300","subject":"Chemistry"}
//! {"kind":"record","record_id":1,"course_id":"C300","qtype_code":3,"question":{...},"created_at":"...","updated_at":"..."}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostic::{has_errors, Diagnostic};
use crate::model::{classify, validate, Dialect, Question};
use crate::parser::parse_document;
use crate::writer::{serialize_question, WriteOptions};

pub const FORMAT_VERSION: u32 = 1;
const HEADER_PREFIX: &str = "giftsmith-bank v";

#[derive(Debug, Error)]
pub enum BankError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed bank at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("unsupported bank format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: String, supported: u32 },
    #[error("bank is locked by another writer (remove {0} if no other process is running)")]
    Locked(PathBuf),
    #[error("course exists: {0}")]
    CourseExists(String),
    #[error("invalid course id `{0}`: expected a letter followed by letters, digits, `_` or `-`")]
    InvalidCourseId(String),
    #[error("subject must not be empty")]
    EmptySubject,
    #[error("unknown course: {0}")]
    UnknownCourse(String),
    #[error("unknown record: {0}")]
    UnknownRecord(u64),
    #[error("question failed validation: {}", .0.iter().filter(|d| d.is_error()).map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

pub type Result<T, E = BankError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Course {
    pub course_id: String,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub record_id: u64,
    pub course_id: String,
    pub qtype_code: u8,
    pub question: Question,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl QuestionRecord {
    /// The question as export writes it: untitled questions take the record id
    /// as their title.
    pub fn export_question(&self) -> Question {
        let mut q = self.question.clone();
        if q.title.is_none() {
            q.title = Some(self.record_id.to_string());
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub course_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qtype_code: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_substring: Option<String>,
}

impl RecordFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn course(course_id: impl Into<String>) -> Self {
        RecordFilter {
            course_id: Some(course_id.into()),
            ..Self::default()
        }
    }

    pub fn matches(&self, record: &QuestionRecord) -> bool {
        self.course_id
            .as_ref()
            .is_none_or(|c| *c == record.course_id)
            && self.qtype_code.is_none_or(|t| t == record.qtype_code)
            && self.title_substring.as_ref().is_none_or(|s| {
                record
                    .question
                    .title
                    .as_deref()
                    .is_some_and(|t| t.contains(s.as_str()))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    pub format_version: u32,
    pub courses: Vec<Course>,
    pub records: Vec<QuestionRecord>,
    pub next_record_id: u64,
}

impl Default for Bank {
    fn default() -> Self {
        Bank {
            format_version: FORMAT_VERSION,
            courses: Vec::new(),
            records: Vec::new(),
            next_record_id: 1,
        }
    }
}

/// Result of [`Bank::import_gift`].
#[derive(Debug, Clone)]
pub struct ImportOutcome {
    pub bank: Bank,
    pub record_ids: Vec<u64>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn is_valid_course_id(id: &str) -> bool {
    let mut chars = id.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn checked_type(question: &Question, dialect: Dialect) -> Result<u8> {
    let diagnostics = validate(question, dialect);
    if has_errors(&diagnostics) {
        return Err(BankError::Invalid(diagnostics));
    }
    classify(question)
        .map(|t| t.code())
        .map_err(|d| BankError::Invalid(vec![d]))
}

impl Bank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn course(&self, course_id: &str) -> Option<&Course> {
        self.courses.iter().find(|c| c.course_id == course_id)
    }

    pub fn record(&self, record_id: u64) -> Option<&QuestionRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    pub fn create_course(&self, course_id: &str, subject: &str) -> Result<Bank> {
        if !is_valid_course_id(course_id) {
            return Err(BankError::InvalidCourseId(course_id.to_string()));
        }
        if subject.trim().is_empty() {
            return Err(BankError::EmptySubject);
        }
        if self.course(course_id).is_some() {
            return Err(BankError::CourseExists(course_id.to_string()));
        }
        let mut bank = self.clone();
        bank.courses.push(Course {
            course_id: course_id.to_string(),
            subject: subject.trim().to_string(),
        });
        Ok(bank)
    }

    pub fn add_question(
        &self,
        course_id: &str,
        question: Question,
        dialect: Dialect,
    ) -> Result<(Bank, u64)> {
        self.add_question_at(course_id, question, dialect, Utc::now())
    }

    pub fn add_question_at(
        &self,
        course_id: &str,
        question: Question,
        dialect: Dialect,
        now: DateTime<Utc>,
    ) -> Result<(Bank, u64)> {
        if self.course(course_id).is_none() {
            return Err(BankError::UnknownCourse(course_id.to_string()));
        }
        let qtype_code = checked_type(&question, dialect)?;
        let mut bank = self.clone();
        let record_id = bank.next_record_id;
        bank.next_record_id += 1;
        bank.records.push(QuestionRecord {
            record_id,
            course_id: course_id.to_string(),
            qtype_code,
            question,
            created_at: now,
            updated_at: now,
        });
        Ok((bank, record_id))
    }

    /// Matching records in record-id order.
    pub fn list_records(&self, filter: &RecordFilter) -> Vec<&QuestionRecord> {
        let mut out: Vec<_> = self.records.iter().filter(|r| filter.matches(r)).collect();
        out.sort_by_key(|r| r.record_id);
        out
    }

    pub fn update_question(
        &self,
        record_id: u64,
        question: Question,
        dialect: Dialect,
    ) -> Result<Bank> {
        self.update_question_at(record_id, question, dialect, Utc::now())
    }

    pub fn update_question_at(
        &self,
        record_id: u64,
        question: Question,
        dialect: Dialect,
        now: DateTime<Utc>,
    ) -> Result<Bank> {
        if self.record(record_id).is_none() {
            return Err(BankError::UnknownRecord(record_id));
        }
        let qtype_code = checked_type(&question, dialect)?;
        let mut bank = self.clone();
        let record = bank
            .records
            .iter_mut()
            .find(|r| r.record_id == record_id)
            .expect("checked above");
        record.question = question;
        record.qtype_code = qtype_code;
        record.updated_at = now;
        Ok(bank)
    }

    pub fn remove_question(&self, record_id: u64) -> Result<Bank> {
        if self.record(record_id).is_none() {
            return Err(BankError::UnknownRecord(record_id));
        }
        let mut bank = self.clone();
        bank.records.retain(|r| r.record_id != record_id);
        Ok(bank)
    }

    /// GIFT text for every matching record. Each question is preceded by
    /// `// Course ID:` and `// Ques type:` comment lines, and a `$CATEGORY:`
    /// line is written whenever the course changes.
    pub fn export_gift(&self, filter: &RecordFilter, dialect: Dialect) -> String {
        let opts = WriteOptions::default();
        let mut blocks = Vec::new();
        let mut current_course: Option<&str> = None;
        for record in self.list_records(filter) {
            if current_course != Some(record.course_id.as_str()) {
                let subject = self
                    .course(&record.course_id)
                    .map_or("", |c| c.subject.as_str());
                blocks.push(format!("$CATEGORY: {}/{}", record.course_id, subject));
                current_course = Some(record.course_id.as_str());
            }
            let header = format!(
                "// Course ID: {}\n// Ques type: {}\n",
                record.course_id, record.qtype_code
            );
            match serialize_question(&record.export_question(), dialect, &opts) {
                Ok(text) => blocks.push(header + &text),
                Err(e) => blocks.push(format!(
                    "{header}// record {} not exported: {e}",
                    record.record_id
                )),
            }
        }
        if blocks.is_empty() {
            return String::new();
        }
        let mut out = blocks.join("\n\n");
        out.push('\n');
        out
    }

    /// Add every question in `text` that parses and validates to `course_id`.
    /// Failing blocks are reported in the diagnostics and skipped.
    pub fn import_gift(
        &self,
        course_id: &str,
        text: &str,
        dialect: Dialect,
    ) -> Result<ImportOutcome> {
        self.import_gift_at(course_id, text, dialect, Utc::now())
    }

    pub fn import_gift_at(
        &self,
        course_id: &str,
        text: &str,
        dialect: Dialect,
        now: DateTime<Utc>,
    ) -> Result<ImportOutcome> {
        if self.course(course_id).is_none() {
            return Err(BankError::UnknownCourse(course_id.to_string()));
        }
        let parsed = parse_document(text, dialect);
        let mut bank = self.clone();
        let mut record_ids = Vec::with_capacity(parsed.questions.len());
        let mut diagnostics = parsed.diagnostics;
        for pq in parsed.questions {
            match bank.add_question_at(course_id, pq.question, dialect, now) {
                Ok((next, id)) => {
                    bank = next;
                    record_ids.push(id);
                }
                Err(BankError::Invalid(d)) => {
                    diagnostics.extend(d.into_iter().map(|d| d.or_at_line(pq.line)));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(ImportOutcome {
            bank,
            record_ids,
            diagnostics,
        })
    }

    /// Record counts per course and type code.
    pub fn stats(&self) -> BTreeMap<String, BTreeMap<u8, usize>> {
        let mut out: BTreeMap<String, BTreeMap<u8, usize>> = self
            .courses
            .iter()
            .map(|c| (c.course_id.clone(), BTreeMap::new()))
            .collect();
        for r in &self.records {
            *out.entry(r.course_id.clone())
                .or_default()
                .entry(r.qtype_code)
                .or_default() += 1;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{}\n", self.format_version);
        let mut push = |line: &Line| {
            out.push_str(&serde_json::to_string(line).expect("bank lines serialize"));
            out.push('\n');
        };
        push(&Line::Bank {
            next_record_id: self.next_record_id,
        });
        for c in &self.courses {
            push(&Line::Course(c.clone()));
        }
        for r in &self.records {
            push(&Line::Record(Box::new(r.clone())));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Bank> {
        let malformed = |offset: usize, message: String| BankError::Malformed { offset, message };
        let (header, rest) = match text.find('\n') {
            Some(i) => (&text[..i], i + 1),
            None => (text, text.len()),
        };
        let Some(version) = header.strip_prefix(HEADER_PREFIX) else {
            return Err(malformed(
                0,
                "malformed bank: missing `giftsmith-bank v1` header".into(),
            ));
        };
        if version != FORMAT_VERSION.to_string() {
            return Err(BankError::UnsupportedVersion {
                found: version.to_string(),
                supported: FORMAT_VERSION,
            });
        }

        let mut bank = Bank {
            next_record_id: 0,
            ..Bank::default()
        };
        let mut saw_meta = false;
        let mut offset = rest;
        let mut course_ids = HashSet::new();
        let mut record_ids = HashSet::new();
        for line in text[rest..].split_inclusive('\n') {
            let line_offset = offset;
            offset += line.len();
            let body = line.trim_end_matches('\n');
            if body.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(body).map_err(|e| {
                malformed(line_offset + e.column().saturating_sub(1), e.to_string())
            })?;
            match parsed {
                Line::Bank { next_record_id } => {
                    if saw_meta {
                        return Err(malformed(line_offset, "duplicate bank line".into()));
                    }
                    saw_meta = true;
                    bank.next_record_id = next_record_id;
                }
                Line::Course(c) => {
                    if !is_valid_course_id(&c.course_id) || !course_ids.insert(c.course_id.clone())
                    {
                        return Err(malformed(
                            line_offset,
                            format!("invalid or duplicate course `{}`", c.course_id),
                        ));
                    }
                    bank.courses.push(c);
                }
                Line::Record(r) => {
                    if !course_ids.contains(&r.course_id) {
                        return Err(malformed(
                            line_offset,
                            format!(
                                "record {} names unknown course `{}`",
                                r.record_id, r.course_id
                            ),
                        ));
                    }
                    if r.record_id == 0 || !record_ids.insert(r.record_id) {
                        return Err(malformed(
                            line_offset,
                            format!("invalid or duplicate record id {}", r.record_id),
                        ));
                    }
                    match checked_type(&r.question, Dialect::Paper) {
                        Ok(code) if code == r.qtype_code => {}
                        Ok(code) => {
                            return Err(malformed(
                                line_offset,
                                format!(
                                    "record {} has type {} but its question is type {code}",
                                    r.record_id, r.qtype_code
                                ),
                            ));
                        }
                        Err(e) => {
                            return Err(malformed(
                                line_offset,
                                format!("record {}: {e}", r.record_id),
                            ))
                        }
                    }
                    bank.records.push(*r);
                }
            }
        }
        if !saw_meta {
            return Err(malformed(rest, "malformed bank: missing bank line".into()));
        }
        if bank
            .records
            .iter()
            .any(|r| r.record_id >= bank.next_record_id)
            || bank.next_record_id == 0
        {
            return Err(malformed(
                rest,
                "next_record_id must exceed every record id".into(),
            ));
        }
        Ok(bank)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Line {
    Bank { next_record_id: u64 },
    Course(Course),
    Record(Box<QuestionRecord>),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BankError + '_ {
    move |source| BankError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn open_bank(path: &Path) -> Result<Bank> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Bank::from_text(&text)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn lock_path(path: &Path) -> PathBuf {
    sibling(path, ".lock")
}

/// Exclusive advisory lock held for the lifetime of the guard.
pub struct BankLock {
    path: PathBuf,
}

impl BankLock {
    pub fn acquire(bank_path: &Path) -> Result<BankLock> {
        let path = lock_path(bank_path);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(BankLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(BankError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for BankLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Write the bank atomically: the text goes to a temporary sibling file which
/// is synced and then renamed over `path`.
pub fn save_bank(bank: &Bank, path: &Path) -> Result<()> {
    let _lock = BankLock::acquire(path)?;
    save_bank_locked(bank, path)
}

/// [`save_bank`] for callers that already hold the [`BankLock`].
pub fn save_bank_locked(bank: &Bank, path: &Path) -> Result<()> {
    let tmp = sibling(path, ".tmp");
    let write = || -> io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bank.to_text().as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        if tmp.is_file() {
            let _ = fs::remove_file(&tmp);
        }
        io_err(path)(e)
    })
}
