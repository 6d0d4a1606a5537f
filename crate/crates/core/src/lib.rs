//! Offline authoring, validation and interchange of GIFT quiz questions.
//!
//! - [`model`]: question AST, correctness flags, classification, validation
//! - [`parser`]: GIFT text to questions, with located diagnostics
//! - [`writer`]: canonical GIFT output for both dialects
//! - [`bank`]: file-backed question bank with GIFT import and export

pub mod bank;
pub mod diagnostic;
pub mod model;
pub mod parser;
pub mod writer;

pub use diagnostic::{Diagnostic, Severity};
pub use model::{
    classify, generate_lookup_table, markers_from_flags, numeric_interval, pattern_from_flags,
    validate, Body, Choice, CorrectnessPattern, Dialect, LookupRow, Marker, MatchPair,
    NumericAnswer, NumericSpec, Question, QuestionType, TextFormat,
};
pub use parser::{parse_answer_block, parse_document, parse_question, unescape_text, ParseResult};
pub use writer::{
    escape_text, serialize_document, serialize_question, EscapeContext, WriteOptions,
};
