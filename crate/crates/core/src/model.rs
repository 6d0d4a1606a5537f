//! Question AST, correctness-flag semantics, classification and validation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagnostic::Diagnostic;

/// The six supported question kinds, with stable codes 1 through 6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    TrueFalse,
    MultipleChoiceSingle,
    MultipleResponse,
    ShortAnswer,
    Matching,
    Numeric,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::TrueFalse,
        QuestionType::MultipleChoiceSingle,
        QuestionType::MultipleResponse,
        QuestionType::ShortAnswer,
        QuestionType::Matching,
        QuestionType::Numeric,
    ];

    pub fn code(self) -> u8 {
        match self {
            QuestionType::TrueFalse => 1,
            QuestionType::MultipleChoiceSingle => 2,
            QuestionType::MultipleResponse => 3,
            QuestionType::ShortAnswer => 4,
            QuestionType::Matching => 5,
            QuestionType::Numeric => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.code() == code)
    }

    pub fn label(self) -> &'static str {
        match self {
            QuestionType::TrueFalse => "true/false",
            QuestionType::MultipleChoiceSingle => "multiple choice",
            QuestionType::MultipleResponse => "multiple response",
            QuestionType::ShortAnswer => "fill in the blank",
            QuestionType::Matching => "matching",
            QuestionType::Numeric => "numeric",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Output conventions. `Paper` writes multiple `=` markers for multiple-response
/// questions and a trailing `# text` line for general feedback; `Moodle` writes
/// weighted `~` entries and `####text`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    Paper,
    Moodle,
}

impl Dialect {
    pub fn name(self) -> &'static str {
        match self {
            Dialect::Paper => "paper",
            Dialect::Moodle => "moodle",
        }
    }
}

impl std::str::FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Dialect::Paper),
            "moodle" => Ok(Dialect::Moodle),
            other => Err(format!(
                "unknown dialect `{other}` (expected paper or moodle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Correct,
    Wrong,
}

impl Marker {
    pub fn symbol(self) -> char {
        match self {
            Marker::Correct => '=',
            Marker::Wrong => '~',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '=' => Some(Marker::Correct),
            '~' => Some(Marker::Wrong),
            _ => None,
        }
    }

    pub fn from_flag(correct: bool) -> Self {
        if correct {
            Marker::Correct
        } else {
            Marker::Wrong
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub text: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

impl Choice {
    pub fn new(text: impl Into<String>, correct: bool) -> Self {
        Choice {
            text: text.into(),
            correct,
            weight: None,
            feedback: None,
        }
    }

    pub fn with_feedback(mut self, feedback: impl Into<String>) -> Self {
        self.feedback = Some(feedback.into());
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }

    pub fn marker(&self) -> Marker {
        Marker::from_flag(self.correct)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub left: String,
    pub right: String,
}

impl MatchPair {
    pub fn new(left: impl Into<String>, right: impl Into<String>) -> Self {
        MatchPair {
            left: left.into(),
            right: right.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NumericSpec {
    Point { value: f64, tolerance: f64 },
    Range { min: f64, max: f64 },
}

impl NumericSpec {
    pub fn is_valid(&self) -> bool {
        match *self {
            NumericSpec::Point { value, tolerance } => {
                value.is_finite() && tolerance.is_finite() && tolerance >= 0.0
            }
            NumericSpec::Range { min, max } => min.is_finite() && max.is_finite() && min <= max,
        }
    }
}

/// The closed interval of accepted values: `value ± tolerance` for a point,
/// the bounds themselves for a range.
pub fn numeric_interval(spec: &NumericSpec) -> (f64, f64) {
    match *spec {
        NumericSpec::Point { value, tolerance } => (value - tolerance, value + tolerance),
        NumericSpec::Range { min, max } => (min, max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericAnswer {
    pub spec: NumericSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

impl NumericAnswer {
    pub fn new(spec: NumericSpec) -> Self {
        NumericAnswer {
            spec,
            weight: None,
            feedback: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextFormat {
    Html,
    Markdown,
    Plain,
    Moodle,
}

impl TextFormat {
    pub fn name(self) -> &'static str {
        match self {
            TextFormat::Html => "html",
            TextFormat::Markdown => "markdown",
            TextFormat::Plain => "plain",
            TextFormat::Moodle => "moodle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "html" => Some(TextFormat::Html),
            "markdown" => Some(TextFormat::Markdown),
            "plain" => Some(TextFormat::Plain),
            "moodle" => Some(TextFormat::Moodle),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    TrueFalse {
        answer: bool,
        /// Shown when the submitted answer is wrong.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback_wrong: Option<String>,
        /// Shown when the submitted answer is right.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        feedback_right: Option<String>,
    },
    Choices {
        choices: Vec<Choice>,
    },
    ShortAnswer {
        answers: Vec<Choice>,
    },
    Matching {
        pairs: Vec<MatchPair>,
    },
    Numeric {
        answers: Vec<NumericAnswer>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_format: Option<TextFormat>,
    pub stem_prefix: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stem_suffix: String,
    pub body: Body,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_feedback: Option<String>,
}

impl Question {
    pub fn new(stem: impl Into<String>, body: Body) -> Self {
        Question {
            title: None,
            text_format: None,
            stem_prefix: stem.into(),
            stem_suffix: String::new(),
            body,
            general_feedback: None,
        }
    }

    pub fn titled(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn with_suffix(mut self, suffix: impl Into<String>) -> Self {
        self.stem_suffix = suffix.into();
        self
    }

    pub fn with_general_feedback(mut self, feedback: impl Into<String>) -> Self {
        self.general_feedback = Some(feedback.into());
        self
    }

    pub fn with_format(mut self, format: TextFormat) -> Self {
        self.text_format = Some(format);
        self
    }
}

/// A `T`/`F` string with one letter per option, `T` where the option is correct.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorrectnessPattern(String);

impl CorrectnessPattern {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for CorrectnessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn markers_from_flags(flags: &[bool]) -> Result<Vec<Marker>, Diagnostic> {
    if flags.is_empty() {
        return Err(Diagnostic::error(
            "empty_flags",
            "at least one option flag is required",
        ));
    }
    Ok(flags.iter().map(|&f| Marker::from_flag(f)).collect())
}

pub fn pattern_from_flags(flags: &[bool]) -> Result<CorrectnessPattern, Diagnostic> {
    if flags.is_empty() {
        return Err(Diagnostic::error(
            "empty_flags",
            "at least one option flag is required",
        ));
    }
    Ok(CorrectnessPattern(
        flags.iter().map(|&f| if f { 'T' } else { 'F' }).collect(),
    ))
}

/// One row of the four-option flag/marker/pattern table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupRow {
    pub index: u8,
    pub flags: [bool; 4],
    pub markers: [Marker; 4],
    pub pattern: CorrectnessPattern,
}

/// All sixteen four-checkbox combinations, ordered by index, with the first
/// checkbox as the most significant bit.
pub fn generate_lookup_table() -> Vec<LookupRow> {
    (0u8..16)
        .map(|index| {
            let flags = [0, 1, 2, 3].map(|bit| index & (0b1000 >> bit) != 0);
            LookupRow {
                index,
                flags,
                markers: flags.map(Marker::from_flag),
                pattern: pattern_from_flags(&flags).expect("four flags"),
            }
        })
        .collect()
}

pub fn classify(question: &Question) -> Result<QuestionType, Diagnostic> {
    match &question.body {
        Body::TrueFalse { .. } => Ok(QuestionType::TrueFalse),
        Body::Choices { choices } => {
            let correct = choices.iter().filter(|c| c.correct).count();
            let weighted = choices.iter().any(|c| c.weight.is_some());
            if weighted || correct >= 2 {
                Ok(QuestionType::MultipleResponse)
            } else if correct == 1 {
                Ok(QuestionType::MultipleChoiceSingle)
            } else {
                Err(Diagnostic::error(
                    "no_correct_answer",
                    "no correct answer: mark at least one choice with `=` or give it a weight",
                ))
            }
        }
        Body::ShortAnswer { .. } => Ok(QuestionType::ShortAnswer),
        Body::Matching { .. } => Ok(QuestionType::Matching),
        Body::Numeric { .. } => Ok(QuestionType::Numeric),
    }
}

fn check_text(out: &mut Vec<Diagnostic>, field: &str, text: &str) {
    if text.trim().is_empty() {
        out.push(Diagnostic::error(
            "empty_text",
            format!("{field} must not be empty"),
        ));
    } else if text.trim() != text {
        out.push(Diagnostic::error(
            "untrimmed_text",
            format!("{field} has leading or trailing whitespace"),
        ));
    }
}

fn check_optional_text(out: &mut Vec<Diagnostic>, field: &str, text: &Option<String>) {
    if let Some(text) = text {
        check_text(out, field, text);
    }
}

fn check_weight(out: &mut Vec<Diagnostic>, field: &str, weight: Option<f64>) {
    if let Some(w) = weight {
        if !w.is_finite() || !(-100.0..=100.0).contains(&w) {
            out.push(Diagnostic::error(
                "weight_out_of_range",
                format!("{field} weight {w} is outside [-100, 100]"),
            ));
        }
    }
}

fn check_no_arrow(out: &mut Vec<Diagnostic>, field: &str, text: &str) {
    if text.contains("->") {
        out.push(Diagnostic::error(
            "ambiguous_arrow",
            format!("{field} contains `->`, which reads as a matching pair"),
        ));
    }
}

fn warn_duplicates<'a>(out: &mut Vec<Diagnostic>, texts: impl Iterator<Item = &'a str>) {
    let mut seen = HashSet::new();
    for text in texts {
        if !seen.insert(text) {
            out.push(Diagnostic::warning(
                "duplicate_choice",
                format!("choice text `{text}` appears more than once"),
            ));
        }
    }
}

fn check_choice_list(out: &mut Vec<Diagnostic>, what: &str, choices: &[Choice]) {
    for (i, c) in choices.iter().enumerate() {
        let field = format!("{what} {}", i + 1);
        check_text(out, &field, &c.text);
        check_no_arrow(out, &field, &c.text);
        check_weight(out, &field, c.weight);
        check_optional_text(out, &format!("{field} feedback"), &c.feedback);
    }
    warn_duplicates(out, choices.iter().map(|c| c.text.as_str()));
}

/// Every rule violation of `question` under `dialect`. Any error-severity entry
/// makes the question unusable for export.
pub fn validate(question: &Question, dialect: Dialect) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_optional_text(&mut out, "title", &question.title);
    check_text(&mut out, "stem", &question.stem_prefix);
    if question.title.is_none()
        && question.text_format.is_none()
        && question.stem_prefix.starts_with("//")
    {
        out.push(Diagnostic::error(
            "stem_reads_as_comment",
            "an untitled stem must not start with `//`",
        ));
    }
    if !question.stem_suffix.is_empty() {
        check_text(
            &mut out,
            "text after the answer block",
            &question.stem_suffix,
        );
        if !matches!(
            question.body,
            Body::Choices { .. } | Body::ShortAnswer { .. }
        ) {
            out.push(Diagnostic::error(
                "suffix_not_allowed",
                "only choice and fill-in-the-blank questions may have text after the answer block",
            ));
        }
    }
    check_optional_text(&mut out, "general feedback", &question.general_feedback);

    match &question.body {
        Body::TrueFalse {
            feedback_wrong,
            feedback_right,
            ..
        } => {
            check_optional_text(&mut out, "wrong-answer feedback", feedback_wrong);
            check_optional_text(&mut out, "right-answer feedback", feedback_right);
        }
        Body::Choices { choices } => {
            if choices.is_empty() {
                out.push(Diagnostic::error("no_choices", "the choice list is empty"));
            } else {
                check_choice_list(&mut out, "choice", choices);
                match classify(question) {
                    Err(d) => out.push(d),
                    Ok(QuestionType::MultipleResponse)
                        if dialect == Dialect::Moodle
                            && choices.iter().all(|c| c.weight.is_none()) =>
                    {
                        out.push(Diagnostic::warning(
                            "unweighted_multiple_response",
                            "multiple correct answers without weights; export rewrites them as weighted `~` entries",
                        ));
                    }
                    Ok(_) => {}
                }
                if choices.iter().all(|c| c.correct) {
                    out.push(Diagnostic::error(
                        "no_distractor",
                        "every choice is marked correct; add a `~` choice or use a fill-in-the-blank question",
                    ));
                }
            }
        }
        Body::ShortAnswer { answers } => {
            if answers.is_empty() {
                out.push(Diagnostic::error(
                    "no_answers",
                    "the accepted-answer list is empty",
                ));
            }
            check_choice_list(&mut out, "answer", answers);
            if answers.iter().any(|a| !a.correct) {
                out.push(Diagnostic::error(
                    "wrong_short_answer",
                    "fill-in-the-blank answers must all be marked correct",
                ));
            }
        }
        Body::Matching { pairs } => {
            if pairs.len() < 2 {
                out.push(Diagnostic::error(
                    "too_few_pairs",
                    format!("matching needs at least 2 pairs, found {}", pairs.len()),
                ));
            } else if pairs.len() < 3 && dialect == Dialect::Moodle {
                out.push(Diagnostic::warning(
                    "few_pairs",
                    format!(
                        "matching has {} pairs; strict consumers expect at least 3",
                        pairs.len()
                    ),
                ));
            }
            for (i, p) in pairs.iter().enumerate() {
                check_text(&mut out, &format!("pair {} left side", i + 1), &p.left);
                check_no_arrow(&mut out, &format!("pair {} left side", i + 1), &p.left);
                check_text(&mut out, &format!("pair {} right side", i + 1), &p.right);
            }
        }
        Body::Numeric { answers } => {
            if answers.is_empty() {
                out.push(Diagnostic::error(
                    "no_numeric_answers",
                    "the numeric answer list is empty",
                ));
            }
            for (i, a) in answers.iter().enumerate() {
                if !a.spec.is_valid() {
                    out.push(Diagnostic::error(
                        "invalid_numeric",
                        format!(
                            "numeric answer {} must be finite with a non-negative tolerance or min <= max",
                            i + 1
                        ),
                    ));
                }
                check_weight(&mut out, &format!("numeric answer {}", i + 1), a.weight);
                check_optional_text(
                    &mut out,
                    &format!("numeric answer {} feedback", i + 1),
                    &a.feedback,
                );
            }
        }
    }
    out
}
