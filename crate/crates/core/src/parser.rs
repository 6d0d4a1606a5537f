//! GIFT text to [`Question`] values.
//!
//! Documents are split into questions at blank lines, at comment or category
//! lines that follow a closed answer block, and at a title that starts a new
//! line after a closed answer block. Every diagnostic carries a 1-based line and
//! column into the original text (after BOM and CRLF normalization).

use crate::diagnostic::{has_errors, Diagnostic};
use crate::model::{
    validate, Body, Choice, Dialect, MatchPair, NumericAnswer, NumericSpec, Question, TextFormat,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuestion {
    pub question: Question,
    pub category: Option<String>,
    /// 1-based line where the question starts.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseResult {
    /// Questions that parsed and validated without errors, in document order.
    pub questions: Vec<ParsedQuestion>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParseResult {
    pub fn has_errors(&self) -> bool {
        has_errors(&self.diagnostics)
    }
}

/// Contents of an answer block: the body plus any general feedback it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerBlock {
    pub body: Body,
    pub general_feedback: Option<String>,
}

/// Normalize line endings and drop a leading byte-order mark.
pub fn normalize_input(text: &str) -> String {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.replace("\r\n", "\n")
}

pub fn parse_document(text: &str, dialect: Dialect) -> ParseResult {
    let text = normalize_input(text);
    let mut result = ParseResult::default();
    let mut category: Option<String> = None;
    let mut pending = Pending::default();

    for (idx, line) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim_start();
        if trimmed.is_empty() {
            pending.flush(&category, dialect, &mut result);
        } else if trimmed.starts_with("//") {
            if pending.closed && !pending.open {
                pending.flush(&category, dialect, &mut result);
            }
        } else if let Some(path) = trimmed.strip_prefix("$CATEGORY:") {
            pending.flush(&category, dialect, &mut result);
            let path = path.trim();
            category = (!path.is_empty()).then(|| path.to_string());
        } else {
            if pending.closed && !pending.open && trimmed.starts_with(':') {
                pending.flush(&category, dialect, &mut result);
            }
            pending.push(line, lineno);
        }
    }
    pending.flush(&category, dialect, &mut result);
    result
}

/// Parse a single question block (comments already removed). Warnings are
/// dropped; use [`parse_document`] to see them.
pub fn parse_question(block: &str, dialect: Dialect) -> Result<Question, Vec<Diagnostic>> {
    let block = normalize_input(block);
    let src = Source::single(&block);
    let mut ctx = Ctx::new(&src, dialect);
    match ctx.question(0, block.len()) {
        Some(q) if !has_errors(&ctx.diags) => Ok(q),
        _ => Err(ctx.diags.into_iter().filter(Diagnostic::is_error).collect()),
    }
}

/// Parse the text between an answer block's braces.
pub fn parse_answer_block(content: &str, dialect: Dialect) -> Result<AnswerBlock, Vec<Diagnostic>> {
    let src = Source::single(content);
    let mut ctx = Ctx::new(&src, dialect);
    match ctx.answer_block(0, content.len()) {
        Some(b) if !has_errors(&ctx.diags) => Ok(b),
        _ => Err(ctx.diags.into_iter().filter(Diagnostic::is_error).collect()),
    }
}

/// Resolve GIFT escapes: `\~ \= \# \{ \} \: \\ \[` become the literal
/// character and `\n` a newline. Any other backslash is kept as written.
pub fn unescape_text(raw: &str) -> String {
    unescape_with_warnings(raw).0
}

/// Like [`unescape_text`], also returning the byte offsets of backslashes
/// that did not start a known escape.
pub fn unescape_with_warnings(raw: &str) -> (String, Vec<usize>) {
    unescape(raw, false)
}

fn unescape(raw: &str, fold_newlines: bool) -> (String, Vec<usize>) {
    let mut out = String::with_capacity(raw.len());
    let mut unknown = Vec::new();
    let mut chars = raw.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '\\' {
            match chars.peek().map(|&(_, n)| n) {
                Some(n @ ('~' | '=' | '#' | '{' | '}' | ':' | '\\' | '[')) => {
                    out.push(n);
                    chars.next();
                }
                Some('n') => {
                    out.push('\n');
                    chars.next();
                }
                _ => {
                    out.push('\\');
                    unknown.push(i);
                }
            }
        } else if fold_newlines && c.is_whitespace() {
            let mut run = String::from(c);
            while let Some(&(_, n)) = chars.peek() {
                if !n.is_whitespace() {
                    break;
                }
                run.push(n);
                chars.next();
            }
            if run.contains('\n') {
                out.push(' ');
            } else {
                out.push_str(&run);
            }
        } else {
            out.push(c);
        }
    }
    (out, unknown)
}

/// Byte offset of the first unescaped occurrence of `pat` in `src[from..to]`.
fn find_unescaped(src: &str, from: usize, to: usize, pat: &str) -> Option<usize> {
    let bytes = src.as_bytes();
    let pat = pat.as_bytes();
    let mut i = from;
    while i < to {
        if bytes[i] == b'\\' {
            i += 2;
            continue;
        }
        if i + pat.len() <= to && &bytes[i..i + pat.len()] == pat {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn find_all_unescaped(src: &str, from: usize, to: usize, set: &[u8]) -> Vec<usize> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = from;
    while i < to {
        if bytes[i] == b'\\' {
            i += 2;
            continue;
        }
        if set.contains(&bytes[i]) {
            out.push(i);
        }
        i += 1;
    }
    out
}

fn skip_ws(src: &str, mut pos: usize, end: usize) -> usize {
    while pos < end {
        match src[pos..end].chars().next() {
            Some(c) if c.is_whitespace() => pos += c.len_utf8(),
            _ => break,
        }
    }
    pos
}

#[derive(Default)]
struct Pending {
    text: String,
    lines: Vec<(usize, usize)>,
    open: bool,
    closed: bool,
}

impl Pending {
    fn push(&mut self, line: &str, lineno: usize) {
        if !self.lines.is_empty() {
            self.text.push('\n');
        }
        self.lines.push((self.text.len(), lineno));
        let start = self.text.len();
        self.text.push_str(line);
        for brace in find_all_unescaped(&self.text, start, self.text.len(), b"{}") {
            if self.text.as_bytes()[brace] == b'{' {
                self.open = true;
            } else if self.open {
                self.open = false;
                self.closed = true;
            }
        }
    }

    fn flush(&mut self, category: &Option<String>, dialect: Dialect, result: &mut ParseResult) {
        if self.lines.is_empty() {
            return;
        }
        let pending = std::mem::take(self);
        let src = Source {
            text: &pending.text,
            lines: pending.lines,
        };
        let mut ctx = Ctx::new(&src, dialect);
        let parsed = ctx.question(0, src.text.len());
        let line = ctx.question_line;
        let mut diags = ctx.diags;
        if let Some(question) = parsed {
            if !has_errors(&diags) {
                diags.extend(
                    validate(&question, dialect)
                        .into_iter()
                        .map(|d| d.or_at_line(line)),
                );
            }
            if !has_errors(&diags) {
                result.questions.push(ParsedQuestion {
                    question,
                    category: category.clone(),
                    line,
                });
            }
        }
        result.diagnostics.extend(diags);
    }
}

struct Source<'a> {
    text: &'a str,
    /// (byte offset in `text`, 1-based line number) of each line start.
    lines: Vec<(usize, usize)>,
}

impl<'a> Source<'a> {
    fn single(text: &'a str) -> Self {
        let mut lines = vec![(0, 1)];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                lines.push((i + 1, lines.len() + 1));
            }
        }
        Source { text, lines }
    }

    fn position(&self, offset: usize) -> (usize, usize) {
        let idx = match self
            .lines
            .binary_search_by(|&(start, _)| start.cmp(&offset))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let (start, line) = self.lines[idx];
        let column = self.text[start..offset.min(self.text.len())]
            .chars()
            .count()
            + 1;
        (line, column)
    }
}

struct Entry {
    marker: u8,
    marker_at: usize,
    weight: Option<f64>,
    text: (usize, usize),
    feedback: Vec<(usize, usize)>,
    /// Whether each feedback `#` is the first non-blank character on its line.
    feedback_own_line: Vec<bool>,
}

struct Ctx<'s, 'a> {
    src: &'s Source<'a>,
    dialect: Dialect,
    diags: Vec<Diagnostic>,
    question_line: usize,
}

impl<'s, 'a> Ctx<'s, 'a> {
    fn new(src: &'s Source<'a>, dialect: Dialect) -> Self {
        let question_line = src.lines.first().map(|l| l.1).unwrap_or(1);
        Ctx {
            src,
            dialect,
            diags: Vec::new(),
            question_line,
        }
    }

    fn text(&self) -> &'a str {
        self.src.text
    }

    fn error(&mut self, at: usize, code: &str, message: impl Into<String>) {
        let (l, c) = self.src.position(at);
        self.diags.push(Diagnostic::error(code, message).at(l, c));
    }

    fn warn(&mut self, at: usize, code: &str, message: impl Into<String>) {
        let (l, c) = self.src.position(at);
        self.diags.push(Diagnostic::warning(code, message).at(l, c));
    }

    /// Unescaped, newline-folded, trimmed text of `start..end`.
    fn content(&mut self, start: usize, end: usize) -> String {
        let (s, unknown) = unescape(&self.text()[start..end], true);
        for off in unknown {
            self.warn(
                start + off,
                "unknown_escape",
                "backslash does not start a known escape and is kept literally",
            );
        }
        s.trim().to_string()
    }

    fn optional_content(&mut self, range: Option<(usize, usize)>) -> Option<String> {
        range
            .map(|(s, e)| self.content(s, e))
            .filter(|s| !s.is_empty())
    }

    fn line_start(&self, pos: usize) -> usize {
        self.text()[..pos].rfind('\n').map_or(0, |i| i + 1)
    }

    fn first_on_line(&self, pos: usize) -> bool {
        self.text()[self.line_start(pos)..pos].trim().is_empty()
    }

    /// Skip bare lines (e.g. `Course ID C300`) that precede a title line.
    fn skip_metadata(&mut self, start: usize, end: usize) -> usize {
        let text = self.text();
        let first = skip_ws(text, start, end);
        if text[first..end].starts_with(':') {
            return first;
        }
        let mut line_start = first;
        let mut skipped = Vec::new();
        while line_start < end {
            let line_end = text[line_start..end]
                .find('\n')
                .map_or(end, |i| line_start + i);
            let line = &text[line_start..line_end];
            if line.trim_start().starts_with(':') {
                for at in skipped {
                    self.warn(
                        at,
                        "skipped_metadata",
                        "bare line before the title is not part of the question and was skipped",
                    );
                }
                return line_start;
            }
            if find_unescaped(text, line_start, line_end, "{").is_some() {
                break;
            }
            skipped.push(line_start);
            line_start = line_end + 1;
        }
        first
    }

    fn question(&mut self, start: usize, end: usize) -> Option<Question> {
        let text = self.text();
        let mut pos = self.skip_metadata(start, end);
        pos = skip_ws(text, pos, end);
        self.question_line = self.src.position(pos).0;
        let question_start = pos;

        let mut title = None;
        if text[pos..end].starts_with("::") {
            match find_unescaped(text, pos + 2, end, "::") {
                Some(close) => {
                    title = Some(self.content(pos + 2, close)).filter(|t| !t.is_empty());
                    pos = close + 2;
                }
                None => {
                    self.error(
                        pos,
                        "unterminated_title",
                        "title opened with `::` is never closed",
                    );
                    return None;
                }
            }
        } else if text[pos..end].starts_with(':') {
            match find_unescaped(text, pos + 1, end, ":") {
                Some(close) => {
                    self.warn(
                        pos,
                        "single_colon_title",
                        "title uses single colons; normalized to `::title::`",
                    );
                    title = Some(self.content(pos + 1, close)).filter(|t| !t.is_empty());
                    pos = close + 1;
                }
                None => {
                    self.error(
                        pos,
                        "unterminated_title",
                        "title opened with `:` is never closed",
                    );
                    return None;
                }
            }
        }

        pos = skip_ws(text, pos, end);
        let mut text_format = None;
        if text[pos..end].starts_with('[') {
            if let Some(close) = text[pos..end].find(']') {
                if let Some(f) = TextFormat::from_name(&text[pos + 1..pos + close]) {
                    text_format = Some(f);
                    pos += close + 1;
                }
            }
        }

        let Some(open) = find_unescaped(text, pos, end, "{") else {
            self.error(
                question_start,
                "no_answer_block",
                "no answer block: expected `{ ... }`",
            );
            return None;
        };
        let Some(close) = find_unescaped(text, open + 1, end, "}") else {
            self.error(
                open,
                "unterminated_block",
                "answer block opened here is never closed",
            );
            return None;
        };
        if let Some(extra) = find_all_unescaped(text, close + 1, end, b"{}").first() {
            self.error(
                *extra,
                "extra_brace",
                "unexpected brace after the answer block; escape it as `\\{` or `\\}`",
            );
            return None;
        }

        let stem_prefix = self.content(pos, open);
        let stem_suffix = self.content(close + 1, end);
        let block = self.answer_block(open + 1, close)?;
        Some(Question {
            title,
            text_format,
            stem_prefix,
            stem_suffix,
            body: block.body,
            general_feedback: block.general_feedback,
        })
    }

    fn answer_block(&mut self, start: usize, end: usize) -> Option<AnswerBlock> {
        let text = self.text();
        let (body_end, general) = match find_unescaped(text, start, end, "####") {
            Some(g) => (g, Some((g + 4, end))),
            None => (end, None),
        };
        let has_general_marker = general.is_some();
        let mut general_feedback = self.optional_content(general);

        let pos = skip_ws(text, start, body_end);
        if pos >= body_end {
            self.error(
                start.saturating_sub(1),
                "essay_unsupported",
                "empty answer block (essay form) is not supported",
            );
            return None;
        }

        if text.as_bytes()[pos] == b'#' {
            let body = self.numeric(pos + 1, body_end)?;
            return Some(AnswerBlock {
                body,
                general_feedback,
            });
        }

        let head_end = find_unescaped(text, pos, body_end, "#").unwrap_or(body_end);
        let head = text[pos..head_end].trim();
        let answer = match head.to_ascii_uppercase().as_str() {
            "T" | "TRUE" => Some(true),
            "F" | "FALSE" => Some(false),
            _ => None,
        };
        if let Some(answer) = answer {
            let segments = self.segments(head_end, body_end);
            if segments.len() > 2 {
                self.error(
                    segments[2].0 - 1,
                    "too_many_feedback",
                    "true/false takes at most two feedback fields",
                );
                return None;
            }
            let feedback_wrong = self.optional_content(segments.first().copied());
            let feedback_right = self.optional_content(segments.get(1).copied());
            return Some(AnswerBlock {
                body: Body::TrueFalse {
                    answer,
                    feedback_wrong,
                    feedback_right,
                },
                general_feedback,
            });
        }

        let entries = self.entries(pos, body_end)?;
        let mut feedback: Vec<Option<(usize, usize)>> = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let last = i + 1 == entries.len();
            if e.feedback.len() > 1
                && !(last && self.dialect == Dialect::Paper && !has_general_marker)
            {
                self.error(
                    e.feedback[1].0 - 1,
                    "extra_feedback",
                    "an answer takes at most one `#` feedback",
                );
                return None;
            }
            if e.feedback.len() > 2 {
                self.error(
                    e.feedback[2].0 - 1,
                    "extra_feedback",
                    "unexpected `#` after general feedback",
                );
                return None;
            }
            feedback.push(e.feedback.first().copied());
        }

        // Paper dialect: a bare `#` after the last entry may be general feedback.
        if self.dialect == Dialect::Paper && !has_general_marker {
            let last = entries.last().expect("at least one entry");
            let others_have_feedback = entries[..entries.len() - 1]
                .iter()
                .any(|e| !e.feedback.is_empty());
            let n = feedback.len();
            if last.feedback.len() == 2 {
                general_feedback = self.optional_content(Some(last.feedback[1]));
            } else if last.feedback.len() == 1
                && (last.feedback_own_line[0] || !others_have_feedback)
            {
                general_feedback = self.optional_content(Some(last.feedback[0]));
                feedback[n - 1] = None;
            }
        }

        let arrows: Vec<Option<usize>> = entries
            .iter()
            .map(|e| find_unescaped(text, e.text.0, e.text.1, "->"))
            .collect();
        if arrows.iter().any(Option::is_some) {
            if let Some(i) = arrows.iter().position(Option::is_none) {
                self.error(
                    entries[i].marker_at,
                    "mixed_matching",
                    "matching blocks need `->` in every entry",
                );
                return None;
            }
            let mut pairs = Vec::with_capacity(entries.len());
            for ((e, arrow), fb) in entries.iter().zip(&arrows).zip(&feedback) {
                let arrow = arrow.expect("checked");
                if e.marker != b'=' {
                    self.error(
                        e.marker_at,
                        "matching_marker",
                        "matching entries must start with `=`",
                    );
                    return None;
                }
                if e.weight.is_some() {
                    self.error(
                        e.marker_at,
                        "matching_weight",
                        "matching entries cannot carry weights",
                    );
                    return None;
                }
                if let Some((s, _)) = fb {
                    self.error(
                        s - 1,
                        "pair_feedback",
                        "matching pairs cannot carry feedback",
                    );
                    return None;
                }
                let left = self.content(e.text.0, arrow);
                let right = self.content(arrow + 2, e.text.1);
                if left.is_empty() || right.is_empty() {
                    self.error(
                        e.marker_at,
                        "empty_entry",
                        "matching pair has an empty side",
                    );
                    return None;
                }
                pairs.push(MatchPair { left, right });
            }
            return Some(AnswerBlock {
                body: Body::Matching { pairs },
                general_feedback,
            });
        }

        let mut choices = Vec::with_capacity(entries.len());
        for (e, fb) in entries.iter().zip(&feedback) {
            let choice_text = self.content(e.text.0, e.text.1);
            if choice_text.is_empty() {
                self.error(
                    e.marker_at,
                    "empty_entry",
                    "marker is followed by no answer text",
                );
                return None;
            }
            choices.push(Choice {
                text: choice_text,
                correct: e.marker == b'=',
                weight: e.weight,
                feedback: self.optional_content(*fb),
            });
        }
        let body = if entries.iter().all(|e| e.marker == b'=') {
            Body::ShortAnswer { answers: choices }
        } else {
            Body::Choices { choices }
        };
        Some(AnswerBlock {
            body,
            general_feedback,
        })
    }

    /// Ranges of the `#`-separated segments after `from` (which is either a
    /// `#` or `end`).
    fn segments(&self, from: usize, end: usize) -> Vec<(usize, usize)> {
        let hashes = find_all_unescaped(self.text(), from, end, b"#");
        hashes
            .iter()
            .enumerate()
            .map(|(i, &h)| (h + 1, hashes.get(i + 1).copied().unwrap_or(end)))
            .collect()
    }

    fn weight(&mut self, pos: usize, end: usize) -> Option<(Option<f64>, usize)> {
        let text = self.text();
        if !text[pos..end].starts_with('%') {
            return Some((None, pos));
        }
        let Some(close) = text[pos + 1..end].find('%').map(|i| pos + 1 + i) else {
            self.error(pos, "bad_weight", "weight opened with `%` is never closed");
            return None;
        };
        match text[pos + 1..close].trim().parse::<f64>() {
            Ok(w) if w.is_finite() => Some((Some(w), close + 1)),
            _ => {
                self.error(
                    pos,
                    "bad_weight",
                    format!("`{}` is not a weight", &text[pos + 1..close]),
                );
                None
            }
        }
    }

    fn entries(&mut self, pos: usize, end: usize) -> Option<Vec<Entry>> {
        let text = self.text();
        let markers = find_all_unescaped(text, pos, end, b"=~");
        if markers.first() != Some(&pos) {
            self.error(
                pos,
                "text_before_marker",
                "answer entries must start with `=` or `~`",
            );
            return None;
        }
        let mut entries = Vec::with_capacity(markers.len());
        for (i, &m) in markers.iter().enumerate() {
            let entry_end = markers.get(i + 1).copied().unwrap_or(end);
            let (weight, text_start) = self.weight(m + 1, entry_end)?;
            let text_end = find_unescaped(text, text_start, entry_end, "#").unwrap_or(entry_end);
            let feedback = self.segments(text_end, entry_end);
            let feedback_own_line = feedback
                .iter()
                .map(|&(s, _)| self.first_on_line(s - 1))
                .collect();
            entries.push(Entry {
                marker: text.as_bytes()[m],
                marker_at: m,
                weight,
                text: (text_start, text_end),
                feedback,
                feedback_own_line,
            });
        }
        Some(entries)
    }

    fn numeric(&mut self, start: usize, end: usize) -> Option<Body> {
        let text = self.text();
        let pos = skip_ws(text, start, end);
        if pos >= end {
            self.error(start, "no_numeric_answers", "numeric block has no answer");
            return None;
        }
        let mut answers = Vec::new();
        if text.as_bytes()[pos] == b'=' {
            let markers = find_all_unescaped(text, pos, end, b"=");
            for (i, &m) in markers.iter().enumerate() {
                let entry_end = markers.get(i + 1).copied().unwrap_or(end);
                let (weight, spec_start) = self.weight(m + 1, entry_end)?;
                answers.push(self.numeric_answer(spec_start, entry_end, weight)?);
            }
        } else {
            answers.push(self.numeric_answer(pos, end, None)?);
        }
        Some(Body::Numeric { answers })
    }

    fn numeric_answer(
        &mut self,
        start: usize,
        end: usize,
        weight: Option<f64>,
    ) -> Option<NumericAnswer> {
        let text = self.text();
        let spec_end = find_unescaped(text, start, end, "#").unwrap_or(end);
        let segments = self.segments(spec_end, end);
        if segments.len() > 1 {
            self.error(
                segments[1].0 - 1,
                "extra_feedback",
                "a numeric answer takes at most one `#` feedback",
            );
            return None;
        }
        let raw = text[start..spec_end].trim();
        let Some(spec) = parse_numeric_spec(raw) else {
            self.error(
                start,
                "bad_number",
                format!("`{raw}` is not a number, `value:tolerance`, or `min..max`"),
            );
            return None;
        };
        Some(NumericAnswer {
            spec,
            weight,
            feedback: self.optional_content(segments.first().copied()),
        })
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_numeric_spec(raw: &str) -> Option<NumericSpec> {
    if let Some((min, max)) = raw.split_once("..") {
        Some(NumericSpec::Range {
            min: parse_number(min)?,
            max: parse_number(max)?,
        })
    } else if let Some((value, tolerance)) = raw.split_once(':') {
        Some(NumericSpec::Point {
            value: parse_number(value)?,
            tolerance: parse_number(tolerance)?,
        })
    } else {
        Some(NumericSpec::Point {
            value: parse_number(raw)?,
            tolerance: 0.0,
        })
    }
}
