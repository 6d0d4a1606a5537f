//! Canonical GIFT output.
//!
//! The layout is fixed so that writing, reparsing and writing again yields the
//! same bytes: `::title:: [format]stem {`, one entry per line for list bodies,
//! `}` and then any text that follows the blank.

use thiserror::Error;

use crate::diagnostic::{has_errors, Diagnostic};
use crate::model::{
    classify, validate, Body, Choice, Dialect, NumericAnswer, NumericSpec, Question, QuestionType,
};

/// Percentages accepted by strict consumers for partial credit.
pub const MOODLE_FRACTIONS: [f64; 20] = [
    100.0, 90.0, 83.333, 80.0, 75.0, 70.0, 66.666, 60.0, 50.0, 40.0, 33.333, 30.0, 25.0, 20.0,
    16.666, 14.2857, 12.5, 11.111, 10.0, 5.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeContext {
    Stem,
    Answer,
    Feedback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteOptions {
    /// Wrap the stem at spaces so no stem line exceeds this many characters.
    pub wrap_width: Option<usize>,
}

#[derive(Debug, Error)]
pub enum WriteError {
    #[error("question failed validation: {}", summary(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("question {index} failed validation: {}", summary(.diagnostics))]
    InvalidAt {
        index: usize,
        diagnostics: Vec<Diagnostic>,
    },
}

impl WriteError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            WriteError::Invalid(d) => d,
            WriteError::InvalidAt { diagnostics, .. } => diagnostics,
        }
    }
}

fn summary(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .filter(|d| d.is_error())
        .map(|d| d.message.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn escape_text(s: &str, context: EscapeContext) -> String {
    let mut out = String::with_capacity(s.len() + 4);
    for (i, c) in s.chars().enumerate() {
        match c {
            '\n' => out.push_str("\\n"),
            '{' | '}' | ':' | '\\' => {
                out.push('\\');
                out.push(c);
            }
            '~' | '=' | '#' if context != EscapeContext::Stem => {
                out.push('\\');
                out.push(c);
            }
            '[' if i == 0 && context == EscapeContext::Stem => out.push_str("\\["),
            _ => out.push(c),
        }
    }
    out
}

/// The nearest allowed fraction to `percent`.
pub fn nearest_moodle_fraction(percent: f64) -> f64 {
    MOODLE_FRACTIONS
        .iter()
        .copied()
        .min_by(|a, b| (a - percent).abs().total_cmp(&(b - percent).abs()))
        .expect("non-empty")
}

/// The question as it reads back after being written in `dialect`. Under the
/// moodle dialect an unweighted multiple-response question becomes all-`~`
/// entries: each correct choice gets the allowed fraction nearest
/// `100 / correct` and each wrong choice its negation. Everything else is
/// unchanged.
pub fn dialect_form(question: &Question, dialect: Dialect) -> Question {
    let mut q = question.clone();
    if dialect != Dialect::Moodle {
        return q;
    }
    if let Body::Choices { choices } = &mut q.body {
        let unweighted = choices.iter().all(|c| c.weight.is_none());
        let correct = choices.iter().filter(|c| c.correct).count();
        if unweighted && correct >= 2 {
            let fraction = nearest_moodle_fraction(100.0 / correct as f64);
            for c in choices.iter_mut() {
                c.weight = Some(if c.correct { fraction } else { -fraction });
                c.correct = false;
            }
        }
    }
    q
}

pub fn serialize_question(
    question: &Question,
    dialect: Dialect,
    opts: &WriteOptions,
) -> Result<String, WriteError> {
    let diagnostics = validate(question, dialect);
    if has_errors(&diagnostics) {
        return Err(WriteError::Invalid(diagnostics));
    }
    let q = dialect_form(question, dialect);
    let mut out = String::new();
    if let Some(title) = &q.title {
        out.push_str("::");
        out.push_str(&escape_text(title, EscapeContext::Answer));
        out.push_str(":: ");
    }
    if let Some(format) = q.text_format {
        out.push('[');
        out.push_str(format.name());
        out.push(']');
    }
    let stem = escape_text(&q.stem_prefix, EscapeContext::Stem);
    match opts.wrap_width {
        Some(width) if width > 0 => out.push_str(&wrap(&stem, width, out.chars().count())),
        _ => out.push_str(&stem),
    }
    out.push_str(" {");
    write_body(&mut out, &q, dialect);
    out.push('}');
    if !q.stem_suffix.is_empty() {
        out.push(' ');
        out.push_str(&escape_text(&q.stem_suffix, EscapeContext::Stem));
    }
    Ok(out)
}

/// Break `text` at single spaces so that no line runs past `width`
/// characters, counting `indent` characters already on the first line.
fn wrap(text: &str, width: usize, indent: usize) -> String {
    let mut out = String::with_capacity(text.len());
    let mut line_len = indent;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let word_end = chars[i..]
            .iter()
            .position(|&c| c == ' ')
            .map_or(chars.len(), |p| i + p);
        let word: String = chars[i..word_end].iter().collect();
        let breakable = i > 0
            && chars[i - 1] == ' '
            && (i < 2 || !chars[i - 2].is_whitespace())
            && !word.is_empty()
            && !word.starts_with("//");
        if breakable && line_len + word.chars().count() > width && line_len > 0 {
            out.pop();
            out.push('\n');
            line_len = 0;
        }
        out.push_str(&word);
        line_len += word.chars().count();
        if word_end < chars.len() {
            out.push(' ');
            line_len += 1;
        }
        i = word_end + 1;
    }
    out
}

fn fmt_number(v: f64) -> String {
    format!("{v}")
}

fn fmt_spec(spec: &NumericSpec) -> String {
    match *spec {
        NumericSpec::Point { value, tolerance } => {
            format!("{}:{}", fmt_number(value), fmt_number(tolerance))
        }
        NumericSpec::Range { min, max } => format!("{}..{}", fmt_number(min), fmt_number(max)),
    }
}

fn feedback(fb: &Option<String>) -> String {
    fb.as_ref()
        .map(|f| format!(" # {}", escape_text(f, EscapeContext::Feedback)))
        .unwrap_or_default()
}

fn weight(w: Option<f64>) -> String {
    w.map(|w| format!("%{}%", fmt_number(w)))
        .unwrap_or_default()
}

fn choice_line(out: &mut String, c: &Choice) {
    out.push(c.marker().symbol());
    out.push_str(&weight(c.weight));
    out.push(' ');
    out.push_str(&escape_text(&c.text, EscapeContext::Answer));
    out.push_str(&feedback(&c.feedback));
    out.push('\n');
}

fn general_inline(gf: &Option<String>) -> String {
    gf.as_ref()
        .map(|g| format!("####{}", escape_text(g, EscapeContext::Feedback)))
        .unwrap_or_default()
}

fn general_line(
    out: &mut String,
    gf: &Option<String>,
    dialect: Dialect,
    choices: Option<&[Choice]>,
) {
    match (gf, dialect) {
        (Some(g), Dialect::Paper) => {
            out.push_str("# ");
            out.push_str(&escape_text(g, EscapeContext::Feedback));
            out.push('\n');
        }
        (Some(_), Dialect::Moodle) => {
            out.push_str(&general_inline(gf));
            out.push('\n');
        }
        (None, Dialect::Paper) => {
            // A lone feedback on the last choice would read back as general
            // feedback; an empty `####` pins it to the choice.
            if let Some((last, rest)) = choices.and_then(|c| c.split_last()) {
                if last.feedback.is_some() && rest.iter().all(|c| c.feedback.is_none()) {
                    out.push_str("####\n");
                }
            }
        }
        (None, Dialect::Moodle) => {}
    }
}

fn write_body(out: &mut String, q: &Question, dialect: Dialect) {
    let gf = &q.general_feedback;
    match &q.body {
        Body::TrueFalse {
            answer,
            feedback_wrong,
            feedback_right,
        } => {
            out.push(if *answer { 'T' } else { 'F' });
            let esc = |f: &String| escape_text(f, EscapeContext::Feedback);
            match (feedback_wrong, feedback_right) {
                (None, None) => {}
                (Some(w), None) => {
                    out.push('#');
                    out.push_str(&esc(w));
                }
                (w, Some(r)) => {
                    out.push('#');
                    out.push_str(&w.as_ref().map(esc).unwrap_or_default());
                    out.push('#');
                    out.push_str(&esc(r));
                }
            }
            out.push_str(&general_inline(gf));
        }
        Body::Numeric { answers } => match answers.as_slice() {
            [single] if single.weight.is_none() => {
                out.push('#');
                out.push_str(&fmt_spec(&single.spec));
                out.push_str(&feedback(&single.feedback));
                out.push_str(&general_inline(gf));
            }
            _ => {
                out.push_str("#\n");
                for NumericAnswer {
                    spec,
                    weight: w,
                    feedback: fb,
                } in answers
                {
                    out.push('=');
                    out.push_str(&weight(*w));
                    out.push_str(&fmt_spec(spec));
                    out.push_str(&feedback(fb));
                    out.push('\n');
                }
                if gf.is_some() {
                    out.push_str(&general_inline(gf));
                    out.push('\n');
                }
            }
        },
        Body::Choices { choices } | Body::ShortAnswer { answers: choices } => {
            out.push('\n');
            for c in choices {
                choice_line(out, c);
            }
            general_line(out, gf, dialect, Some(choices));
        }
        Body::Matching { pairs } => {
            out.push('\n');
            for p in pairs {
                out.push_str("= ");
                out.push_str(&escape_text(&p.left, EscapeContext::Answer));
                out.push_str(" -> ");
                out.push_str(&escape_text(&p.right, EscapeContext::Answer));
                out.push('\n');
            }
            general_line(out, gf, dialect, None);
        }
    }
}

/// Questions separated by one blank line, with a `$CATEGORY:` line wherever
/// the category changes to a new value.
pub fn serialize_document(
    questions: &[(Question, Option<String>)],
    dialect: Dialect,
) -> Result<String, WriteError> {
    let opts = WriteOptions::default();
    let mut blocks = Vec::with_capacity(questions.len());
    let mut current: Option<&str> = None;
    for (index, (q, category)) in questions.iter().enumerate() {
        if let Some(cat) = category.as_deref() {
            if current != Some(cat) {
                blocks.push(format!("$CATEGORY: {cat}"));
                current = Some(cat);
            }
        }
        let text = serialize_question(q, dialect, &opts).map_err(|e| WriteError::InvalidAt {
            index,
            diagnostics: e.diagnostics().to_vec(),
        })?;
        blocks.push(text);
    }
    if blocks.is_empty() {
        return Ok(String::new());
    }
    let mut out = blocks.join("\n\n");
    out.push('\n');
    Ok(out)
}

/// Type code the question will carry once written and read back in `dialect`.
pub fn exported_type(question: &Question, dialect: Dialect) -> Option<QuestionType> {
    classify(&dialect_form(question, dialect)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MatchPair;
    use crate::parser::{parse_question, unescape_text};

    fn water() -> Question {
        Question::new(
            "Water is a compound of two different elements.",
            Body::Choices {
                choices: vec![
                    Choice::new("Nitrogen", false),
                    Choice::new("Oxygen", true),
                    Choice::new("Carbon Di-Oxide", false),
                    Choice::new("Hydrogen", true),
                ],
            },
        )
        .with_general_feedback("Oxygen and Hydrogen")
    }

    fn write(q: &Question, d: Dialect) -> String {
        serialize_question(q, d, &WriteOptions::default()).unwrap()
    }

    #[test]
    fn escapes() {
        assert_eq!(escape_text("a=b", EscapeContext::Answer), "a\\=b");
        assert_eq!(escape_text("plain", EscapeContext::Stem), "plain");
        assert_eq!(escape_text("x#y", EscapeContext::Feedback), "x\\#y");
        assert_eq!(escape_text("1+1=2", EscapeContext::Stem), "1+1=2");
        assert_eq!(
            escape_text("[x] {y}: z", EscapeContext::Stem),
            "\\[x] \\{y\\}\\: z"
        );
        assert_eq!(escape_text("a\nb", EscapeContext::Feedback), "a\\nb");
        let s = "~=#{}:\\ odd \\q [x";
        assert_eq!(unescape_text(&escape_text(s, EscapeContext::Answer)), s);
    }

    #[test]
    fn true_false_inline() {
        let q = Question::new(
            "1+1=2",
            Body::TrueFalse {
                answer: true,
                feedback_wrong: None,
                feedback_right: None,
            },
        )
        .titled("Q1");
        assert_eq!(write(&q, Dialect::Paper), "::Q1:: 1+1=2 {T}");
    }

    #[test]
    fn numeric_range_inline() {
        let q = Question::new(
            "What is a number from 1 to 5?",
            Body::Numeric {
                answers: vec![NumericAnswer::new(NumericSpec::Range {
                    min: 1.0,
                    max: 5.0,
                })],
            },
        );
        assert_eq!(
            write(&q, Dialect::Paper),
            "What is a number from 1 to 5? {#1..5}"
        );
    }

    #[test]
    fn water_paper_lines() {
        let text = write(&water(), Dialect::Paper);
        assert_eq!(
            text,
            "Water is a compound of two different elements. {\n~ Nitrogen\n= Oxygen\n~ Carbon Di-Oxide\n= Hydrogen\n# Oxygen and Hydrogen\n}"
        );
        assert_eq!(parse_question(&text, Dialect::Paper).unwrap(), water());
    }

    #[test]
    fn water_moodle_weights() {
        let text = write(&water(), Dialect::Moodle);
        assert!(text.contains("~%50% Oxygen"));
        assert!(text.contains("~%-50% Nitrogen"));
        assert!(text.contains("####Oxygen and Hydrogen"));
        let back = parse_question(&text, Dialect::Moodle).unwrap();
        assert_eq!(back, dialect_form(&water(), Dialect::Moodle));
        assert_eq!(write(&back, Dialect::Moodle), text);
    }

    #[test]
    fn fractions() {
        assert_eq!(nearest_moodle_fraction(100.0 / 3.0), 33.333);
        assert_eq!(nearest_moodle_fraction(100.0 / 7.0), 14.2857);
        assert_eq!(nearest_moodle_fraction(100.0 / 11.0), 10.0);
        assert_eq!(nearest_moodle_fraction(50.0), 50.0);
    }

    #[test]
    fn lone_last_feedback_is_pinned() {
        let q = Question::new(
            "pick",
            Body::Choices {
                choices: vec![
                    Choice::new("a", true),
                    Choice::new("b", false).with_feedback("nope"),
                ],
            },
        );
        let text = write(&q, Dialect::Paper);
        assert!(text.ends_with("~ b # nope\n####\n}"), "{text}");
        assert_eq!(parse_question(&text, Dialect::Paper).unwrap(), q);
    }

    #[test]
    fn refuses_invalid() {
        let q = Question::new(
            "m",
            Body::Matching {
                pairs: vec![MatchPair::new("a", "b")],
            },
        );
        let err = serialize_question(&q, Dialect::Paper, &WriteOptions::default()).unwrap_err();
        assert_eq!(err.diagnostics()[0].code, "too_few_pairs");
    }

    #[test]
    fn wrapped_stem_reads_back() {
        let q = Question::new(
            "a fairly long stem that should wrap over several lines // keep",
            Body::TrueFalse {
                answer: false,
                feedback_wrong: None,
                feedback_right: None,
            },
        )
        .titled("w");
        let text = serialize_question(
            &q,
            Dialect::Paper,
            &WriteOptions {
                wrap_width: Some(20),
            },
        )
        .unwrap();
        assert!(text.lines().count() > 2);
        let doc = crate::parser::parse_document(&text, Dialect::Paper);
        assert!(doc.diagnostics.is_empty());
        assert_eq!(doc.questions[0].question, q);
    }

    #[test]
    fn documents() {
        assert_eq!(serialize_document(&[], Dialect::Paper).unwrap(), "");
        let tf = Question::new(
            "x",
            Body::TrueFalse {
                answer: true,
                feedback_wrong: None,
                feedback_right: None,
            },
        );
        let one = serialize_document(&[(tf.clone(), None)], Dialect::Paper).unwrap();
        assert_eq!(one, format!("{}\n", write(&tf, Dialect::Paper)));
        let two = serialize_document(
            &[(tf.clone(), Some("a".into())), (water(), Some("b".into()))],
            Dialect::Paper,
        )
        .unwrap();
        assert!(two.starts_with("$CATEGORY: a\n\n::") || two.starts_with("$CATEGORY: a\n\nx {T}"));
        assert!(two.contains("\n\n$CATEGORY: b\n\n"));
        assert!(two.ends_with("}\n") && !two.ends_with("\n\n"));
    }
}
