//! `giftsmith` command line.
//!
//! Exit codes: 0 on success, 1 when parse or validation diagnostics were
//! reported, 2 on hard failures (I/O, unknown course, bad arguments).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use giftsmith::bank::{
    open_bank, save_bank, save_bank_locked, Bank, BankError, BankLock, RecordFilter,
};
use giftsmith::diagnostic::{count, has_errors, Severity};
use giftsmith::{
    generate_lookup_table, markers_from_flags, parse_document, Body, Choice, Diagnostic, Dialect,
    Marker, MatchPair, NumericAnswer, NumericSpec, Question, QuestionType,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "giftsmith", version, about = "Offline GIFT question bank tool")]
struct Cli {
    /// Question bank file.
    #[arg(long, global = true, default_value = "./bank.giftsmith")]
    bank: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create an empty bank file.
    Init {
        /// Overwrite an existing bank.
        #[arg(long)]
        force: bool,
    },
    /// Manage courses.
    #[command(subcommand)]
    Course(CourseCommand),
    /// Add one question from flags.
    Add(AddArgs),
    /// Import a GIFT file into a course.
    Import {
        file: PathBuf,
        #[arg(long)]
        course: String,
        #[arg(long, default_value = "paper")]
        dialect: Dialect,
    },
    /// Write bank questions as GIFT.
    Export {
        #[arg(long)]
        course: Option<String>,
        /// Question type code 1-6.
        #[arg(long = "type", value_parser = clap::value_parser!(u8).range(1..=6))]
        qtype: Option<u8>,
        #[arg(long, default_value = "paper")]
        dialect: Dialect,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a GIFT file and report diagnostics.
    Validate {
        file: PathBuf,
        #[arg(long, default_value = "paper")]
        dialect: Dialect,
    },
    /// Print the four-option checkbox to marker table.
    LookupTable,
    /// Count questions per course and type.
    Stats,
    /// Run the loopback authoring service.
    Serve {
        #[arg(long, default_value_t = giftsmith_service::DEFAULT_PORT)]
        port: u16,
    },
}

#[derive(Subcommand, Debug)]
enum CourseCommand {
    Add { course_id: String, subject: String },
    List,
}

#[derive(Args, Debug)]
struct AddArgs {
    #[arg(long)]
    course: String,
    #[arg(long)]
    stem: String,
    #[arg(long)]
    title: Option<String>,
    /// Text after the answer block (fill-in-the-blank).
    #[arg(long)]
    suffix: Option<String>,
    /// Choice as `text:correct` or `text:wrong`; repeat for each option.
    #[arg(long = "opt")]
    opts: Vec<String>,
    /// Accepted fill-in-the-blank answer; repeatable.
    #[arg(long = "answer")]
    answers: Vec<String>,
    /// Matching pair as `left -> right`; repeatable.
    #[arg(long = "pair")]
    pairs: Vec<String>,
    /// Numeric answer as `value:tolerance`, `value`, or `min..max`; repeatable.
    #[arg(long = "numeric", allow_hyphen_values = true)]
    numeric: Vec<String>,
    /// True/false answer.
    #[arg(long = "tf")]
    tf: Option<bool>,
    /// General feedback.
    #[arg(long)]
    feedback: Option<String>,
    #[arg(long, default_value = "paper")]
    dialect: Dialect,
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

type Outcome = Result<i32, String>;

/// Run with `argv` (program name first), writing data to `out` and
/// diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_FAILURE
            } else {
                EXIT_OK
            };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    match dispatch(&cli, &mut io) {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(io.err, "error: {message}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cli: &Cli, io: &mut Io) -> Outcome {
    let bank = cli.bank.as_path();
    match &cli.command {
        Command::Init { force } => init(bank, *force, io),
        Command::Course(CourseCommand::Add { course_id, subject }) => {
            mutate(bank, |b| b.create_course(course_id, subject))?;
            w(io.out, format_args!("created course {course_id}"))?;
            Ok(EXIT_OK)
        }
        Command::Course(CourseCommand::List) => {
            for c in &load(bank)?.courses {
                w(io.out, format_args!("{}\t{}", c.course_id, c.subject))?;
            }
            Ok(EXIT_OK)
        }
        Command::Add(args) => add(bank, args, io),
        Command::Import {
            file,
            course,
            dialect,
        } => import(bank, file, course, *dialect, io),
        Command::Export {
            course,
            qtype,
            dialect,
            out,
        } => {
            let b = load(bank)?;
            if let Some(c) = course {
                if b.course(c).is_none() {
                    return Err(BankError::UnknownCourse(c.clone()).to_string());
                }
            }
            let filter = RecordFilter {
                course_id: course.clone(),
                qtype_code: *qtype,
                title_substring: None,
            };
            let text = b.export_gift(&filter, *dialect);
            match out {
                Some(path) => {
                    fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display()))?
                }
                None => io
                    .out
                    .write_all(text.as_bytes())
                    .map_err(|e| e.to_string())?,
            }
            Ok(EXIT_OK)
        }
        Command::Validate { file, dialect } => validate_file(file, *dialect, io),
        Command::LookupTable => {
            w(io.out, format_args!("SL  CB    RES"))?;
            for row in generate_lookup_table() {
                let markers: Vec<String> = row.markers.iter().map(Marker::to_string).collect();
                w(
                    io.out,
                    format_args!("{:>2}  {}  {}", row.index, row.pattern, markers.join(" ")),
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Stats => stats(bank, io),
        Command::Serve { port } => {
            let out = &mut *io.out;
            giftsmith_service::serve_blocking(bank, *port, |addr| {
                let _ = writeln!(out, "serving {} on http://{addr}/", bank.display());
                let _ = out.flush();
            })?;
            Ok(EXIT_OK)
        }
    }
}

fn w(out: &mut dyn Write, args: std::fmt::Arguments) -> Result<(), String> {
    writeln!(out, "{args}").map_err(|e| e.to_string())
}

fn report(err: &mut dyn Write, source: &Path, diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        let _ = writeln!(err, "{}:{d}", source.display());
    }
}

fn load(path: &Path) -> Result<Bank, String> {
    open_bank(path).map_err(|e| e.to_string())
}

/// Open, change and save the bank while holding its writer lock.
fn mutate(path: &Path, f: impl FnOnce(&Bank) -> Result<Bank, BankError>) -> Result<(), String> {
    let _lock = BankLock::acquire(path).map_err(|e| e.to_string())?;
    let bank = load(path)?;
    let next = f(&bank).map_err(|e| e.to_string())?;
    save_bank_locked(&next, path).map_err(|e| e.to_string())
}

fn init(path: &Path, force: bool, io: &mut Io) -> Outcome {
    if path.exists() && !force {
        return Err(format!(
            "{} already exists (use --force to overwrite)",
            path.display()
        ));
    }
    save_bank(&Bank::new(), path).map_err(|e| e.to_string())?;
    w(io.out, format_args!("initialized {}", path.display()))?;
    Ok(EXIT_OK)
}

fn split_opt(raw: &str) -> Result<(String, bool), String> {
    let (text, flag) = raw
        .rsplit_once(':')
        .ok_or_else(|| format!("--opt `{raw}` must look like `text:correct` or `text:wrong`"))?;
    let correct = match flag.trim().to_ascii_lowercase().as_str() {
        "correct" | "c" | "true" | "t" => true,
        "wrong" | "w" | "false" | "f" => false,
        other => {
            return Err(format!(
                "--opt `{raw}`: `{other}` is not `correct` or `wrong`"
            ))
        }
    };
    Ok((text.trim().to_string(), correct))
}

fn parse_spec(raw: &str) -> Result<NumericSpec, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("--numeric `{raw}`: `{}` is not a number", s.trim()))
    };
    if let Some((a, b)) = raw.split_once("..") {
        Ok(NumericSpec::Range {
            min: num(a)?,
            max: num(b)?,
        })
    } else if let Some((v, t)) = raw.split_once(':') {
        Ok(NumericSpec::Point {
            value: num(v)?,
            tolerance: num(t)?,
        })
    } else {
        Ok(NumericSpec::Point {
            value: num(raw)?,
            tolerance: 0.0,
        })
    }
}

fn build_question(args: &AddArgs) -> Result<Question, String> {
    let kinds = [
        !args.opts.is_empty(),
        !args.answers.is_empty(),
        !args.pairs.is_empty(),
        !args.numeric.is_empty(),
        args.tf.is_some(),
    ];
    if kinds.iter().filter(|k| **k).count() != 1 {
        return Err(
            "give exactly one kind of answer: --opt, --answer, --pair, --numeric, or --tf".into(),
        );
    }
    let body = if !args.opts.is_empty() {
        let parsed = args
            .opts
            .iter()
            .map(|o| split_opt(o))
            .collect::<Result<Vec<_>, _>>()?;
        let flags: Vec<bool> = parsed.iter().map(|(_, c)| *c).collect();
        let markers = markers_from_flags(&flags).map_err(|d| d.message)?;
        Body::Choices {
            choices: parsed
                .into_iter()
                .zip(markers)
                .map(|((text, _), m)| Choice::new(text, m == Marker::Correct))
                .collect(),
        }
    } else if !args.answers.is_empty() {
        Body::ShortAnswer {
            answers: args
                .answers
                .iter()
                .map(|a| Choice::new(a.trim(), true))
                .collect(),
        }
    } else if !args.pairs.is_empty() {
        let pairs = args
            .pairs
            .iter()
            .map(|p| {
                p.split_once("->")
                    .map(|(l, r)| MatchPair::new(l.trim(), r.trim()))
                    .ok_or_else(|| format!("--pair `{p}` must look like `left -> right`"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Body::Matching { pairs }
    } else if !args.numeric.is_empty() {
        Body::Numeric {
            answers: args
                .numeric
                .iter()
                .map(|n| parse_spec(n).map(NumericAnswer::new))
                .collect::<Result<Vec<_>, _>>()?,
        }
    } else {
        Body::TrueFalse {
            answer: args.tf.unwrap_or(true),
            feedback_wrong: None,
            feedback_right: None,
        }
    };
    let mut q = Question::new(args.stem.trim(), body);
    q.title = args.title.as_ref().map(|t| t.trim().to_string());
    q.stem_suffix = args.suffix.as_deref().unwrap_or("").trim().to_string();
    q.general_feedback = args.feedback.as_ref().map(|f| f.trim().to_string());
    Ok(q)
}

fn add(path: &Path, args: &AddArgs, io: &mut Io) -> Outcome {
    let question = build_question(args)?;
    let _lock = BankLock::acquire(path).map_err(|e| e.to_string())?;
    let bank = load(path)?;
    match bank.add_question(&args.course, question, args.dialect) {
        Ok((bank, id)) => {
            save_bank_locked(&bank, path).map_err(|e| e.to_string())?;
            let r = bank.record(id).expect("just added");
            let qtype = QuestionType::from_code(r.qtype_code).expect("valid code");
            w(
                io.out,
                format_args!("added record {id} ({qtype}, type {})", r.qtype_code),
            )?;
            Ok(EXIT_OK)
        }
        Err(BankError::Invalid(diagnostics)) => {
            for d in &diagnostics {
                let _ = writeln!(io.err, "{d}");
            }
            Ok(EXIT_DIAGNOSTICS)
        }
        Err(e) => Err(e.to_string()),
    }
}

fn import(path: &Path, file: &Path, course: &str, dialect: Dialect, io: &mut Io) -> Outcome {
    let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let _lock = BankLock::acquire(path).map_err(|e| e.to_string())?;
    let bank = load(path)?;
    let outcome = bank
        .import_gift(course, &text, dialect)
        .map_err(|e| e.to_string())?;
    save_bank_locked(&outcome.bank, path).map_err(|e| e.to_string())?;
    report(io.err, file, &outcome.diagnostics);
    let ids: Vec<String> = outcome.record_ids.iter().map(u64::to_string).collect();
    w(
        io.out,
        format_args!(
            "imported {} questions into {course}: [{}]",
            outcome.record_ids.len(),
            ids.join(", ")
        ),
    )?;
    Ok(if has_errors(&outcome.diagnostics) {
        EXIT_DIAGNOSTICS
    } else {
        EXIT_OK
    })
}

fn validate_file(file: &Path, dialect: Dialect, io: &mut Io) -> Outcome {
    let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let result = parse_document(&text, dialect);
    report(io.err, file, &result.diagnostics);
    w(
        io.out,
        format_args!(
            "{} questions, {} errors, {} warnings",
            result.questions.len(),
            count(&result.diagnostics, Severity::Error),
            count(&result.diagnostics, Severity::Warning)
        ),
    )?;
    Ok(if result.has_errors() {
        EXIT_DIAGNOSTICS
    } else {
        EXIT_OK
    })
}

fn stats(path: &Path, io: &mut Io) -> Outcome {
    let bank = load(path)?;
    let stats = bank.stats();
    w(
        io.out,
        format_args!(
            "{} courses, {} questions",
            bank.courses.len(),
            bank.records.len()
        ),
    )?;
    for (course, types) in &stats {
        let subject = bank.course(course).map_or("", |c| c.subject.as_str());
        let total: usize = types.values().sum();
        w(io.out, format_args!("{course} ({subject}): {total}"))?;
        for (code, n) in types {
            let label = QuestionType::from_code(*code).map_or("unknown", QuestionType::label);
            w(io.out, format_args!("  type {code} {label}: {n}"))?;
        }
    }
    Ok(EXIT_OK)
}
