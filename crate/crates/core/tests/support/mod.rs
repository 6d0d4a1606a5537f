//! Shared test helpers: a seeded generator of valid questions and banks, and
//! the checked-in fixtures.
#![allow(dead_code)]

use giftsmith::bank::Bank;
use giftsmith::{
    Body, Choice, Dialect, MatchPair, NumericAnswer, NumericSpec, Question, QuestionType,
    TextFormat,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIVE_QUESTIONS: &str = include_str!("../../fixtures/five_questions.gift");
pub const WATER_EXPORT: &str = include_str!("../../fixtures/water_export.gift");
pub const LOOKUP_TABLE: &str = include_str!("../../fixtures/lookup_table.txt");

pub fn water_question() -> Question {
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

/// Characters that exercise escaping and structure detection.
const TRICKY: &[&str] = &[
    "~",
    "=",
    "#",
    "{",
    "}",
    ":",
    "\\",
    "[",
    "]",
    "%",
    "/",
    "-",
    ">",
    "->",
    "::",
    "####",
    "\\n",
    "\n",
    "é",
    "中",
    "'",
    "\"",
    "+",
    "T",
    "F",
    "..",
    "$CATEGORY:",
    "//",
];

const WORDS: &[&str] = &[
    "water", "oxygen", "cat", "dog", "food", "yellow", "red", "blue", "two", "2", "3.5", "plus",
    "equals", "four", "Nitrogen", "compound", "true", "false", "x", "Q",
];

pub struct QuestionGen {
    rng: ChaCha8Rng,
}

impl QuestionGen {
    pub fn new(seed: u64) -> Self {
        QuestionGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn word(&mut self) -> String {
        let mut w = String::new();
        for _ in 0..self.rng.gen_range(1..=3) {
            if self.rng.gen_bool(0.25) {
                w.push_str(TRICKY.choose(&mut self.rng).unwrap());
            } else {
                w.push_str(WORDS.choose(&mut self.rng).unwrap());
            }
        }
        w
    }

    /// Non-empty, trimmed text. `arrows` allows `->`.
    fn text(&mut self, arrows: bool) -> String {
        loop {
            let n = self.rng.gen_range(1..=4);
            let words: Vec<String> = (0..n).map(|_| self.word()).collect();
            let t = words.join(" ");
            let t = if arrows { t } else { t.replace("->", "-") };
            let t = t.trim().to_string();
            if !t.is_empty() && (arrows || !t.contains("->")) {
                return t;
            }
        }
    }

    fn maybe_text(&mut self, p: f64) -> Option<String> {
        self.rng.gen_bool(p).then(|| self.text(true))
    }

    fn weight(&mut self) -> f64 {
        match self.rng.gen_range(0..4) {
            0 => *[100.0, 50.0, -50.0, 33.333, 0.0, -100.0]
                .choose(&mut self.rng)
                .unwrap(),
            1 => self.rng.gen_range(-100i32..=100) as f64,
            _ => self.rng.gen_range(-100.0..=100.0),
        }
    }

    fn number(&mut self) -> f64 {
        match self.rng.gen_range(0..3) {
            0 => self.rng.gen_range(-1000i32..1000) as f64,
            1 => self.rng.gen_range(-1.0e6..1.0e6),
            _ => self.rng.gen_range(-1.0..1.0) * 1e-3,
        }
    }

    fn choices(&mut self, n: usize, correct: &[bool], weighted: bool) -> Vec<Choice> {
        (0..n)
            .map(|i| Choice {
                text: self.text(false),
                correct: correct[i],
                weight: (weighted && self.rng.gen_bool(0.7)).then(|| self.weight()),
                feedback: self.maybe_text(0.4),
            })
            .collect()
    }

    pub fn question_of(&mut self, kind: QuestionType) -> Question {
        let body = match kind {
            QuestionType::TrueFalse => Body::TrueFalse {
                answer: self.rng.gen(),
                feedback_wrong: self.maybe_text(0.4),
                feedback_right: self.maybe_text(0.4),
            },
            QuestionType::MultipleChoiceSingle => {
                let n = self.rng.gen_range(2..=6);
                let mut flags = vec![false; n];
                flags[self.rng.gen_range(0..n)] = true;
                Body::Choices {
                    choices: self.choices(n, &flags, false),
                }
            }
            QuestionType::MultipleResponse => {
                let n = self.rng.gen_range(3..=7);
                let weighted = self.rng.gen_bool(0.4);
                let mut flags: Vec<bool> = (0..n).map(|_| self.rng.gen_bool(0.5)).collect();
                let wrong = self.rng.gen_range(0..n);
                flags[wrong] = false;
                if !weighted {
                    let mut others: Vec<usize> = (0..n).filter(|&i| i != wrong).collect();
                    others.shuffle(&mut self.rng);
                    flags[others[0]] = true;
                    flags[others[1]] = true;
                }
                let mut choices = self.choices(n, &flags, weighted);
                if weighted && choices.iter().all(|c| c.weight.is_none()) {
                    choices[0].weight = Some(self.weight());
                }
                Body::Choices { choices }
            }
            QuestionType::ShortAnswer => {
                let n = self.rng.gen_range(1..=4);
                let weighted = self.rng.gen_bool(0.3);
                Body::ShortAnswer {
                    answers: self.choices(n, &vec![true; n], weighted),
                }
            }
            QuestionType::Matching => {
                let n = self.rng.gen_range(2..=5);
                Body::Matching {
                    pairs: (0..n)
                        .map(|_| MatchPair::new(self.text(false), self.text(true)))
                        .collect(),
                }
            }
            QuestionType::Numeric => {
                let n = self.rng.gen_range(1..=3);
                let answers = (0..n)
                    .map(|_| {
                        let spec = if self.rng.gen() {
                            NumericSpec::Point {
                                value: self.number(),
                                tolerance: self.number().abs(),
                            }
                        } else {
                            let (a, b) = (self.number(), self.number());
                            NumericSpec::Range {
                                min: a.min(b),
                                max: a.max(b),
                            }
                        };
                        NumericAnswer {
                            spec,
                            weight: self.rng.gen_bool(0.3).then(|| self.weight()),
                            feedback: self.maybe_text(0.3),
                        }
                    })
                    .collect();
                Body::Numeric { answers }
            }
        };
        let missing_word = matches!(body, Body::Choices { .. } | Body::ShortAnswer { .. });
        let title = self.maybe_text(0.6);
        let text_format = self.rng.gen_bool(0.2).then(|| {
            *[
                TextFormat::Html,
                TextFormat::Markdown,
                TextFormat::Plain,
                TextFormat::Moodle,
            ]
            .choose(&mut self.rng)
            .unwrap()
        });
        let mut stem = self.text(true);
        while title.is_none() && text_format.is_none() && stem.starts_with("//") {
            stem = self.text(true);
        }
        Question {
            title,
            text_format,
            stem_prefix: stem,
            stem_suffix: if missing_word && self.rng.gen_bool(0.3) {
                self.text(true)
            } else {
                String::new()
            },
            body,
            general_feedback: self.maybe_text(0.4),
        }
    }

    pub fn question(&mut self) -> Question {
        let kind = *QuestionType::ALL.choose(&mut self.rng).unwrap();
        self.question_of(kind)
    }

    /// `n` questions cycling through all six types.
    pub fn corpus(&mut self, n: usize) -> Vec<Question> {
        (0..n)
            .map(|i| self.question_of(QuestionType::ALL[i % 6]))
            .collect()
    }

    /// A bank with a few courses and `records` mixed-type questions, with some
    /// removals so ids have gaps.
    pub fn bank(&mut self, records: usize) -> Bank {
        let mut bank = Bank::new();
        let courses = self.rng.gen_range(1..=3);
        for c in 0..courses {
            bank = bank
                .create_course(&format!("C{}", 100 + c), &self.text(false))
                .unwrap();
        }
        let mut added = 0;
        while added < records {
            let course = format!("C{}", 100 + self.rng.gen_range(0..courses));
            let (next, id) = bank
                .add_question(&course, self.question(), Dialect::Paper)
                .unwrap();
            bank = next;
            added += 1;
            if self.rng.gen_bool(0.1) {
                bank = bank.remove_question(id).unwrap();
                added -= 1;
            }
        }
        bank
    }
}
