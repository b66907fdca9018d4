use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::types::{Category, Question};

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn canonicalize(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn synonym(s: &str) -> &str {
    match s {
        "yes" | "y" | "yeah" | "yep" | "true" | "correct" => "yes",
        "no" | "n" | "nope" | "false" | "incorrect" => "no",
        other => other,
    }
}

/// Canonical answer for a raw prediction. A lone letter is read as a
/// multiple-choice pick from `question.choices` (`a` is the first).
pub fn extract_answer(prediction: &str, question: &Question) -> String {
    let c = canonicalize(prediction);
    if let [letter] = c.as_bytes() {
        if letter.is_ascii_lowercase() {
            if let Some(choice) = question.choices.get((letter - b'a') as usize) {
                return canonicalize(choice);
            }
        }
    }
    let body = ["the ", "an ", "a "]
        .iter()
        .find_map(|a| c.strip_prefix(a))
        .unwrap_or(&c);
    synonym(body).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAccuracy {
    pub category: String,
    pub correct: usize,
    pub total: usize,
    /// Percent; `None` when the cell has no questions.
    pub accuracy: Option<f64>,
}

impl CategoryAccuracy {
    fn new(category: &str, correct: usize, total: usize) -> Self {
        Self {
            category: category.to_string(),
            correct,
            total,
            accuracy: (total > 0).then(|| 100.0 * correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// One row per category, in report order.
    pub rows: Vec<CategoryAccuracy>,
    pub overall: CategoryAccuracy,
    /// Questions without a prediction; each counted wrong.
    pub missing: usize,
}

impl AccuracyReport {
    /// Category rows followed by the overall row.
    pub fn table(&self) -> Vec<&CategoryAccuracy> {
        self.rows.iter().chain(std::iter::once(&self.overall)).collect()
    }
}

#[derive(Clone, Copy, Default)]
struct Tally {
    correct: [usize; 6],
    total: [usize; 6],
    missing: usize,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        for i in 0..6 {
            self.correct[i] += o.correct[i];
            self.total[i] += o.total[i];
        }
        self.missing += o.missing;
        self
    }
}

/// Per-category accuracy of `predictions` (keyed by question id).
pub fn evaluate_answers(predictions: &HashMap<String, String>, questions: &[Question]) -> AccuracyReport {
    let tally = questions
        .par_iter()
        .fold(Tally::default, |mut t, q| {
            let i = q.category.index();
            t.total[i] += 1;
            match predictions.get(&q.id) {
                Some(p) if extract_answer(p, q) == canonicalize(&q.gold) => t.correct[i] += 1,
                Some(_) => {}
                None => t.missing += 1,
            }
            t
        })
        .reduce(Tally::default, Tally::merge);
    let rows = Category::ALL
        .iter()
        .map(|c| CategoryAccuracy::new(c.name(), tally.correct[c.index()], tally.total[c.index()]))
        .collect();
    AccuracyReport {
        rows,
        overall: CategoryAccuracy::new(
            "Overall Acc.",
            tally.correct.iter().sum(),
            tally.total.iter().sum(),
        ),
        missing: tally.missing,
    }
}

#[derive(Deserialize)]
struct PredictionLine {
    #[serde(alias = "question_id")]
    id: String,
    #[serde(alias = "prediction", alias = "pred")]
    answer: String,
}

/// Reads predictions either as JSON lines `{"id": ..., "answer": ...}` or as
/// one JSON object `{id: answer}`.
pub fn parse_predictions(text: &str) -> Result<HashMap<String, String>> {
    let lines: std::result::Result<Vec<PredictionLine>, _> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect();
    match lines {
        Ok(lines) => Ok(lines.into_iter().map(|p| (p.id, p.answer)).collect()),
        Err(line_err) => serde_json::from_str::<HashMap<String, String>>(text)
            .map_err(|_| Error::InvalidArgument(format!("unreadable predictions: {line_err}"))),
    }
}
