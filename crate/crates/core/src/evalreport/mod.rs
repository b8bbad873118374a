// SPDX-License-Identifier: MIT OR Apache-2.0

//! Answer scoring, accuracy tables and figure output.

mod figures;

pub use figures::{colormap, count_cells, emit_figures, FigureInputs};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chaingen::{AnnotatedSample, Domain};
use crate::condition::{Condition, Language, Order};

/// Outcome of comparing one generation with its gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub correct: bool,
    pub normalized_generated: String,
    pub normalized_gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finding: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_key: String,
    pub domain: Domain,
    pub condition: Condition,
    pub generated_answer: String,
    pub gold_answer: String,
    #[serde(flatten)]
    pub score: AnswerScore,
}

const SENTENCE_END: [char; 7] = ['.', '!', '?', '。', '！', '？', '\n'];

/// Keep letters and digits only; English is also lowercased.
pub fn normalize(text: &str, language: Language) -> String {
    let kept = text.chars().filter(|c| c.is_alphanumeric());
    match language {
        Language::En => kept.flat_map(char::to_lowercase).collect(),
        Language::Zh => kept.collect(),
    }
}

/// First sentence of `text` with non-empty normalized content.
pub fn first_sentence(text: &str, language: Language) -> &str {
    text.split(SENTENCE_END)
        .find(|s| !normalize(s, language).is_empty())
        .unwrap_or("")
}

/// Correct iff the normalized gold answer occurs inside the normalized
/// first sentence of the generation.
pub fn score_answer(generated: &str, gold: &str, language: Language) -> AnswerScore {
    let normalized_gold = normalize(gold, language);
    let normalized_generated = normalize(first_sentence(generated, language), language);
    let finding = if normalized_generated.is_empty() {
        Some("empty generation".to_string())
    } else if normalized_gold.is_empty() {
        Some("empty gold answer".to_string())
    } else {
        None
    };
    let correct = finding.is_none() && normalized_generated.contains(&normalized_gold);
    AnswerScore {
        correct,
        normalized_generated,
        normalized_gold,
        finding,
    }
}

pub fn score_sample(sample: &AnnotatedSample, generated: &str) -> ScoredSample {
    ScoredSample {
        sample_key: sample.key.clone(),
        domain: sample.domain,
        condition: sample.condition(),
        generated_answer: generated.to_string(),
        gold_answer: sample.gold_answer.clone(),
        score: score_answer(generated, &sample.gold_answer, sample.language),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn percent(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub condition: Condition,
    pub cells: BTreeMap<Domain, Tally>,
}

impl AccuracyRow {
    pub fn cell(&self, domain: Domain) -> Option<f64> {
        self.cells.get(&domain).and_then(Tally::percent)
    }

    /// Mean of the domain cells that have samples.
    pub fn average(&self) -> Option<f64> {
        let cells: Vec<f64> = Domain::ALL.iter().filter_map(|d| self.cell(*d)).collect();
        (!cells.is_empty()).then(|| cells.iter().sum::<f64>() / cells.len() as f64)
    }

    pub fn correct(&self) -> usize {
        self.cells.values().map(|t| t.correct).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    /// One row per condition present in `scored`, ordered by condition.
    pub fn build(model: &str, scored: &[ScoredSample]) -> AccuracyTable {
        let mut rows: BTreeMap<Condition, BTreeMap<Domain, Tally>> = BTreeMap::new();
        for s in scored {
            let tally = rows.entry(s.condition).or_default().entry(s.domain).or_default();
            tally.total += 1;
            tally.correct += s.score.correct as usize;
        }
        AccuracyTable {
            rows: rows
                .into_iter()
                .map(|(condition, cells)| AccuracyRow {
                    model: model.to_string(),
                    condition,
                    cells,
                })
                .collect(),
        }
    }

    pub fn row(&self, condition: Condition) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// One Markdown table per chain order.
    pub fn to_markdown(&self) -> String {
        let fmt_cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
        let mut out = String::new();
        for order in Order::ALL {
            let rows: Vec<&AccuracyRow> = self.rows.iter().filter(|r| r.condition.order == order).collect();
            if rows.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "### Accuracy (%), {} order\n", order.as_str());
            out.push_str("| Model |");
            for d in Domain::ALL {
                let _ = write!(out, " {} |", d.short_label());
            }
            out.push_str(" Avg |\n|---|");
            out.push_str(&"---:|".repeat(Domain::ALL.len() + 1));
            out.push('\n');
            for r in rows {
                let lang = match r.condition.language {
                    Language::En => "En",
                    Language::Zh => "Zh",
                };
                let _ = write!(out, "| {} ({lang}) |", r.model);
                for d in Domain::ALL {
                    let _ = write!(out, " {} |", fmt_cell(r.cell(d)));
                }
                let _ = writeln!(out, " {} |", fmt_cell(r.average()));
            }
        }
        out
    }

    /// Long-form CSV: `model, condition, domain, correct, total, accuracy`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "condition", "domain", "correct", "total", "accuracy"])?;
        for r in &self.rows {
            for d in Domain::ALL {
                let t = r.cells.get(&d).copied().unwrap_or_default();
                let acc = t.percent().map_or_else(String::new, |v| format!("{v:.1}"));
                w.write_record([
                    r.model.as_str(),
                    &r.condition.label(),
                    d.as_str(),
                    &t.correct.to_string(),
                    &t.total.to_string(),
                    &acc,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoring_examples() {
        assert!(score_answer("Aroma spreads.", "Aroma spreads.", Language::En).correct);
        assert!(score_answer("The final result is that aroma spreads widely.", "Aroma spreads.", Language::En).correct);
        assert!(score_answer("香气扩散。", "香气扩散", Language::Zh).correct);
        assert!(!score_answer("Bread toasts. Aroma spreads.", "Aroma spreads.", Language::En).correct);
        let empty = score_answer("  ...", "Aroma spreads.", Language::En);
        assert!(!empty.correct);
        assert!(empty.finding.is_some());
    }

    #[test]
    fn first_sentence_skips_empty_segments() {
        assert_eq!(first_sentence("\n\nAroma spreads. Then more.", Language::En), "Aroma spreads");
        assert_eq!(first_sentence("香气扩散。然后", Language::Zh), "香气扩散");
    }

    #[test]
    fn table_cells_and_markdown() {
        let cond = Condition::new(Language::En, Order::Forward);
        let mk = |key: &str, domain, correct| ScoredSample {
            sample_key: key.into(),
            domain,
            condition: cond,
            generated_answer: String::new(),
            gold_answer: String::new(),
            score: AnswerScore {
                correct,
                normalized_generated: String::new(),
                normalized_gold: String::new(),
                finding: None,
            },
        };
        let scored = vec![
            mk("a", Domain::HouseholdRoutine, true),
            mk("b", Domain::HouseholdRoutine, false),
            mk("c", Domain::NaturalEvents, true),
        ];
        let table = AccuracyTable::build("m", &scored);
        let row = table.row(cond).unwrap();
        assert_eq!(row.cell(Domain::HouseholdRoutine), Some(50.0));
        assert_eq!(row.cell(Domain::SchoolLife), None);
        assert_eq!(row.average(), Some(75.0));
        assert_eq!(row.correct(), 2);
        let md = table.to_markdown();
        assert!(md.contains("| m (En) | 50.0 | 100.0 | n/a |"));
        assert!(!md.contains("reversed"));
    }
}
