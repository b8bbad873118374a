// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bilingual causal-chain dataset generation.
//!
//! Every [`CausalTriple`] of a [`Lexicon`] is rendered into a statement and a
//! question for each language and order. Component spans are recorded in
//! Unicode scalar offsets over the sample's *prompt text*: the statement, a
//! language-specific separator (a space for English, nothing for Chinese),
//! then the question. See [`AnnotatedSample::prompt_text`].

mod lexicon;
pub mod template;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use lexicon::{
    load_lexicon, CausalTriple, ChainPhrases, Lexicon, LexiconError, LexiconIssue, Step,
    MIN_TRIPLES_PER_DOMAIN,
};
use template::Piece;

use crate::condition::{Condition, Language, Order};

/// The eight lexicon domains, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    HouseholdRoutine,
    NaturalEvents,
    SchoolLife,
    Healthcare,
    ShoppingRetail,
    WorkplaceActivities,
    PublicTransportation,
    LeisureRecreation,
}

impl Domain {
    pub const ALL: [Domain; 8] = [
        Domain::HouseholdRoutine,
        Domain::NaturalEvents,
        Domain::SchoolLife,
        Domain::Healthcare,
        Domain::ShoppingRetail,
        Domain::WorkplaceActivities,
        Domain::PublicTransportation,
        Domain::LeisureRecreation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::HouseholdRoutine => "household_routine",
            Domain::NaturalEvents => "natural_events",
            Domain::SchoolLife => "school_life",
            Domain::Healthcare => "healthcare",
            Domain::ShoppingRetail => "shopping_retail",
            Domain::WorkplaceActivities => "workplace_activities",
            Domain::PublicTransportation => "public_transportation",
            Domain::LeisureRecreation => "leisure_recreation",
        }
    }

    /// Column header used in accuracy tables.
    pub fn short_label(self) -> &'static str {
        match self {
            Domain::HouseholdRoutine => "House",
            Domain::NaturalEvents => "Nature",
            Domain::SchoolLife => "School",
            Domain::Healthcare => "Health",
            Domain::ShoppingRetail => "Shop",
            Domain::WorkplaceActivities => "Work",
            Domain::PublicTransportation => "Trans",
            Domain::LeisureRecreation => "Leisure",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

/// Annotated component of a rendered sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentId {
    CauseSubj,
    CauseVerb,
    InterSubj,
    InterVerb,
    FinalSubj,
    FinalVerb,
    QSubj,
    QVerb,
    Once,
    Then,
    If,
    Therefore,
    FinalResultTrigger,
    DueTo,
    OriginatesFrom,
}

impl ComponentId {
    /// The thirteen syntactic components of a forward chain.
    pub const SYNTACTIC: [ComponentId; 13] = [
        ComponentId::CauseSubj,
        ComponentId::CauseVerb,
        ComponentId::InterSubj,
        ComponentId::InterVerb,
        ComponentId::FinalSubj,
        ComponentId::FinalVerb,
        ComponentId::QSubj,
        ComponentId::QVerb,
        ComponentId::Once,
        ComponentId::Then,
        ComponentId::If,
        ComponentId::Therefore,
        ComponentId::FinalResultTrigger,
    ];

    pub const ALL: [ComponentId; 15] = [
        ComponentId::CauseSubj,
        ComponentId::CauseVerb,
        ComponentId::InterSubj,
        ComponentId::InterVerb,
        ComponentId::FinalSubj,
        ComponentId::FinalVerb,
        ComponentId::QSubj,
        ComponentId::QVerb,
        ComponentId::Once,
        ComponentId::Then,
        ComponentId::If,
        ComponentId::Therefore,
        ComponentId::FinalResultTrigger,
        ComponentId::DueTo,
        ComponentId::OriginatesFrom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentId::CauseSubj => "cause_subj",
            ComponentId::CauseVerb => "cause_verb",
            ComponentId::InterSubj => "inter_subj",
            ComponentId::InterVerb => "inter_verb",
            ComponentId::FinalSubj => "final_subj",
            ComponentId::FinalVerb => "final_verb",
            ComponentId::QSubj => "q_subj",
            ComponentId::QVerb => "q_verb",
            ComponentId::Once => "once",
            ComponentId::Then => "then",
            ComponentId::If => "if",
            ComponentId::Therefore => "therefore",
            ComponentId::FinalResultTrigger => "final_result_trigger",
            ComponentId::DueTo => "due_to",
            ComponentId::OriginatesFrom => "originates_from",
        }
    }

    pub fn is_connective(self) -> bool {
        matches!(
            self,
            ComponentId::Once
                | ComponentId::Then
                | ComponentId::If
                | ComponentId::Therefore
                | ComponentId::DueTo
                | ComponentId::OriginatesFrom
        )
    }

    pub fn is_subject(self) -> bool {
        matches!(
            self,
            ComponentId::CauseSubj | ComponentId::InterSubj | ComponentId::FinalSubj | ComponentId::QSubj
        )
    }

    pub fn is_verb(self) -> bool {
        matches!(
            self,
            ComponentId::CauseVerb | ComponentId::InterVerb | ComponentId::FinalVerb | ComponentId::QVerb
        )
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown component `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalRole {
    Cause,
    Intermediate,
    Final,
}

impl CausalRole {
    pub const ALL: [CausalRole; 3] = [CausalRole::Cause, CausalRole::Intermediate, CausalRole::Final];

    pub fn as_str(self) -> &'static str {
        match self {
            CausalRole::Cause => "cause",
            CausalRole::Intermediate => "intermediate",
            CausalRole::Final => "final",
        }
    }

    /// The subject/verb components that realize this role in the chain statement.
    pub fn components(self) -> [ComponentId; 2] {
        match self {
            CausalRole::Cause => [ComponentId::CauseSubj, ComponentId::CauseVerb],
            CausalRole::Intermediate => [ComponentId::InterSubj, ComponentId::InterVerb],
            CausalRole::Final => [ComponentId::FinalSubj, ComponentId::FinalVerb],
        }
    }
}

impl fmt::Display for CausalRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CausalRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CausalRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown causal role `{s}`"))
    }
}

/// Half-open `[start, end)` span in Unicode scalar values over the prompt text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub component: ComponentId,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub key: String,
    pub domain: Domain,
    pub language: Language,
    pub order: Order,
    pub rendered_text: String,
    pub question_text: String,
    pub gold_answer: String,
    pub annotations: Vec<Annotation>,
    pub causal_roles: BTreeMap<CausalRole, [ComponentId; 2]>,
}

impl AnnotatedSample {
    pub fn condition(&self) -> Condition {
        Condition::new(self.language, self.order)
    }

    /// Statement, separator and question: the text annotation offsets refer to.
    pub fn prompt_text(&self) -> String {
        format!(
            "{}{}{}",
            self.rendered_text,
            template::separator(self.language),
            self.question_text
        )
    }

    /// Character offset where the question begins within [`prompt_text`](Self::prompt_text).
    pub fn question_offset(&self) -> usize {
        self.rendered_text.chars().count() + template::separator(self.language).chars().count()
    }

    /// Length of the chain statement in characters.
    pub fn statement_len(&self) -> usize {
        self.rendered_text.chars().count()
    }

    pub fn component_ids(&self) -> BTreeSet<ComponentId> {
        self.annotations.iter().map(|a| a.component).collect()
    }

    pub fn annotation(&self, id: ComponentId) -> Option<&Annotation> {
        self.annotations.iter().find(|a| a.component == id)
    }

    /// Substring of the prompt text covered by `annotation`.
    pub fn span_text(&self, annotation: &Annotation) -> String {
        self.prompt_text()
            .chars()
            .skip(annotation.start)
            .take(annotation.end.saturating_sub(annotation.start))
            .collect()
    }
}

/// Render one triple with the template for `language` and `order`.
pub fn render_chain(triple: &CausalTriple, language: Language, order: Order) -> AnnotatedSample {
    let phrases = triple.phrases(language);
    let phrase_for = |id: ComponentId| -> &str {
        match id {
            ComponentId::CauseSubj | ComponentId::QSubj => &phrases.cause().subject,
            ComponentId::CauseVerb | ComponentId::QVerb => &phrases.cause().verb,
            ComponentId::InterSubj => &phrases.intermediate().subject,
            ComponentId::InterVerb => &phrases.intermediate().verb,
            ComponentId::FinalSubj => &phrases.final_effect().subject,
            ComponentId::FinalVerb => &phrases.final_effect().verb,
            other => unreachable!("{other} is a connective, not a lexicon phrase"),
        }
    };

    let mut builder = SpanBuilder::default();
    for piece in template::statement(language, order) {
        builder.push(*piece, &phrase_for);
    }
    let rendered_text = std::mem::take(&mut builder.text);
    builder.offset = rendered_text.chars().count() + template::separator(language).chars().count();
    for piece in template::question(language, order) {
        builder.push(*piece, &phrase_for);
    }
    let question_text = builder.text;

    let final_step = phrases.final_effect();
    let gold_answer = match language {
        Language::En => format!(
            "{} {}.",
            template::capitalize_first(&final_step.subject),
            final_step.verb
        ),
        Language::Zh => format!("{}{}", final_step.subject, final_step.verb),
    };

    let causal_roles = CausalRole::ALL.into_iter().map(|r| (r, r.components())).collect();

    AnnotatedSample {
        key: triple.key.clone(),
        domain: triple.domain,
        language,
        order,
        rendered_text,
        question_text,
        gold_answer,
        annotations: builder.annotations,
        causal_roles,
    }
}

#[derive(Default)]
struct SpanBuilder {
    text: String,
    offset: usize,
    annotations: Vec<Annotation>,
}

impl SpanBuilder {
    fn push<'a>(&mut self, piece: Piece, phrase_for: &impl Fn(ComponentId) -> &'a str) {
        let (id, text) = match piece {
            Piece::Literal(lit) => {
                self.append(lit);
                return;
            }
            Piece::Connective(id, text) => (id, text.to_string()),
            Piece::Phrase { id, capitalize } => {
                let phrase = phrase_for(id);
                let text = if capitalize {
                    template::capitalize_first(phrase)
                } else {
                    phrase.to_string()
                };
                (id, text)
            }
        };
        let start = self.offset;
        self.append(&text);
        self.annotations.push(Annotation {
            component: id,
            start,
            end: self.offset,
        });
    }

    fn append(&mut self, s: &str) {
        self.text.push_str(s);
        self.offset += s.chars().count();
    }
}

/// Render every triple for every requested language and order.
///
/// Output is grouped by language, then order, then lexicon order.
pub fn generate_dataset(lexicon: &Lexicon, languages: &[Language], orders: &[Order]) -> Vec<AnnotatedSample> {
    let mut samples = Vec::with_capacity(languages.len() * orders.len() * lexicon.len());
    for &language in languages {
        for &order in orders {
            samples.extend(lexicon.triples().map(|t| render_chain(t, language, order)));
        }
    }
    samples
}

/// Check that the sample text is exactly the template literals interleaved
/// with the annotated spans, in template order.
pub fn verify_tiling(sample: &AnnotatedSample) -> Result<(), String> {
    let chars: Vec<char> = sample.prompt_text().chars().collect();
    let mut cursor = 0usize;
    let mut rebuilt = String::new();
    let mut annotations = sample.annotations.iter();
    for piece in template::full(sample.language, sample.order) {
        match piece {
            Piece::Literal(lit) => {
                let n = lit.chars().count();
                let got: String = chars.get(cursor..cursor + n).unwrap_or(&[]).iter().collect();
                if got != lit {
                    return Err(format!("{}: expected literal {lit:?} at {cursor}, found {got:?}", sample.key));
                }
                rebuilt.push_str(lit);
                cursor += n;
            }
            Piece::Connective(id, _) | Piece::Phrase { id, .. } => {
                let ann = annotations
                    .next()
                    .ok_or_else(|| format!("{}: missing annotation for {id}", sample.key))?;
                if ann.component != id || ann.start != cursor || ann.end <= ann.start || ann.end > chars.len() {
                    return Err(format!(
                        "{}: expected {id} span starting at {cursor}, found {:?}",
                        sample.key, ann
                    ));
                }
                if let Piece::Connective(_, text) = piece {
                    let got: String = chars[ann.start..ann.end].iter().collect();
                    if got != text {
                        return Err(format!("{}: connective {id} reads {got:?}", sample.key));
                    }
                }
                rebuilt.extend(&chars[ann.start..ann.end]);
                cursor = ann.end;
            }
        }
    }
    if annotations.next().is_some() {
        return Err(format!("{}: extra annotations", sample.key));
    }
    if rebuilt != sample.prompt_text() {
        return Err(format!("{}: reconstruction differs from text", sample.key));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMismatch {
    pub key: String,
    pub order: Order,
    /// Component whose presence differs, if the mismatch concerns one.
    pub component: Option<ComponentId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub keys_checked: usize,
    pub mismatches: Vec<AlignmentMismatch>,
}

impl AlignmentReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compare English and Chinese renderings of each (key, order).
///
/// Shared components are the non-connective ids; connectives are language
/// template material and are not compared.
pub fn validate_cross_alignment(samples: &[AnnotatedSample]) -> AlignmentReport {
    let mut groups: BTreeMap<(&str, Order), BTreeMap<Language, &AnnotatedSample>> = BTreeMap::new();
    for s in samples {
        groups.entry((s.key.as_str(), s.order)).or_default().insert(s.language, s);
    }

    let mut mismatches = Vec::new();
    let mut keys = BTreeSet::new();
    for ((key, order), by_lang) in &groups {
        keys.insert(*key);
        let (Some(en), Some(zh)) = (by_lang.get(&Language::En), by_lang.get(&Language::Zh)) else {
            let present: Vec<_> = by_lang.keys().map(|l| l.as_str()).collect();
            mismatches.push(AlignmentMismatch {
                key: key.to_string(),
                order: *order,
                component: None,
                detail: format!("no counterpart language (present: {})", present.join(",")),
            });
            continue;
        };
        let shared = |s: &AnnotatedSample| -> BTreeSet<ComponentId> {
            s.component_ids().into_iter().filter(|c| !c.is_connective()).collect()
        };
        let (en_ids, zh_ids) = (shared(en), shared(zh));
        for c in en_ids.symmetric_difference(&zh_ids) {
            let side = if en_ids.contains(c) { "zh" } else { "en" };
            mismatches.push(AlignmentMismatch {
                key: key.to_string(),
                order: *order,
                component: Some(*c),
                detail: format!("{c} missing in {side}"),
            });
        }
        if en.causal_roles != zh.causal_roles {
            mismatches.push(AlignmentMismatch {
                key: key.to_string(),
                order: *order,
                component: None,
                detail: "causal role assignments differ".to_string(),
            });
        }
    }

    AlignmentReport {
        keys_checked: keys.len(),
        mismatches,
    }
}

/// Write samples as JSON Lines.
pub fn write_jsonl<W: Write>(mut writer: W, samples: &[AnnotatedSample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset i/o error: {0}")]
    Io(String),
    #[error("dataset line {line} does not parse: {message}")]
    Parse { line: usize, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toaster() -> CausalTriple {
        Lexicon::bundled().get("house-001").unwrap().clone()
    }

    #[test]
    fn english_forward_matches_template() {
        let s = render_chain(&toaster(), Language::En, Order::Forward);
        assert_eq!(s.rendered_text, "Once toaster heats, bread toasts, then aroma spreads.");
        assert_eq!(s.question_text, "Therefore, if toaster heats, the final result is");
        assert_eq!(s.gold_answer, "Aroma spreads.");
        assert_eq!(s.component_ids(), ComponentId::SYNTACTIC.into_iter().collect());
        let once = s.annotation(ComponentId::Once).unwrap();
        assert_eq!((once.start, once.end), (0, 4));
        let trigger = s.annotation(ComponentId::FinalResultTrigger).unwrap();
        assert_eq!(s.span_text(trigger), "final result");
        let q = s.annotation(ComponentId::QSubj).unwrap();
        assert_eq!(s.span_text(q), "toaster");
        assert!(q.start > s.statement_len());
    }

    #[test]
    fn english_reversed_matches_template() {
        let s = render_chain(&toaster(), Language::En, Order::Reversed);
        assert_eq!(
            s.rendered_text,
            "Aroma spreads, due to bread toasts, which originates from toaster heats."
        );
        assert_eq!(s.question_text, "Therefore, if toaster heats, the final result is");
        assert_eq!(s.gold_answer, "Aroma spreads.");
        let fs = s.annotation(ComponentId::FinalSubj).unwrap();
        assert_eq!((fs.start, fs.end), (0, 5));
        assert_eq!(s.span_text(fs), "Aroma");
        let expected: BTreeSet<_> = [
            ComponentId::CauseSubj,
            ComponentId::CauseVerb,
            ComponentId::InterSubj,
            ComponentId::InterVerb,
            ComponentId::FinalSubj,
            ComponentId::FinalVerb,
            ComponentId::QSubj,
            ComponentId::QVerb,
            ComponentId::DueTo,
            ComponentId::OriginatesFrom,
            ComponentId::FinalResultTrigger,
        ]
        .into_iter()
        .collect();
        assert_eq!(s.component_ids(), expected);
    }

    #[test]
    fn chinese_forward_matches_template() {
        let s = render_chain(&toaster(), Language::Zh, Order::Forward);
        assert_eq!(s.rendered_text, "一旦面包机加热，面包就烤熟，然后香气就扩散。");
        assert_eq!(s.question_text, "因此，如果面包机加热，最终结果是");
        assert_eq!(s.gold_answer, "香气扩散");
        assert_eq!(s.prompt_text(), "一旦面包机加热，面包就烤熟，然后香气就扩散。因此，如果面包机加热，最终结果是");
        // 就 is template filler and belongs to no span
        let jiu: Vec<usize> = s.prompt_text().chars().enumerate().filter(|(_, c)| *c == '就').map(|(i, _)| i).collect();
        assert_eq!(jiu.len(), 2);
        for i in jiu {
            assert!(s.annotations.iter().all(|a| i < a.start || i >= a.end));
        }
    }

    #[test]
    fn chinese_reversed_matches_template() {
        let s = render_chain(&toaster(), Language::Zh, Order::Reversed);
        assert_eq!(s.rendered_text, "香气扩散，是由于面包烤熟，而这源自面包机加热。");
        assert_eq!(s.gold_answer, "香气扩散");
    }

    #[test]
    fn reversed_roles_keep_semantic_assignment() {
        let s = render_chain(&toaster(), Language::En, Order::Reversed);
        let [subj, verb] = s.causal_roles[&CausalRole::Final];
        assert_eq!(s.span_text(s.annotation(subj).unwrap()), "Aroma");
        assert_eq!(s.span_text(s.annotation(verb).unwrap()), "spreads");
        // sentence-initial pair is the final effect
        assert_eq!(s.annotations[0].component, ComponentId::FinalSubj);
    }

    #[test]
    fn generate_counts() {
        let lex = Lexicon::bundled();
        assert_eq!(generate_dataset(&lex, &Language::ALL, &Order::ALL).len(), 1600);
        assert_eq!(generate_dataset(&lex, &[Language::En], &[Order::Forward]).len(), 400);
        assert!(generate_dataset(&lex, &[], &Order::ALL).is_empty());
    }

    #[test]
    fn tiling_detects_shifted_span() {
        let mut s = render_chain(&toaster(), Language::En, Order::Forward);
        verify_tiling(&s).unwrap();
        s.annotations[2].start += 1;
        assert!(verify_tiling(&s).is_err());
    }

    #[test]
    fn alignment_flags_deleted_annotation() {
        let lex = Lexicon::bundled();
        let mut samples = generate_dataset(&lex, &Language::ALL, &Order::ALL);
        let report = validate_cross_alignment(&samples);
        assert!(report.passed());
        assert_eq!(report.keys_checked, 400);

        let victim = samples
            .iter_mut()
            .find(|s| s.language == Language::Zh && s.order == Order::Forward && s.key == "shop-007")
            .unwrap();
        victim.annotations.retain(|a| a.component != ComponentId::FinalVerb);
        let report = validate_cross_alignment(&samples);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].key, "shop-007");
        assert_eq!(report.mismatches[0].component, Some(ComponentId::FinalVerb));

        assert_eq!(validate_cross_alignment(&[]), AlignmentReport { keys_checked: 0, mismatches: vec![] });
    }

    #[test]
    fn jsonl_round_trip() {
        let lex = Lexicon::bundled();
        let samples = generate_dataset(&lex, &Language::ALL, &[Order::Reversed]);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &samples).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
        let first = std::str::from_utf8(&buf).unwrap().lines().next().unwrap();
        assert!(first.contains("\"causal_roles\":{\"cause\":[\"cause_subj\",\"cause_verb\"]"), "{first}");
    }
}
