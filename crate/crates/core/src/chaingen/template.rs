// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sentence templates for each (language, order).

use super::ComponentId;
use crate::condition::{Language, Order};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    /// Unannotated template text.
    Literal(&'static str),
    /// Fixed connective text annotated under its own component id.
    Connective(ComponentId, &'static str),
    /// Lexicon phrase; `capitalize` uppercases the first letter (sentence-initial).
    Phrase { id: ComponentId, capitalize: bool },
}

use ComponentId::*;
use Piece::{Connective as C, Literal as L};

const fn p(id: ComponentId) -> Piece {
    Piece::Phrase { id, capitalize: false }
}

const fn cap(id: ComponentId) -> Piece {
    Piece::Phrase { id, capitalize: true }
}

const EN_FORWARD: &[Piece] = &[
    C(Once, "Once"),
    L(" "),
    p(CauseSubj),
    L(" "),
    p(CauseVerb),
    L(", "),
    p(InterSubj),
    L(" "),
    p(InterVerb),
    L(", "),
    C(Then, "then"),
    L(" "),
    p(FinalSubj),
    L(" "),
    p(FinalVerb),
    L("."),
];

const EN_REVERSED: &[Piece] = &[
    cap(FinalSubj),
    L(" "),
    p(FinalVerb),
    L(", "),
    C(DueTo, "due to"),
    L(" "),
    p(InterSubj),
    L(" "),
    p(InterVerb),
    L(", "),
    C(OriginatesFrom, "which originates from"),
    L(" "),
    p(CauseSubj),
    L(" "),
    p(CauseVerb),
    L("."),
];

const EN_QUESTION_FORWARD: &[Piece] = &[
    C(Therefore, "Therefore"),
    L(", "),
    C(If, "if"),
    L(" "),
    p(QSubj),
    L(" "),
    p(QVerb),
    L(", the "),
    C(FinalResultTrigger, "final result"),
    L(" is"),
];

// Reversed chains reuse the forward question text; only the question
// subject/verb and the trigger are annotated.
const EN_QUESTION_REVERSED: &[Piece] = &[
    L("Therefore, if "),
    p(QSubj),
    L(" "),
    p(QVerb),
    L(", the "),
    C(FinalResultTrigger, "final result"),
    L(" is"),
];

const ZH_FORWARD: &[Piece] = &[
    C(Once, "一旦"),
    p(CauseSubj),
    p(CauseVerb),
    L("，"),
    p(InterSubj),
    L("就"),
    p(InterVerb),
    L("，"),
    C(Then, "然后"),
    p(FinalSubj),
    L("就"),
    p(FinalVerb),
    L("。"),
];

const ZH_REVERSED: &[Piece] = &[
    p(FinalSubj),
    p(FinalVerb),
    L("，"),
    C(DueTo, "是由于"),
    p(InterSubj),
    p(InterVerb),
    L("，"),
    C(OriginatesFrom, "而这源自"),
    p(CauseSubj),
    p(CauseVerb),
    L("。"),
];

const ZH_QUESTION_FORWARD: &[Piece] = &[
    C(Therefore, "因此"),
    L("，"),
    C(If, "如果"),
    p(QSubj),
    p(QVerb),
    L("，"),
    C(FinalResultTrigger, "最终结果"),
    L("是"),
];

const ZH_QUESTION_REVERSED: &[Piece] = &[
    L("因此，如果"),
    p(QSubj),
    p(QVerb),
    L("，"),
    C(FinalResultTrigger, "最终结果"),
    L("是"),
];

pub fn statement(language: Language, order: Order) -> &'static [Piece] {
    match (language, order) {
        (Language::En, Order::Forward) => EN_FORWARD,
        (Language::En, Order::Reversed) => EN_REVERSED,
        (Language::Zh, Order::Forward) => ZH_FORWARD,
        (Language::Zh, Order::Reversed) => ZH_REVERSED,
    }
}

pub fn question(language: Language, order: Order) -> &'static [Piece] {
    match (language, order) {
        (Language::En, Order::Forward) => EN_QUESTION_FORWARD,
        (Language::En, Order::Reversed) => EN_QUESTION_REVERSED,
        (Language::Zh, Order::Forward) => ZH_QUESTION_FORWARD,
        (Language::Zh, Order::Reversed) => ZH_QUESTION_REVERSED,
    }
}

/// Text placed between the statement and the question.
pub fn separator(language: Language) -> &'static str {
    match language {
        Language::En => " ",
        Language::Zh => "",
    }
}

/// Statement, separator and question as one piece sequence.
pub fn full(language: Language, order: Order) -> Vec<Piece> {
    let mut pieces = statement(language, order).to_vec();
    let sep = separator(language);
    if !sep.is_empty() {
        pieces.push(Piece::Literal(sep));
    }
    pieces.extend_from_slice(question(language, order));
    pieces
}

pub(crate) fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
