// SPDX-License-Identifier: MIT OR Apache-2.0

//! Resolve annotated character spans to token index sets.
//!
//! A token belongs to a component when its character span intersects the
//! component span in at least one non-whitespace character. Tokens that also
//! cover non-whitespace characters outside the span are flagged as partial.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chaingen::{AnnotatedSample, CausalRole, ComponentId};
use crate::traceio::{TokenSpan, TraceBundle};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComponentTokens {
    /// Sorted token indices.
    pub indices: Vec<usize>,
    /// Parallel to `indices`.
    pub partial_overlap: Vec<bool>,
}

impl ComponentTokens {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn any_partial(&self) -> bool {
        self.partial_overlap.iter().any(|&p| p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignFinding {
    pub component: ComponentId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentTokenMap {
    pub sample_key: String,
    /// Character offset of the sample prompt inside the trace prompt.
    pub prompt_offset: usize,
    pub components: BTreeMap<ComponentId, ComponentTokens>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<AlignFinding>,
}

impl ComponentTokenMap {
    pub fn tokens(&self, id: ComponentId) -> Option<&[usize]> {
        self.components.get(&id).map(|c| c.indices.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignError {
    #[error("trace key `{trace}` does not match sample key `{sample}`")]
    KeyMismatch { trace: String, sample: String },
    #[error("trace for `{key}` is condition {trace}, sample is {sample}")]
    ConditionMismatch { key: String, trace: String, sample: String },
    #[error("prompt of sample `{key}` does not occur in the trace prompt text")]
    PromptNotFound { key: String },
    #[error("sample `{key}` has no annotation for causal role `{role}`")]
    MissingRole { key: String, role: CausalRole },
}

/// Character offset of `needle` inside `haystack`, first occurrence.
fn char_find(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .find(needle)
        .map(|byte| haystack[..byte].chars().count())
}

/// Tokens intersecting `[start, end)` (character offsets into `text`).
pub fn tokens_for_span(text: &[char], tokens: &[TokenSpan], start: usize, end: usize) -> ComponentTokens {
    let mut out = ComponentTokens::default();
    if start >= end {
        return out;
    }
    let is_content = |i: usize| text.get(i).is_some_and(|c| !c.is_whitespace());
    for (idx, tok) in tokens.iter().enumerate() {
        let lo = tok.start.max(start);
        let hi = tok.end.min(end);
        if lo >= hi || !(lo..hi).any(is_content) {
            continue;
        }
        let outside = (tok.start..start.min(tok.end)).chain(end.max(tok.start)..tok.end);
        let partial = outside.into_iter().any(is_content);
        out.indices.push(idx);
        out.partial_overlap.push(partial);
    }
    out
}

/// Map every annotated component of `sample` onto token indices of `trace`.
pub fn map_components(trace: &TraceBundle, sample: &AnnotatedSample) -> Result<ComponentTokenMap, AlignError> {
    if trace.sample_key != sample.key {
        return Err(AlignError::KeyMismatch {
            trace: trace.sample_key.clone(),
            sample: sample.key.clone(),
        });
    }
    if trace.condition() != sample.condition() {
        return Err(AlignError::ConditionMismatch {
            key: sample.key.clone(),
            trace: trace.condition().label(),
            sample: sample.condition().label(),
        });
    }
    let offset = char_find(&trace.prompt_text, &sample.prompt_text()).ok_or_else(|| AlignError::PromptNotFound {
        key: sample.key.clone(),
    })?;
    let text: Vec<char> = trace.prompt_text.chars().collect();

    let mut components = BTreeMap::new();
    let mut findings = Vec::new();
    for ann in &sample.annotations {
        let hit = tokens_for_span(&text, &trace.tokens, offset + ann.start, offset + ann.end);
        if ann.start >= ann.end {
            findings.push(AlignFinding {
                component: ann.component,
                message: format!("zero-width span [{}, {})", ann.start, ann.end),
            });
        } else if hit.is_empty() {
            findings.push(AlignFinding {
                component: ann.component,
                message: format!("span [{}, {}) intersects no token", ann.start, ann.end),
            });
        }
        components.insert(ann.component, hit);
    }
    Ok(ComponentTokenMap {
        sample_key: sample.key.clone(),
        prompt_offset: offset,
        components,
        findings,
    })
}

/// Union of subject and verb token sets per causal role.
pub fn causal_role_sets(
    map: &ComponentTokenMap,
    sample: &AnnotatedSample,
) -> Result<BTreeMap<CausalRole, Vec<usize>>, AlignError> {
    let mut out = BTreeMap::new();
    for role in CausalRole::ALL {
        let missing = || AlignError::MissingRole {
            key: sample.key.clone(),
            role,
        };
        let ids = sample.causal_roles.get(&role).ok_or_else(missing)?;
        let mut set = Vec::new();
        for id in ids {
            set.extend_from_slice(map.tokens(*id).ok_or_else(missing)?);
        }
        set.sort_unstable();
        set.dedup();
        out.insert(role, set);
    }
    Ok(out)
}

/// Index of the last token of the chain statement that covers a
/// non-punctuation, non-whitespace character.
pub fn chain_final_token(
    prompt_text: &str,
    tokens: &[TokenSpan],
    sample: &AnnotatedSample,
) -> Option<usize> {
    let offset = char_find(prompt_text, &sample.prompt_text())?;
    let text: Vec<char> = prompt_text.chars().collect();
    let (lo, hi) = (offset, offset + sample.statement_len());
    tokens.iter().enumerate().rev().find_map(|(idx, tok)| {
        let word = (tok.start.max(lo)..tok.end.min(hi))
            .any(|i| text.get(i).is_some_and(|c| c.is_alphanumeric()));
        word.then_some(idx)
    })
}
