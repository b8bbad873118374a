// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic synthetic trace bundles.
//!
//! These stand in for real model traces in tests and demos. They satisfy
//! every bundle invariant and carry a little structure (an attention sink on
//! the first token, recency decay, hidden states that share a per-sample
//! base vector across conditions) but say nothing about any real model.

use std::collections::BTreeMap;

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::chain_final_token;
use crate::chaingen::{AnnotatedSample, ComponentId};
use crate::condition::Language;
use crate::traceio::{ModelMeta, TokenSpan, TraceBundle, ANCHOR_FINAL_CHAIN, ANCHOR_FINAL_PROMPT};

const CHAT_PREFIX: &str = "<|im_start|>user\n";
const CHAT_SUFFIX: &str = "<|im_end|>\n<|im_start|>assistant\n";
const SPECIAL_TOKENS: [&str; 2] = ["<|im_start|>", "<|im_end|>"];
/// Longer word pieces are split, imitating subword vocabularies.
const MAX_PIECE_CHARS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    /// Probability that a generated answer is the gold answer.
    pub accuracy: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            model_id: "synthetic-tiny".into(),
            num_layers: 24,
            num_heads: 16,
            hidden_dim: 32,
            accuracy: 0.9,
            seed: 0,
        }
    }
}

/// Wrap a prompt in a chat template.
pub fn chat_wrap(prompt: &str) -> String {
    format!("{CHAT_PREFIX}{prompt}{CHAT_SUFFIX}")
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '\''
}

/// Split text into tokens with character offsets.
///
/// Special markers are single tokens; ASCII words carry their leading space
/// and are cut into pieces of at most six characters; every other character
/// (CJK, punctuation, newline) is its own token.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let push = |out: &mut Vec<TokenSpan>, s: usize, e: usize| {
        out.push(TokenSpan {
            text: chars[s..e].iter().collect(),
            start: s,
            end: e,
        })
    };
    'outer: while i < chars.len() {
        for special in SPECIAL_TOKENS {
            let sc: Vec<char> = special.chars().collect();
            if chars[i..].starts_with(&sc) {
                push(&mut out, i, i + sc.len());
                i += sc.len();
                continue 'outer;
            }
        }
        let start = i;
        let mut j = i;
        if chars[j] == ' ' && j + 1 < chars.len() && is_word_char(chars[j + 1]) {
            j += 1;
        }
        if is_word_char(chars[j]) {
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            let mut s = start;
            while s < j {
                let e = (s + MAX_PIECE_CHARS).min(j);
                push(&mut out, s, e);
                s = e;
            }
            i = j;
        } else {
            push(&mut out, i, i + 1);
            i += 1;
        }
    }
    out
}

fn seeded(cfg: &SynthConfig, parts: &[&str]) -> ChaCha8Rng {
    let mut h = crc32fast::Hasher::new();
    h.update(&cfg.seed.to_le_bytes());
    h.update(cfg.model_id.as_bytes());
    for p in parts {
        h.update(b"|");
        h.update(p.as_bytes());
    }
    let a = h.finalize() as u64;
    let mut h2 = crc32fast::Hasher::new_with_initial(a as u32 ^ 0x9e37_79b9);
    h2.update(parts.join("/").as_bytes());
    ChaCha8Rng::seed_from_u64((a << 32) | h2.finalize() as u64)
}

fn causal_softmax(rng: &mut ChaCha8Rng, l: usize, h: usize, t: usize) -> Array4<f32> {
    let mut attention = Array4::<f32>::zeros((l, h, t, t));
    let mut logits = vec![0f64; t];
    for li in 0..l {
        for hi in 0..h {
            let sink = 1.0 + 2.0 * (li as f64 / l.max(1) as f64);
            let decay = 0.05 + 0.1 * (hi as f64 / h.max(1) as f64);
            for j in 0..t {
                for (k, logit) in logits.iter_mut().enumerate().take(j + 1) {
                    let noise: f64 = rng.sample(StandardNormal);
                    *logit = 0.8 * noise - decay * (j - k) as f64 + if k == 0 { sink } else { 0.0 };
                }
                let max = logits[..=j].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits[..=j].iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for (k, e) in exps.into_iter().enumerate() {
                    attention[[li, hi, j, k]] = (e / sum) as f32;
                }
            }
        }
    }
    attention
}

fn hidden_states(cfg: &SynthConfig, sample: &AnnotatedSample, anchor: &str) -> Array2<f32> {
    let rows = cfg.num_layers + 1;
    let mut base_rng = seeded(cfg, &["hidden-base", &sample.key, anchor]);
    let mut cond_rng = seeded(cfg, &["hidden-cond", &sample.key, anchor, &sample.condition().label()]);
    let mut out = Array2::<f32>::zeros((rows, cfg.hidden_dim));
    for l in 0..rows {
        // Condition-specific variation shrinks with depth.
        let w = 0.15 + 1.2 * (1.0 - l as f64 / (rows - 1).max(1) as f64);
        for d in 0..cfg.hidden_dim {
            let base: f64 = base_rng.sample(StandardNormal);
            let noise: f64 = cond_rng.sample(StandardNormal);
            out[[l, d]] = (base + w * noise) as f32;
        }
    }
    out
}

fn wrong_answer(sample: &AnnotatedSample) -> String {
    let part = |id| {
        sample
            .annotation(id)
            .map(|a| sample.span_text(a))
            .unwrap_or_default()
    };
    let (s, v) = (part(ComponentId::InterSubj), part(ComponentId::InterVerb));
    match sample.language {
        Language::En => {
            let mut c = s.chars();
            let cap: String = c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default();
            format!("{cap} {v}.")
        }
        Language::Zh => format!("{s}{v}。"),
    }
}

/// Build a valid synthetic trace for `sample`.
pub fn synth_trace(sample: &AnnotatedSample, cfg: &SynthConfig) -> TraceBundle {
    let prompt_text = chat_wrap(&sample.prompt_text());
    let tokens = tokenize(&prompt_text);
    let t = tokens.len();
    let cond = sample.condition().label();
    let mut rng = seeded(cfg, &["attention", &sample.key, &cond]);
    let attention = causal_softmax(&mut rng, cfg.num_layers, cfg.num_heads, t);

    let chain_final = chain_final_token(&prompt_text, &tokens, sample).expect("prompt contains its own statement");
    let anchor_positions: BTreeMap<String, usize> = [
        (ANCHOR_FINAL_CHAIN.to_string(), chain_final),
        (ANCHOR_FINAL_PROMPT.to_string(), t - 1),
    ]
    .into_iter()
    .collect();
    let hidden = anchor_positions
        .keys()
        .map(|a| (a.clone(), hidden_states(cfg, sample, a)))
        .collect();

    let mut answer_rng = seeded(cfg, &["answer", &sample.key, &cond]);
    let generated_answer = if answer_rng.random_bool(cfg.accuracy.clamp(0.0, 1.0)) {
        sample.gold_answer.clone()
    } else {
        wrong_answer(sample)
    };

    let mut extra = BTreeMap::new();
    extra.insert("generator".to_string(), "synthetic".to_string());
    extra.insert("seed".to_string(), cfg.seed.to_string());
    TraceBundle {
        sample_key: sample.key.clone(),
        language: sample.language,
        order: sample.order,
        model: ModelMeta {
            model_id: cfg.model_id.clone(),
            num_layers: cfg.num_layers,
            num_heads: cfg.num_heads,
            hidden_dim: cfg.hidden_dim,
            extra,
        },
        prompt_text,
        tokens,
        attention,
        hidden,
        anchor_positions,
        generated_answer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaingen::{render_chain, Lexicon};
    use crate::condition::{Condition, Order};
    use crate::traceio::check_bundle;

    fn small() -> SynthConfig {
        SynthConfig {
            num_layers: 3,
            num_heads: 2,
            hidden_dim: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn tokenizer_offsets_cover_text() {
        let text = chat_wrap("Once the toaster heats, then x.");
        let toks = tokenize(&text);
        let rebuilt: String = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(rebuilt, text);
        assert_eq!(toks[0].text, "<|im_start|>");
        assert!(toks.iter().any(|t| t.text == " toast"));
        assert!(toks.iter().any(|t| t.text == "er"));
        let zh = tokenize("香气扩散。");
        assert_eq!(zh.len(), 5);
    }

    #[test]
    fn synthetic_traces_are_valid_and_deterministic() {
        let lex = Lexicon::bundled();
        let triple = &lex.triples().next().unwrap();
        for cond in Condition::ALL {
            let sample = render_chain(triple, cond.language, cond.order);
            let a = synth_trace(&sample, &small());
            assert!(check_bundle(&a).is_empty(), "{cond}: {:?}", check_bundle(&a));
            assert_eq!(a, synth_trace(&sample, &small()));
        }
    }

    #[test]
    fn chain_anchor_is_last_statement_word() {
        let lex = Lexicon::bundled();
        let triple = lex.triples().next().unwrap();
        let sample = render_chain(triple, Language::En, Order::Forward);
        let trace = synth_trace(&sample, &small());
        let idx = trace.anchor_positions[ANCHOR_FINAL_CHAIN];
        assert_eq!(trace.tokens[idx - 1].text, " sprea");
        assert_eq!(trace.tokens[idx].text, "ds");
        assert_eq!(trace.tokens[idx + 1].text, ".");
    }
}
