// SPDX-License-Identifier: MIT OR Apache-2.0

//! Component-level analysis of causal-chain prompts in English and Chinese.
//!
//! [`chaingen`] renders annotated prompts from a lexicon of cause/effect
//! triples. [`traceio`] reads and writes the attention and hidden-state
//! bundles produced by running a model on them. [`align`] maps annotated
//! character spans onto model tokens, [`metrics`] computes attention ratios
//! and layer trajectories, [`simrep`] compares trajectories (SVCCA) and hidden
//! states (cosine), and [`evalreport`] scores answers and draws figures.

pub mod align;
pub mod analysis;
pub mod chaingen;
pub mod condition;
pub mod evalreport;
pub mod metrics;
pub mod simrep;
pub mod synth;
pub mod traceio;
