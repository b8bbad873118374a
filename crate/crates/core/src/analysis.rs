// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-sample analysis: score the answer, map components to tokens, compute
//! RCAR for every component and causal role, and pull anchor hidden states.

use std::collections::BTreeMap;

use crate::align::{causal_role_sets, map_components, AlignError, ComponentTokenMap};
use crate::chaingen::AnnotatedSample;
use crate::condition::Condition;
use crate::evalreport::{score_sample, ScoredSample};
use crate::metrics::{AttentionTarget, ConditionAggregate, MetricsError, RcarResult, TrajectoryAccumulator};
use crate::simrep::AnchorStates;
use crate::traceio::TraceBundle;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleAnalysis {
    pub scored: ScoredSample,
    pub map: ComponentTokenMap,
    pub rcar: BTreeMap<AttentionTarget, RcarResult>,
    /// Hidden states at the requested anchor, if the trace has it.
    pub anchor: Option<AnchorStates>,
    pub warnings: Vec<String>,
}

impl SampleAnalysis {
    pub fn condition(&self) -> Condition {
        self.scored.condition
    }

    pub fn correct(&self) -> bool {
        self.scored.score.correct
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("{key}: {source}")]
    Metrics {
        key: String,
        #[source]
        source: MetricsError,
    },
}

pub fn analyze(trace: &TraceBundle, sample: &AnnotatedSample, anchor: &str) -> Result<SampleAnalysis, AnalysisError> {
    let map = map_components(trace, sample)?;
    let roles = causal_role_sets(&map, sample)?;
    let mut warnings: Vec<String> = map
        .findings
        .iter()
        .map(|f| format!("{}: {}: {}", sample.key, f.component, f.message))
        .collect();

    let mut targets: Vec<(AttentionTarget, &[usize])> = map
        .components
        .iter()
        .map(|(id, t)| (AttentionTarget::Component(*id), t.indices.as_slice()))
        .collect();
    targets.extend(roles.iter().map(|(r, set)| (AttentionTarget::Role(*r), set.as_slice())));

    let mut rcar = BTreeMap::new();
    for (target, tokens) in targets {
        if tokens.is_empty() {
            warnings.push(format!("{}: {target}: no tokens; skipped", sample.key));
            continue;
        }
        let (result, warns) = RcarResult::compute(&sample.key, target, trace.attention.view(), tokens)
            .map_err(|source| AnalysisError::Metrics {
                key: sample.key.clone(),
                source,
            })?;
        warnings.extend(warns.into_iter().map(|w| format!("{}: {target}: {w}", sample.key)));
        rcar.insert(target, result);
    }

    let scored = score_sample(sample, &trace.generated_answer);
    if let Some(f) = &scored.score.finding {
        warnings.push(format!("{}: {f}", sample.key));
    }
    let anchor = trace.hidden.get(anchor).map(|h| AnchorStates {
        sample_key: sample.key.clone(),
        correct: Some(scored.score.correct),
        hidden: h.mapv(f64::from),
    });
    Ok(SampleAnalysis {
        scored,
        map,
        rcar,
        anchor,
        warnings,
    })
}

/// Mean trajectories per (condition, target), optionally over correct samples only.
pub fn aggregate_analyses(analyses: &[SampleAnalysis], correct_only: bool) -> Result<Vec<ConditionAggregate>, MetricsError> {
    let mut accs: BTreeMap<(Condition, AttentionTarget), TrajectoryAccumulator> = BTreeMap::new();
    for a in analyses.iter().filter(|a| !correct_only || a.correct()) {
        for (target, r) in &a.rcar {
            accs.entry((a.condition(), *target))
                .or_insert_with(|| TrajectoryAccumulator::new(a.condition(), *target))
                .push(&r.layer_rcar)?;
        }
    }
    accs.values().map(TrajectoryAccumulator::finish).collect()
}
