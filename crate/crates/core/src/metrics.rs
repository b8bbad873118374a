// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention ratios, per-layer RCAR and condition aggregates.
//!
//! For a token set `T_c`, layer `l` and head `h`:
//!
//! ```text
//! r = 1/|T_c| * sum_{i in T_c} [ sum_{j>i} A[j,i] / sum_{j>i} sum_k A[j,k] ]
//! ```
//!
//! and the layer score is the plain sum of `r` over heads.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use crate::chaingen::{CausalRole, ComponentId};
use crate::condition::Condition;

/// Element types accepted by [`attention_ratio`].
pub trait Weight: Copy {
    fn to_f64(self) -> f64;
}

impl Weight for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Weight for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// What attention is measured towards: a syntactic component or a causal role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttentionTarget {
    Component(ComponentId),
    Role(CausalRole),
}

impl fmt::Display for AttentionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttentionTarget::Component(c) => f.write_str(c.as_str()),
            AttentionTarget::Role(r) => f.write_str(r.as_str()),
        }
    }
}

impl FromStr for AttentionTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(role) = s.parse::<CausalRole>() {
            return Ok(AttentionTarget::Role(role));
        }
        s.parse::<ComponentId>()
            .map(AttentionTarget::Component)
            .map_err(|_| format!("unknown component or role `{s}`"))
    }
}

impl Serialize for AttentionTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttentionTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("token set is empty")]
    EmptyTokenSet,
    #[error("token index {index} out of range for {len} tokens")]
    TokenOutOfRange { index: usize, len: usize },
    #[error("attention is not square over tokens: shape {0:?}")]
    NotSquare(Vec<usize>),
    #[error("every token in the set is the final token; no valid queries")]
    NoValidQueries,
    #[error("no samples to aggregate")]
    EmptyAggregate,
    #[error("trajectory length {found} does not match {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("cannot merge aggregates of different conditions or targets")]
    IncompatibleMerge,
    #[error("component `{0}` missing from an aggregate")]
    MissingComponent(AttentionTarget),
}

/// Per-(layer, head) ratios plus non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMatrix {
    pub ratio: Array2<f64>,
    pub warnings: Vec<String>,
}

/// Attention ratio for every layer and head of `attention` (`[L, H, T, T]`).
///
/// The final token has no valid queries and is dropped with a warning. A token
/// whose valid rows carry zero total mass contributes 0, also with a warning.
pub fn attention_ratio<W: Weight>(attention: ArrayView4<'_, W>, tokens: &[usize]) -> Result<RatioMatrix, MetricsError> {
    let shape = attention.shape();
    let (l_n, h_n, t, t2) = (shape[0], shape[1], shape[2], shape[3]);
    if t != t2 {
        return Err(MetricsError::NotSquare(shape.to_vec()));
    }
    if tokens.is_empty() {
        return Err(MetricsError::EmptyTokenSet);
    }
    let mut set = tokens.to_vec();
    set.sort_unstable();
    set.dedup();
    if let Some(&index) = set.iter().find(|&&i| i >= t) {
        return Err(MetricsError::TokenOutOfRange { index, len: t });
    }
    let mut warnings = Vec::new();
    if set.last() == Some(&(t - 1)) {
        set.pop();
        warnings.push(format!("token {} is final and has no valid queries; excluded", t - 1));
    }
    if set.is_empty() {
        return Err(MetricsError::NoValidQueries);
    }

    let mut ratio = Array2::<f64>::zeros((l_n, h_n));
    let mut zero_mass = 0usize;
    let mut suffix = vec![0f64; t + 1];
    for l in 0..l_n {
        for h in 0..h_n {
            let head = attention.index_axis(Axis(0), l);
            let head = head.index_axis(Axis(0), h);
            // suffix[i] = total mass of rows j >= i.
            for j in (0..t).rev() {
                let row: f64 = head.row(j).iter().map(|v| v.to_f64()).sum();
                suffix[j] = suffix[j + 1] + row;
            }
            let mut acc = 0.0;
            for &i in &set {
                let den = suffix[i + 1];
                if den == 0.0 {
                    zero_mass += 1;
                    continue;
                }
                let num: f64 = (i + 1..t).map(|j| head[[j, i]].to_f64()).sum();
                acc += num / den;
            }
            ratio[[l, h]] = acc / set.len() as f64;
        }
    }
    if zero_mass > 0 {
        warnings.push(format!("{zero_mass} (token, layer, head) terms had zero valid-query mass; counted as 0"));
    }
    Ok(RatioMatrix { ratio, warnings })
}

/// Per-layer RCAR: sum of ratios over heads.
pub fn rcar_by_layer(ratio: &Array2<f64>) -> Vec<f64> {
    ratio.rows().into_iter().map(|row| row.iter().sum()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcarResult {
    pub sample_key: String,
    pub target: AttentionTarget,
    pub ratio: Array2<f64>,
    pub layer_rcar: Vec<f64>,
}

impl RcarResult {
    pub fn compute<W: Weight>(
        sample_key: &str,
        target: AttentionTarget,
        attention: ArrayView4<'_, W>,
        tokens: &[usize],
    ) -> Result<(RcarResult, Vec<String>), MetricsError> {
        let RatioMatrix { ratio, warnings } = attention_ratio(attention, tokens)?;
        let layer_rcar = rcar_by_layer(&ratio);
        Ok((
            RcarResult {
                sample_key: sample_key.to_string(),
                target,
                ratio,
                layer_rcar,
            },
            warnings,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAggregate {
    pub condition: Condition,
    pub target: AttentionTarget,
    pub mean: Vec<f64>,
    /// Population standard deviation per layer.
    pub sd: Vec<f64>,
    pub n: usize,
}

impl ConditionAggregate {
    pub fn num_layers(&self) -> usize {
        self.mean.len()
    }

    pub fn total(&self) -> f64 {
        self.mean.iter().sum()
    }
}

/// Streaming per-layer mean/variance (count, mean, sum of squared deviations).
/// Merging is associative, so partial results can be combined in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryAccumulator {
    pub condition: Condition,
    pub target: AttentionTarget,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl TrajectoryAccumulator {
    pub fn new(condition: Condition, target: AttentionTarget) -> Self {
        TrajectoryAccumulator {
            condition,
            target,
            count: 0,
            mean: Vec::new(),
            m2: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, trajectory: &[f64]) -> Result<(), MetricsError> {
        if self.count == 0 {
            self.mean = trajectory.to_vec();
            self.m2 = vec![0.0; trajectory.len()];
            self.count = 1;
            return Ok(());
        }
        if trajectory.len() != self.mean.len() {
            return Err(MetricsError::LengthMismatch {
                expected: self.mean.len(),
                found: trajectory.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(trajectory) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
        Ok(())
    }

    pub fn merge(mut self, other: TrajectoryAccumulator) -> Result<Self, MetricsError> {
        if self.condition != other.condition || self.target != other.target {
            return Err(MetricsError::IncompatibleMerge);
        }
        if other.count == 0 {
            return Ok(self);
        }
        if self.count == 0 {
            return Ok(other);
        }
        if self.mean.len() != other.mean.len() {
            return Err(MetricsError::LengthMismatch {
                expected: self.mean.len(),
                found: other.mean.len(),
            });
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for l in 0..self.mean.len() {
            let delta = other.mean[l] - self.mean[l];
            self.mean[l] += delta * nb / n;
            self.m2[l] += other.m2[l] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(self)
    }

    pub fn finish(&self) -> Result<ConditionAggregate, MetricsError> {
        if self.count == 0 {
            return Err(MetricsError::EmptyAggregate);
        }
        let n = self.count as f64;
        Ok(ConditionAggregate {
            condition: self.condition,
            target: self.target,
            mean: self.mean.clone(),
            sd: self.m2.iter().map(|m2| (m2 / n).max(0.0).sqrt()).collect(),
            n: self.count,
        })
    }
}

/// Elementwise mean and population standard deviation across trajectories.
pub fn aggregate_condition<'a>(
    condition: Condition,
    target: AttentionTarget,
    trajectories: impl IntoIterator<Item = &'a [f64]>,
) -> Result<ConditionAggregate, MetricsError> {
    let mut acc = TrajectoryAccumulator::new(condition, target);
    for t in trajectories {
        acc.push(t)?;
    }
    acc.finish()
}

/// Per-component difference of layer-summed mean RCAR, Chinese minus English.
pub fn component_diff(
    zh: &BTreeMap<AttentionTarget, ConditionAggregate>,
    en: &BTreeMap<AttentionTarget, ConditionAggregate>,
    targets: &[AttentionTarget],
) -> Result<Vec<(AttentionTarget, f64)>, MetricsError> {
    targets
        .iter()
        .map(|&t| {
            let a = zh.get(&t).ok_or(MetricsError::MissingComponent(t))?;
            let b = en.get(&t).ok_or(MetricsError::MissingComponent(t))?;
            if a.num_layers() != b.num_layers() {
                return Err(MetricsError::LengthMismatch {
                    expected: b.num_layers(),
                    found: a.num_layers(),
                });
            }
            Ok((t, a.total() - b.total()))
        })
        .collect()
}

/// CSV with columns `sample_key, component_id, layer, head, ratio`.
pub fn write_ratio_csv<W: Write>(writer: W, results: &[RcarResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_key", "component_id", "layer", "head", "ratio"])?;
    for r in results {
        let target = r.target.to_string();
        for ((l, h), v) in r.ratio.indexed_iter() {
            w.write_record([&r.sample_key, &target, &l.to_string(), &h.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `condition, component_id, layer, mean, sd, n`.
pub fn write_trajectory_csv<W: Write>(writer: W, aggregates: &[ConditionAggregate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["condition", "component_id", "layer", "mean", "sd", "n"])?;
    for a in aggregates {
        let cond = a.condition.label();
        let target = a.target.to_string();
        for l in 0..a.mean.len() {
            w.write_record([
                cond.as_str(),
                &target,
                &l.to_string(),
                &a.mean[l].to_string(),
                &a.sd[l].to_string(),
                &a.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    condition: Condition,
    component_id: AttentionTarget,
    layer: usize,
    mean: f64,
    sd: f64,
    n: usize,
}

/// Inverse of [`write_trajectory_csv`]. Rows must be grouped per
/// (condition, component) with layers in order.
pub fn read_trajectory_csv<R: std::io::Read>(reader: R) -> Result<Vec<ConditionAggregate>, String> {
    let mut out: Vec<ConditionAggregate> = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize::<TrajectoryRow>() {
        let row = row.map_err(|e| e.to_string())?;
        let same = out
            .last()
            .is_some_and(|a| a.condition == row.condition && a.target == row.component_id);
        if !same {
            out.push(ConditionAggregate {
                condition: row.condition,
                target: row.component_id,
                mean: Vec::new(),
                sd: Vec::new(),
                n: row.n,
            });
        }
        let agg = out.last_mut().expect("pushed above");
        if row.layer != agg.mean.len() {
            return Err(format!(
                "{} {}: layer {} out of sequence",
                row.condition, row.component_id, row.layer
            ));
        }
        agg.mean.push(row.mean);
        agg.sd.push(row.sd);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{Language, Order};
    use ndarray::Array4;

    fn uniform(l: usize, h: usize, t: usize) -> Array4<f64> {
        Array4::from_shape_fn((l, h, t, t), |(_, _, j, k)| if k <= j { 1.0 / (j as f64 + 1.0) } else { 0.0 })
    }

    fn cond() -> Condition {
        Condition::new(Language::En, Order::Forward)
    }

    #[test]
    fn hand_case_first_token() {
        let a = uniform(1, 1, 3);
        let r = attention_ratio(a.view(), &[0]).unwrap();
        assert!((r.ratio[[0, 0]] - 5.0 / 12.0).abs() <= 1e-12);
        assert_eq!(rcar_by_layer(&r.ratio), vec![r.ratio[[0, 0]]]);
    }

    #[test]
    fn last_token_is_excluded() {
        let a = uniform(1, 1, 3);
        assert_eq!(attention_ratio(a.view(), &[2]).unwrap_err(), MetricsError::NoValidQueries);
        let r = attention_ratio(a.view(), &[0, 2]).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!((r.ratio[[0, 0]] - 5.0 / 12.0).abs() <= 1e-12);
    }

    #[test]
    fn bad_token_sets() {
        let a = uniform(1, 1, 3);
        assert_eq!(attention_ratio(a.view(), &[]).unwrap_err(), MetricsError::EmptyTokenSet);
        assert!(matches!(
            attention_ratio(a.view(), &[3]),
            Err(MetricsError::TokenOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn identical_heads_sum() {
        let a = uniform(2, 5, 6);
        let r = attention_ratio(a.view(), &[1, 3]).unwrap();
        let rho = r.ratio[[1, 0]];
        assert_eq!(rcar_by_layer(&r.ratio)[1], 5.0 * rho);
        assert_eq!(rcar_by_layer(&Array2::zeros((3, 4))), vec![0.0; 3]);
    }

    #[test]
    fn aggregate_examples() {
        let target = AttentionTarget::Role(CausalRole::Cause);
        let agg = aggregate_condition(cond(), target, [&[1.0, 2.0][..], &[3.0, 4.0][..]]).unwrap();
        assert_eq!(agg.mean, vec![2.0, 3.0]);
        assert_eq!(agg.sd, vec![1.0, 1.0]);
        let single = aggregate_condition(cond(), target, [&[0.3, 0.7][..]]).unwrap();
        assert_eq!(single.mean, vec![0.3, 0.7]);
        assert_eq!(single.sd, vec![0.0, 0.0]);
        assert!(matches!(
            aggregate_condition(cond(), target, [&[1.0][..], &[1.0, 2.0][..]]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            aggregate_condition(cond(), target, std::iter::empty()).unwrap_err(),
            MetricsError::EmptyAggregate
        );
    }

    #[test]
    fn merge_matches_sequential() {
        let target = AttentionTarget::Component(ComponentId::Once);
        let data = [[0.1, 0.5], [0.4, 0.2], [0.9, 0.3], [0.6, 0.6]];
        let seq = aggregate_condition(cond(), target, data.iter().map(|d| &d[..])).unwrap();
        let mut a = TrajectoryAccumulator::new(cond(), target);
        let mut b = TrajectoryAccumulator::new(cond(), target);
        a.push(&data[0]).unwrap();
        b.push(&data[1]).unwrap();
        b.push(&data[2]).unwrap();
        b.push(&data[3]).unwrap();
        let merged = b.merge(a).unwrap().finish().unwrap();
        for l in 0..2 {
            assert!((merged.mean[l] - seq.mean[l]).abs() < 1e-15);
            assert!((merged.sd[l] - seq.sd[l]).abs() < 1e-15);
        }
    }

    #[test]
    fn diff_linearity() {
        let t = AttentionTarget::Component(ComponentId::Then);
        let en = aggregate_condition(cond(), t, [&[0.25, 0.5, 0.75][..]]).unwrap();
        let mut zh = en.clone();
        zh.condition = Condition::new(Language::Zh, Order::Forward);
        let en_map: BTreeMap<_, _> = [(t, en)].into_iter().collect();
        let zh_map = en_map.clone();
        assert_eq!(component_diff(&zh_map, &en_map, &[t]).unwrap(), vec![(t, 0.0)]);
        let mut shifted = zh_map.clone();
        for m in &mut shifted.get_mut(&t).unwrap().mean {
            *m += 0.125;
        }
        assert_eq!(component_diff(&shifted, &en_map, &[t]).unwrap(), vec![(t, 0.375)]);
        let other = AttentionTarget::Component(ComponentId::If);
        assert!(component_diff(&zh_map, &en_map, &[other]).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let t = AttentionTarget::Role(CausalRole::Final);
        let agg = aggregate_condition(cond(), t, [&[0.1, 0.2][..], &[0.3, 0.5][..]]).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, std::slice::from_ref(&agg)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("condition,component_id,layer,mean,sd,n\nen-fwd,final,0,"));
        assert_eq!(read_trajectory_csv(&buf[..]).unwrap(), vec![agg]);
    }

    #[test]
    fn target_names_round_trip() {
        for c in ComponentId::ALL {
            let t = AttentionTarget::Component(c);
            assert_eq!(t.to_string().parse::<AttentionTarget>().unwrap(), t);
        }
        for r in CausalRole::ALL {
            let t = AttentionTarget::Role(r);
            assert_eq!(t.to_string().parse::<AttentionTarget>().unwrap(), t);
        }
    }
}
