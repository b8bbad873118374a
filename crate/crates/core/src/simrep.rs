// SPDX-License-Identifier: MIT OR Apache-2.0

//! Similarity between conditions: SVCCA over causal-role trajectory
//! matrices and layerwise cosine similarity of anchor hidden states.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::chaingen::CausalRole;
use crate::condition::Condition;
use crate::metrics::{AttentionTarget, ConditionAggregate};

pub const DEFAULT_VARIANCE_KEEP: f64 = 0.99;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimrepError {
    #[error("causal role `{0}` is missing")]
    MissingRole(CausalRole),
    #[error("causal role `{0}` is given more than once")]
    DuplicateRole(CausalRole),
    #[error("`{0}` is not a causal role")]
    NotARole(AttentionTarget),
    #[error("aggregates come from different conditions ({0} and {1})")]
    MixedConditions(Condition, Condition),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("variance_keep must lie in (0, 1], got {0}")]
    BadVarianceKeep(f64),
    #[error("{0} has rank 0 after centering; similarity is undefined")]
    RankZero(&'static str),
    #[error("no sample pairs where both sides answered correctly")]
    EmptyProfile,
    #[error("layer {0} has no pair with non-zero hidden vectors")]
    EmptyLayer(usize),
}

/// `L x 3` matrix of mean RCAR per layer for (cause, intermediate, final).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMatrix {
    pub condition: Condition,
    pub matrix: Array2<f64>,
}

/// Stack the three causal-role aggregates of one condition in role order.
pub fn build_trajectory(aggregates: &[&ConditionAggregate]) -> Result<TrajectoryMatrix, SimrepError> {
    let mut by_role: BTreeMap<CausalRole, &ConditionAggregate> = BTreeMap::new();
    for agg in aggregates {
        let role = match agg.target {
            AttentionTarget::Role(r) => r,
            other => return Err(SimrepError::NotARole(other)),
        };
        if by_role.insert(role, agg).is_some() {
            return Err(SimrepError::DuplicateRole(role));
        }
    }
    let cols: Vec<&ConditionAggregate> = CausalRole::ALL
        .iter()
        .map(|r| by_role.get(r).copied().ok_or(SimrepError::MissingRole(*r)))
        .collect::<Result<_, _>>()?;
    let condition = cols[0].condition;
    let l = cols[0].mean.len();
    for c in &cols[1..] {
        if c.condition != condition {
            return Err(SimrepError::MixedConditions(condition, c.condition));
        }
        if c.mean.len() != l {
            return Err(SimrepError::Shape(format!("trajectory lengths {l} and {}", c.mean.len())));
        }
    }
    let matrix = Array2::from_shape_fn((l, 3), |(row, col)| cols[col].mean[row]);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(SimrepError::NonFinite(condition.label()));
    }
    Ok(TrajectoryMatrix { condition, matrix })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvccaDetail {
    pub score: f64,
    /// Canonical correlations, descending.
    pub correlations: Vec<f64>,
    pub rank_x: usize,
    pub rank_y: usize,
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Orthonormal basis of the centered column space, truncated to the
/// smallest number of directions holding `keep` of the variance.
///
/// Using the left singular vectors directly gives whitened coordinates: the
/// retained scores are `U_k S_k`, whose covariance inverse square root is
/// `S_k^-1`.
fn whitened_subspace(x: &DMatrix<f64>, keep: f64, name: &'static str) -> Result<DMatrix<f64>, SimrepError> {
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let svd = xc.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = s.first().copied().unwrap_or(0.0);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top <= f64::EPSILON * scale * (x.nrows() as f64) || top == 0.0 {
        return Err(SimrepError::RankZero(name));
    }
    let numerical_rank = s.iter().take_while(|&&v| v > RANK_TOLERANCE * top).count();
    let energy: Vec<f64> = s[..numerical_rank].iter().map(|v| v * v).collect();
    let total: f64 = energy.iter().sum();
    let mut k = 0;
    let mut acc = 0.0;
    for e in &energy {
        k += 1;
        acc += e;
        if acc >= keep * total {
            break;
        }
    }
    let mut basis = DMatrix::zeros(x.nrows(), k);
    for (c, &i) in order.iter().take(k).enumerate() {
        basis.set_column(c, &u.column(i));
    }
    Ok(basis)
}

/// SVCCA between two matrices with equal row counts.
pub fn svcca_detail(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    variance_keep: f64,
) -> Result<SvccaDetail, SimrepError> {
    if !(variance_keep > 0.0 && variance_keep <= 1.0) {
        return Err(SimrepError::BadVarianceKeep(variance_keep));
    }
    if x.nrows() != y.nrows() {
        return Err(SimrepError::Shape(format!("row counts {} and {}", x.nrows(), y.nrows())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(SimrepError::NonFinite("svcca input".into()));
    }
    let ux = whitened_subspace(&to_dmatrix(x), variance_keep, "X")?;
    let uy = whitened_subspace(&to_dmatrix(y), variance_keep, "Y")?;
    let cross = ux.transpose() * &uy;
    let mut correlations: Vec<f64> = cross
        .singular_values()
        .iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    correlations.sort_by(|a, b| b.total_cmp(a));
    correlations.truncate(ux.ncols().min(uy.ncols()));
    let score = (correlations.iter().sum::<f64>() / correlations.len() as f64).clamp(0.0, 1.0);
    Ok(SvccaDetail {
        score,
        correlations,
        rank_x: ux.ncols(),
        rank_y: uy.ncols(),
    })
}

pub fn svcca(x: &TrajectoryMatrix, y: &TrajectoryMatrix, variance_keep: f64) -> Result<f64, SimrepError> {
    svcca_detail(x.matrix.view(), y.matrix.view(), variance_keep).map(|d| d.score)
}

/// Hidden states of one sample at one anchor, `[L + 1, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorStates {
    pub sample_key: String,
    /// `None` when the sample was never scored.
    pub correct: Option<bool>,
    pub hidden: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionPair(pub Condition, pub Condition);

impl fmt::Display for ConditionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineProfile {
    pub pair: ConditionPair,
    /// Mean cosine for layers `0..=L` (index 0 is the embedding output).
    pub mean: Vec<f64>,
    pub n: Vec<usize>,
}

fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean cosine similarity per layer over sample pairs where both sides are
/// marked correct. Returns the profile and any findings about skipped pairs.
pub fn layerwise_cosine(
    pair: ConditionPair,
    a: &[AnchorStates],
    b: &[AnchorStates],
) -> Result<(CosineProfile, Vec<String>), SimrepError> {
    let mut findings = Vec::new();
    let b_by_key: BTreeMap<&str, &AnchorStates> = b.iter().map(|s| (s.sample_key.as_str(), s)).collect();
    let mut pairs = Vec::new();
    for sa in a {
        let Some(sb) = b_by_key.get(sa.sample_key.as_str()) else {
            findings.push(format!("{}: no counterpart in {}", sa.sample_key, pair.1));
            continue;
        };
        match (sa.correct, sb.correct) {
            (Some(true), Some(true)) => {}
            (None, _) | (_, None) => {
                findings.push(format!("{}: correctness flag missing; pair skipped", sa.sample_key));
                continue;
            }
            _ => continue,
        }
        if sa.hidden.shape() != sb.hidden.shape() {
            return Err(SimrepError::Shape(format!(
                "{}: hidden shapes {:?} and {:?}",
                sa.sample_key,
                sa.hidden.shape(),
                sb.hidden.shape()
            )));
        }
        pairs.push((sa, *sb));
    }
    if pairs.is_empty() {
        return Err(SimrepError::EmptyProfile);
    }
    let layers = pairs[0].0.hidden.nrows();
    if let Some((sa, _)) = pairs.iter().find(|(sa, _)| sa.hidden.nrows() != layers) {
        return Err(SimrepError::Shape(format!(
            "{}: {} layers, expected {layers}",
            sa.sample_key,
            sa.hidden.nrows()
        )));
    }
    let mut mean = vec![0.0; layers];
    let mut n = vec![0usize; layers];
    for l in 0..layers {
        let mut sum = 0.0;
        for (sa, sb) in &pairs {
            match cosine(sa.hidden.row(l), sb.hidden.row(l)) {
                Some(c) => {
                    sum += c;
                    n[l] += 1;
                }
                None => findings.push(format!("{}: zero-norm hidden vector at layer {l}; skipped", sa.sample_key)),
            }
        }
        if n[l] == 0 {
            return Err(SimrepError::EmptyLayer(l));
        }
        mean[l] = sum / n[l] as f64;
    }
    Ok((CosineProfile { pair, mean, n }, findings))
}

/// CSV with columns `condition_pair, layer, mean_cosine, n`.
pub fn write_cosine_csv<W: Write>(writer: W, profiles: &[CosineProfile]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["condition_pair", "layer", "mean_cosine", "n"])?;
    for p in profiles {
        let pair = p.pair.to_string();
        for (l, (m, n)) in p.mean.iter().zip(&p.n).enumerate() {
            w.write_record([&pair, &l.to_string(), &m.to_string(), &n.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `condition_pair, svcca_score, variance_keep`.
pub fn write_svcca_csv<W: Write>(writer: W, scores: &[(ConditionPair, f64)], variance_keep: f64) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["condition_pair", "svcca_score", "variance_keep"])?;
    for (pair, score) in scores {
        w.write_record([pair.to_string(), score.to_string(), variance_keep.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{Language, Order};
    use crate::metrics::aggregate_condition;
    use ndarray::array;

    fn en_fwd() -> Condition {
        Condition::new(Language::En, Order::Forward)
    }

    fn agg(role: CausalRole, values: &[f64]) -> ConditionAggregate {
        aggregate_condition(en_fwd(), AttentionTarget::Role(role), [values]).unwrap()
    }

    #[test]
    fn trajectory_is_canonicalized() {
        let c = agg(CausalRole::Cause, &[1.0, 2.0]);
        let i = agg(CausalRole::Intermediate, &[3.0, 4.0]);
        let f = agg(CausalRole::Final, &[5.0, 6.0]);
        let t = build_trajectory(&[&f, &c, &i]).unwrap();
        assert_eq!(t.matrix, array![[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]]);
        assert_eq!(build_trajectory(&[&c, &i]).unwrap_err(), SimrepError::MissingRole(CausalRole::Final));
        assert_eq!(
            build_trajectory(&[&c, &c, &f]).unwrap_err(),
            SimrepError::DuplicateRole(CausalRole::Cause)
        );
    }

    #[test]
    fn self_similarity_and_rank_zero() {
        let x = array![[0.1, 0.9, 0.3], [0.4, 0.2, 0.8], [0.7, 0.5, 0.1], [0.2, 0.3, 0.6], [0.9, 0.4, 0.2]];
        let d = svcca_detail(x.view(), x.view(), 1.0).unwrap();
        assert!((d.score - 1.0).abs() < 1e-8);
        assert_eq!(d.rank_x, 3);
        let flat = Array2::from_elem((5, 3), 0.25);
        assert_eq!(svcca_detail(flat.view(), x.view(), 0.99).unwrap_err(), SimrepError::RankZero("X"));
        assert!(matches!(svcca_detail(x.view(), x.view(), 0.0), Err(SimrepError::BadVarianceKeep(_))));
    }

    fn states(key: &str, correct: Option<bool>, rows: Array2<f64>) -> AnchorStates {
        AnchorStates {
            sample_key: key.into(),
            correct,
            hidden: rows,
        }
    }

    #[test]
    fn cosine_identity_antipode_and_filter() {
        let pair = ConditionPair(en_fwd(), Condition::new(Language::Zh, Order::Forward));
        let h = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let mut neg = h.clone();
        neg.row_mut(1).mapv_inplace(|v| -v);
        let a = vec![states("k1", Some(true), h.clone())];
        let b = vec![states("k1", Some(true), neg)];
        let (p, _) = layerwise_cosine(pair, &a, &b).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-15);
        assert!((p.mean[1] + 1.0).abs() < 1e-15);
        assert_eq!(p.n, vec![1, 1, 1]);

        let mut a2 = a.clone();
        a2.push(states("k2", Some(false), h.clone()));
        let mut b2 = b.clone();
        b2.push(states("k2", Some(true), -h.clone()));
        assert_eq!(layerwise_cosine(pair, &a2, &b2).unwrap().0, p);

        let wrong = vec![states("k1", Some(false), h)];
        assert_eq!(layerwise_cosine(pair, &wrong, &b).unwrap_err(), SimrepError::EmptyProfile);
    }

    #[test]
    fn zero_norm_vectors_are_skipped() {
        let pair = ConditionPair(en_fwd(), en_fwd());
        let a = vec![
            states("k1", Some(true), array![[0.0, 0.0], [1.0, 0.0]]),
            states("k2", Some(true), array![[1.0, 1.0], [0.0, 1.0]]),
        ];
        let (p, findings) = layerwise_cosine(pair, &a, &a).unwrap();
        assert_eq!(p.n, vec![1, 2]);
        assert_eq!(findings.len(), 1);
    }
}
