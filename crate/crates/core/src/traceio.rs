// SPDX-License-Identifier: MIT OR Apache-2.0

//! Trace bundles: the on-disk boundary between model extraction and analysis.
//!
//! A bundle is a directory holding `manifest.json` plus one raw blob per
//! tensor. Blobs are little-endian IEEE-754 float32 in row-major order; the
//! manifest declares each blob's file name, dtype, shape and CRC-32. The
//! attention blob is always `attention.bin` with shape `[L, H, T, T]`; each
//! anchor `name` has a hidden-state blob `hidden_<name>.bin` with shape
//! `[L + 1, D]` (embedding output followed by every block output).
//!
//! See `docs/trace-format.md` for the full manifest schema.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4, ArrayView4};
use serde::{Deserialize, Serialize};

use crate::condition::{Condition, Language, Order};

pub const FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ATTENTION_FILE: &str = "attention.bin";
pub const DTYPE_F32: &str = "float32";

/// Tolerance on attention row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Default anchor: last non-punctuation token of the chain statement.
pub const ANCHOR_FINAL_CHAIN: &str = "final_chain_token";
/// Default anchor: last token of the prompt.
pub const ANCHOR_FINAL_PROMPT: &str = "final_prompt_token";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    /// Free-form producer settings (decoding parameters, prompt wrapper, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// A token and its `[start, end)` character offsets into the prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    pub sample_key: String,
    pub language: Language,
    pub order: Order,
    pub model: ModelMeta,
    pub prompt_text: String,
    pub tokens: Vec<TokenSpan>,
    /// Post-softmax attention, `[L, H, T, T]`, query-major rows.
    pub attention: Array4<f32>,
    /// Hidden states per anchor name, `[L + 1, D]`.
    pub hidden: BTreeMap<String, Array2<f32>>,
    pub anchor_positions: BTreeMap<String, usize>,
    pub generated_answer: String,
}

impl TraceBundle {
    pub fn condition(&self) -> Condition {
        Condition::new(self.language, self.order)
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    /// CRC-32 (IEEE) of the blob bytes, 8 lowercase hex digits.
    pub crc32: String,
}

impl BlobEntry {
    fn expected_len(&self) -> usize {
        self.shape.iter().product::<usize>() * 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: String,
    pub sample_key: String,
    pub language: Language,
    pub order: Order,
    pub model: ModelMeta,
    pub prompt_text: String,
    pub tokens: Vec<TokenSpan>,
    pub generated_answer: String,
    pub anchor_positions: BTreeMap<String, usize>,
    /// `attention` plus `hidden.<anchor>` entries.
    pub tensors: BTreeMap<String, BlobEntry>,
}

fn hidden_tensor_name(anchor: &str) -> String {
    format!("hidden.{anchor}")
}

fn hidden_file_name(anchor: &str) -> String {
    format!("hidden_{anchor}.bin")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    ManifestUnreadable,
    UnsupportedVersion,
    MissingBlob,
    DtypeMismatch,
    ShapeMismatch,
    ChecksumMismatch,
    RowNormalization,
    CausalMask,
    InvalidValue,
    OffsetOutOfRange,
    OffsetOrder,
    AnchorOutOfRange,
    MissingHidden,
    OrphanHidden,
    BadAnchorName,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub location: String,
    pub message: String,
}

impl Finding {
    fn new(kind: FindingKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            kind,
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}: {}", self.kind, self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn count(&self, kind: FindingKind) -> usize {
        self.findings.iter().filter(|f| f.kind == kind).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} does not parse: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("unsupported trace format version `{found}` (expected `{FORMAT_VERSION}`)")]
    UnsupportedVersion { found: String },
    #[error("blob for tensor `{tensor}` is missing ({file})")]
    MissingBlob { tensor: String, file: String },
    #[error("tensor `{tensor}` has dtype `{dtype}`, only float32 is supported")]
    DtypeMismatch { tensor: String, dtype: String },
    #[error("tensor `{tensor}`: {message}")]
    ShapeMismatch { tensor: String, message: String },
    #[error("tensor `{tensor}` checksum mismatch: manifest {expected}, blob {actual}")]
    ChecksumMismatch {
        tensor: String,
        expected: String,
        actual: String,
    },
    #[error("trace violates invariants:\n{}", .0.iter().map(|f| format!("  - {f}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Finding>),
}

impl TraceError {
    /// Stable short name, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            TraceError::Io { .. } => "io",
            TraceError::Manifest { .. } => "manifest",
            TraceError::UnsupportedVersion { .. } => "unsupported_version",
            TraceError::MissingBlob { .. } => "missing_blob",
            TraceError::DtypeMismatch { .. } => "dtype_mismatch",
            TraceError::ShapeMismatch { .. } => "shape_mismatch",
            TraceError::ChecksumMismatch { .. } => "checksum_mismatch",
            TraceError::Invalid(findings) => {
                if findings.iter().any(|f| f.kind == FindingKind::CausalMask) {
                    "causal_mask_violation"
                } else if findings.iter().any(|f| f.kind == FindingKind::AnchorOutOfRange) {
                    "anchor_out_of_range"
                } else {
                    "invariant_violation"
                }
            }
        }
    }
}

fn crc_hex(bytes: &[u8]) -> String {
    format!("{:08x}", crc32fast::hash(bytes))
}

fn f32_to_le_bytes(values: impl Iterator<Item = f32>, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_bytes_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Check every bundle invariant; empty result means valid.
pub fn check_bundle(bundle: &TraceBundle) -> Vec<Finding> {
    let mut findings = check_metadata(
        &bundle.model,
        &bundle.prompt_text,
        &bundle.tokens,
        &bundle.anchor_positions,
    );
    let (l, h, t) = (bundle.model.num_layers, bundle.model.num_heads, bundle.tokens.len());
    if bundle.attention.shape() != [l, h, t, t] {
        findings.push(Finding::new(
            FindingKind::ShapeMismatch,
            "attention",
            format!("shape {:?}, expected {:?}", bundle.attention.shape(), [l, h, t, t]),
        ));
    } else {
        findings.extend(check_attention(bundle.attention.view()));
    }
    for anchor in bundle.anchor_positions.keys() {
        match bundle.hidden.get(anchor) {
            None => findings.push(Finding::new(
                FindingKind::MissingHidden,
                hidden_tensor_name(anchor),
                "declared anchor has no hidden-state tensor",
            )),
            Some(hidden) => findings.extend(check_hidden(anchor, hidden, &bundle.model)),
        }
    }
    for anchor in bundle.hidden.keys() {
        if !bundle.anchor_positions.contains_key(anchor) {
            findings.push(Finding::new(
                FindingKind::OrphanHidden,
                hidden_tensor_name(anchor),
                "hidden-state tensor has no anchor position",
            ));
        }
    }
    findings
}

fn check_metadata(
    model: &ModelMeta,
    prompt_text: &str,
    tokens: &[TokenSpan],
    anchors: &BTreeMap<String, usize>,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    if model.num_layers == 0 || model.num_heads == 0 {
        findings.push(Finding::new(
            FindingKind::ShapeMismatch,
            "model",
            "num_layers and num_heads must be positive",
        ));
    }
    let text_len = prompt_text.chars().count();
    let mut prev_start = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.start > tok.end || tok.end > text_len {
            findings.push(Finding::new(
                FindingKind::OffsetOutOfRange,
                format!("tokens[{i}]"),
                format!("[{}, {}) outside prompt of {text_len} chars", tok.start, tok.end),
            ));
        }
        if tok.start < prev_start {
            findings.push(Finding::new(
                FindingKind::OffsetOrder,
                format!("tokens[{i}]"),
                format!("start {} precedes previous start {prev_start}", tok.start),
            ));
        }
        prev_start = prev_start.max(tok.start);
    }
    for (name, &index) in anchors {
        if !is_valid_anchor_name(name) {
            findings.push(Finding::new(
                FindingKind::BadAnchorName,
                format!("anchor_positions.{name}"),
                "anchor names must match [A-Za-z0-9_-]+",
            ));
        }
        if index >= tokens.len() {
            findings.push(Finding::new(
                FindingKind::AnchorOutOfRange,
                format!("anchor_positions.{name}"),
                format!("index {index} >= token count {}", tokens.len()),
            ));
        }
    }
    findings
}

fn is_valid_anchor_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Row-stochasticity, causal mask and finiteness, one finding per (layer, head).
pub fn check_attention(attention: ArrayView4<'_, f32>) -> Vec<Finding> {
    let mut findings = Vec::new();
    let [l_n, h_n, t, t2] = match attention.shape() {
        &[a, b, c, d] => [a, b, c, d],
        _ => unreachable!(),
    };
    if t != t2 {
        findings.push(Finding::new(
            FindingKind::ShapeMismatch,
            "attention",
            format!("query and key lengths differ ({t} vs {t2})"),
        ));
        return findings;
    }
    for l in 0..l_n {
        for h in 0..h_n {
            let head = attention.slice(ndarray::s![l, h, .., ..]);
            let mut bad_rows = Vec::new();
            let mut mask_violations = 0usize;
            let mut invalid = 0usize;
            for j in 0..t {
                let mut sum = 0f64;
                for k in 0..t {
                    let v = head[[j, k]];
                    if !v.is_finite() || v < 0.0 {
                        invalid += 1;
                    }
                    if k > j && v != 0.0 {
                        mask_violations += 1;
                    }
                    sum += v as f64;
                }
                if !((1.0 - ROW_SUM_TOLERANCE)..=(1.0 + ROW_SUM_TOLERANCE)).contains(&sum) {
                    bad_rows.push((j, sum));
                }
            }
            let loc = format!("attention[layer={l}, head={h}]");
            if invalid > 0 {
                findings.push(Finding::new(
                    FindingKind::InvalidValue,
                    loc.clone(),
                    format!("{invalid} negative or non-finite entries"),
                ));
            }
            if mask_violations > 0 {
                findings.push(Finding::new(
                    FindingKind::CausalMask,
                    loc.clone(),
                    format!("{mask_violations} nonzero entries above the diagonal"),
                ));
            }
            if let Some(&(row, sum)) = bad_rows.first() {
                findings.push(Finding::new(
                    FindingKind::RowNormalization,
                    loc,
                    format!(
                        "{} rows outside 1±{ROW_SUM_TOLERANCE}; first: row {row} sums to {sum}",
                        bad_rows.len()
                    ),
                ));
            }
        }
    }
    findings
}

fn check_hidden(anchor: &str, hidden: &Array2<f32>, model: &ModelMeta) -> Vec<Finding> {
    let mut findings = Vec::new();
    let expected = [model.num_layers + 1, model.hidden_dim];
    if hidden.shape() != expected {
        findings.push(Finding::new(
            FindingKind::ShapeMismatch,
            hidden_tensor_name(anchor),
            format!("shape {:?}, expected {:?}", hidden.shape(), expected),
        ));
    }
    let bad = hidden.iter().filter(|v| !v.is_finite()).count();
    if bad > 0 {
        findings.push(Finding::new(
            FindingKind::InvalidValue,
            hidden_tensor_name(anchor),
            format!("{bad} non-finite entries"),
        ));
    }
    findings
}

/// Validate and write `bundle` into directory `path` (created if needed).
pub fn write_trace(bundle: &TraceBundle, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let findings = check_bundle(bundle);
    if !findings.is_empty() {
        return Err(TraceError::Invalid(findings));
    }
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|source| TraceError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut tensors = BTreeMap::new();
    let attention = bundle.attention.as_standard_layout();
    let attention_bytes = f32_to_le_bytes(attention.iter().copied(), attention.len());
    tensors.insert(
        "attention".to_string(),
        write_blob(dir, ATTENTION_FILE, bundle.attention.shape(), &attention_bytes)?,
    );
    for (anchor, hidden) in &bundle.hidden {
        let hidden = hidden.as_standard_layout();
        let bytes = f32_to_le_bytes(hidden.iter().copied(), hidden.len());
        tensors.insert(
            hidden_tensor_name(anchor),
            write_blob(dir, &hidden_file_name(anchor), hidden.shape(), &bytes)?,
        );
    }

    let manifest = BundleManifest {
        format_version: FORMAT_VERSION.to_string(),
        sample_key: bundle.sample_key.clone(),
        language: bundle.language,
        order: bundle.order,
        model: bundle.model.clone(),
        prompt_text: bundle.prompt_text.clone(),
        tokens: bundle.tokens.clone(),
        generated_answer: bundle.generated_answer.clone(),
        anchor_positions: bundle.anchor_positions.clone(),
        tensors,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, json).map_err(|source| TraceError::Io {
        path: manifest_path,
        source,
    })
}

fn write_blob(dir: &Path, file: &str, shape: &[usize], bytes: &[u8]) -> Result<BlobEntry, TraceError> {
    let path = dir.join(file);
    fs::write(&path, bytes).map_err(|source| TraceError::Io { path, source })?;
    Ok(BlobEntry {
        file: file.to_string(),
        dtype: DTYPE_F32.to_string(),
        shape: shape.to_vec(),
        crc32: crc_hex(bytes),
    })
}

/// Read only the manifest of a bundle.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<BundleManifest, TraceError> {
    let manifest_path = path.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|source| TraceError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| TraceError::Manifest {
        path: manifest_path,
        message: e.to_string(),
    })
}

fn load_blob(dir: &Path, tensor: &str, entry: &BlobEntry) -> Result<Vec<f32>, TraceError> {
    if entry.dtype != DTYPE_F32 {
        return Err(TraceError::DtypeMismatch {
            tensor: tensor.to_string(),
            dtype: entry.dtype.clone(),
        });
    }
    if entry.file.contains('/') || entry.file.contains('\\') || entry.file.starts_with('.') {
        return Err(TraceError::MissingBlob {
            tensor: tensor.to_string(),
            file: entry.file.clone(),
        });
    }
    let path = dir.join(&entry.file);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(TraceError::MissingBlob {
                tensor: tensor.to_string(),
                file: entry.file.clone(),
            })
        }
        Err(source) => return Err(TraceError::Io { path, source }),
    };
    if bytes.len() != entry.expected_len() {
        return Err(TraceError::ShapeMismatch {
            tensor: tensor.to_string(),
            message: format!(
                "shape {:?} needs {} bytes, blob has {}",
                entry.shape,
                entry.expected_len(),
                bytes.len()
            ),
        });
    }
    let actual = crc_hex(&bytes);
    if actual != entry.crc32.to_ascii_lowercase() {
        return Err(TraceError::ChecksumMismatch {
            tensor: tensor.to_string(),
            expected: entry.crc32.clone(),
            actual,
        });
    }
    Ok(le_bytes_to_f32(&bytes))
}

fn shape_error(tensor: &str, message: String) -> TraceError {
    TraceError::ShapeMismatch {
        tensor: tensor.to_string(),
        message,
    }
}

/// Read a bundle, verifying version, blob sizes and checksums, then
/// re-validating every invariant.
pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceBundle, TraceError> {
    let dir = path.as_ref();
    let manifest = read_manifest(dir)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TraceError::UnsupportedVersion {
            found: manifest.format_version,
        });
    }

    let entry = manifest
        .tensors
        .get("attention")
        .ok_or_else(|| TraceError::MissingBlob {
            tensor: "attention".into(),
            file: ATTENTION_FILE.into(),
        })?;
    let data = load_blob(dir, "attention", entry)?;
    let attention = match entry.shape.as_slice() {
        &[a, b, c, d] => Array4::from_shape_vec((a, b, c, d), data)
            .map_err(|e| shape_error("attention", e.to_string()))?,
        other => return Err(shape_error("attention", format!("expected rank 4, got {other:?}"))),
    };

    let mut hidden = BTreeMap::new();
    for anchor in manifest.anchor_positions.keys() {
        let name = hidden_tensor_name(anchor);
        let entry = manifest.tensors.get(&name).ok_or_else(|| TraceError::MissingBlob {
            tensor: name.clone(),
            file: hidden_file_name(anchor),
        })?;
        let data = load_blob(dir, &name, entry)?;
        let array = match entry.shape.as_slice() {
            &[a, b] => Array2::from_shape_vec((a, b), data).map_err(|e| shape_error(&name, e.to_string()))?,
            other => return Err(shape_error(&name, format!("expected rank 2, got {other:?}"))),
        };
        hidden.insert(anchor.clone(), array);
    }

    let bundle = TraceBundle {
        sample_key: manifest.sample_key,
        language: manifest.language,
        order: manifest.order,
        model: manifest.model,
        prompt_text: manifest.prompt_text,
        tokens: manifest.tokens,
        attention,
        hidden,
        anchor_positions: manifest.anchor_positions,
        generated_answer: manifest.generated_answer,
    };
    let findings = check_bundle(&bundle);
    if !findings.is_empty() {
        return Err(TraceError::Invalid(findings));
    }
    Ok(bundle)
}

/// Report every violated invariant of the bundle at `path`. Never fails.
pub fn validate_trace(path: impl AsRef<Path>) -> ValidationReport {
    let dir = path.as_ref();
    let mut findings = Vec::new();
    let manifest = match read_manifest(dir) {
        Ok(m) => m,
        Err(e) => {
            findings.push(Finding::new(FindingKind::ManifestUnreadable, MANIFEST_FILE, e.to_string()));
            return ValidationReport { findings };
        }
    };
    if manifest.format_version != FORMAT_VERSION {
        findings.push(Finding::new(
            FindingKind::UnsupportedVersion,
            "format_version",
            format!("`{}` (expected `{FORMAT_VERSION}`)", manifest.format_version),
        ));
    }
    findings.extend(check_metadata(
        &manifest.model,
        &manifest.prompt_text,
        &manifest.tokens,
        &manifest.anchor_positions,
    ));

    let t = manifest.tokens.len();
    let (l, h) = (manifest.model.num_layers, manifest.model.num_heads);
    match manifest.tensors.get("attention") {
        None => findings.push(Finding::new(FindingKind::MissingBlob, "attention", "no attention tensor declared")),
        Some(entry) => {
            if entry.shape != [l, h, t, t] {
                findings.push(Finding::new(
                    FindingKind::ShapeMismatch,
                    "attention",
                    format!("declared shape {:?}, expected {:?}", entry.shape, [l, h, t, t]),
                ));
            } else {
                match load_blob(dir, "attention", entry) {
                    Ok(data) => {
                        let array = Array4::from_shape_vec((l, h, t, t), data).expect("length checked");
                        findings.extend(check_attention(array.view()));
                    }
                    Err(e) => findings.push(blob_finding("attention", &e)),
                }
            }
        }
    }

    for anchor in manifest.anchor_positions.keys() {
        let name = hidden_tensor_name(anchor);
        match manifest.tensors.get(&name) {
            None => findings.push(Finding::new(
                FindingKind::MissingBlob,
                name,
                "declared anchor has no hidden-state blob",
            )),
            Some(entry) => match load_blob(dir, &name, entry) {
                Ok(data) => {
                    if let &[a, b] = entry.shape.as_slice() {
                        let array = Array2::from_shape_vec((a, b), data).expect("length checked");
                        findings.extend(check_hidden(anchor, &array, &manifest.model));
                    } else {
                        findings.push(Finding::new(
                            FindingKind::ShapeMismatch,
                            name,
                            format!("expected rank 2, got {:?}", entry.shape),
                        ));
                    }
                }
                Err(e) => findings.push(blob_finding(&name, &e)),
            },
        }
    }
    for name in manifest.tensors.keys() {
        if let Some(anchor) = name.strip_prefix("hidden.") {
            if !manifest.anchor_positions.contains_key(anchor) {
                findings.push(Finding::new(
                    FindingKind::OrphanHidden,
                    name.clone(),
                    "hidden-state tensor has no anchor position",
                ));
            }
        }
    }
    ValidationReport { findings }
}

fn blob_finding(tensor: &str, err: &TraceError) -> Finding {
    let kind = match err {
        TraceError::MissingBlob { .. } => FindingKind::MissingBlob,
        TraceError::DtypeMismatch { .. } => FindingKind::DtypeMismatch,
        TraceError::ShapeMismatch { .. } => FindingKind::ShapeMismatch,
        TraceError::ChecksumMismatch { .. } => FindingKind::ChecksumMismatch,
        _ => FindingKind::MissingBlob,
    };
    Finding::new(kind, tensor, err.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny bundle: L=2, H=2, T=3 with uniform causal attention.
    pub(crate) fn tiny_bundle() -> TraceBundle {
        let t = 3;
        let attention = Array4::from_shape_fn((2, 2, t, t), |(_, _, j, k)| {
            if k <= j {
                1.0 / (j as f32 + 1.0)
            } else {
                0.0
            }
        });
        let mut hidden = BTreeMap::new();
        hidden.insert(
            ANCHOR_FINAL_PROMPT.to_string(),
            Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.5 - 1.0),
        );
        TraceBundle {
            sample_key: "house-001".into(),
            language: Language::En,
            order: Order::Forward,
            model: ModelMeta {
                model_id: "tiny".into(),
                num_layers: 2,
                num_heads: 2,
                hidden_dim: 4,
                extra: BTreeMap::new(),
            },
            prompt_text: "a bc d".into(),
            tokens: vec![
                TokenSpan { text: "a".into(), start: 0, end: 1 },
                TokenSpan { text: " bc".into(), start: 1, end: 4 },
                TokenSpan { text: " d".into(), start: 4, end: 6 },
            ],
            attention,
            hidden,
            anchor_positions: [(ANCHOR_FINAL_PROMPT.to_string(), 2)].into_iter().collect(),
            generated_answer: "x".into(),
        }
    }

    #[test]
    fn tiny_bundle_is_valid_and_round_trips() {
        let b = tiny_bundle();
        assert!(check_bundle(&b).is_empty());
        let dir = tempfile::tempdir().unwrap();
        write_trace(&b, dir.path()).unwrap();
        assert_eq!(read_trace(dir.path()).unwrap(), b);
        assert!(validate_trace(dir.path()).is_valid());
    }

    #[test]
    fn mask_violation_refused_before_write() {
        let mut b = tiny_bundle();
        b.attention[[1, 0, 0, 2]] = 0.25;
        b.attention[[1, 0, 0, 0]] = 0.75;
        let dir = tempfile::tempdir().unwrap();
        let err = write_trace(&b, dir.path().join("x")).unwrap_err();
        assert_eq!(err.kind(), "causal_mask_violation");
        assert!(!dir.path().join("x").exists());
    }

    #[test]
    fn anchor_at_token_count_is_out_of_range() {
        let mut b = tiny_bundle();
        b.anchor_positions.insert(ANCHOR_FINAL_PROMPT.into(), 3);
        let err = write_trace(&b, tempfile::tempdir().unwrap().path()).unwrap_err();
        assert_eq!(err.kind(), "anchor_out_of_range");
    }

    #[test]
    fn validation_reports_missing_hidden_blob() {
        let b = tiny_bundle();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&b, dir.path()).unwrap();
        fs::remove_file(dir.path().join("hidden_final_prompt_token.bin")).unwrap();
        let report = validate_trace(dir.path());
        assert_eq!(report.count(FindingKind::MissingBlob), 1);
        assert!(matches!(read_trace(dir.path()), Err(TraceError::MissingBlob { .. })));
    }

    #[test]
    fn validation_is_total_on_garbage() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(validate_trace(dir.path()).count(FindingKind::ManifestUnreadable), 1);
        fs::write(dir.path().join(MANIFEST_FILE), "{not json").unwrap();
        assert_eq!(validate_trace(dir.path()).count(FindingKind::ManifestUnreadable), 1);
    }

    #[test]
    fn offsets_must_be_in_range_and_ordered() {
        let mut b = tiny_bundle();
        b.tokens[2].end = 9;
        b.tokens[1].start = 0;
        b.tokens[0].start = 1;
        let kinds: Vec<_> = check_bundle(&b).into_iter().map(|f| f.kind).collect();
        assert!(kinds.contains(&FindingKind::OffsetOutOfRange));
        assert!(kinds.contains(&FindingKind::OffsetOrder));
    }
}
