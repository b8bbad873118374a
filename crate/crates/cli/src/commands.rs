// SPDX-License-Identifier: MIT OR Apache-2.0

//! Subcommand bodies. Each writes its artifacts under the output directory
//! and then refreshes `report.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use causelens::analysis::{aggregate_analyses, analyze, SampleAnalysis};
use causelens::chaingen::{
    generate_dataset, load_lexicon, validate_cross_alignment, verify_tiling, write_jsonl, AnnotatedSample,
    ComponentId, Lexicon,
};
use causelens::condition::{Condition, Language, Order};
use causelens::evalreport::{emit_figures, AccuracyTable, FigureInputs};
use causelens::metrics::{
    component_diff, write_ratio_csv, write_trajectory_csv, AttentionTarget, ConditionAggregate, RcarResult,
};
use causelens::simrep::{
    build_trajectory, layerwise_cosine, svcca, write_cosine_csv, write_svcca_csv, AnchorStates, ConditionPair,
    CosineProfile, SimrepError, TrajectoryMatrix,
};
use causelens::synth::{synth_trace, SynthConfig};
use causelens::traceio::{read_trace, validate_trace, write_trace, ValidationReport, MANIFEST_FILE};
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const WARNINGS_FILE: &str = "warnings.txt";

pub struct Context {
    pub cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Context, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.jobs {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        Ok(Context { cfg, pool })
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.out.join(rel)
    }
}

/// Bundle directory for one sample: `<traces>/<condition>/<key>`.
pub fn bundle_dir(traces: &Path, condition: Condition, key: &str) -> PathBuf {
    traces.join(condition.label()).join(key)
}

/// Bundle directories under `<traces>/<condition>`, sorted by name.
pub fn list_bundles(traces: &Path, condition: Condition) -> Result<Vec<PathBuf>, CliError> {
    let dir = traces.join(condition.label());
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(CliError::io(&dir))? {
        let path = entry.map_err(CliError::io(&dir))?.path();
        if path.join(MANIFEST_FILE).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    write_bytes(path, &buf)
}

pub fn load_lexicon_for(cfg: &RunConfig) -> Result<Lexicon, CliError> {
    Ok(match &cfg.lexicon {
        Some(p) => load_lexicon(p)?,
        None => Lexicon::bundled(),
    })
}

pub fn dataset(cfg: &RunConfig) -> Result<Vec<AnnotatedSample>, CliError> {
    let lex = load_lexicon_for(cfg)?;
    Ok(generate_dataset(&lex, &cfg.languages, &cfg.orders))
}

/// Every file under the output directory except the report itself.
fn artifacts(out: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<String>) {
        let Ok(entries) = fs::read_dir(dir) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else if let Ok(rel) = p.strip_prefix(root) {
                let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                acc.push(rel.join("/"));
            }
        }
    }
    let mut acc = Vec::new();
    walk(out, out, &mut acc);
    acc.retain(|p| p != REPORT_FILE);
    acc.sort();
    acc
}

pub fn write_report(ctx: &Context) -> Result<(), CliError> {
    let report = json!({
        "config": ctx.cfg,
        "artifacts": artifacts(&ctx.cfg.out),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_bytes(&ctx.out(REPORT_FILE), text.as_bytes())
}

pub fn generate(ctx: &Context) -> Result<serde_json::Value, CliError> {
    let samples = dataset(&ctx.cfg)?;
    let failures: Vec<String> = samples.iter().filter_map(|s| verify_tiling(s).err()).collect();
    if let Some(first) = failures.first() {
        return Err(CliError::Invalid(format!("{} samples fail span tiling; first: {first}", failures.len())));
    }
    let alignment = validate_cross_alignment(&samples);
    let path = ctx.out("dataset.jsonl");
    create_parent(&path)?;
    let file = fs::File::create(&path).map_err(CliError::io(&path))?;
    let mut w = BufWriter::new(file);
    write_jsonl(&mut w, &samples).map_err(CliError::io(&path))?;
    w.flush().map_err(CliError::io(&path))?;
    Ok(json!({
        "samples": samples.len(),
        "tiling_failures": failures.len(),
        "alignment_keys_checked": alignment.keys_checked,
        "alignment_mismatches": alignment.mismatches.len(),
        "path": path,
    }))
}

/// Analyses grouped by condition, in sample-key order.
pub struct Analyses {
    pub by_condition: BTreeMap<Condition, Vec<SampleAnalysis>>,
    /// Distinct model ids recorded in the bundles.
    pub model_ids: std::collections::BTreeSet<String>,
}

impl Analyses {
    fn all(&self) -> impl Iterator<Item = &SampleAnalysis> {
        self.by_condition.values().flatten()
    }

    fn len(&self) -> usize {
        self.by_condition.values().map(Vec::len).sum()
    }
}

fn missing_traces(detail: &str) -> CliError {
    CliError::MissingTraces(format!(
        "{detail}; trace bundles are produced by the `extract` harness (or `causelens synth-traces` for synthetic \
         fixtures) and laid out as <traces>/<condition>/<sample_key>/; pass the directory with --traces"
    ))
}

pub fn load_analyses(ctx: &Context) -> Result<Analyses, CliError> {
    let traces = ctx
        .cfg
        .traces
        .clone()
        .ok_or_else(|| missing_traces("no trace directory configured"))?;
    if !traces.is_dir() {
        return Err(missing_traces(&format!("trace directory {} does not exist", traces.display())));
    }
    let samples = dataset(&ctx.cfg)?;
    let index: BTreeMap<(Condition, &str), &AnnotatedSample> =
        samples.iter().map(|s| ((s.condition(), s.key.as_str()), s)).collect();

    let mut by_condition = BTreeMap::new();
    let mut model_ids = std::collections::BTreeSet::new();
    let mut warnings = Vec::new();
    for cond in ctx.cfg.conditions() {
        let dirs = list_bundles(&traces, cond)?;
        if dirs.is_empty() {
            continue;
        }
        let results: Vec<(SampleAnalysis, Vec<String>, String)> = ctx.pool.install(|| {
            dirs.par_iter()
                .map(|dir| {
                    let trace = read_trace(dir).map_err(|source| CliError::Trace {
                        path: dir.clone(),
                        source,
                    })?;
                    let sample = index.get(&(cond, trace.sample_key.as_str())).ok_or_else(|| {
                        CliError::Invalid(format!(
                            "{}: sample `{}` ({cond}) is not in the dataset",
                            dir.display(),
                            trace.sample_key
                        ))
                    })?;
                    let mut a = analyze(&trace, sample, &ctx.cfg.anchor)?;
                    let mut w = std::mem::take(&mut a.warnings);
                    if a.anchor.is_none() {
                        w.push(format!("{}: no hidden states for anchor `{}`", sample.key, ctx.cfg.anchor));
                    }
                    Ok((a, w, trace.model.model_id))
                })
                .collect::<Result<_, CliError>>()
        })?;
        let mut list = Vec::with_capacity(results.len());
        for (a, w, model) in results {
            model_ids.insert(model);
            warnings.extend(w.into_iter().map(|w| format!("{cond} {w}")));
            list.push(a);
        }
        list.sort_by(|a, b| a.scored.sample_key.cmp(&b.scored.sample_key));
        by_condition.insert(cond, list);
    }
    if by_condition.is_empty() {
        return Err(missing_traces(&format!("no trace bundles under {}", traces.display())));
    }
    let mut text = warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_bytes(&ctx.out(WARNINGS_FILE), text.as_bytes())?;
    Ok(Analyses { by_condition, model_ids })
}

pub fn align(ctx: &Context, analyses: &Analyses) -> Result<serde_json::Value, CliError> {
    for (cond, list) in &analyses.by_condition {
        let path = ctx.out(&format!("align/{cond}.jsonl"));
        write_with(&path, |buf| {
            for a in list {
                serde_json::to_writer(&mut *buf, &a.map).map_err(|e| e.to_string())?;
                buf.push(b'\n');
            }
            Ok(())
        })?;
    }
    let findings: usize = analyses.all().map(|a| a.map.findings.len()).sum();
    Ok(json!({ "samples": analyses.len(), "findings": findings }))
}

fn aggregates(ctx: &Context, analyses: &Analyses) -> Result<Vec<ConditionAggregate>, CliError> {
    let all: Vec<SampleAnalysis> = analyses.all().cloned().collect();
    Ok(aggregate_analyses(&all, ctx.cfg.correct_only)?)
}

fn aggregate_map(aggs: &[ConditionAggregate], cond: Condition) -> BTreeMap<AttentionTarget, ConditionAggregate> {
    aggs.iter()
        .filter(|a| a.condition == cond)
        .map(|a| (a.target, a.clone()))
        .collect()
}

type OrderDiffs = Vec<(Order, Vec<(AttentionTarget, f64)>)>;

/// Chinese-minus-English differences per order, over components present in both.
fn diffs(aggs: &[ConditionAggregate]) -> Result<OrderDiffs, CliError> {
    let mut out = Vec::new();
    for order in Order::ALL {
        let zh = aggregate_map(aggs, Condition::new(Language::Zh, order));
        let en = aggregate_map(aggs, Condition::new(Language::En, order));
        if zh.is_empty() || en.is_empty() {
            continue;
        }
        let targets: Vec<AttentionTarget> = ComponentId::ALL
            .into_iter()
            .map(AttentionTarget::Component)
            .filter(|t| zh.contains_key(t) && en.contains_key(t))
            .collect();
        out.push((order, component_diff(&zh, &en, &targets)?));
    }
    Ok(out)
}

pub fn rcar(ctx: &Context, analyses: &Analyses) -> Result<serde_json::Value, CliError> {
    for (cond, list) in &analyses.by_condition {
        let results: Vec<RcarResult> = list.iter().flat_map(|a| a.rcar.values().cloned()).collect();
        let path = ctx.out(&format!("rcar/ratios_{cond}.csv"));
        write_with(&path, |b| write_ratio_csv(b, &results).map_err(|e| e.to_string()))?;
    }
    let aggs = aggregates(ctx, analyses)?;
    write_with(&ctx.out("rcar/trajectories.csv"), |b| {
        write_trajectory_csv(b, &aggs).map_err(|e| e.to_string())
    })?;
    let diffs = diffs(&aggs)?;
    write_with(&ctx.out("rcar/component_diff.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        let err = |e: csv::Error| e.to_string();
        w.write_record(["order", "component_id", "diff_zh_minus_en"]).map_err(err)?;
        for (order, list) in &diffs {
            for (t, v) in list {
                w.write_record([order.as_str(), &t.to_string(), &v.to_string()]).map_err(err)?;
            }
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    Ok(json!({ "samples": analyses.len(), "aggregates": aggs.len(), "correct_only": ctx.cfg.correct_only }))
}

fn trajectories(aggs: &[ConditionAggregate]) -> Result<BTreeMap<Condition, TrajectoryMatrix>, CliError> {
    let mut out = BTreeMap::new();
    let conds: std::collections::BTreeSet<Condition> = aggs.iter().map(|a| a.condition).collect();
    for cond in conds {
        let roles: Vec<&ConditionAggregate> = aggs
            .iter()
            .filter(|a| a.condition == cond && matches!(a.target, AttentionTarget::Role(_)))
            .collect();
        out.insert(cond, build_trajectory(&roles)?);
    }
    Ok(out)
}

pub fn svcca_cmd(ctx: &Context, analyses: &Analyses, conditions: Option<&[Condition]>) -> Result<serde_json::Value, CliError> {
    let aggs = aggregates(ctx, analyses)?;
    let trajs = trajectories(&aggs)?;
    let conds: Vec<Condition> = match conditions {
        Some(list) => {
            for c in list {
                if !trajs.contains_key(c) {
                    return Err(missing_traces(&format!("no traces for condition {c}")));
                }
            }
            list.to_vec()
        }
        None => trajs.keys().copied().collect(),
    };
    let n = conds.len();
    let keep = ctx.cfg.variance_keep;
    let mut matrix = vec![vec![0.0; n]; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            let s = svcca(&trajs[&conds[i]], &trajs[&conds[j]], keep)?;
            matrix[i][j] = s;
            matrix[j][i] = s;
            if i < j {
                pairs.push((ConditionPair(conds[i], conds[j]), s));
            }
        }
    }
    write_with(&ctx.out("svcca/svcca.csv"), |b| {
        write_svcca_csv(b, &pairs, keep).map_err(|e| e.to_string())
    })?;
    write_with(&ctx.out("svcca/matrix.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        let err = |e: csv::Error| e.to_string();
        let mut header = vec!["condition".to_string()];
        header.extend(conds.iter().map(|c| c.label()));
        w.write_record(&header).map_err(err)?;
        for (i, row) in matrix.iter().enumerate() {
            let mut rec = vec![conds[i].label()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|e| e.to_string())
    })?;
    Ok(json!({
        "conditions": conds.iter().map(|c| c.label()).collect::<Vec<_>>(),
        "matrix": matrix,
        "variance_keep": keep,
    }))
}

fn cosine_profiles(analyses: &Analyses) -> Result<(Vec<CosineProfile>, Vec<String>), CliError> {
    let conds: Vec<Condition> = analyses.by_condition.keys().copied().collect();
    let states = |c: Condition| -> Vec<AnchorStates> {
        analyses.by_condition[&c].iter().filter_map(|a| a.anchor.clone()).collect()
    };
    let mut profiles = Vec::new();
    let mut notes = Vec::new();
    for i in 0..conds.len() {
        for j in i + 1..conds.len() {
            let pair = ConditionPair(conds[i], conds[j]);
            match layerwise_cosine(pair, &states(conds[i]), &states(conds[j])) {
                Ok((p, findings)) => {
                    notes.extend(findings.into_iter().map(|f| format!("{pair}: {f}")));
                    profiles.push(p);
                }
                Err(SimrepError::EmptyProfile) => notes.push(format!("{pair}: no both-correct pairs; skipped")),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok((profiles, notes))
}

pub fn reprsim(ctx: &Context, analyses: &Analyses) -> Result<serde_json::Value, CliError> {
    let (profiles, notes) = cosine_profiles(analyses)?;
    if profiles.is_empty() {
        return Err(CliError::Simrep(SimrepError::EmptyProfile));
    }
    write_with(&ctx.out("reprsim/cosine.csv"), |b| {
        write_cosine_csv(b, &profiles).map_err(|e| e.to_string())
    })?;
    let mut text = notes.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_bytes(&ctx.out("reprsim/findings.txt"), text.as_bytes())?;
    Ok(json!({ "pairs": profiles.len(), "anchor": ctx.cfg.anchor, "findings": notes.len() }))
}

pub fn eval(ctx: &Context, analyses: &Analyses) -> Result<serde_json::Value, CliError> {
    let scored: Vec<_> = analyses.all().map(|a| a.scored.clone()).collect();
    write_with(&ctx.out("eval/scored.jsonl"), |buf| {
        for s in &scored {
            serde_json::to_writer(&mut *buf, s).map_err(|e| e.to_string())?;
            buf.push(b'\n');
        }
        Ok(())
    })?;
    // Prefer the model named by the traces; fall back to the configured id.
    let model = match analyses.model_ids.iter().collect::<Vec<_>>().as_slice() {
        [only] => only.as_str(),
        _ => ctx.cfg.model.as_str(),
    };
    let table = AccuracyTable::build(model, &scored);
    write_bytes(&ctx.out("eval/accuracy.md"), table.to_markdown().as_bytes())?;
    write_with(&ctx.out("eval/accuracy.csv"), |b| table.write_csv(b).map_err(|e| e.to_string()))?;
    let averages: BTreeMap<String, Option<f64>> = table.rows.iter().map(|r| (r.condition.label(), r.average())).collect();
    Ok(json!({ "samples": scored.len(), "average_accuracy": averages }))
}

pub fn report(ctx: &Context, analyses: &Analyses) -> Result<serde_json::Value, CliError> {
    let aggs = aggregates(ctx, analyses)?;
    let trajs = trajectories(&aggs)?;
    let forward_diffs = diffs(&aggs)?
        .into_iter()
        .find(|(o, _)| *o == Order::Forward)
        .map(|(_, d)| d.into_iter().filter(|(t, _)| is_syntactic(*t)).collect())
        .unwrap_or_default();
    let (cosine, _) = cosine_profiles(analyses)?;
    let inputs = FigureInputs {
        aggregates: aggs,
        trajectories: trajs.into_values().collect(),
        diffs: forward_diffs,
        cosine,
    };
    let dir = ctx.out("figures");
    let files = emit_figures(&inputs, &dir).map_err(CliError::io(&dir))?;
    Ok(json!({ "figures": files.len() }))
}

fn is_syntactic(t: AttentionTarget) -> bool {
    matches!(t, AttentionTarget::Component(c) if ComponentId::SYNTACTIC.contains(&c))
}

pub fn pipeline(ctx: &Context) -> Result<serde_json::Value, CliError> {
    if ctx.cfg.traces.is_none() {
        return Err(missing_traces("`pipeline` needs model traces"));
    }
    let generated = generate(ctx)?;
    let analyses = load_analyses(ctx)?;
    Ok(json!({
        "generate": generated,
        "align": align(ctx, &analyses)?,
        "rcar": rcar(ctx, &analyses)?,
        "svcca": svcca_cmd(ctx, &analyses, None)?,
        "reprsim": reprsim(ctx, &analyses)?,
        "eval": eval(ctx, &analyses)?,
        "report": report(ctx, &analyses)?,
    }))
}

/// Synthetic bundles for the first `per_domain` samples of each domain.
pub fn synth_traces(ctx: &Context, synth: &SynthConfig, per_domain: usize) -> Result<serde_json::Value, CliError> {
    let traces = ctx
        .cfg
        .traces
        .clone()
        .ok_or_else(|| CliError::Config("synth-traces needs --traces to write into".into()))?;
    let samples = dataset(&ctx.cfg)?;
    let mut seen: BTreeMap<(Condition, causelens::chaingen::Domain), usize> = BTreeMap::new();
    let chosen: Vec<&AnnotatedSample> = samples
        .iter()
        .filter(|s| {
            let n = seen.entry((s.condition(), s.domain)).or_default();
            *n += 1;
            *n <= per_domain
        })
        .collect();
    ctx.pool.install(|| {
        chosen.par_iter().try_for_each(|s| {
            let dir = bundle_dir(&traces, s.condition(), &s.key);
            write_trace(&synth_trace(s, synth), &dir).map_err(|source| CliError::Trace { path: dir, source })
        })
    })?;
    Ok(json!({ "bundles": chosen.len(), "traces": traces }))
}

pub fn validate(ctx: &Context, paths: &[PathBuf]) -> Result<(serde_json::Value, usize), CliError> {
    let mut dirs = paths.to_vec();
    if dirs.is_empty() {
        let traces = ctx
            .cfg
            .traces
            .clone()
            .ok_or_else(|| missing_traces("nothing to validate"))?;
        for cond in Condition::ALL {
            dirs.extend(list_bundles(&traces, cond)?);
        }
    }
    let reports: Vec<(PathBuf, ValidationReport)> =
        ctx.pool.install(|| dirs.par_iter().map(|d| (d.clone(), validate_trace(d))).collect());
    let invalid = reports.iter().filter(|(_, r)| !r.is_valid()).count();
    let listing: Vec<serde_json::Value> = reports
        .iter()
        .filter(|(_, r)| !r.is_valid())
        .map(|(p, r)| json!({ "bundle": p, "findings": r.findings }))
        .collect();
    Ok((json!({ "checked": reports.len(), "invalid": invalid, "reports": listing }), invalid))
}
