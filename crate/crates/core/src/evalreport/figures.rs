// SPDX-License-Identifier: MIT OR Apache-2.0

//! Static SVG charts with CSV sidecars.
//!
//! Output depends only on the inputs: coordinates are printed with fixed
//! precision, colors come from fixed tables and nothing time-dependent is
//! written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::chaingen::CausalRole;
use crate::metrics::{write_trajectory_csv, AttentionTarget, ConditionAggregate};
use crate::simrep::{write_cosine_csv, CosineProfile, TrajectoryMatrix};

#[derive(Debug, Clone, Default)]
pub struct FigureInputs {
    /// Mean trajectories; one line chart per target, one line per condition.
    pub aggregates: Vec<ConditionAggregate>,
    /// One heatmap per condition.
    pub trajectories: Vec<TrajectoryMatrix>,
    /// Chinese-minus-English layer-summed differences.
    pub diffs: Vec<(AttentionTarget, f64)>,
    pub cosine: Vec<CosineProfile>,
}

const SERIES_COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];
const POSITIVE: &str = "#c0392b";
const NEGATIVE: &str = "#2166ac";

/// Cool-to-warm stops; higher values are warmer.
const HEAT_STOPS: [(u8, u8, u8); 5] = [
    (49, 54, 149),
    (116, 173, 209),
    (255, 255, 191),
    (244, 109, 67),
    (165, 0, 38),
];

/// Color for `t` in `[0, 1]` on the fixed heat scale.
pub fn colormap(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (HEAT_STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(HEAT_STOPS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (HEAT_STOPS[i], HEAT_STOPS[i + 1]);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(content)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="1"/>"#
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str, title: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect class="{class}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"><title>{}</title></rect>"#,
            escape(title)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, label: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline class="series" fill="none" stroke="{stroke}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(label)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart: each series is a label and its y values at x = 0, 1, ...
fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let (lo, hi) = bounds(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let lo = lo.min(0.0);
    let x_of = |i: usize| left + pw * i as f64 / (n - 1) as f64;
    let y_of = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut svg = Svg::new(w, h);
    svg.text(w / 2.0, 24.0, "middle", 16, title);
    svg.line(left, top + ph, left + pw, top + ph, "#333333");
    svg.line(left, top, left, top + ph, "#333333");
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        svg.line(left - 4.0, y, left, y, "#333333");
        svg.text(left - 8.0, y + 4.0, "end", 11, &format!("{v:.3}"));
    }
    let step = n.div_ceil(12).max(1);
    for i in (0..n).step_by(step) {
        svg.text(x_of(i), top + ph + 16.0, "middle", 11, &i.to_string());
    }
    svg.text(left + pw / 2.0, h - 12.0, "middle", 12, x_label);
    svg.text(16.0, top + ph / 2.0, "middle", 12, y_label);
    for (idx, (label, values)) in series.iter().enumerate() {
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let pts: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, v)| (x_of(i), y_of(*v))).collect();
        svg.polyline(&pts, color, label);
        let ly = top + 10.0 + 20.0 * idx as f64;
        svg.line(left + pw + 16.0, ly, left + pw + 40.0, ly, color);
        svg.text(left + pw + 46.0, ly + 4.0, "start", 12, label);
    }
    svg.finish()
}

fn heatmap(traj: &TrajectoryMatrix) -> String {
    let (rows, cols) = traj.matrix.dim();
    let (cell_w, cell_h) = (90.0, 16.0);
    let (left, top) = (60.0, 60.0);
    let legend_w = 150.0;
    let w = left + cell_w * cols as f64 + legend_w;
    let h = top + cell_h * rows as f64 + 30.0;
    let (lo, hi) = bounds(traj.matrix.iter().copied());
    let mut svg = Svg::new(w, h);
    svg.text(w / 2.0, 24.0, "middle", 16, &format!("Causal-role RCAR, {}", traj.condition));
    for (c, role) in CausalRole::ALL.iter().enumerate().take(cols) {
        svg.text(left + cell_w * (c as f64 + 0.5), top - 8.0, "middle", 12, role.as_str());
    }
    for r in 0..rows {
        let y = top + cell_h * r as f64;
        svg.text(left - 8.0, y + cell_h - 4.0, "end", 10, &r.to_string());
        for c in 0..cols {
            let v = traj.matrix[[r, c]];
            let t = (v - lo) / (hi - lo);
            let role = CausalRole::ALL.get(c).map_or("?", |r| r.as_str());
            svg.rect("cell", left + cell_w * c as f64, y, cell_w, cell_h, &colormap(t), &format!("layer {r}, {role}: {v:.6}"));
        }
    }
    let lx = left + cell_w * cols as f64 + 24.0;
    let steps = 20;
    let bar_h = (cell_h * rows as f64).max(100.0) / steps as f64;
    for k in 0..steps {
        let t = 1.0 - k as f64 / (steps - 1) as f64;
        svg.rect("legend", lx, top + bar_h * k as f64, 16.0, bar_h, &colormap(t), &format!("{:.6}", lo + t * (hi - lo)));
    }
    let bounds_lo = traj.matrix.iter().copied().fold(f64::INFINITY, f64::min);
    let bounds_hi = traj.matrix.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    svg.text(lx + 22.0, top + 10.0, "start", 11, &format!("max {bounds_hi:.4}"));
    svg.text(lx + 22.0, top + bar_h * steps as f64, "start", 11, &format!("min {bounds_lo:.4}"));
    svg.finish()
}

fn diff_chart(diffs: &[(AttentionTarget, f64)]) -> String {
    let (w, h) = (760.0, 420.0);
    let (left, top, bottom) = (70.0, 40.0, 110.0);
    let (pw, ph) = (w - left - 20.0, h - top - bottom);
    let max_abs = diffs.iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
    let max_abs = if max_abs > 0.0 { max_abs } else { 1.0 };
    let zero = top + ph / 2.0;
    let slot = pw / diffs.len().max(1) as f64;
    let mut svg = Svg::new(w, h);
    svg.text(w / 2.0, 24.0, "middle", 16, "Layer-summed RCAR difference (zh - en)");
    svg.line(left, zero, left + pw, zero, "#333333");
    svg.text(left - 8.0, top + 4.0, "end", 11, &format!("{max_abs:.3}"));
    svg.text(left - 8.0, zero + 4.0, "end", 11, "0");
    svg.text(left - 8.0, top + ph + 4.0, "end", 11, &format!("{:.3}", -max_abs));
    for (i, (target, v)) in diffs.iter().enumerate() {
        let bar_h = ph / 2.0 * v.abs() / max_abs;
        let x = left + slot * i as f64 + slot * 0.15;
        let (y, fill) = if *v >= 0.0 { (zero - bar_h, POSITIVE) } else { (zero, NEGATIVE) };
        svg.rect("bar", x, y, slot * 0.7, bar_h, fill, &format!("{target}: {v:.6}"));
        let cx = x + slot * 0.35;
        let _ = writeln!(
            svg.body,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="end" font-size="11" transform="rotate(-45 {cx:.2} {:.2})">{}</text>"#,
            top + ph + 14.0,
            top + ph + 14.0,
            escape(&target.to_string())
        );
    }
    svg.finish()
}

fn write_file(dir: &Path, name: &str, contents: &[u8], out: &mut Vec<PathBuf>) -> io::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    out.push(path);
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io::Error::other)?;
    Ok(buf)
}

/// Write every figure for which inputs are present. Returns written paths,
/// sorted.
pub fn emit_figures(inputs: &FigureInputs, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let nothing = inputs.aggregates.is_empty()
        && inputs.trajectories.is_empty()
        && inputs.diffs.is_empty()
        && inputs.cosine.is_empty();
    if nothing {
        return Ok(written);
    }
    fs::create_dir_all(out_dir)?;

    let mut by_target: BTreeMap<AttentionTarget, Vec<&ConditionAggregate>> = BTreeMap::new();
    for a in &inputs.aggregates {
        by_target.entry(a.target).or_default().push(a);
    }
    for (target, mut aggs) in by_target {
        aggs.sort_by_key(|a| a.condition);
        let series: Vec<(String, Vec<f64>)> = aggs.iter().map(|a| (a.condition.label(), a.mean.clone())).collect();
        let svg = line_chart(&format!("RCAR by layer: {target}"), "layer", "RCAR", &series);
        write_file(out_dir, &format!("rcar_{target}.svg"), svg.as_bytes(), &mut written)?;
        let owned: Vec<ConditionAggregate> = aggs.into_iter().cloned().collect();
        let csv = csv_bytes(|b| write_trajectory_csv(b, &owned))?;
        write_file(out_dir, &format!("rcar_{target}.csv"), &csv, &mut written)?;
    }

    let mut trajectories: Vec<&TrajectoryMatrix> = inputs.trajectories.iter().collect();
    trajectories.sort_by_key(|t| t.condition);
    for traj in trajectories {
        let label = traj.condition.label();
        write_file(out_dir, &format!("heatmap_{label}.svg"), heatmap(traj).as_bytes(), &mut written)?;
        let csv = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["layer", "cause", "intermediate", "final"])?;
            for (l, row) in traj.matrix.rows().into_iter().enumerate() {
                let mut rec = vec![l.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_file(out_dir, &format!("heatmap_{label}.csv"), &csv, &mut written)?;
    }

    if !inputs.diffs.is_empty() {
        write_file(out_dir, "component_diff.svg", diff_chart(&inputs.diffs).as_bytes(), &mut written)?;
        let csv = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["component_id", "diff_zh_minus_en"])?;
            for (t, v) in &inputs.diffs {
                w.write_record([t.to_string(), v.to_string()])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_file(out_dir, "component_diff.csv", &csv, &mut written)?;
    }

    if !inputs.cosine.is_empty() {
        let mut profiles = inputs.cosine.clone();
        profiles.sort_by_key(|p| p.pair);
        let series: Vec<(String, Vec<f64>)> = profiles.iter().map(|p| (p.pair.to_string(), p.mean.clone())).collect();
        let svg = line_chart("Layerwise cosine similarity", "layer (0 = embeddings)", "cosine", &series);
        write_file(out_dir, "cosine.svg", svg.as_bytes(), &mut written)?;
        let csv = csv_bytes(|b| write_cosine_csv(b, &profiles))?;
        write_file(out_dir, "cosine.csv", &csv, &mut written)?;
    }
    written.sort();
    Ok(written)
}

/// Number of `class="cell"` rectangles in an SVG document.
pub fn count_cells(svg: &str) -> usize {
    svg.matches(r#"class="cell""#).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::{Condition, Language, Order};
    use ndarray::Array2;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), "#313695");
        assert_eq!(colormap(1.0), "#a50026");
        assert_eq!(colormap(f64::NAN), "#313695");
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn empty_inputs_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("figs");
        assert!(emit_figures(&FigureInputs::default(), &target).unwrap().is_empty());
        assert!(!target.exists());
    }

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let traj = TrajectoryMatrix {
            condition: Condition::new(Language::Zh, Order::Reversed),
            matrix: Array2::from_shape_fn((24, 3), |(r, c)| (r * 3 + c) as f64),
        };
        let svg = heatmap(&traj);
        assert_eq!(count_cells(&svg), 72);
        assert!(svg.contains("max 71.0000"));
        assert!(svg.contains("min 0.0000"));
    }
}
