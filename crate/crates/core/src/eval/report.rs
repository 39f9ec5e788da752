use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClusterConfusion, ConfusionMatrix, SimilarityReport, TextConfusion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// What the text table measures.
    pub text_scope: String,
    /// How the "Misc" row of the cluster table is oriented.
    pub misc_orientation: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            text_scope: "classification only; text detection is not evaluated".into(),
            misc_orientation: "Misc = instances predicted as noise, counted per reference identity (row shown under the matched column of that identity)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub text: Option<TextConfusion>,
    pub clusters: Option<ClusterConfusion>,
    pub association_accuracy: Option<f64>,
    pub descriptions: Option<SimilarityReport>,
}

fn table(out: &mut String, m: &ConfusionMatrix, extra: Option<(&str, Vec<String>)>) {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Ref./Pred.".to_string()).chain(m.columns.iter().cloned()).collect()];
    for (name, counts) in m.rows.iter().zip(&m.counts) {
        rows.push(std::iter::once(name.clone()).chain(counts.iter().map(u64::to_string)).collect());
    }
    if let Some((name, cells)) = extra {
        rows.push(std::iter::once(name.to_string()).chain(cells).collect());
    }
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0))
        .collect();
    for r in rows {
        let mut line = String::new();
        for (j, cell) in r.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[j]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{:.2}%", x * 100.0))
}

/// Plain-text tables in the "Ref./Pred." layout.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    if let Some(t) = &report.text {
        let _ = writeln!(out, "Text type confusion ({})", report.metadata.text_scope);
        table(&mut out, &t.matrix, None);
        out.push('\n');
        let _ = writeln!(out, "{:<10}  {:>9}  {:>9}", "Class", "Precision", "Recall");
        for (i, name) in t.matrix.rows.iter().enumerate() {
            let _ = writeln!(out, "{:<10}  {:>9}  {:>9}", name, pct(t.precision[i]), pct(t.recall[i]));
        }
        let _ = writeln!(out, "{:<10}  {:>9}  {:>9}", "Macro", pct(t.macro_precision), pct(t.macro_recall));
        out.push('\n');
    }
    if let Some(c) = &report.clusters {
        out.push_str("Character clustering confusion\n");
        let misc: Vec<String> = (0..c.matrix.columns.len())
            .map(|j| c.noise.get(j).map_or(String::new(), u64::to_string))
            .collect();
        table(&mut out, &c.matrix, Some(("Misc", misc)));
        let total = c.matrix.total() + c.noise.iter().sum::<u64>();
        let _ = writeln!(out, "Matched accuracy: {}/{} = {}", c.diagonal_sum(), total, pct(c.accuracy));
        let _ = writeln!(out, "Note: {}", report.metadata.misc_orientation);
        out.push('\n');
    }
    if let Some(a) = report.association_accuracy {
        let _ = writeln!(out, "Balloon-character association accuracy: {}\n", pct(Some(a)));
    }
    if let Some(d) = &report.descriptions {
        out.push_str("Description similarity\n");
        for s in &d.scores {
            let _ = writeln!(out, "{:<24}  {:.4}", s.panel, s.score);
        }
        let _ = writeln!(out, "Mean: {}", d.mean.map_or("n/a".into(), |m| format!("{m:.4}")));
    }
    out
}
