//! Evaluation report emission: the JSON measurements file and a static HTML
//! page for reviewing flagged chunks (per-chunk metric sparklines plus the
//! log lines of each flagged window).

use std::path::Path;

use crate::data::{MetricFrame, RawLogRecord};
use crate::error::{Error, Result};
use crate::train::EvalReport;

/// One evaluated chunk window.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub window_start: u64,
    pub duration_ms: u64,
    pub predicted: u8,
    pub confidence: f64,
    pub truth: u8,
}

impl ReportRow {
    pub fn kind(&self) -> &'static str {
        match (self.predicted, self.truth) {
            (1, 1) => "TP",
            (1, 0) => "FP",
            (0, 1) => "FN",
            _ => "TN",
        }
    }
}

/// Join predictions and labels on the chunk window. Every prediction must
/// have a label and vice versa.
pub fn join_rows(
    predictions: &[(u64, u8, f64)],
    labels: &[(u64, u8)],
    duration_ms: u64,
) -> Result<Vec<ReportRow>> {
    let label_map: std::collections::BTreeMap<u64, u8> = labels.iter().copied().collect();
    if predictions.len() != label_map.len() {
        return Err(Error::Data(format!(
            "{} predictions vs {} labeled windows",
            predictions.len(),
            label_map.len()
        )));
    }
    let mut rows = Vec::with_capacity(predictions.len());
    for &(ws, pred, conf) in predictions {
        let truth = label_map.get(&ws).copied().ok_or_else(|| {
            Error::Data(format!("prediction window {ws} has no matching label"))
        })?;
        rows.push(ReportRow {
            window_start: ws,
            duration_ms,
            predicted: pred,
            confidence: conf,
            truth,
        });
    }
    rows.sort_by_key(|r| r.window_start);
    Ok(rows)
}

pub fn report_from_rows(rows: &[ReportRow]) -> EvalReport {
    let mut counts = [0u64; 4];
    for r in rows {
        match r.kind() {
            "TP" => counts[0] += 1,
            "FP" => counts[1] += 1,
            "FN" => counts[2] += 1,
            _ => counts[3] += 1,
        }
    }
    EvalReport::from_counts(counts[0], counts[1], counts[2], counts[3])
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Inline SVG sparkline of one metric column over a time range.
fn sparkline(values: &[f64]) -> String {
    const W: f64 = 220.0;
    const H: f64 = 36.0;
    if values.len() < 2 {
        return String::from("<svg class=\"spark\" width=\"220\" height=\"36\"></svg>");
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-9);
    let pts: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = i as f64 / (values.len() - 1) as f64 * W;
            let y = H - 2.0 - (v - lo) / span * (H - 4.0);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    format!(
        "<svg class=\"spark\" width=\"220\" height=\"36\" viewBox=\"0 0 220 36\">\
         <polyline fill=\"none\" stroke=\"#2a6fb0\" stroke-width=\"1.4\" points=\"{}\"/></svg>",
        pts.join(" ")
    )
}

/// Render the static review page. `telemetry` enriches flagged chunks with
/// sparklines and log lines when the source files are available.
pub fn render_html(
    rows: &[ReportRow],
    report: &EvalReport,
    telemetry: Option<(&[RawLogRecord], &MetricFrame)>,
) -> String {
    let mut html = String::with_capacity(16 * 1024);
    html.push_str(
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>Detection report</title>\
         <style>\
         body{font-family:system-ui,sans-serif;margin:2rem;color:#1c2733}\
         table{border-collapse:collapse}td,th{padding:2px 10px;border:1px solid #cfd8e0;font-size:14px}\
         .chunk{border:1px solid #cfd8e0;border-radius:6px;margin:10px 0;padding:10px}\
         .chunk h3{margin:0 0 6px 0;font-size:15px}\
         .metric{display:inline-block;margin:2px 8px 2px 0;font-size:12px;vertical-align:top}\
         .loglines{background:#f6f8fa;padding:6px;font-family:monospace;font-size:12px;\
                   white-space:pre-wrap;max-height:180px;overflow:auto}\
         .kind-FP h3{color:#b03a2a}.kind-FN h3{color:#a06500}.kind-TP h3{color:#20713d}\
         .empty{color:#5a6b7b;font-style:italic}\
         </style></head><body>",
    );
    html.push_str("<h1>Detection report</h1>");
    html.push_str(&format!(
        "<table><tr><th>TP</th><th>FP</th><th>FN</th><th>TN</th><th>Rec</th><th>Pre</th><th>F1</th></tr>\
         <tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4}</td><td>{:.4}</td><td>{:.4}</td></tr></table>",
        report.tp, report.fp, report.fn_, report.tn, report.rec, report.pre, report.f1
    ));

    for (title, kind) in [("False positives", "FP"), ("False negatives", "FN")] {
        let windows: Vec<String> = rows
            .iter()
            .filter(|r| r.kind() == kind)
            .map(|r| r.window_start.to_string())
            .collect();
        html.push_str(&format!(
            "<h2>{title} ({})</h2><p>{}</p>",
            windows.len(),
            if windows.is_empty() { "none".to_string() } else { esc(&windows.join(", ")) }
        ));
    }

    let flagged: Vec<&ReportRow> = rows
        .iter()
        .filter(|r| r.predicted == 1 || r.kind() == "FN")
        .collect();
    html.push_str(&format!("<h2>Flagged chunks ({})</h2>", flagged.len()));
    if flagged.is_empty() {
        html.push_str("<p class=\"empty\">No chunk was flagged and no anomaly was missed.</p>");
    }
    for row in flagged {
        html.push_str(&format!(
            "<div class=\"chunk kind-{}\"><h3>{} — window {} (+{} ms), confidence {:.3}</h3>",
            row.kind(),
            row.kind(),
            row.window_start,
            row.duration_ms,
            row.confidence
        ));
        if let Some((logs, frame)) = telemetry {
            // One window of context on each side.
            let ctx_start = row.window_start.saturating_sub(row.duration_ms);
            let ctx_end = row.window_start + 2 * row.duration_ms;
            let lo = frame.timestamps.partition_point(|&ts| ts < ctx_start);
            let hi = frame.timestamps.partition_point(|&ts| ts < ctx_end);
            if hi > lo {
                for (c, name) in frame.metric_names.iter().enumerate() {
                    let values: Vec<f64> = (lo..hi).map(|r| frame.values[[r, c]]).collect();
                    html.push_str(&format!(
                        "<span class=\"metric\">{}<br>{}</span>",
                        esc(name),
                        sparkline(&values)
                    ));
                }
            }
            let lines: Vec<String> = logs
                .iter()
                .filter(|r| r.ts >= row.window_start && r.ts < row.window_start + row.duration_ms)
                .map(|r| format!("{} {}", r.ts, esc(&r.msg)))
                .collect();
            if lines.is_empty() {
                html.push_str("<div class=\"loglines\">(no log lines in this window)</div>");
            } else {
                html.push_str(&format!("<div class=\"loglines\">{}</div>", lines.join("\n")));
            }
        }
        html.push_str("</div>");
    }
    html.push_str("</body></html>");
    html
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<ReportRow> {
        join_rows(
            &[(0, 1, 0.9), (10_000, 0, 0.8), (20_000, 1, 0.7), (30_000, 0, 0.95)],
            &[(0, 1), (10_000, 1), (20_000, 0), (30_000, 0)],
            10_000,
        )
        .unwrap()
    }

    #[test]
    fn join_checks_window_alignment() {
        let err = join_rows(&[(5, 1, 0.9)], &[(0, 1)], 10_000);
        assert!(err.is_err());
        let err = join_rows(&[(0, 1, 0.9), (10, 0, 0.6)], &[(0, 1)], 10_000);
        assert!(err.is_err());
    }

    #[test]
    fn report_counts_follow_recount() {
        let rows = rows();
        let report = report_from_rows(&rows);
        assert_eq!((report.tp, report.fp, report.fn_, report.tn), (1, 1, 1, 1));
        // The page lists exactly the FP and FN windows.
        let html = render_html(&rows, &report, None);
        assert!(html.contains("False positives (1)"));
        assert!(html.contains("False negatives (1)"));
        assert!(html.contains("20000")); // FP window
        assert!(html.contains("10000")); // FN window
    }

    #[test]
    fn empty_anomaly_page_renders() {
        let rows = join_rows(&[(0, 0, 0.9)], &[(0, 0)], 10_000).unwrap();
        let report = report_from_rows(&rows);
        let html = render_html(&rows, &report, None);
        assert!(html.contains("No chunk was flagged"));
        assert!(html.starts_with("<!DOCTYPE html>"));
        assert!(html.ends_with("</body></html>"));
    }

    #[test]
    fn sparkline_svg_is_wellformed() {
        let svg = sparkline(&[1.0, 5.0, 2.0, 8.0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.ends_with("</svg>"));
    }
}
