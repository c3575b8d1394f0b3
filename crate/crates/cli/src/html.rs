//! A single self-contained HTML page for the misclassification report.

use base64::Engine;
use serde_json::Value;

use ucbs_core::report::MisclassificationReport;

pub struct Card<'a> {
    pub report: &'a MisclassificationReport,
    pub png: Vec<u8>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render(target: &str, summary: &Value, cards: &[Card]) -> String {
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut body = String::new();
    for c in cards {
        let r = c.report;
        let top: Vec<String> = r.top.iter().map(|s| format!("#{} ({:.3})", s.segment_index, s.score)).collect();
        let dist = r
            .mean_nearest_distance()
            .map(|d| format!("{d:.3}"))
            .unwrap_or_else(|| "n/a".into());
        body.push_str(&format!(
            "<div class=\"card\"><img src=\"data:image/png;base64,{}\" alt=\"{}\"><p><b>{}</b> {} (true {})</p>\
             <p>top concepts: {}</p><p>mean distance to global concepts: {}</p></div>\n",
            b64.encode(&c.png),
            escape(&r.image_id),
            r.outcome.label(),
            escape(&r.image_id),
            escape(&r.class_label),
            escape(&top.join(", ")),
            dist,
        ));
    }
    if cards.is_empty() {
        body.push_str("<p>No misclassified images.</p>\n");
    }
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Misclassifications: {t}</title>\n\
         <style>body{{font-family:sans-serif}}.card{{display:inline-block;margin:8px;vertical-align:top;width:260px}}\
         .card img{{width:256px;image-rendering:pixelated}}pre{{background:#f4f4f4;padding:8px}}</style></head>\n\
         <body><h1>Misclassifications for {t}</h1>\n<pre>{s}</pre>\n{body}</body></html>\n",
        t = escape(target),
        s = escape(&serde_json::to_string_pretty(summary).unwrap_or_default()),
    )
}
