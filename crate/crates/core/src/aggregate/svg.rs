//! Self-contained SVG 1.1 charts: no scripts, fonts or external references.

use super::{Histogram, Report, Summary};
use crate::ladder::LadderResult;
use crate::lens::ProbeRanking;

const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut c = Canvas { body: String::new() };
        c.text(W / 2.0, 22.0, "middle", 15.0, title);
        c
    }

    fn plot_w() -> f64 {
        W - LEFT - RIGHT
    }

    fn plot_h() -> f64 {
        H - TOP - BOTTOM
    }

    /// y pixel for a value in [0, 1].
    fn y(v: f64) -> f64 {
        TOP + (1.0 - v.clamp(0.0, 1.0)) * Self::plot_h()
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, s: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"{size}\">{}</text>\n",
            esc(s)
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"1\"/>\n"
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>\n",
            w.max(0.0),
            h.max(0.0)
        ));
    }

    fn unit_axis(&mut self, label: &str) {
        self.line(LEFT, TOP, LEFT, TOP + Self::plot_h(), "#000");
        self.line(
            LEFT,
            TOP + Self::plot_h(),
            LEFT + Self::plot_w(),
            TOP + Self::plot_h(),
            "#000",
        );
        for i in 0..=4 {
            let v = i as f64 / 4.0;
            self.line(LEFT - 4.0, Self::y(v), LEFT, Self::y(v), "#000");
            self.text(LEFT - 8.0, Self::y(v) + 4.0, "end", 11.0, &format!("{v:.2}"));
        }
        self.text(14.0, TOP - 12.0, "start", 11.0, label);
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"#fff\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn bars(c: &mut Canvas, labels: &[String], values: &[f64], max: f64) {
    let n = labels.len().max(1) as f64;
    let slot = Canvas::plot_w() / n;
    for (i, (label, v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + slot * i as f64;
        let frac = if max > 0.0 { v / max } else { 0.0 };
        let y = Canvas::y(frac);
        c.rect(x + slot * 0.1, y, slot * 0.8, TOP + Canvas::plot_h() - y, PALETTE[0]);
        c.text(x + slot / 2.0, H - BOTTOM + 16.0, "middle", 10.0, label);
    }
}

fn histogram_chart(title: &str, h: &Histogram) -> String {
    let mut c = Canvas::new(title);
    let max = h.counts.iter().copied().max().unwrap_or(0) as f64;
    c.unit_axis("share of tallest bin");
    let labels: Vec<String> = h.edges.windows(2).map(|w| format!("{:.2}", w[0])).collect();
    let values: Vec<f64> = h.counts.iter().map(|&n| n as f64).collect();
    bars(&mut c, &labels, &values, max);
    c.text(
        W / 2.0,
        H - 12.0,
        "middle",
        11.0,
        &format!("confidence bins (n = {})", h.total()),
    );
    c.finish()
}

fn summary_chart(s: &Summary) -> String {
    let mut c = Canvas::new(&format!("Confidence by model: {}", s.question_id));
    c.unit_axis("confidence");
    let views: Vec<(&String, &super::View)> = s.per_model.iter().collect();
    let slot = Canvas::plot_w() / views.len().max(1) as f64;
    for (i, (model, v)) in views.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        if let Some(st) = &v.stats {
            c.line(cx, Canvas::y(st.min), cx, Canvas::y(st.max), "#000");
            let top = Canvas::y(st.q3);
            c.rect(
                cx - slot * 0.2,
                top,
                slot * 0.4,
                Canvas::y(st.q1) - top,
                PALETTE[i % PALETTE.len()],
            );
            c.line(
                cx - slot * 0.2,
                Canvas::y(st.median),
                cx + slot * 0.2,
                Canvas::y(st.median),
                "#000",
            );
        }
        c.text(cx, H - BOTTOM + 16.0, "middle", 10.0, &format!("{model} (n = {})", v.n));
    }
    c.finish()
}

fn ladder_chart(l: &LadderResult) -> String {
    let mut c = Canvas::new(&format!("Evidence ladder: {}", l.proposition.label));
    c.unit_axis("confidence");
    let rungs = l.trajectories.first().map_or(1, |t| t.points.len()).max(1);
    let step = if rungs > 1 {
        Canvas::plot_w() / (rungs - 1) as f64
    } else {
        0.0
    };
    let x = |r: usize| {
        LEFT + if rungs > 1 {
            step * r as f64
        } else {
            Canvas::plot_w() / 2.0
        }
    };
    for r in 0..rungs {
        let label = if r == 0 {
            "baseline".to_string()
        } else {
            format!("+ {}", l.evidence_ids.get(r - 1).map_or("?", |s| s))
        };
        c.text(x(r), H - BOTTOM + 16.0, "middle", 10.0, &label);
    }
    for (i, t) in l.trajectories.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = t
            .points
            .iter()
            .filter_map(|p| p.confidence().map(|v| (x(p.rung), Canvas::y(v))))
            .collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            c.body.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{}/>\n",
                path.join(" "),
                if t.valid { "" } else { " stroke-dasharray=\"4 3\"" }
            ));
        }
        for (a, b) in &pts {
            c.body.push_str(&format!(
                "<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"4\" fill=\"{color}\"/>\n"
            ));
        }
        for (d, (a, b)) in t.deltas.iter().zip(pts.iter().skip(1)) {
            let sign = match d.direction() {
                Some(std::cmp::Ordering::Greater) => "▲",
                Some(std::cmp::Ordering::Less) => "▼",
                Some(std::cmp::Ordering::Equal) => "=",
                None => "",
            };
            c.text(*a + 8.0, *b - 6.0, "start", 12.0, sign);
        }
        c.text(W - RIGHT, TOP + 14.0 * (i as f64 + 1.0), "end", 11.0, &t.model_id);
        c.rect(W - RIGHT + 2.0, TOP + 14.0 * (i as f64 + 1.0) - 8.0, 8.0, 8.0, color);
    }
    c.text(
        W / 2.0,
        H - 12.0,
        "middle",
        10.0,
        "Direction of change is the reliable signal; magnitudes are indicative only.",
    );
    c.finish()
}

fn ranking_chart(r: &ProbeRanking) -> String {
    let mut c = Canvas::new("Normalized distance from clause (mean across models)");
    c.unit_axis("normalized distance");
    let labels: Vec<String> = r.entries.iter().map(|e| format!("{}. {}", e.rank, e.probe)).collect();
    let values: Vec<f64> = r.entries.iter().map(|e| e.mean).collect();
    bars(&mut c, &labels, &values, 1.0);
    c.finish()
}

pub fn render(report: &Report) -> String {
    match report {
        Report::Sweep(s) => histogram_chart("Distribution of parsed confidences", &s.histogram),
        Report::Summary(s) => summary_chart(s),
        Report::Ladder(l) => ladder_chart(l),
        Report::Ranking(r) => ranking_chart(r),
        Report::Elicit(e) => {
            let mut c = Canvas::new("Pooled mean confidence per question");
            c.unit_axis("confidence");
            let means = e.means();
            let labels: Vec<String> = means.iter().map(|(q, _)| q.clone()).collect();
            let values: Vec<f64> = means.iter().map(|(_, m)| m.unwrap_or(0.0)).collect();
            bars(&mut c, &labels, &values, 1.0);
            c.finish()
        }
    }
}
