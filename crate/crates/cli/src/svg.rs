//! Minimal SVG plots: dual-axis sweep curves, confusion heat maps and ROC
//! curves. Coordinates are printed with fixed precision so output is stable.

use std::fmt::Write;

use blurscan_core::triage::{ConfusionMatrix, RocCurve, SweepCurve};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const ACCURACY_COLOR: &str = "#1f5fa8";
const INDETERMINATE_COLOR: &str = "#d2691e";
const GUIDE_COLOR: &str = "#888888";

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(width: f64, height: f64) -> Self {
        Canvas {
            body: String::new(),
            width,
            height,
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" {extra}/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, extra: &str) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="2" {extra}/>"#,
            coords.join(" ")
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str, extra: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" {extra}>{}</text>"#,
            escape(content)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}" stroke="#444444"/>"##
        );
    }

    fn finish(self) -> String {
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" "#,
                r#"font-family="sans-serif" font-size="12">"#,
                "\n",
                r#"<rect width="{w}" height="{h}" fill="white"/>"#,
                "\n{body}</svg>\n"
            ),
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plot area mapping from unit square to pixels.
fn px(x: f64, y: f64) -> (f64, f64) {
    (LEFT + x * (W - LEFT - RIGHT), H - BOTTOM - y * (H - TOP - BOTTOM))
}

fn unit_axes(c: &mut Canvas, x_label: &str, y_label: &str, y_color: &str) {
    let (x0, y0) = px(0.0, 0.0);
    let (x1, y1) = px(1.0, 1.0);
    c.line(x0, y0, x1, y0, "black", "");
    c.line(x0, y0, x0, y1, "black", "");
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, _) = px(v, 0.0);
        c.line(x, y0, x, y0 + 5.0, "black", "");
        c.text(x, y0 + 18.0, "middle", &format!("{v:.1}"), "");
        let (_, y) = px(0.0, v);
        c.line(x0 - 5.0, y, x0, y, "black", "");
        c.text(x0 - 8.0, y + 4.0, "end", &format!("{v:.1}"), "");
    }
    c.text((x0 + x1) / 2.0, H - 15.0, "middle", x_label, "");
    c.text(
        18.0,
        (y0 + y1) / 2.0,
        "middle",
        y_label,
        &format!(r#"fill="{y_color}" transform="rotate(-90 18 {:.2})""#, (y0 + y1) / 2.0),
    );
}

/// Accuracy (left axis) and indeterminate fraction (right axis) against the
/// confidence threshold, with dashed guides at the target rate and θ*.
pub fn sweep_svg(curve: &SweepCurve, title: &str) -> String {
    let mut c = Canvas::new(W, H);
    c.text(W / 2.0, 25.0, "middle", title, r#"font-size="15""#);
    unit_axes(&mut c, "confidence threshold", "accuracy", ACCURACY_COLOR);

    let (x1, y0) = px(1.0, 0.0);
    let (_, y1) = px(1.0, 1.0);
    c.line(x1, y0, x1, y1, "black", "");
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (_, y) = px(1.0, v);
        c.line(x1, y, x1 + 5.0, y, "black", "");
        c.text(x1 + 8.0, y + 4.0, "start", &format!("{:.0}%", v * 100.0), "");
    }
    let mid = (y0 + y1) / 2.0;
    c.text(
        W - 14.0,
        mid,
        "middle",
        "indeterminate",
        &format!(r#"fill="{INDETERMINATE_COLOR}" transform="rotate(90 {:.2} {mid:.2})""#, W - 14.0),
    );

    // accuracy is undefined where nothing stays determinate: break the line
    let mut run = Vec::new();
    for p in &curve.points {
        match p.accuracy {
            Some(a) => run.push(px(p.threshold, a)),
            None => {
                c.polyline(&run, ACCURACY_COLOR, "");
                run.clear();
            }
        }
    }
    c.polyline(&run, ACCURACY_COLOR, "");
    let ind: Vec<(f64, f64)> = curve.points.iter().map(|p| px(p.threshold, p.indeterminate_fraction)).collect();
    c.polyline(&ind, INDETERMINATE_COLOR, "");

    let dash = r#"stroke-dasharray="6,4""#;
    let (gx0, gy) = px(0.0, curve.target_rate);
    c.line(gx0, gy, x1, gy, GUIDE_COLOR, dash);
    if let Some(t) = curve.theta_star {
        let (gx, _) = px(t, 0.0);
        c.line(gx, y0, gx, y1, GUIDE_COLOR, dash);
        c.text(gx + 4.0, y1 + 12.0, "start", &format!("θ* = {t:.2}"), "");
    }
    c.finish()
}

/// Heat map of row-normalized counts with the raw count in every cell.
pub fn confusion_svg(m: &ConfusionMatrix, title: &str) -> String {
    let k = m.class_count;
    let cell = 300.0 / k as f64;
    let (ox, oy) = (110.0, 70.0);
    let mut c = Canvas::new(ox + 300.0 + 40.0, oy + 300.0 + 70.0);
    c.text(c.width / 2.0, 25.0, "middle", title, r#"font-size="15""#);
    let names = class_names(k);
    for (t, row) in m.counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        for (p, &n) in row.iter().enumerate() {
            let frac = if total > 0 { n as f64 / total as f64 } else { 0.0 };
            let shade = (255.0 - frac * 200.0).round() as u8;
            let fill = format!("#{shade:02x}{shade:02x}ff");
            let (x, y) = (ox + p as f64 * cell, oy + t as f64 * cell);
            c.rect(x, y, cell, cell, &fill);
            c.text(x + cell / 2.0, y + cell / 2.0 + 5.0, "middle", &n.to_string(), r#"font-size="14""#);
        }
        c.text(ox - 8.0, oy + (t as f64 + 0.5) * cell + 4.0, "end", names[t], "");
    }
    for (p, name) in names.iter().enumerate() {
        c.text(ox + (p as f64 + 0.5) * cell, oy + 300.0 + 18.0, "middle", name, "");
    }
    c.text(ox + 150.0, oy + 300.0 + 40.0, "middle", "predicted", "");
    c.text(
        30.0,
        oy + 150.0,
        "middle",
        "truth",
        &format!(r#"transform="rotate(-90 30 {:.2})""#, oy + 150.0),
    );
    c.text(
        ox + 150.0,
        oy - 12.0,
        "middle",
        &format!("accuracy {:.1}%", 100.0 * m.accuracy()),
        "",
    );
    c.finish()
}

pub fn class_names(k: usize) -> &'static [&'static str] {
    if k == 2 {
        &["neg", "pos"]
    } else {
        &["0", "1+", "2+", "3+"]
    }
}

pub fn roc_svg(curve: &RocCurve, title: &str) -> String {
    let mut c = Canvas::new(W, H);
    c.text(W / 2.0, 25.0, "middle", title, r#"font-size="15""#);
    unit_axes(&mut c, "false positive rate", "true positive rate", "black");
    let (x0, y0) = px(0.0, 0.0);
    let (x1, y1) = px(1.0, 1.0);
    c.line(x0, y0, x1, y1, GUIDE_COLOR, r#"stroke-dasharray="6,4""#);
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|&(f, t)| px(f, t)).collect();
    c.polyline(&pts, ACCURACY_COLOR, "");
    let (tx, ty) = px(0.95, 0.05);
    c.text(tx, ty, "end", &format!("AUC = {:.3}", curve.auc), r#"font-size="14""#);
    c.finish()
}
