//! Reliability diagrams as standalone SVG.
//!
//! The plot area is a group flipped so that data coordinates map to user
//! units as `(x, y) = (v * PLOT, w * PLOT)` with the origin bottom-left. A
//! perfectly calibrated bin therefore has its marker at `cx == cy` and its
//! bar top at the same height as its center. Output depends only on the
//! diagram; all numbers are printed with three decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::io::report::write_text;
use crate::metrics::{ece, mce, ReliabilityDiagram};
use crate::prediction::ConfidenceMode;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PLOT: f64 = 360.0;
const BAR_FILL: f64 = 0.8;

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

pub fn reliability_svg(diagram: &ReliabilityDiagram, title: &str) -> String {
    let mut s = String::new();
    let bins = diagram.bin_count().max(1) as f64;
    let bar_width = PLOT / bins * BAR_FILL;
    let y_label = match diagram.mode {
        ConfidenceMode::ChosenClass(_) => "Fraction of positives",
        ConfidenceMode::TopLabel => "Accuracy",
    };
    let x_label = match diagram.mode {
        ConfidenceMode::ChosenClass(c) => format!("Mean predicted probability (class {c})"),
        ConfidenceMode::TopLabel => "Mean top-label confidence".to_string(),
    };

    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}" font-family="sans-serif" font-size="12">"#,
        w = SIZE
    )
    .unwrap();
    writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text class="title" x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#,
        num(SIZE / 2.0),
        escape(title)
    )
    .unwrap();

    writeln!(
        s,
        r#"<g class="plot" transform="translate({MARGIN},{}) scale(1,-1)">"#,
        MARGIN + PLOT
    )
    .unwrap();
    writeln!(
        s,
        r##"<rect class="frame" x="0" y="0" width="{p}" height="{p}" fill="none" stroke="#444"/>"##,
        p = num(PLOT)
    )
    .unwrap();
    for tick in 1..5 {
        let v = num(PLOT * tick as f64 / 5.0);
        writeln!(
            s,
            r##"<line class="grid" x1="{v}" y1="0" x2="{v}" y2="{p}" stroke="#ddd"/><line class="grid" x1="0" y1="{v}" x2="{p}" y2="{v}" stroke="#ddd"/>"##,
            p = num(PLOT)
        )
        .unwrap();
    }
    for (i, bin) in diagram.bins.iter().enumerate() {
        let (Some(conf), Some(freq)) = (bin.mean_confidence, bin.frequency) else {
            continue;
        };
        let cx = conf * PLOT;
        let top = freq * PLOT;
        writeln!(
            s,
            r##"<rect class="bar" data-bin="{i}" data-count="{}" x="{}" y="0" width="{}" height="{}" fill="#4878cf" fill-opacity="0.8"/>"##,
            bin.count,
            num(cx - bar_width / 2.0),
            num(bar_width),
            num(top)
        )
        .unwrap();
        writeln!(
            s,
            r##"<rect class="gap" data-bin="{i}" x="{}" y="{}" width="{}" height="{}" fill="#d65f5f" fill-opacity="0.35"/>"##,
            num(cx - bar_width / 2.0),
            num(top.min(cx)),
            num(bar_width),
            num((top - cx).abs())
        )
        .unwrap();
        writeln!(
            s,
            r#"<circle class="marker" data-bin="{i}" cx="{}" cy="{}" r="3" fill="black"/>"#,
            num(cx),
            num(top)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line class="diagonal" x1="0" y1="0" x2="{p}" y2="{p}" stroke="#888" stroke-dasharray="6,4"/>"##,
        p = num(PLOT)
    )
    .unwrap();
    s.push_str("</g>\n");

    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        writeln!(
            s,
            r#"<text class="tick" x="{}" y="{}" text-anchor="middle">{v:.1}</text>"#,
            num(MARGIN + v * PLOT),
            num(MARGIN + PLOT + 18.0)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text class="tick" x="{}" y="{}" text-anchor="end">{v:.1}</text>"#,
            num(MARGIN - 6.0),
            num(MARGIN + PLOT - v * PLOT + 4.0)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text class="axis" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(MARGIN + PLOT / 2.0),
        num(SIZE - 15.0),
        escape(&x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text class="axis" x="15" y="{y}" text-anchor="middle" transform="rotate(-90 15 {y})">{}</text>"#,
        y_label,
        y = num(MARGIN + PLOT / 2.0)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text class="ece" x="{}" y="{}">ECE = {:.4}  MCE = {:.4}  n = {}</text>"#,
        num(MARGIN + 8.0),
        num(MARGIN + 18.0),
        ece(diagram),
        mce(diagram),
        diagram.total_samples
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn render_reliability_svg(diagram: &ReliabilityDiagram, title: &str, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &reliability_svg(diagram, title))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
