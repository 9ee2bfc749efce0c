//! SVG rendering of a functional boxplot.
//!
//! Output is a pure function of its inputs: fixed precision, fixed element
//! order, no timestamps.

use std::fmt::Write;

use fmahal::outliers::BoxplotSummary;
use fmahal::FunctionalSample;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (t - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn path(&self, points: &[f64], values: &[f64]) -> String {
        let mut d = String::new();
        for (i, (t, v)) in points.iter().zip(values).enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2},{:.2}", self.x(*t), self.y(*v)).unwrap();
        }
        d
    }
}

/// Light blue for shallow curves, darker for deep ones.
fn depth_color(depth: f64, lo: f64, hi: f64) -> String {
    let s = if hi > lo {
        (depth - lo) / (hi - lo)
    } else {
        1.0
    };
    let mix = |a: f64, b: f64| (a + (b - a) * s).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(200.0, 70.0),
        mix(215.0, 110.0),
        mix(235.0, 170.0)
    )
}

/// `points` are the x coordinates to draw (usually the grid as read).
pub fn render_boxplot(
    points: &[f64],
    sample: &FunctionalSample,
    summary: &BoxplotSummary,
) -> String {
    let curves = sample.curves();
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in curves.iter().flat_map(|c| c.iter()) {
        y0 = y0.min(*v);
        y1 = y1.max(*v);
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let frame = Frame {
        x0: points[0],
        x1: points[points.len() - 1],
        y0: y0 - pad,
        y1: y1 + pad,
    };
    let (dlo, dhi) = summary
        .depths
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(*d), hi.max(*d))
        });

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    s.push_str(
        "<style>path{fill:none}.curve{stroke-width:0.8;stroke-opacity:0.6}\
         .band{fill:#c9d6ea;fill-opacity:0.7;stroke:none}\
         .whisker{stroke:#1f3f7f;stroke-width:1.2;stroke-dasharray:4 3}\
         .median{stroke:#000000;stroke-width:2.4}\
         .outlier{stroke:#d62728;stroke-width:1.6}\
         .axis{stroke:#444444;stroke-width:1}text{font:11px sans-serif;fill:#444444}</style>\n",
    );
    writeln!(
        s,
        r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    )
    .unwrap();

    // central band as a closed polygon: upper edge forward, lower edge back
    let mut band = frame.path(points, &summary.central_upper);
    for (t, v) in points.iter().zip(summary.central_lower.iter()).rev() {
        write!(band, "L{:.2},{:.2}", frame.x(*t), frame.y(*v)).unwrap();
    }
    writeln!(s, r#"<path class="band" d="{band}Z"/>"#).unwrap();

    let outlier = |i: usize| summary.outlier_indices.contains(&i);
    for (i, c) in curves.iter().enumerate() {
        if i == summary.median_index || outlier(i) {
            continue;
        }
        let color = depth_color(summary.depths[i], dlo, dhi);
        writeln!(
            s,
            r#"<path class="curve" stroke="{color}" d="{}"/>"#,
            frame.path(points, c)
        )
        .unwrap();
    }
    for w in [&summary.whisker_lower, &summary.whisker_upper] {
        writeln!(
            s,
            r#"<path class="whisker" d="{}"/>"#,
            frame.path(points, w)
        )
        .unwrap();
    }
    for &i in &summary.outlier_indices {
        writeln!(
            s,
            r#"<path class="outlier" data-index="{i}" d="{}"/>"#,
            frame.path(points, &curves[i])
        )
        .unwrap();
    }
    let median = &curves[summary.median_index];
    writeln!(
        s,
        r#"<path class="median" d="{}"/>"#,
        frame.path(points, median)
    )
    .unwrap();

    let (left, right) = (MARGIN, WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);
    writeln!(
        s,
        r#"<path class="axis" d="M{left},{top}L{left},{bottom}L{right},{bottom}"/>"#
    )
    .unwrap();
    let labels = [
        (left, bottom + 16.0, "middle", frame.x0),
        (right, bottom + 16.0, "middle", frame.x1),
        (left - 6.0, bottom, "end", frame.y0),
        (left - 6.0, top + 4.0, "end", frame.y1),
    ];
    for (x, y, anchor, v) in labels {
        writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
