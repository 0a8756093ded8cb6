//! A small SVG writer for line and attribution scatter plots. Output depends
//! only on the input data, so identical runs produce identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn thick and dark; other series are thin and light.
    pub emphasis: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (frame.px(frame.x.0), frame.px(frame.x.1));
    let (y0, y1) = (frame.py(frame.y.0), frame.py(frame.y.1));
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for (v, anchor, x) in [(frame.x.0, "start", x0), (frame.x.1, "end", x1)] {
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"{anchor}\">{v:.3}</text>",
            y0 + 16.0
        );
    }
    for (v, y) in [(frame.y.0, y0), (frame.y.1, y1)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.3}</text>",
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: range(all().map(|p| p.0)),
        y: range(all().map(|p| p.1)),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, x_label, y_label);
    // light series first so emphasized ones stay on top
    for s in series.iter().filter(|s| !s.emphasis).chain(series.iter().filter(|s| s.emphasis)) {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let (stroke, width) = if s.emphasis { ("#1f3a93", 2.5) } else { ("#9bb0d6", 1.0) };
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\" points=\"{}\"><title>{}</title></polyline>",
            pts.join(" "),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub struct ScatterRow {
    pub label: String,
    /// `(attribution, feature value scaled to [0, 1])`.
    pub points: Vec<(f64, f64)>,
}

/// One horizontal band per row, points placed by attribution and colored
/// from blue (low feature value) to red (high).
pub fn summary_plot(title: &str, rows: &[ScatterRow]) -> String {
    let frame = Frame {
        x: range(rows.iter().flat_map(|r| r.points.iter().map(|p| p.0))),
        y: (0.0, rows.len().max(1) as f64),
    };
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &frame, "attribution (log-odds)", "");
    let zero = frame.px(0.0);
    if zero >= LEFT && zero <= WIDTH - RIGHT {
        let _ = writeln!(
            out,
            "<line x1=\"{zero:.2}\" y1=\"{TOP:.2}\" x2=\"{zero:.2}\" y2=\"{:.2}\" stroke=\"#888\"/>",
            HEIGHT - BOTTOM
        );
    }
    for (band, row) in rows.iter().enumerate() {
        let center = rows.len() as f64 - band as f64 - 0.5;
        let y = frame.py(center);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            LEFT - 6.0,
            y + 4.0,
            escape(&row.label)
        );
        for (i, &(phi, v)) in row.points.iter().enumerate() {
            // deterministic vertical jitter inside the band
            let jitter = ((i * 37) % 11) as f64 / 10.0 - 0.5;
            let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.5 };
            let red = (40.0 + 200.0 * v).round() as u8;
            let blue = (240.0 - 200.0 * v).round() as u8;
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"rgb({red},60,{blue})\"/>",
                frame.px(phi),
                frame.py(center + 0.35 * jitter)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let series = vec![
            Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)], emphasis: true },
            Series { label: "b<c".into(), points: vec![(0.0, 0.0), (1.0, 0.5)], emphasis: false },
        ];
        let svg = line_plot("t", "x", "y", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert_eq!(svg, line_plot("t", "x", "y", &series));
    }

    #[test]
    fn degenerate_ranges_are_widened() {
        let svg = line_plot("t", "x", "y", &[Series { label: "c".into(), points: vec![(1.0, 3.0)], emphasis: true }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn summary_plot_draws_every_point() {
        let rows = vec![
            ScatterRow { label: "f1".into(), points: vec![(0.5, 1.0), (-0.2, 0.0)] },
            ScatterRow { label: "f2".into(), points: vec![(0.1, 0.5)] },
        ];
        let svg = summary_plot("s", &rows);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains(">f1</text>"));
    }
}
