//! Static SVG rendering for the report command. Everything is emitted by
//! hand: a polyline per panel, translucent rectangles over labeled windows,
//! and a dashed horizontal rule for the detection threshold.

const WIDTH: f64 = 960.0;
const PANEL_HEIGHT: f64 = 150.0;
const PANEL_GAP: f64 = 34.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;

/// One row of the chart.
pub struct Panel<'a> {
    pub title: &'a str,
    pub values: &'a [f64],
    /// Inclusive index ranges to shade (labeled anomaly windows).
    pub shaded: &'a [(usize, usize)],
    /// Horizontal reference line in data units.
    pub hline: Option<f64>,
    pub color: &'a str,
}

/// Render panels stacked vertically into a complete SVG document.
pub fn render_chart(panels: &[Panel]) -> String {
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    for (i, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP);
        render_panel(&mut out, panel, top);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let (lo, hi) = value_range(panel.values, panel.hline);
    let n = panel.values.len();

    out.push_str(&format!(
        "<text x=\"{MARGIN_LEFT}\" y=\"{:.2}\" font-weight=\"bold\">{}</text>\n",
        top - 6.0,
        escape_text(panel.title)
    ));

    for &(start, end) in panel.shaded {
        if n < 2 || start >= n {
            continue;
        }
        let end = end.min(n - 1);
        let x0 = MARGIN_LEFT + start as f64 / (n - 1) as f64 * plot_w;
        let x1 = MARGIN_LEFT + end as f64 / (n - 1) as f64 * plot_w;
        // Give point anomalies a visible sliver.
        let w = (x1 - x0).max(1.5);
        out.push_str(&format!(
            "<rect x=\"{x0:.2}\" y=\"{top:.2}\" width=\"{w:.2}\" height=\"{PANEL_HEIGHT:.2}\" \
             fill=\"#d62728\" fill-opacity=\"0.18\"/>\n"
        ));
    }

    out.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{top:.2}\" width=\"{plot_w:.2}\" \
         height=\"{PANEL_HEIGHT:.2}\" fill=\"none\" stroke=\"#999999\"/>\n"
    ));

    if n >= 2 {
        let mut points = String::new();
        for (t, &v) in panel.values.iter().enumerate() {
            let x = MARGIN_LEFT + t as f64 / (n - 1) as f64 * plot_w;
            let y = y_pixel(v, lo, hi, top);
            points.push_str(&format!("{x:.2},{y:.2} "));
        }
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\"/>\n",
            points.trim_end(),
            panel.color
        ));
    }

    if let Some(h) = panel.hline {
        let y = y_pixel(h, lo, hi, top);
        out.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#d62728\" stroke-dasharray=\"6 3\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#d62728\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT + plot_w - 4.0,
            (y - 4.0).max(top + 12.0),
            escape_text(&format!("threshold {h:.4}"))
        ));
    }

    // Axis extremes, right-aligned against the plot area.
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 6.0,
        top + 12.0,
        escape_text(&format_tick(hi))
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT - 6.0,
        top + PANEL_HEIGHT - 2.0,
        escape_text(&format_tick(lo))
    ));
}

fn value_range(values: &[f64], hline: Option<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter().chain(hline.iter()) {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn y_pixel(v: f64, lo: f64, hi: f64, top: f64) -> f64 {
    let unit = if v.is_finite() {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    top + (1.0 - unit) * PANEL_HEIGHT
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-3 && v.abs() < 1e5) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Index page linking the per-channel charts, with an optional metrics table
/// (raw CSV rows, header first).
pub fn index_page(chart_files: &[String], metrics_rows: Option<&[Vec<String>]>, threshold: f64) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n");
    out.push_str("<title>detection report</title>\n");
    out.push_str(
        "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}\
         td,th{border:1px solid #999;padding:4px 8px;text-align:right}</style>\n",
    );
    out.push_str("</head>\n<body>\n<h1>Detection report</h1>\n");
    out.push_str(&format!(
        "<p>Calibrated threshold: {}</p>\n",
        escape_text(&format!("{threshold:.6}"))
    ));
    if let Some(rows) = metrics_rows {
        if let Some((header, body)) = rows.split_first() {
            out.push_str("<h2>Metrics</h2>\n<table>\n<tr>");
            for cell in header {
                out.push_str(&format!("<th>{}</th>", escape_text(cell)));
            }
            out.push_str("</tr>\n");
            for row in body {
                out.push_str("<tr>");
                for cell in row {
                    out.push_str(&format!("<td>{}</td>", escape_text(cell)));
                }
                out.push_str("</tr>\n");
            }
            out.push_str("</table>\n");
        }
    }
    for file in chart_files {
        out.push_str(&format!(
            "<h2>{}</h2>\n<img src=\"{}\" alt=\"{}\"/>\n",
            escape_text(file),
            escape_text(file),
            escape_text(file)
        ));
    }
    out.push_str("</body>\n</html>\n");
    out
}
