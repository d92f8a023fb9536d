//! Standalone SVG line plots from run CSVs.
//!
//! Output is built as a plain string with fixed formatting, so identical
//! inputs produce identical bytes.

use std::path::Path;

use crate::error::CoreError;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One line: a name plus (x, y) points.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// What to plot: which columns of which CSVs.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x_column: String,
    pub y_column: String,
    pub title: String,
}

/// Pull one series out of a CSV with a header row. Errors name any missing
/// columns.
pub fn series_from_csv(path: &Path, spec: &PlotSpec, name: &str) -> Result<Series, CoreError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or(CoreError::EmptySeries)?
        .split(',')
        .collect();
    let mut missing = Vec::new();
    let xi = header.iter().position(|h| *h == spec.x_column);
    let yi = header.iter().position(|h| *h == spec.y_column);
    if xi.is_none() {
        missing.push(spec.x_column.clone());
    }
    if yi.is_none() {
        missing.push(spec.y_column.clone());
    }
    if !missing.is_empty() {
        return Err(CoreError::MissingColumns(missing));
    }
    let (xi, yi) = (xi.unwrap(), yi.unwrap());
    let mut points = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse = |s: &str| -> Result<f64, CoreError> {
            s.parse::<f64>()
                .map_err(|_| CoreError::InvalidConfig(format!("bad number '{s}' in {}", path.display())))
        };
        let (x, y) = (parse(cols[xi])?, parse(cols[yi])?);
        if x.is_finite() && y.is_finite() {
            points.push((x, y));
        }
    }
    Ok(Series {
        name: name.to_string(),
        points,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series as a line plot. Fails on an empty series set or a series
/// with no points (nothing is written in that case).
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> Result<String, CoreError> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(CoreError::EmptySeries);
    }
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for (x, y) in &s.points {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
            ymin = ymin.min(*y);
            ymax = ymax.max(*y);
        }
    }
    if xmin == xmax {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if ymin == ymax {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * plot_w;
    let sy = |y: f64| MARGIN_T + plot_h - (y - ymin) / (ymax - ymin) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        esc(&spec.title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h),
        fmt(MARGIN_L + plot_w),
        fmt(MARGIN_T + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(MARGIN_T + plot_h)
    ));
    // ticks
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let px = sx(fx);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(px),
            fmt(MARGIN_T + plot_h),
            fmt(px),
            fmt(MARGIN_T + plot_h + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(MARGIN_T + plot_h + 20.0),
            fmt(fx)
        ));
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        let py = sy(fy);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt(MARGIN_L - 5.0),
            fmt(py),
            fmt(MARGIN_L),
            fmt(py)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_L - 8.0),
            fmt(py + 4.0),
            fmt(fy)
        ));
    }
    // axis labels
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 10.0),
        esc(&spec.x_column)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0),
        esc(&spec.y_column)
    ));
    // series
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(*y))))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            color
        ));
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\"/>\n",
                fmt(sx(x)),
                fmt(sy(y)),
                color
            ));
        }
        // legend
        let ly = MARGIN_T + 14.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            fmt(MARGIN_L + plot_w - 150.0),
            fmt(ly),
            fmt(MARGIN_L + plot_w - 130.0),
            fmt(ly),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(MARGIN_L + plot_w - 125.0),
            fmt(ly + 4.0),
            esc(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Render and write; nothing is written when rendering fails.
pub fn emit_plot(series: &[Series], spec: &PlotSpec, out: &Path) -> Result<(), CoreError> {
    let svg = render_svg(series, spec)?;
    std::fs::write(out, svg).map_err(|e| CoreError::io(out.display().to_string(), e))
}
