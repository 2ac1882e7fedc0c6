//! Minimal hand-written SVG line charts: axes, ticks, legend, optional log
//! scales. One chart per file, no dependencies, deterministic output.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.abs().log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.5 {
        2.0
    } else if frac < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let step = nice_step(hi - lo);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    // lo and hi already in log10 space.
    let mut out = Vec::new();
    let mut e = lo.floor();
    while e <= hi.ceil() + 1e-9 {
        if e >= lo - 1e-9 && e <= hi + 1e-9 {
            out.push(e);
        }
        e += 1.0;
    }
    if out.is_empty() {
        linear_ticks(lo, hi)
    } else {
        out
    }
}

fn fmt_tick(v: f64, log_scale: bool) -> String {
    if log_scale {
        let p = 10f64.powf(v);
        if (1e-3..1e4).contains(&p.abs()) || p == 0.0 {
            trim(&format!("{p}"))
        } else {
            format!("1e{v:.0}")
        }
    } else if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-3 && v.abs() < 1e5 {
        trim(&format!("{:.3}", v))
    } else {
        format!("{v:.1e}")
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Render a line chart. Points that are non-finite (or nonpositive on a log
/// axis) are dropped from their series.
pub fn line_chart(chart: &Chart, series: &[Series]) -> String {
    let transform = |p: (f64, f64)| -> Option<(f64, f64)> {
        let x = if chart.log_x {
            if p.0 <= 0.0 {
                return None;
            }
            p.0.log10()
        } else {
            p.0
        };
        let y = if chart.log_y {
            if p.1 <= 0.0 {
                return None;
            }
            p.1.log10()
        } else {
            p.1
        };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    };
    let cleaned: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| (s.label.clone(), s.points.iter().filter_map(|&p| transform(p)).collect()))
        .collect();

    let all: Vec<(f64, f64)> = cleaned.iter().flat_map(|(_, p)| p.iter().cloned()).collect();
    let (mut x_lo, mut x_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y_lo, mut y_hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if y_hi - y_lo < 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pad_y = 0.05 * (y_hi - y_lo);
    y_lo -= pad_y;
    y_hi += pad_y;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        esc(&chart.title)
    ));
    // Frame.
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));
    // Ticks and grid.
    let xticks = if chart.log_x { decade_ticks(x_lo, x_hi) } else { linear_ticks(x_lo, x_hi) };
    for t in &xticks {
        let x = px(*t);
        out.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            MARGIN_T,
            MARGIN_T + plot_h
        ));
        out.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 16.0,
            fmt_tick(*t, chart.log_x)
        ));
    }
    let yticks = if chart.log_y { decade_ticks(y_lo, y_hi) } else { linear_ticks(y_lo, y_hi) };
    for t in &yticks {
        let y = py(*t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(*t, chart.log_y)
        ));
    }
    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0,
        esc(&chart.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        esc(&chart.y_label)
    ));
    // Series.
    for (i, (label, pts)) in cleaned.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !pts.is_empty() {
            let path: Vec<String> =
                pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{ly:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            lx + 24.0,
            esc(label)
        ));
    }
    out.push_str("</svg>\n");
    out
}
