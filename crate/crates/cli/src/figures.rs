//! Static SVG charts drawn straight from the sweep table.
//!
//! Output depends only on the table contents, so identical tables give
//! byte-identical files. Missing points break a series into separate
//! polylines and are reported as warnings.

use std::fmt::Write;

use gridshare::metrics::{distribution_of, SweepTable};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// SDR at which the delay distribution is drawn.
pub const DISTRIBUTION_SDR: f64 = 1.2;

pub struct Figures {
    pub fod: String,
    pub adfd: String,
    pub delay_dist: String,
    pub warnings: Vec<String>,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, Option<f64>)>,
}

pub fn render_all(
    table: &SweepTable,
    labels: &[String],
    sdr_grid: &[f64],
    bin_width: f64,
) -> Figures {
    let mut warnings = Vec::new();
    let mut fod = Vec::new();
    let mut adfd = Vec::new();
    for label in labels {
        let mut f = Vec::new();
        let mut a = Vec::new();
        for &sdr in sdr_grid {
            match table.average(label, sdr) {
                Some(row) => {
                    f.push((sdr, Some(row.fod_mean)));
                    a.push((sdr, row.adfd_mean));
                }
                None => {
                    warnings.push(format!("no result for {label} at sdr={sdr}; leaving a gap"));
                    f.push((sdr, None));
                    a.push((sdr, None));
                }
            }
        }
        fod.push(Series {
            label: label.clone(),
            points: f,
        });
        adfd.push(Series {
            label: label.clone(),
            points: a,
        });
    }
    let (delay_dist, mut w) = distribution_chart(table, labels, bin_width);
    warnings.append(&mut w);
    Figures {
        fod: line_chart(
            "Fraction of delayed vehicles",
            "SDR",
            "fraction delayed",
            &fod,
        ),
        adfd: line_chart(
            "Average delay of delayed vehicles",
            "SDR",
            "delay (min)",
            &adfd,
        ),
        delay_dist,
        warnings,
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w() / 2.0,
        escape(title)
    );
}

fn plot_w() -> f64 {
    WIDTH - LEFT - RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - TOP - BOTTOM
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_max: f64) {
    let (x0, y0) = (LEFT, TOP + plot_h());
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{TOP:.1} V{y0:.1} H{:.1}" fill="none" stroke="black"/>"#,
        LEFT + plot_w()
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = y0 - plot_h() * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w() / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h() / 2.0,
        TOP + plot_h() / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn legend(out: &mut String, labels: &[&str]) {
    let x = LEFT + plot_w() + 16.0;
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            escape(label)
        );
    }
}

/// Polyline chart; `None` points split a series into runs.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if x_min.is_finite() && x_max > x_min {
        (x_min, x_max)
    } else if x_min.is_finite() {
        (x_min - 0.5, x_min + 0.5)
    } else {
        (0.0, 1.0)
    };
    let y_top = series
        .iter()
        .flat_map(|s| s.points.iter().filter_map(|p| p.1))
        .fold(0.0, f64::max);
    let y_max = nice_max(y_top);
    let px = |x: f64| LEFT + plot_w() * (x - x_min) / (x_max - x_min);
    let py = |y: f64| TOP + plot_h() * (1.0 - y / y_max);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label, y_max);

    let mut ticks: Vec<f64> = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            px(x),
            TOP + plot_h() + 16.0,
            fmt_tick(x)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in &s.points {
            match y {
                Some(y) => runs.last_mut().unwrap().push((px(x), py(y))),
                None => runs.push(Vec::new()),
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            if run.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    pts.join(" ")
                );
            }
            for (x, y) in run {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#
                );
            }
        }
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars of the pooled delay histogram at [`DISTRIBUTION_SDR`].
fn distribution_chart(
    table: &SweepTable,
    labels: &[String],
    bin_width: f64,
) -> (String, Vec<String>) {
    let mut warnings = Vec::new();
    let mut hists: Vec<Vec<f64>> = Vec::new();
    for label in labels {
        if table.average(label, DISTRIBUTION_SDR).is_none() {
            warnings.push(format!(
                "no result for {label} at sdr={DISTRIBUTION_SDR}; delay distribution left empty"
            ));
            hists.push(Vec::new());
            continue;
        }
        let delays = table.pooled_delays(label, DISTRIBUTION_SDR);
        let fractions = if delays.is_empty() {
            Vec::new()
        } else {
            distribution_of(&delays, bin_width)
                .map(|d| d.bins.iter().map(|b| b.fraction).collect())
                .unwrap_or_default()
        };
        hists.push(fractions);
    }
    let n_bins = hists.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let y_max = nice_max(hists.iter().flatten().copied().fold(0.0, f64::max));
    let group_w = plot_w() / n_bins as f64;
    let bar_w = group_w * 0.8 / labels.len().max(1) as f64;

    let mut out = String::new();
    header(
        &mut out,
        &format!("Delay distribution of delayed vehicles, SDR {DISTRIBUTION_SDR}"),
    );
    axes(
        &mut out,
        "delay (min)",
        "fraction of delayed vehicles",
        y_max,
    );
    let label_every = n_bins.div_ceil(10);
    for b in (0..n_bins).step_by(label_every) {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            LEFT + group_w * b as f64,
            TOP + plot_h() + 16.0,
            fmt_tick(bin_width * b as f64)
        );
    }
    for (i, h) in hists.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (b, &f) in h.iter().enumerate() {
            if f <= 0.0 {
                continue;
            }
            let x = LEFT + group_w * (b as f64 + 0.1) + bar_w * i as f64;
            let height = plot_h() * f / y_max;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{:.1}" width="{bar_w:.2}" height="{height:.1}" fill="{color}"/>"#,
                TOP + plot_h() - height
            );
        }
    }
    let names: Vec<&str> = labels.iter().map(String::as_str).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    (out, warnings)
}
