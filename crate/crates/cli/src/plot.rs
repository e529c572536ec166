//! Self-contained SVG line charts.

use std::fmt::Write as _;

use rkn_core::eval::MetricsReport;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 190.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
pub const DASH_DOT: &str = "8,3,2,3";

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub dash: Option<String>,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_step(span: f64, ticks: usize) -> f64 {
    let raw = span / ticks as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac < 1.5 {
        1.0
    } else if frac < 3.0 {
        2.0
    } else if frac < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

impl Chart {
    /// Renders the chart. Non-finite points (and non-positive ones on a log
    /// axis) break the line.
    pub fn to_svg(&self, comments: &[String]) -> String {
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let usable = |v: f64| v.is_finite() && (!self.log_y || v > 0.0);
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && usable(*y));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(ty(y));
            y1 = y1.max(ty(y));
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 0.0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        for c in comments {
            let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
        }
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_L + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );

        let xs = nice_step(x1 - x0, 6);
        let mut xt = (x0 / xs).ceil() * xs;
        while xt <= x1 + 1e-9 {
            let px = sx(xt);
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#ddd"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
                MARGIN_T,
                MARGIN_T + ph,
                MARGIN_T + ph + 16.0,
                xt
            );
            xt += xs;
        }
        let ys = nice_step(y1 - y0, 5);
        let mut yt = (y0 / ys).ceil() * ys;
        while yt <= y1 + 1e-12 {
            let py = sy(yt);
            let label = if self.log_y { format!("{:.3}", 10f64.powf(yt)) } else { format!("{:.3}", yt) };
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"##,
                MARGIN_L + pw,
                MARGIN_L - 6.0,
                py + 4.0
            );
            yt += ys;
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, series) in self.series.iter().enumerate() {
            let dash = series.dash.as_ref().map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
            let mut runs: Vec<Vec<String>> = vec![vec![]];
            for &(x, y) in &series.points {
                if x.is_finite() && usable(y) {
                    runs.last_mut().expect("non-empty").push(format!("{:.2},{:.2}", sx(x), sy(ty(y))));
                } else if !runs.last().expect("non-empty").is_empty() {
                    runs.push(vec![]);
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    series.color,
                    run.join(" ")
                );
            }
            let ly = MARGIN_T + 12.0 + 18.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
                lx + 28.0,
                series.color,
                lx + 34.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn color(i: usize) -> String {
    PALETTE[i % PALETTE.len()].to_string()
}

fn indexed(v: &[f64]) -> Vec<(f64, f64)> {
    v.iter().enumerate().map(|(t, &y)| (t as f64, y)).collect()
}

/// Estimated (solid) against empirical (dash-dot) position standard deviation.
pub fn std_chart(reports: &[MetricsReport]) -> Chart {
    let mut series = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        series.push(Series {
            name: format!("{} est.", r.estimator_id),
            color: color(i),
            dash: None,
            points: indexed(&r.pos_std_est),
        });
        series.push(Series {
            name: format!("{} emp.", r.estimator_id),
            color: color(i),
            dash: Some(DASH_DOT.into()),
            points: indexed(&r.pos_std_emp),
        });
    }
    Chart {
        title: "Position standard deviation".into(),
        x_label: "t".into(),
        y_label: "std (log scale)".into(),
        log_y: true,
        series,
    }
}

/// Mean position gain per estimator.
pub fn gain_chart(reports: &[MetricsReport]) -> Chart {
    Chart {
        title: "Mean position gain".into(),
        x_label: "t".into(),
        y_label: "K (position)".into(),
        log_y: false,
        series: reports
            .iter()
            .enumerate()
            .map(|(i, r)| Series { name: r.estimator_id.clone(), color: color(i), dash: None, points: indexed(&r.k_pos) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str) -> MetricsReport {
        let v: Vec<f64> = (0..10).map(|t| 1.0 / (1.0 + t as f64)).collect();
        MetricsReport {
            estimator_id: id.into(),
            n: 1,
            eqm: v.clone(),
            eqm_n: v.clone(),
            k_pos: v.clone(),
            k_vel: v.clone(),
            pos_std_est: v.clone(),
            pos_std_emp: v,
        }
    }

    #[test]
    fn std_chart_uses_solid_and_dash_dot() {
        let svg = std_chart(&[report("kf:oracle"), report("rkn:ab")]).to_svg(&["a -- b".into()]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches(&format!("stroke-dasharray=\"{DASH_DOT}\"")).count(), 4);
        assert!(svg.contains("<!-- a - - b -->"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn breaks_lines_at_bad_points() {
        let mut r = report("x");
        r.k_pos[5] = f64::NAN;
        let svg = gain_chart(&[r]).to_svg(&[]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_ranges_render() {
        let mut r = report("flat");
        r.k_pos = vec![0.5; 3];
        let svg = gain_chart(&[r]).to_svg(&[]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
