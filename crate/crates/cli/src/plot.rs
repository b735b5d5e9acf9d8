//! Static SVG line and marker plots, with the plotted data embedded as
//! comments so the files diff meaningfully.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 340.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 52.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Dashed,
    Markers,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
    pub color: &'static str,
}

#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    pub series: Vec<Series>,
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let (lo, hi) = values
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !(lo <= hi) {
            return None;
        }
        let (lo, hi) = if log {
            (
                lo.log10().floor(),
                hi.log10().ceil().max(lo.log10().floor() + 1.0),
            )
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.04 * (hi - lo);
            (lo - pad, hi + pad)
        };
        Some(Self { lo, hi, log })
    }

    fn frac(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        t.is_finite().then(|| (t - self.lo) / (self.hi - self.lo))
    }

    /// Tick positions in data units with their labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let span = (self.hi - self.lo) as i64;
            let step = (span / 8).max(1);
            (self.lo as i64..=self.hi as i64)
                .filter(|e| (e - self.lo as i64) % step == 0)
                .map(|e| (10f64.powi(e as i32), format!("1e{e}")))
                .collect()
        } else {
            let raw = (self.hi - self.lo) / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last)
                .map(|i| {
                    let v = i as f64 * step;
                    (v, format!("{}", (v / step).round() * step))
                })
                .map(|(v, s)| (v, trim_float(&s)))
                .collect()
        }
    }
}

fn trim_float(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v.abs() < 1e-12 => "0".to_string(),
        Ok(v) => format!("{}", (v * 1e9).round() / 1e9),
        Err(_) => s.to_string(),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the panels stacked vertically. `None` when no panel has a
/// plottable point.
pub fn render(panels: &[Panel]) -> Option<String> {
    let plottable = panels.iter().any(|p| {
        p.series.iter().any(|s| {
            s.points
                .iter()
                .any(|&(x, y)| x.is_finite() && y.is_finite())
        })
    });
    if !plottable {
        return None;
    }
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut svg, p, i as f64 * PANEL_HEIGHT);
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn render_panel(svg: &mut String, p: &Panel, y0: f64) {
    let all = || p.series.iter().flat_map(|s| s.points.iter().copied());
    let (Some(xa), Some(ya)) = (
        Axis::fit(all().map(|q| q.0), p.x_log),
        Axis::fit(all().map(|q| q.1), p.y_log),
    ) else {
        return;
    };
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (y0 + MARGIN_TOP, y0 + PANEL_HEIGHT - MARGIN_BOTTOM);
    let px = |f: f64| left + f * (right - left);
    let py = |f: f64| bottom - f * (bottom - top);

    for s in &p.series {
        let data: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{x:e},{y:e}"))
            .collect();
        writeln!(
            svg,
            "<!-- data {}: {} -->",
            escape(&s.label).replace("--", "- -"),
            data.join(" ")
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        y0 + 20.0,
        escape(&p.title)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    )
    .unwrap();
    for (v, label) in xa.ticks() {
        let Some(f) = xa.frac(v) else { continue };
        let x = px(f);
        writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{bottom}" stroke="#ddd"/>"##
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            bottom + 16.0
        )
        .unwrap();
    }
    for (v, label) in ya.ticks() {
        let Some(f) = ya.frac(v) else { continue };
        let y = py(f);
        writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#ddd"/>"##
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            left - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 38.0,
        escape(&p.x_label)
    )
    .unwrap();
    let yc = (top + bottom) / 2.0;
    writeln!(
        svg,
        r#"<text x="18" y="{yc}" text-anchor="middle" transform="rotate(-90 18 {yc})">{}</text>"#,
        escape(&p.y_label)
    )
    .unwrap();

    for (k, s) in p.series.iter().enumerate() {
        let coords: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|&(x, y)| Some((px(xa.frac(x)?), py(ya.frac(y)?))))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        match s.style {
            Style::Line | Style::Dashed => {
                let pts: Vec<String> = coords
                    .iter()
                    .map(|(x, y)| format!("{x:.2},{y:.2}"))
                    .collect();
                let dash = if s.style == Style::Dashed {
                    r#" stroke-dasharray="6 4""#
                } else {
                    ""
                };
                writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                    pts.join(" "),
                    s.color
                )
                .unwrap();
            }
            Style::Markers => {
                for (x, y) in &coords {
                    writeln!(
                        svg,
                        r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.2" fill="{}"/>"#,
                        s.color
                    )
                    .unwrap();
                }
            }
        }
        let ly = top + 14.0 + 16.0 * k as f64;
        let lx = right - 150.0;
        writeln!(
            svg,
            r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            s.color
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            lx + 24.0,
            escape(&s.label)
        )
        .unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(points: Vec<(f64, f64)>) -> Panel {
        Panel {
            title: "t".into(),
            x_label: "λ".into(),
            y_label: "S".into(),
            x_log: true,
            y_log: false,
            series: vec![Series {
                label: "a<b".into(),
                points,
                style: Style::Markers,
                color: "black",
            }],
        }
    }

    #[test]
    fn renders_points_and_data_comment() {
        let svg = render(&[panel(vec![(1e-3, 0.5), (1e-1, 0.7)])]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("<!-- data a&lt;b: 1e-3,5e-1 1e-1,7e-1 -->"));
        assert!(svg.contains(">1e-3<"));
    }

    #[test]
    fn empty_input_is_not_plottable() {
        assert!(render(&[panel(vec![])]).is_none());
        assert!(render(&[panel(vec![(f64::NAN, 1.0)])]).is_none());
        assert!(render(&[]).is_none());
    }

    #[test]
    fn linear_ticks_are_round() {
        let a = Axis::fit([0.0, 1.0].into_iter(), false).unwrap();
        let labels: Vec<String> = a.ticks().into_iter().map(|t| t.1).collect();
        assert_eq!(labels, vec!["0", "0.2", "0.4", "0.6", "0.8", "1"]);
    }
}
