//! Minimal SVG line plots for traces and trajectory overlays.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::Vec2;
use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<Vec2>,
    pub color: String,
    pub width: f64,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<Vec2>, color: &str) -> Self {
        Self { name: name.into(), points, color: color.into(), width: 1.5 }
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Same scale on both axes.
    pub equal_aspect: bool,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            equal_aspect: false,
        }
    }

    fn bounds(&self) -> Option<(Vec2, Vec2)> {
        let mut pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.is_finite());
        let first = *pts.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in pts {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if hi.x - lo.x < 1e-9 {
            hi.x += 0.5;
            lo.x -= 0.5;
        }
        if hi.y - lo.y < 1e-9 {
            hi.y += 0.5;
            lo.y -= 0.5;
        }
        Some((lo, hi))
    }

    pub fn render(&self) -> String {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (plot_w, plot_h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        if let Some((lo, hi)) = self.bounds() {
            let (mut sx, mut sy) = (plot_w / (hi.x - lo.x), plot_h / (hi.y - lo.y));
            if self.equal_aspect {
                let s = sx.min(sy);
                sx = s;
                sy = s;
            }
            let map = |p: Vec2| (MARGIN + (p.x - lo.x) * sx, HEIGHT - MARGIN - (p.y - lo.y) * sy);
            let _ = writeln!(
                svg,
                r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##
            );
            for k in 0..=4 {
                let f = k as f64 / 4.0;
                let (x, _) = map(Vec2::new(lo.x + f * (hi.x - lo.x), lo.y));
                let _ = writeln!(
                    svg,
                    r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    HEIGHT - MARGIN + 16.0,
                    tick(lo.x + f * (hi.x - lo.x))
                );
                let (_, y) = map(Vec2::new(lo.x, lo.y + f * (hi.y - lo.y)));
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{}</text>"#,
                    MARGIN - 6.0,
                    tick(lo.y + f * (hi.y - lo.y))
                );
            }
            for s in &self.series {
                let mut d = String::new();
                for p in s.points.iter().filter(|p| p.is_finite()) {
                    let (x, y) = map(*p);
                    let _ = write!(d, "{x:.2},{y:.2} ");
                }
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>"#,
                    s.color,
                    s.width,
                    d.trim_end()
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        let mut ly = MARGIN + 14.0;
        for s in self.series.iter().filter(|s| !s.name.is_empty()) {
            let lx = WIDTH - MARGIN - 150.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="3"/><text x="{}" y="{ly}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                s.color,
                lx + 26.0,
                escape(&s.name)
            );
            ly += 16.0;
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series() {
        let mut p = Plot::new("a < b", "s [m]", "L [m]");
        p.series.push(Series::new("one", vec![Vec2::new(0.0, 1.0), Vec2::new(1.0, 2.0)], PALETTE[0]));
        p.series.push(Series::new("two", vec![Vec2::new(0.0, 0.0), Vec2::new(f64::NAN, 1.0)], PALETTE[1]));
        let svg = p.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_plot_is_still_valid() {
        let svg = Plot::new("empty", "x", "y").render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
