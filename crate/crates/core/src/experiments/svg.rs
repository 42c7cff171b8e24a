//! Minimal SVG line/scatter/bar plotting with fixed-precision output.

use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One panel with linear axes.
pub struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Panel {
    pub fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    pub fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

/// Range padded by 5% on each side; degenerate ranges widen to ±0.5.
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    /// Draws a framed panel with ticks and labels and returns its mapping.
    pub fn panel(
        &mut self,
        origin: (f64, f64),
        size: (f64, f64),
        xr: (f64, f64),
        yr: (f64, f64),
        title: &str,
        xlabel: &str,
        ylabel: &str,
    ) -> Panel {
        let p = Panel {
            x0: origin.0 + 55.0,
            y0: origin.1 + 30.0,
            w: size.0 - 75.0,
            h: size.1 - 75.0,
            xr,
            yr,
        };
        let b = &mut self.body;
        let _ = writeln!(
            b,
            r#"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            p.x0, p.y0, p.w, p.h
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = xr.0 + t * (xr.1 - xr.0);
            let yv = yr.0 + t * (yr.1 - yr.0);
            let (x, y) = (p.px(xv), p.py(yv));
            let _ = writeln!(
                b,
                r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="middle">{xv:.3}</text>"#,
                p.y0 + p.h + 14.0
            );
            let _ = writeln!(
                b,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{yv:.3}</text>"#,
                p.x0 - 4.0,
                y + 3.0
            );
        }
        let _ = writeln!(
            b,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
            p.x0 + p.w / 2.0,
            p.y0 - 10.0,
            esc(title)
        );
        let _ = writeln!(
            b,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            p.x0 + p.w / 2.0,
            p.y0 + p.h + 32.0,
            esc(xlabel)
        );
        let _ = writeln!(
            b,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            p.x0 - 40.0,
            p.y0 + p.h / 2.0,
            p.x0 - 40.0,
            p.y0 + p.h / 2.0,
            esc(ylabel)
        );
        p
    }

    pub fn polyline(&mut self, p: &Panel, pts: &[(f64, f64)], class: &str, stroke: &str, dashed: bool) {
        let mut s = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", p.px(x), p.py(y));
        }
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline class="{class}" points="{s}" fill="none" stroke="{stroke}" stroke-width="1.2"{dash}/>"#
        );
    }

    pub fn points(&mut self, p: &Panel, pts: &[(f64, f64)], fill: &str) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{fill}" fill-opacity="0.5"/>"#,
                p.px(x),
                p.py(y)
            );
        }
    }

    pub fn bar(&mut self, p: &Panel, x_lo: f64, x_hi: f64, y: f64, fill: &str) {
        let (l, r) = (p.px(x_lo), p.px(x_hi));
        let (top, base) = (p.py(y), p.py(p.yr.0.max(0.0).min(p.yr.1)));
        let _ = writeln!(
            self.body,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            l,
            top.min(base),
            (r - l).abs(),
            (base - top).abs()
        );
    }

    pub fn legend(&mut self, x: f64, y: f64, entries: &[(String, &str)]) {
        for (i, (label, c)) in entries.iter().enumerate() {
            let yy = y + 14.0 * i as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x:.2}" y="{:.2}" width="10" height="3" fill="{c}"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                yy - 3.0,
                x + 14.0,
                yy + 1.0,
                esc(label)
            );
        }
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="11">{}</text>"#,
            esc(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_mapping_and_output() {
        let mut s = Svg::new(400.0, 300.0);
        let p = s.panel((0.0, 0.0), (400.0, 300.0), (0.0, 1.0), (0.0, 2.0), "t", "x", "y");
        assert!((p.px(0.0) - 55.0).abs() < 1e-12);
        assert!((p.py(2.0) - 30.0).abs() < 1e-12);
        s.polyline(&p, &[(0.0, 0.0), (1.0, 2.0)], "series", "red", false);
        let out = s.finish();
        assert!(out.starts_with("<svg") && out.ends_with("</svg>\n"));
        assert_eq!(out.matches("class=\"series\"").count(), 1);
    }

    #[test]
    fn ranges() {
        assert_eq!(padded_range([1.0, 1.0]), (0.5, 1.5));
        assert_eq!(padded_range(std::iter::empty()), (0.0, 1.0));
        let (lo, hi) = padded_range([0.0, 10.0]);
        assert!((lo + 0.5).abs() < 1e-12 && (hi - 10.5).abs() < 1e-12);
    }
}
