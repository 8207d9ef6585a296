//! Self-contained SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, Default)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Shaded `(x, low, high)` band drawn under the line.
    pub band: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub reference: Option<(String, f64)>,
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Scale {
    fn tx(&self, y: f64) -> f64 {
        if self.log_y {
            y.max(f64::MIN_POSITIVE).log10()
        } else {
            y
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let t = (self.tx(y) - self.y0) / (self.y1 - self.y0);
        HEIGHT - BOTTOM - t * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn scale(&self) -> Scale {
        let usable = |y: f64| y.is_finite() && (!self.log_y || y > 0.0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && usable(y) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            for &(x, lo, hi) in s.band.iter().flatten() {
                if x.is_finite() {
                    ys.extend([lo, hi].into_iter().filter(|&v| usable(v)));
                }
            }
        }
        if let Some((_, r)) = &self.reference {
            if usable(*r) {
                ys.push(*r);
            }
        }
        let fold = |v: &[f64], init: f64, f: fn(f64, f64) -> f64| v.iter().cloned().fold(init, f);
        let (mut x0, mut x1) = (fold(&xs, f64::INFINITY, f64::min), fold(&xs, f64::NEG_INFINITY, f64::max));
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        let t = |y: f64| if self.log_y { y.log10() } else { y };
        let (mut y0, mut y1) = (
            fold(&ys, f64::INFINITY, f64::min),
            fold(&ys, f64::NEG_INFINITY, f64::max),
        );
        if !y0.is_finite() {
            (y0, y1) = (if self.log_y { 1.0 } else { 0.0 }, if self.log_y { 10.0 } else { 1.0 });
        }
        let (mut y0, mut y1) = (t(y0), t(y1));
        if y1 <= y0 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        Scale {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
            log_y: self.log_y,
        }
    }

    pub fn to_svg(&self) -> String {
        let sc = self.scale();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (WIDTH - RIGHT + LEFT) / 2.0,
            escape(&self.title)
        );
        let (bx0, by0, bx1, by1) = (LEFT, TOP, WIDTH - RIGHT, HEIGHT - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{bx0}" y="{by0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            bx1 - bx0,
            by1 - by0
        );
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let xv = sc.x0 + f * (sc.x1 - sc.x0);
            let px = sc.px(xv);
            let _ = writeln!(
                s,
                r#"<line x1="{px:.1}" y1="{by1}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
                by1 + 5.0,
                by1 + 18.0,
                tick_label(xv)
            );
            let tv = sc.y0 + f * (sc.y1 - sc.y0);
            let yv = if sc.log_y { 10f64.powf(tv) } else { tv };
            let py = sc.py(yv);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{py:.1}" x2="{bx0}" y2="{py:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                bx0 - 5.0,
                bx0 - 8.0,
                py + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (bx0 + bx1) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (by0 + by1) / 2.0,
            (by0 + by1) / 2.0,
            escape(&self.y_label)
        );

        let usable = |y: f64| y.is_finite() && (!sc.log_y || y > 0.0);
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if let Some(band) = &series.band {
                let pts: Vec<_> = band.iter().filter(|b| usable(b.1) && usable(b.2)).collect();
                if pts.len() > 1 {
                    let mut d = String::new();
                    for (j, &&(x, lo, _)) in pts.iter().enumerate() {
                        let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sc.px(x), sc.py(lo));
                    }
                    for &&(x, _, hi) in pts.iter().rev() {
                        let _ = write!(d, "L{:.2},{:.2} ", sc.px(x), sc.py(hi));
                    }
                    let _ = writeln!(s, r#"<path d="{d}Z" fill="{color}" fill-opacity="0.18" stroke="none"/>"#);
                }
            }
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| usable(p.1))
                .map(|&(x, y)| format!("{:.2},{:.2}", sc.px(x), sc.py(y)))
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 16.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                bx1 + 10.0,
                bx1 + 30.0,
                bx1 + 36.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        if let Some((label, r)) = &self.reference {
            if usable(*r) {
                let py = sc.py(*r);
                let _ = writeln!(
                    s,
                    r##"<line x1="{bx0}" y1="{py:.2}" x2="{bx1}" y2="{py:.2}" stroke="#555" stroke-dasharray="6 4"/><text x="{}" y="{:.2}">{}</text>"##,
                    bx1 + 10.0,
                    py + 4.0,
                    escape(label)
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}
