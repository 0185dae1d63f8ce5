//! Self-contained SVG learning-curve plot: one shaded percentile band and
//! one mean line per mode, with axes and a legend.

use std::fmt::Write;

use crate::aggregate::AggregateCurve;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

pub fn render(curves: &[AggregateCurve], title: &str) -> String {
    let (x0, x1) = range(
        curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.step as f64)),
    );
    let (y0, y1) = range(
        curves
            .iter()
            .flat_map(|c| c.points.iter().flat_map(|p| [p.p_low, p.p_high, p.mean])),
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(
        w,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        w,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    )
    .unwrap();

    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        writeln!(
            w,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/>"##,
            TOP,
            TOP + plot_h
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.0}</text>"#,
            TOP + plot_h + 18.0
        )
        .unwrap();
        writeln!(
            w,
            r##"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##,
            LEFT + plot_w
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            LEFT - 6.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(w, r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">step</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(w, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">return</text>"#, TOP + plot_h / 2.0, TOP + plot_h / 2.0).unwrap();

    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if c.points.is_empty() {
            continue;
        }
        let upper = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.p_high)));
        let lower = c
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.p_low)));
        let band: Vec<String> = upper.chain(lower).collect();
        writeln!(
            w,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        )
        .unwrap();
        let line: Vec<String> = c
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(p.mean)))
            .collect();
        writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        )
        .unwrap();
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        writeln!(w, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
        writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&c.mode)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::CurvePoint;

    #[test]
    fn renders_each_mode() {
        let pt = |step, mean| CurvePoint {
            step,
            runs: 1,
            mean,
            p_low: mean - 0.1,
            p_high: mean + 0.1,
            success_rate: None,
        };
        let curves = vec![
            AggregateCurve {
                mode: "noisy".into(),
                points: vec![pt(0, 0.0), pt(10, 1.0)],
                resampled: false,
            },
            AggregateCurve {
                mode: "a<b".into(),
                points: vec![pt(0, 0.5), pt(10, 0.5)],
                resampled: false,
            },
        ];
        let s = render(&curves, "t");
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<polygon").count(), 2);
        assert!(s.contains("a&lt;b"));
        assert_eq!(render(&curves, "t"), s);
    }

    #[test]
    fn empty_plot_is_valid() {
        assert!(render(&[], "none").contains("</svg>"));
    }
}
