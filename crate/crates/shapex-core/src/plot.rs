//! Native SVG plots: saliency overlays and occlusion curves.
//!
//! Pure string assembly over polyline/rect primitives, so plot output is
//! deterministic and dependency-free.

use std::fmt::Write as _;

use crate::data::SaliencyMap;
use crate::eval::OcclusionCurve;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 45.0;

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = title
    )
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", x, y))
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
        coords.join(" "),
        color,
        width
    )
}

/// Series line with a saliency heat strip underneath; optionally shades the
/// ground-truth region.
pub fn saliency_overlay_svg(
    series: &[f64],
    map: &SaliencyMap,
    gt: Option<&[bool]>,
    title: &str,
) -> String {
    let t_len = series.len();
    let mut svg = header(title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN - 40.0;
    let x_at = |t: usize| MARGIN + plot_w * t as f64 / (t_len.max(2) - 1) as f64;

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in series {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let y_at = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));

    // Ground-truth shading behind the series.
    if let Some(gt) = gt {
        for (t, &g) in gt.iter().enumerate() {
            if g {
                let x = x_at(t);
                let w = plot_w / (t_len.max(2) - 1) as f64;
                let _ = write!(
                    svg,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#dff2df\"/>\n",
                    x, MARGIN, w, plot_h
                );
            }
        }
    }

    let pts: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .map(|(t, &v)| (x_at(t), y_at(v)))
        .collect();
    svg.push_str(&polyline(&pts, "#1f4e9c", 1.2));

    // Heat strip: white-to-red by score.
    let strip_y = HEIGHT - MARGIN - 20.0;
    for (t, &s) in map.scores.iter().enumerate() {
        let x = x_at(t);
        let w = plot_w / (t_len.max(2) - 1) as f64;
        let red = 255;
        let other = (255.0 * (1.0 - s)).round() as u8;
        let _ = write!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"16\" fill=\"rgb({},{},{})\"/>\n",
            x, strip_y, w, red, other, other
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">saliency</text>\n",
        MARGIN,
        strip_y - 4.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// One polyline per occlusion curve over the shared ratio axis.
pub fn occlusion_curves_svg(curves: &[(String, OcclusionCurve)], title: &str) -> String {
    const COLORS: [&str; 6] = [
        "#1f4e9c", "#c23b22", "#2e8b57", "#7b3294", "#d98e04", "#4d4d4d",
    ];
    let mut svg = header(title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN - 20.0;
    let x_at = |r: f64| MARGIN + plot_w * r;
    let y_at = |a: f64| MARGIN + plot_h * (1.0 - a);

    // Axes with AUROC gridlines at 0, 0.5, 1.
    let _ = write!(
        svg,
        "<line x1=\"{m}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = MARGIN + plot_h,
        r = MARGIN + plot_w
    );
    for grid in [0.0, 0.5, 1.0] {
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            8.0,
            y_at(grid) + 3.0,
            grid
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">masked ratio</text>\n",
        MARGIN + plot_w / 2.0 - 30.0,
        MARGIN + plot_h + 28.0
    );

    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = curve
            .ratios
            .iter()
            .zip(&curve.auroc)
            .map(|(&r, &a)| (x_at(r), y_at(a.clamp(0.0, 1.0))))
            .collect();
        svg.push_str(&polyline(&pts, color, 1.6));
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            MARGIN + plot_w - 160.0,
            MARGIN + 16.0 * (i + 1) as f64,
            color,
            label
        );
    }
    svg.push_str("</svg>\n");
    svg
}
