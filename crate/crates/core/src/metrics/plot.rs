use std::fmt::Write;

use super::report::CampaignReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;
const COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];

/// Log-log plot of the dynamic RMS against feed rate with the fitted power
/// laws as dashed lines.
pub fn power_law_svg(report: &CampaignReport) -> String {
    let points: Vec<(f64, [f64; 3])> = report
        .dynamic_rms
        .iter()
        .map(|r| (r.feed_rate_mm_min, r.dynamic_rms_um))
        .collect();
    let positive = |v: f64| v.is_finite() && v > 0.0;

    let feeds: Vec<f64> = points.iter().map(|p| p.0).filter(|f| positive(*f)).collect();
    let values: Vec<f64> = points.iter().flat_map(|p| p.1).filter(|v| positive(*v)).collect();
    let (fmin, fmax) = bounds(&feeds);
    let (vmin, vmax) = bounds(&values);
    let (x0, x1) = (fmin.log10().floor(), fmax.log10().ceil().max(fmin.log10().floor() + 1.0));
    let (y0, y1) = (vmin.log10().floor(), vmax.log10().ceil().max(vmin.log10().floor() + 1.0));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |f: f64| MARGIN_LEFT + (f.log10() - x0) / (x1 - x0) * plot_w;
    let py = |v: f64| MARGIN_TOP + (y1 - v.log10()) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for e in (x0 as i32)..=(x1 as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#,
            MARGIN_TOP + plot_h + 18.0
        );
    }
    for e in (y0 as i32)..=(y1 as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">F (mm/min)</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">dynamic RMS (µm)</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    let fits = report.power_law.as_ref().map(|f| f.directions()).unwrap_or([None; 3]);
    for (j, (name, color)) in ["x", "y", "z"].iter().zip(COLORS).enumerate() {
        for (f, rms) in &points {
            if positive(*f) && positive(rms[j]) {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    px(*f),
                    py(rms[j])
                );
            }
        }
        if let Some(term) = fits[j] {
            let (a, b) = (10f64.powf(x0), 10f64.powf(x1));
            let (va, vb) = (term.evaluate(a), term.evaluate(b));
            if positive(va) && positive(vb) {
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="6 4" clip-path="url(#plot)"/>"#,
                    px(a),
                    py(va),
                    px(b),
                    py(vb)
                );
            }
        }
        let ly = MARGIN_TOP + 16.0 + 18.0 * j as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(s, r#"<circle cx="{lx:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, ly - 4.0);
        let label = match fits[j] {
            Some(t) => format!("{name}: N = {:.3}", t.exponent),
            None => (*name).to_string(),
        };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{label}</text>"#, lx + 8.0);
    }
    let _ = writeln!(
        s,
        r#"<defs><clipPath id="plot"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}"/></clipPath></defs>"#
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (1.0, 10.0)
    }
}
