//! Minimal SVG figures: per-class F1 bars and a waveform with reference and
//! detected event boundaries.

use std::fmt::Write;

use super::Report;

const W: f64 = 800.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of per-class segment F1 in percent.
pub fn f1_bar_chart(report: &Report, title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let n = report.classes.len().max(1) as f64;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN - 40.0;
    let base = MARGIN + plot_h;
    for tick in [0, 25, 50, 75, 100] {
        let y = base - plot_h * tick as f64 / 100.0;
        let _ = write!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            W - MARGIN,
            MARGIN - 6.0,
            y + 4.0
        );
    }
    let slot = plot_w / n;
    for (i, c) in report.classes.iter().enumerate() {
        let h = plot_h * c.f1.clamp(0.0, 1.0);
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let fill = if c.included { "#4477aa" } else { "#bbbbbb" };
        let _ = write!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{fill}"/>"#,
            base - h,
            slot * 0.7
        );
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.1}</text>"#,
            x + slot * 0.35,
            base - h - 4.0,
            100.0 * c.f1
        );
        let lx = x + slot * 0.35;
        let ly = base + 12.0;
        let _ = write!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-35 {lx:.1} {ly:.1})">{}</text>"#,
            escape(&c.name)
        );
    }
    let _ = write!(
        out,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">segment F1 (%)</text></svg>"#,
        MARGIN + plot_h / 2.0,
        MARGIN + plot_h / 2.0
    );
    out.push('\n');
    out
}

/// Inputs of the localization figure.
pub struct LocalizationPlot<'a> {
    pub title: &'a str,
    pub samples: &'a [f64],
    pub sample_rate: u32,
    pub probs: &'a [f64],
    pub frame_hop_s: f64,
    pub threshold: f64,
    pub reference: &'a [(f64, f64)],
    pub detected: &'a [(f64, f64)],
}

/// Waveform envelope on top, frame probabilities below, reference events as
/// green spans and detections as orange spans.
pub fn localization_figure(p: &LocalizationPlot<'_>) -> String {
    let mut out = String::new();
    header(&mut out, p.title);
    let dur = (p.samples.len() as f64 / p.sample_rate.max(1) as f64)
        .max(p.probs.len() as f64 * p.frame_hop_s)
        .max(1e-9);
    let plot_w = W - 2.0 * MARGIN;
    let x_of = |t: f64| MARGIN + plot_w * (t / dur).clamp(0.0, 1.0);
    let (wave_top, wave_h) = (36.0, 150.0);
    let (prob_top, prob_h) = (wave_top + wave_h + 24.0, 110.0);

    for &(on, off) in p.reference {
        let _ = write!(
            out,
            r##"<rect x="{:.1}" y="{wave_top}" width="{:.1}" height="{wave_h}" fill="#88cc88" fill-opacity="0.35"/>"##,
            x_of(on),
            (x_of(off) - x_of(on)).max(0.5)
        );
    }
    for &(on, off) in p.detected {
        let _ = write!(
            out,
            r##"<rect x="{:.1}" y="{prob_top}" width="{:.1}" height="{prob_h}" fill="#ee9944" fill-opacity="0.35"/>"##,
            x_of(on),
            (x_of(off) - x_of(on)).max(0.5)
        );
    }

    let cols = plot_w as usize;
    let peak = p.samples.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    let mid = wave_top + wave_h / 2.0;
    let per = (p.samples.len() / cols.max(1)).max(1);
    let mut d = String::new();
    for (c, chunk) in p.samples.chunks(per).enumerate().take(cols) {
        let (lo, hi) = chunk.iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let x = MARGIN + plot_w * (c * per) as f64 / p.samples.len().max(1) as f64;
        let _ = write!(
            d,
            "M{x:.1} {:.1}V{:.1}",
            mid - hi / peak * wave_h / 2.0,
            mid - lo / peak * wave_h / 2.0
        );
    }
    let _ = write!(out, r##"<path d="{d}" stroke="#333" stroke-width="1" fill="none"/>"##);

    let base = prob_top + prob_h;
    let pts: Vec<String> = p
        .probs
        .iter()
        .enumerate()
        .map(|(i, v)| format!("{:.1},{:.1}", x_of((i as f64 + 0.5) * p.frame_hop_s), base - prob_h * v.clamp(0.0, 1.0)))
        .collect();
    let _ = write!(
        out,
        r##"<polyline points="{}" stroke="#cc3311" stroke-width="1.5" fill="none"/>"##,
        pts.join(" ")
    );
    let ty = base - prob_h * p.threshold;
    let _ = write!(
        out,
        r##"<line x1="{MARGIN}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#777" stroke-dasharray="4 3"/>"##,
        W - MARGIN
    );
    let _ = write!(
        out,
        r##"<rect x="{MARGIN}" y="{prob_top}" width="{plot_w}" height="{prob_h}" fill="none" stroke="#999"/>"##
    );
    let _ = write!(
        out,
        r#"<text x="{MARGIN}" y="{:.1}">0 s</text><text x="{:.1}" y="{:.1}" text-anchor="end">{dur:.2} s</text>"#,
        base + 14.0,
        W - MARGIN,
        base + 14.0
    );
    out.push_str("</svg>\n");
    out
}
