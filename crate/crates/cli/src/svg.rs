//! Minimal SVG emitter: one panel per metric, a quartile box per sigma and
//! a line through the medians.

use std::fmt::Write;

use crate::compare::{CompareReport, Quartiles};

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;
const METRICS: [&str; 4] = ["mig", "recon", "kl", "tc"];
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn quartiles_of(report: &CompareReport, metric: usize) -> Vec<Option<Quartiles>> {
    report
        .groups
        .iter()
        .map(|g| match metric {
            0 => g.mig,
            1 => g.recon,
            2 => g.kl,
            _ => g.tc,
        })
        .collect()
}

fn panel(out: &mut String, report: &CompareReport, metric: usize, left: f64) {
    let boxes = quartiles_of(report, metric);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for g in &report.groups {
        for &v in &g.samples[metric] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let top = MARGIN;
    let bottom = MARGIN + PANEL_H;
    let y = |v: f64| bottom - (v - lo) / (hi - lo) * PANEL_H;
    let slot = PANEL_W / report.groups.len().max(1) as f64;
    let x = |i: usize| left + slot * (i as f64 + 0.5);

    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        left + PANEL_W / 2.0,
        top - 10.0,
        METRICS[metric]
    );
    for (v, anchor) in [(lo, bottom), (hi, top)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{v:.3}</text>"#,
            left - 4.0,
            anchor + 4.0
        );
    }
    let mut medians = Vec::new();
    for (i, (g, q)) in report.groups.iter().zip(&boxes).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = x(i);
        let _ = writeln!(
            out,
            r#"<text x="{cx}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            bottom + 14.0,
            g.sigma
        );
        for &v in &g.samples[metric] {
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="2" fill="{color}" opacity="0.5"/>"#,
                cx + slot * 0.25,
                y(v)
            );
        }
        if let Some(q) = q {
            let w = slot * 0.3;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{w}" height="{}" fill="{color}" fill-opacity="0.3" stroke="{color}"/>"#,
                cx - w / 2.0,
                y(q.q3),
                (y(q.q1) - y(q.q3)).max(0.5)
            );
            medians.push(format!("{cx},{}", y(q.median)));
        }
    }
    if medians.len() >= 2 {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="black"/>"#,
            medians.join(" ")
        );
    }
}

pub fn render(report: &CompareReport) -> String {
    let width = METRICS.len() as f64 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for m in 0..METRICS.len() {
        panel(&mut out, report, m, MARGIN + m as f64 * (PANEL_W + MARGIN));
    }
    let legend_y = PANEL_H + 2.0 * MARGIN + 15.0;
    for (i, g) in report.groups.iter().enumerate() {
        let lx = MARGIN + i as f64 * 90.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{legend_y}" font-size="11">sigma={}</text>"#,
            legend_y - 9.0,
            PALETTE[i % PALETTE.len()],
            lx + 14.0,
            g.sigma
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::{compare, parse_aggregate};

    #[test]
    fn renders_one_box_per_group_and_metric() {
        let csv = "sigma,seed,mig,recon,kl,tc,seconds,status\n0,0,0.3,10,3,1,1,ok\n0,1,0.2,11,4,2,1,ok\n0.9,0,0.1,12,5,3,1,ok\n";
        let svg = render(&compare(&parse_aggregate(csv).unwrap()));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("fill-opacity").count(), 8);
        assert_eq!(svg.matches("<polyline").count(), 4);
    }
}
