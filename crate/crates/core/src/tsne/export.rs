//! Embedding exports: a flat CSV and a dependency-free SVG scatter that
//! shows the three coordinate planes side by side.

use super::Embedding;
use crate::error::Result;
use std::fmt::Write as _;

/// CSV with header `x,y,z,label` (or `c0,c1,...` for other dimensions).
pub fn embedding_csv(embedding: &Embedding) -> String {
    let mut out = String::new();
    if embedding.dims == 3 {
        out.push_str("x,y,z,label\n");
    } else {
        let header: Vec<String> = (0..embedding.dims).map(|i| format!("c{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label\n");
    }
    for i in 0..embedding.n {
        for (k, v) in embedding.point(i).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push(',');
        if let Some(label) = &embedding.labels[i] {
            out.push_str(label);
        }
        out.push('\n');
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const PANEL: f64 = 260.0;
const MARGIN: f64 = 40.0;

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo) * PANEL
    } else {
        PANEL / 2.0
    }
}

/// Orthographic projections of a 3D embedding onto the xy, xz and yz
/// planes, one color per label. Byte-identical for identical embeddings.
pub fn embedding_svg(embedding: &Embedding) -> Result<String> {
    if embedding.dims != 3 {
        return Err(crate::error::Error::Config(format!(
            "the scatter plot expects 3 dimensions, got {}",
            embedding.dims
        )));
    }
    // First-appearance label order fixes colors deterministically.
    let mut label_order: Vec<String> = Vec::new();
    for label in embedding.labels.iter().flatten() {
        if !label_order.iter().any(|l| l == label) {
            label_order.push(label.clone());
        }
    }
    let color_of = |label: &Option<String>| -> &str {
        match label {
            Some(l) => {
                let idx = label_order.iter().position(|x| x == l).unwrap_or(0);
                PALETTE[idx % PALETTE.len()]
            }
            None => "#333333",
        }
    };

    let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for i in 0..embedding.n {
        for (k, &v) in embedding.point(i).iter().enumerate() {
            bounds[k].0 = bounds[k].0.min(v);
            bounds[k].1 = bounds[k].1.max(v);
        }
    }

    let width = 3.0 * PANEL + 4.0 * MARGIN;
    let height = PANEL + 2.0 * MARGIN + 20.0 * (label_order.len() as f64 + 1.0);
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let planes = [(0usize, 1usize, "x-y"), (0, 2, "x-z"), (1, 2, "y-z")];
    for (panel, (ax, ay, title)) in planes.iter().enumerate() {
        let ox = MARGIN + panel as f64 * (PANEL + MARGIN);
        let oy = MARGIN;
        let _ = write!(
            svg,
            "<rect x=\"{ox:.1}\" y=\"{oy:.1}\" width=\"{PANEL:.0}\" height=\"{PANEL:.0}\" fill=\"none\" stroke=\"#999999\"/>\n"
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{title}</text>\n",
            ox + PANEL / 2.0,
            oy - 8.0
        );
        for i in 0..embedding.n {
            let p = embedding.point(i);
            let sx = ox + scale(p[*ax], bounds[*ax].0, bounds[*ax].1);
            let sy = oy + PANEL - scale(p[*ay], bounds[*ay].0, bounds[*ay].1);
            let _ = write!(
                svg,
                "<circle cx=\"{sx:.2}\" cy=\"{sy:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
                color_of(&embedding.labels[i])
            );
        }
    }

    let legend_y = MARGIN + PANEL + 24.0;
    for (idx, label) in label_order.iter().enumerate() {
        let y = legend_y + idx as f64 * 20.0;
        let _ = write!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"5\" fill=\"{}\"/>\n",
            MARGIN + 5.0,
            PALETTE[idx % PALETTE.len()]
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            MARGIN + 16.0,
            y + 4.0,
            xml_escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
