//! Static SVG of per-site species marginals, one panel per requested time.
//! Pure function of the sweep data, so regenerating gives identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use masep::transition::DistributionResult;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 150.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const PANEL_GAP: f64 = 22.0;
const FOOTER: f64 = 36.0;

/// Occupancy probability per (species label, site) for one window sweep.
fn marginals(dist: &DistributionResult, left: i64, right: i64) -> BTreeMap<u32, Vec<f64>> {
    let sites = (right - left + 1) as usize;
    let mut per_species: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (state, &prob) in dist.space.iter_states().zip(&dist.probs) {
        let labels = state.species().labels();
        for (pos, label) in state.positions().iter().zip(labels) {
            let site = (pos - left) as usize;
            per_species.entry(label).or_insert_with(|| vec![0.0; sites])[site] += prob;
        }
    }
    per_species
}

pub fn marginals_svg(sweeps: &[(f64, DistributionResult)], left: i64, right: i64) -> String {
    let panels: Vec<(f64, BTreeMap<u32, Vec<f64>>)> = sweeps
        .iter()
        .map(|(t, dist)| (*t, marginals(dist, left, right)))
        .collect();
    let y_max = panels
        .iter()
        .flat_map(|(_, m)| m.values().flatten())
        .fold(1e-12f64, |acc, &v| acc.max(v));

    let width = MARGIN_L + PANEL_W + MARGIN_R;
    let height = MARGIN_T + panels.len() as f64 * (PANEL_H + PANEL_GAP) + FOOTER;
    let sites = (right - left + 1).max(2);
    let x_of = |site: i64| MARGIN_L + (site - left) as f64 / (sites - 1) as f64 * PANEL_W;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>");

    for (panel_idx, (t, per_species)) in panels.iter().enumerate() {
        let top = MARGIN_T + panel_idx as f64 * (PANEL_H + PANEL_GAP);
        let bottom = top + PANEL_H;
        let y_of = |v: f64| bottom - (v / y_max) * PANEL_H;

        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-weight=\"bold\">t = {t}</text>",
            MARGIN_L,
            top - 8.0
        );
        // Axes and horizontal guides.
        let _ = writeln!(
            svg,
            "<line x1=\"{l:.1}\" y1=\"{bottom:.1}\" x2=\"{r:.1}\" y2=\"{bottom:.1}\" \
             stroke=\"#333\" stroke-width=\"1\"/>",
            l = MARGIN_L,
            r = MARGIN_L + PANEL_W
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{l:.1}\" y1=\"{top:.1}\" x2=\"{l:.1}\" y2=\"{bottom:.1}\" \
             stroke=\"#333\" stroke-width=\"1\"/>",
            l = MARGIN_L
        );
        for frac in [0.5, 1.0] {
            let gy = bottom - frac * PANEL_H;
            let _ = writeln!(
                svg,
                "<line x1=\"{l:.1}\" y1=\"{gy:.1}\" x2=\"{r:.1}\" y2=\"{gy:.1}\" \
                 stroke=\"#ddd\" stroke-width=\"0.5\"/>",
                l = MARGIN_L,
                r = MARGIN_L + PANEL_W
            );
            let _ = writeln!(
                svg,
                "<text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"end\">{val:.3}</text>",
                tx = MARGIN_L - 6.0,
                ty = gy + 4.0,
                val = frac * y_max
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"end\">0</text>",
            tx = MARGIN_L - 6.0,
            ty = bottom + 4.0
        );

        // Site ticks, thinned to at most ten labels.
        let step = ((sites - 1) as f64 / 10.0).ceil().max(1.0) as i64;
        let mut site = left;
        while site <= right {
            let px = x_of(site);
            let _ = writeln!(
                svg,
                "<line x1=\"{px:.1}\" y1=\"{bottom:.1}\" x2=\"{px:.1}\" y2=\"{b2:.1}\" \
                 stroke=\"#333\" stroke-width=\"1\"/>",
                b2 = bottom + 4.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{px:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\">{site}</text>",
                ty = bottom + 16.0
            );
            site += step;
        }

        for (species_idx, (label, values)) in per_species.iter().enumerate() {
            let color = PALETTE[species_idx % PALETTE.len()];
            let mut points = String::new();
            for (site_idx, &v) in values.iter().enumerate() {
                let _ = write!(points, "{:.2},{:.2} ", x_of(left + site_idx as i64), y_of(v));
            }
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
                points.trim_end()
            );
            // Legend chip in the panel's top-right corner.
            let lx = MARGIN_L + PANEL_W - 70.0;
            let ly = top + 6.0 + species_idx as f64 * 14.0;
            let _ = writeln!(
                svg,
                "<rect x=\"{lx:.1}\" y=\"{ly:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>"
            );
            let _ = writeln!(
                svg,
                "<text x=\"{tx:.1}\" y=\"{ty:.1}\">species {label}</text>",
                tx = lx + 14.0,
                ty = ly + 9.0
            );
        }
    }

    let _ = writeln!(
        svg,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"middle\">site</text>",
        x = MARGIN_L + PANEL_W / 2.0,
        y = height - 12.0
    );
    svg.push_str("</svg>\n");
    svg
}
