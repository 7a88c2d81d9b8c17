//! Minimal static SVG rendering of survival step curves.

use mstu_core::KmFit;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f6fb4", "#d1495b", "#3a9e5f", "#8464a8"];

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Overlay plot of step survival curves, one per labelled fit.
pub fn survival_curves(fits: &[(String, &KmFit)]) -> String {
    let t_max = fits
        .iter()
        .flat_map(|(_, f)| f.event_times.last().copied())
        .fold(1.0f64, f64::max)
        * 1.05;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |t: f64| MARGIN_L + t / t_max * plot_w;
    let y = |s: f64| MARGIN_T + (1.0 - s) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B),
        fmt(WIDTH - MARGIN_R),
        fmt(HEIGHT - MARGIN_B)
    ));
    // ticks
    for k in 0..=5 {
        let s = k as f64 / 5.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"end\">{:.1}</text>\n",
            fmt(MARGIN_L - 5.0),
            fmt(y(s)),
            fmt(MARGIN_L),
            fmt(y(s)),
            fmt(MARGIN_L - 9.0),
            fmt(y(s) + 4.0),
            s
        ));
        let t = t_max * s;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{:.3}</text>\n",
            fmt(x(t)),
            fmt(HEIGHT - MARGIN_B),
            fmt(x(t)),
            fmt(HEIGHT - MARGIN_B + 5.0),
            fmt(x(t)),
            fmt(HEIGHT - MARGIN_B + 22.0),
            t
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\">time</text>\n",
        fmt(MARGIN_L + plot_w / 2.0),
        fmt(HEIGHT - 14.0)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">survival</text>\n",
        fmt(MARGIN_T + plot_h / 2.0),
        fmt(MARGIN_T + plot_h / 2.0)
    ));

    for (i, (label, fit)) in fits.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = format!("M {} {}", fmt(x(0.0)), fmt(y(1.0)));
        let mut s_prev = 1.0;
        for (k, &t) in fit.event_times.iter().enumerate() {
            d.push_str(&format!(" L {} {}", fmt(x(t)), fmt(y(s_prev))));
            s_prev = fit.survival[k];
            d.push_str(&format!(" L {} {}", fmt(x(t)), fmt(y(s_prev))));
        }
        d.push_str(&format!(" L {} {}", fmt(x(t_max)), fmt(y(s_prev))));
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n"
        ));
        // legend
        let ly = MARGIN_T + 18.0 + 20.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"3\"/>\n<text x=\"{}\" y=\"{}\" font-size=\"14\">{label}</text>\n",
            fmt(WIDTH - 200.0),
            fmt(ly),
            fmt(WIDTH - 170.0),
            fmt(ly),
            fmt(WIDTH - 162.0),
            fmt(ly + 5.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
