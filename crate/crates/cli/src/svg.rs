//! Minimal static SVG line charts, no dependencies.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use bess_core::bess::StepRecord;
use bess_core::optimizer::{SweepPoint, SweepSpec};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 55.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min).max(1e-12) * (WIDTH - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN
            - (v - self.y_min) / (self.y_max - self.y_min).max(1e-12) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.1},{:.1}", frame.x(x), frame.y(y)))
        .collect();
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
        coords.join(" ")
    );
}

fn chart_shell(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{title}</text>",
        WIDTH / 2.0
    );
    // Axes.
    let _ = writeln!(
        out,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    );
    for frac in [0.0, 0.5, 1.0] {
        let xv = frame.x_min + frac * (frame.x_max - frame.x_min);
        let yv = frame.y_min + frac * (frame.y_max - frame.y_min);
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>",
            frame.x(xv),
            HEIGHT - MARGIN + 16.0,
            xv
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>",
            MARGIN - 6.0,
            frame.y(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>",
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.0})\">{y_label}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    out
}

/// SoC trajectory with the 30-min band.
pub fn soc_chart(
    path: &Path,
    records: &[StepRecord<f64>],
    soc_min: f64,
    soc_max: f64,
) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let t_end = records.last().unwrap().t_s / 3600.0;
    let frame = Frame {
        x_min: 0.0,
        x_max: t_end.max(1e-9),
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut out = chart_shell("State of charge", "time [h]", "SoC [-]", &frame);
    for (level, color) in [(soc_min, "#cc3333"), (soc_max, "#cc3333")] {
        polyline(
            &mut out,
            &frame,
            &[(0.0, level), (t_end, level)],
            color,
        );
    }
    let soc: Vec<(f64, f64)> = records.iter().map(|r| (r.t_s / 3600.0, r.soc)).collect();
    polyline(&mut out, &frame, &soc, "#2255aa");
    out.push_str("</svg>\n");
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// NPV against rated energy, one line per C-rate, at the first cost level.
pub fn npv_chart(path: &Path, spec: &SweepSpec, points: &[SweepPoint]) -> Result<()> {
    if points.is_empty() || spec.cost_eur_per_kwh.is_empty() {
        return Ok(());
    }
    let xs: Vec<f64> = points.iter().map(|p| p.e_rated_wh / 1.0e6).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.npv_eur[0] / 1000.0).collect();
    let frame = Frame {
        x_min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
        x_max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        y_min: ys.iter().cloned().fold(f64::INFINITY, f64::min),
        y_max: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    };
    let title = format!(
        "NPV at {} EUR/kWh [kEUR]",
        spec.cost_eur_per_kwh[0]
    );
    let mut out = chart_shell(&title, "rated energy [MWh]", "NPV [kEUR]", &frame);
    let palette = ["#2255aa", "#aa5522", "#22aa55", "#aa2255", "#555555"];
    for (i, &c_rate) in spec.c_rates.iter().enumerate() {
        let mut series: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.c_rate == c_rate)
            .map(|p| (p.e_rated_wh / 1.0e6, p.npv_eur[0] / 1000.0))
            .collect();
        series.sort_by(|a, b| a.0.total_cmp(&b.0));
        polyline(&mut out, &frame, &series, palette[i % palette.len()]);
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
