//! Static SVG charts of benchmark reports: one panel per (station, variable),
//! RMSE bars grouped by missingness level, one bar colour per method.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::eval::{EvalCell, EvalReport};
use crate::model::{MethodTag, Variable};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("report has no cells to plot")]
    EmptyReport,
    #[error("report is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 280.0;
const COLUMNS: usize = 2;
const LEGEND_H: f64 = 40.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;

fn colour(m: MethodTag) -> &'static str {
    match m {
        MethodTag::Nr => "#4e79a7",
        MethodTag::Gc => "#f28e2b",
        MethodTag::Nrgc => "#59a14f",
        MethodTag::Nn => "#e15759",
        MethodTag::LinearInterp => "#9c9c9c",
    }
}

fn label(m: MethodTag) -> &'static str {
    match m {
        MethodTag::Nr => "NR",
        MethodTag::Gc => "GC",
        MethodTag::Nrgc => "NRGC",
        MethodTag::Nn => "NN",
        MethodTag::LinearInterp => "Linear",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round axis maximum: 1, 2 or 5 times a power of ten.
fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * p)
        .find(|&c| c >= v)
        .unwrap_or(10.0 * p)
}

#[derive(Deserialize)]
struct CellsOnly {
    cells: Vec<EvalCell>,
}

/// Reads the cells of a serialized benchmark report.
pub fn cells_from_json(json: &str) -> Result<Vec<EvalCell>, PlotError> {
    Ok(serde_json::from_str::<CellsOnly>(json)?.cells)
}

/// Renders benchmark cells as a self-contained SVG document.
pub fn render_svg(cells: &[EvalCell]) -> Result<String, PlotError> {
    if cells.is_empty() {
        return Err(PlotError::EmptyReport);
    }
    let mut panels: BTreeMap<(String, Variable), Vec<&EvalCell>> = BTreeMap::new();
    for c in cells {
        panels.entry((c.station_id.clone(), c.variable)).or_default().push(c);
    }
    let mut methods: Vec<MethodTag> = Vec::new();
    for c in cells {
        if !methods.contains(&c.method) {
            methods.push(c.method);
        }
    }

    let cols = COLUMNS.min(panels.len());
    let rows = panels.len().div_ceil(cols);
    let width = cols as f64 * PANEL_W;
    let height = LEGEND_H + rows as f64 * PANEL_H;

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();

    writeln!(w, r#"<g class="legend">"#).unwrap();
    for (i, m) in methods.iter().enumerate() {
        let x = 16.0 + i as f64 * 90.0;
        writeln!(w, r#"<rect x="{x:.1}" y="14" width="12" height="12" fill="{}"/>"#, colour(*m)).unwrap();
        writeln!(w, r#"<text x="{:.1}" y="24">{}</text>"#, x + 18.0, label(*m)).unwrap();
    }
    writeln!(w, "</g>").unwrap();

    for (p, ((station, variable), cells)) in panels.iter().enumerate() {
        let ox = (p % cols) as f64 * PANEL_W;
        let oy = LEGEND_H + (p / cols) as f64 * PANEL_H;
        let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
        let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
        let x0 = ox + MARGIN_L;
        let y0 = oy + MARGIN_T + plot_h;

        let mut levels: Vec<f64> = cells.iter().map(|c| c.level).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let ymax = nice_ceiling(cells.iter().filter_map(|c| c.rmse).fold(0.0, f64::max));

        writeln!(w, r#"<g class="panel" data-station="{}" data-variable="{variable}">"#, escape(station)).unwrap();
        writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold">{} {} RMSE ({})</text>"#,
            x0,
            oy + 20.0,
            escape(station),
            variable,
            variable.unit()
        )
        .unwrap();
        for t in 0..=4 {
            let v = ymax * t as f64 / 4.0;
            let y = y0 - plot_h * t as f64 / 4.0;
            writeln!(
                w,
                r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
                x0 + plot_w
            )
            .unwrap();
            writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, tick(v, ymax))
                .unwrap();
        }
        writeln!(w, r##"<line x1="{x0:.1}" y1="{y0:.1}" x2="{:.1}" y2="{y0:.1}" stroke="#333333"/>"##, x0 + plot_w)
            .unwrap();
        writeln!(w, r##"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{:.1}" stroke="#333333"/>"##, y0 - plot_h)
            .unwrap();

        let group_w = plot_w / levels.len() as f64;
        let bar_w = group_w * 0.8 / methods.len() as f64;
        for (g, level) in levels.iter().enumerate() {
            let gx = x0 + g as f64 * group_w;
            writeln!(
                w,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}%</text>"#,
                gx + group_w / 2.0,
                y0 + 16.0,
                pct(*level)
            )
            .unwrap();
            for (mi, m) in methods.iter().enumerate() {
                let Some(r) = cells
                    .iter()
                    .find(|c| c.level == *level && c.method == *m)
                    .and_then(|c| c.rmse)
                else {
                    continue;
                };
                let h = plot_h * r / ymax;
                writeln!(
                    w,
                    r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {}% {:.6}</title></rect>"#,
                    gx + group_w * 0.1 + mi as f64 * bar_w,
                    y0 - h,
                    bar_w,
                    h,
                    colour(*m),
                    label(*m),
                    pct(*level),
                    r
                )
                .unwrap();
            }
        }
        writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">missingness level</text>"#,
            x0 + plot_w / 2.0,
            y0 + 34.0
        )
        .unwrap();
        writeln!(w, "</g>").unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

fn pct(level: f64) -> String {
    let p = level * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round() as i64)
    } else {
        format!("{p:.1}")
    }
}

fn tick(v: f64, max: f64) -> String {
    let decimals = if max >= 10.0 { 0 } else { (2.0 - max.log10().floor()).max(1.0) as usize };
    format!("{v:.decimals$}")
}

/// Writes the chart of `report` to `path`.
pub fn emit_plot(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), PlotError> {
    let svg = render_svg(&report.cells)?;
    std::fs::write(path.as_ref(), svg).map_err(|source| PlotError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}
