//! Static SVG line plots of CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::io::Table;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("unknown column `{0}`")]
    Column(String),
    #[error("nothing to plot: {0}")]
    Empty(&'static str),
    #[error("cannot draw {path}: {message}")]
    Draw { path: String, message: String },
}

/// What to draw from a table.
#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    pub x: Option<String>,
    /// Columns to draw; empty means every numeric column except x and the group.
    pub y: Vec<String>,
    /// Column whose distinct values split the rows into separate curves.
    pub group: Option<String>,
    pub log_y: bool,
    pub title: String,
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn series(table: &Table, spec: &PlotSpec) -> Result<Vec<Series>, PlotError> {
    let x_name = spec.x.clone().or_else(|| table.columns.first().cloned()).ok_or(PlotError::Empty("no columns"))?;
    let xs = table.column(&x_name).ok_or_else(|| PlotError::Column(x_name.clone()))?;
    let y_names: Vec<String> = if spec.y.is_empty() {
        table
            .columns
            .iter()
            .filter(|c| **c != x_name && Some(*c) != spec.group.as_ref())
            .filter(|c| table.column(c).is_some_and(|v| v.iter().any(|x| x.is_finite())))
            .cloned()
            .collect()
    } else {
        spec.y.clone()
    };
    let groups: Vec<String> = match &spec.group {
        Some(g) => {
            let k = table.index_of(g).ok_or_else(|| PlotError::Column(g.clone()))?;
            table.rows.iter().map(|r| r[k].clone()).collect()
        }
        None => vec![String::new(); table.rows.len()],
    };
    let mut out = Vec::new();
    for y_name in &y_names {
        let ys = table.column(y_name).ok_or_else(|| PlotError::Column(y_name.clone()))?;
        // BTreeMap keys sort as text; keep first-appearance order instead.
        let mut order: Vec<&str> = Vec::new();
        let mut by_group: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for ((x, y), g) in xs.iter().zip(&ys).zip(&groups) {
            let keep = x.is_finite() && y.is_finite() && (!spec.log_y || *y > 0.0);
            if !by_group.contains_key(g.as_str()) {
                order.push(g);
            }
            let pts = by_group.entry(g).or_default();
            if keep {
                pts.push((*x, *y));
            }
        }
        for g in order {
            let label = match (&spec.group, y_names.len()) {
                (Some(name), 1) => format!("{name} = {g}"),
                (Some(name), _) => format!("{y_name}, {name} = {g}"),
                (None, _) => y_name.clone(),
            };
            out.push(Series { label, points: by_group.remove(g).unwrap_or_default() });
        }
    }
    out.retain(|s| !s.points.is_empty());
    if out.is_empty() {
        return Err(PlotError::Empty("no finite points"));
    }
    Ok(out)
}

fn bounds(series: &[Series], log_y: bool) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if log_y {
        (y0, y1) = (y0 / 1.5, y1 * 1.5);
    } else {
        let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 1.0_f64.max(y0.abs()) };
        (y0, y1) = (y0 - pad, y1 + pad);
    }
    ((x0, x1), (y0, y1))
}

/// Renders the table as an SVG document.
pub fn render_svg(table: &Table, spec: &PlotSpec) -> Result<String, PlotError> {
    let series = series(table, spec)?;
    let ((x0, x1), (y0, y1)) = bounds(&series, spec.log_y);
    let x_label = spec.x.clone().unwrap_or_else(|| table.columns[0].clone());
    let mut svg = String::new();
    let draw = |e: &dyn std::fmt::Display| PlotError::Draw { path: "<svg>".into(), message: e.to_string() };
    {
        let root = SVGBackend::with_string(&mut svg, (960, 640)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| draw(&e))?;
        let mut builder = ChartBuilder::on(&root);
        builder.caption(&spec.title, ("sans-serif", 22)).margin(16).x_label_area_size(48).y_label_area_size(90);
        macro_rules! finish {
            ($chart:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(x_label.as_str())
                    .x_label_formatter(&|v| format!("{v:.4e}"))
                    .y_label_formatter(&|v| format!("{v:.2e}"))
                    .draw()
                    .map_err(|e| draw(&e))?;
                for (k, s) in series.iter().enumerate() {
                    let color = Palette99::pick(k).to_rgba();
                    chart
                        .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                        .map_err(|e| draw(&e))?
                        .label(s.label.clone())
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
                }
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(|e| draw(&e))?;
            }};
        }
        if spec.log_y {
            finish!(builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).map_err(|e| draw(&e))?);
        } else {
            finish!(builder.build_cartesian_2d(x0..x1, y0..y1).map_err(|e| draw(&e))?);
        }
        root.present().map_err(|e| draw(&e))?;
    }
    Ok(svg)
}

/// Renders the table and writes the SVG to `path`.
pub fn plot_to_file(table: &Table, spec: &PlotSpec, path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(table, spec)?;
    crate::io::write_text(path, &svg)
        .map_err(|e| PlotError::Draw { path: path.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new(&["detuning_hz", "omega_hz", "abs2"]);
        for d in [-1.0, 1.0] {
            for k in 1..=5 {
                t.push_nums(&[d, k as f64, (k as f64) * (2.0 + d)]);
            }
        }
        t
    }

    #[test]
    fn grouped_series_become_separate_curves() {
        let spec = PlotSpec {
            x: Some("omega_hz".into()),
            y: vec!["abs2".into()],
            group: Some("detuning_hz".into()),
            log_y: true,
            title: "family".into(),
        };
        let s = series(&table(), &spec).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, "detuning_hz = -1e0");
        let svg = render_svg(&table(), &spec).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }

    #[test]
    fn unknown_column_is_reported() {
        let spec = PlotSpec { y: vec!["nope".into()], ..Default::default() };
        assert!(matches!(render_svg(&table(), &spec), Err(PlotError::Column(_))));
    }
}
