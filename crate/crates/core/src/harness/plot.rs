//! SVG trajectory plots. Rendering reads the trace only; numbers written
//! elsewhere never depend on it.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use super::output::OutputError;
use super::run::TraceRow;

fn by_node(trace: &[TraceRow]) -> BTreeMap<usize, Vec<&TraceRow>> {
    let mut map: BTreeMap<usize, Vec<&TraceRow>> = BTreeMap::new();
    for r in trace {
        map.entry(r.node).or_default().push(r);
    }
    map
}

fn plot_err(path: &Path) -> impl Fn(String) -> OutputError + '_ {
    move |msg| OutputError::Plot {
        path: path.display().to_string(),
        msg,
    }
}

/// log10 of each node's relative error against iteration.
pub fn error_plot(trace: &[TraceRow], path: &Path) -> Result<(), OutputError> {
    let err = plot_err(path);
    let horizon = trace.iter().map(|r| r.t).max().unwrap_or(1).max(1);
    let floor = 1e-8f64;
    let lg = |e: f64| e.max(floor).log10();
    let (lo, hi) = trace.iter().fold((0.0f64, -2.0f64), |(lo, hi), r| {
        (lo.min(lg(r.error)), hi.max(lg(r.error)))
    });
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("relative estimation error (log10)", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0u64..horizon, (lo - 0.2)..(hi + 0.2))
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, rows) in by_node(trace).values().enumerate() {
        let color = Palette99::pick(i).mix(0.7);
        chart
            .draw_series(LineSeries::new(
                rows.iter().map(|r| (r.t, lg(r.error))),
                color.stroke_width(1),
            ))
            .map_err(|e| err(e.to_string()))?;
    }
    root.present().map_err(|e| err(e.to_string()))
}

/// Flags as 0/1 step functions, one lane per node.
pub fn flag_plot(trace: &[TraceRow], path: &Path) -> Result<(), OutputError> {
    let err = plot_err(path);
    let horizon = trace.iter().map(|r| r.t).max().unwrap_or(1).max(1);
    let nodes = by_node(trace);
    let lanes = nodes.len().max(1) as f64;
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("attack flags per node", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0u64..horizon, 0.0..lanes)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc("node lane")
        .draw()
        .map_err(|e| err(e.to_string()))?;
    for (i, rows) in nodes.values().enumerate() {
        let base = i as f64;
        let mut pts = Vec::with_capacity(rows.len() * 2);
        let mut prev: Option<f64> = None;
        for r in rows {
            let y = base + 0.8 * r.flag as f64;
            if let Some(p) = prev {
                if p != y {
                    pts.push((r.t, p));
                }
            }
            pts.push((r.t, y));
            prev = Some(y);
        }
        let color = if rows.iter().any(|r| r.flag != 0) { RED } else { BLUE };
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?;
    }
    root.present().map_err(|e| err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_render_as_steps() {
        let trace: Vec<TraceRow> = (0..10)
            .map(|t| TraceRow {
                t,
                node: 0,
                error: 1.0 / (t + 1) as f64,
                flag: (t >= 4) as u8,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("flags.svg");
        flag_plot(&trace, &p).unwrap();
        error_plot(&trace, &dir.path().join("errors.svg")).unwrap();
        let svg = std::fs::read_to_string(&p).unwrap();
        assert!(svg.contains("<svg"));
        assert!(svg.contains("polyline"));
    }
}
