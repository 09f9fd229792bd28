//! SVG plots from the run and sweep CSVs.
//!
//! The CSV kind is recognised from its header: per-step rows give a flight
//! profile sheet, per-episode summaries give reward curves, and sweep rows
//! give transport reward and handover probability against fleet size.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Steps,
    Summary,
    Sweep,
}

impl CsvKind {
    const ALL: [CsvKind; 3] = [CsvKind::Steps, CsvKind::Summary, CsvKind::Sweep];

    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            CsvKind::Steps => &[
                "episode",
                "time_s",
                "uav",
                "x",
                "y",
                "z",
                "roll",
                "pitch",
                "p",
                "q",
                "r",
                "rate_mbps",
            ],
            CsvKind::Summary => &[
                "episode",
                "total_r_tran",
                "total_r_tele",
                "total_c_safe",
                "total_c_ho",
            ],
            CsvKind::Sweep => &[
                "variant",
                "num_uavs",
                "transport_reward_mean",
                "handover_probability_mean",
            ],
        }
    }
}

/// Parsed CSV with named columns.
struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, RunError> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self { headers, rows })
    }

    fn col(&self, name: &str) -> usize {
        self.headers
            .iter()
            .position(|h| h == name)
            .expect("column checked by classify")
    }

    fn num(&self, row: &csv::StringRecord, name: &str) -> Result<f64, RunError> {
        let raw = row.get(self.col(name)).unwrap_or("");
        raw.parse::<f64>()
            .map_err(|_| RunError::Schema(format!("column `{name}`: `{raw}` is not a number")))
    }

    fn text<'a>(&self, row: &'a csv::StringRecord, name: &str) -> &'a str {
        row.get(self.col(name)).unwrap_or("")
    }
}

/// Which plot a header supports. Errors name the columns missing from the
/// closest kind.
pub fn classify(headers: &[String]) -> Result<CsvKind, RunError> {
    let missing = |k: CsvKind| -> Vec<&str> {
        k.required_columns()
            .iter()
            .copied()
            .filter(|c| !headers.iter().any(|h| h == c))
            .collect()
    };
    let best = CsvKind::ALL
        .into_iter()
        .min_by_key(|&k| missing(k).len())
        .expect("nonempty");
    let m = missing(best);
    if m.is_empty() {
        Ok(best)
    } else {
        Err(RunError::Schema(format!(
            "missing columns {m:?} for a {best:?} plot"
        )))
    }
}

type Series = Vec<(String, Vec<(f64, f64)>)>;

fn plot_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Plot(e.to_string())
}

fn bounds(series: &Series, extra_y: &[f64]) -> ((f64, f64), (f64, f64)) {
    let pts = series
        .iter()
        .flat_map(|(_, p)| p.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    for y in extra_y {
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = hi - lo;
        let p = if span > 0.0 {
            0.05 * span
        } else {
            lo.abs().max(1.0) * 0.05
        };
        (lo - p, hi + p)
    };
    (pad(x0, x1), pad(y0, y1))
}

/// Line panel with one series per entry. `guides` are horizontal dashed
/// reference lines.
fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    series: &Series,
    guides: &[f64],
) -> Result<(), RunError>
where
    DB::ErrorType: 'static,
{
    let ((x0, x1), (y0, y1)) = bounds(series, guides);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(plot_err)?;
    for g in guides {
        chart
            .draw_series(DashedLineSeries::new(
                vec![(x0, *g), (x1, *g)],
                4,
                4,
                BLACK.stroke_width(1),
            ))
            .map_err(plot_err)?;
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.as_str())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
            });
        if pts.len() <= 40 {
            chart
                .draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled())))
                .map_err(plot_err)?;
        }
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    Ok(())
}

fn by_key<K: Ord, F>(
    table: &Table,
    key: F,
    x: &str,
    y: &str,
) -> Result<BTreeMap<K, Vec<(f64, f64)>>, RunError>
where
    F: Fn(&csv::StringRecord) -> K,
{
    let mut out: BTreeMap<K, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &table.rows {
        out.entry(key(row))
            .or_default()
            .push((table.num(row, x)?, table.num(row, y)?));
    }
    Ok(out)
}

fn per_uav(table: &Table, x: &str, y: &str, scale: f64, suffix: &str) -> Result<Series, RunError> {
    Ok(by_key(
        table,
        |r| table.text(r, "uav").parse::<usize>().unwrap_or(0),
        x,
        y,
    )?
    .into_iter()
    .map(|(uav, pts)| {
        (
            format!("UAV {uav}{suffix}"),
            pts.into_iter().map(|(a, b)| (a, b * scale)).collect(),
        )
    })
    .collect())
}

fn steps_sheet(table: &Table, path: &Path) -> Result<(), RunError> {
    // Plot the last episode in the file.
    let last = table
        .rows
        .iter()
        .map(|r| table.text(r, "episode").to_string())
        .max_by_key(|e| e.parse::<u64>().unwrap_or(0))
        .unwrap_or_default();
    let t = Table {
        headers: table.headers.clone(),
        rows: table
            .rows
            .iter()
            .filter(|r| table.text(r, "episode") == last)
            .cloned()
            .collect(),
    };
    let deg = 180.0 / std::f64::consts::PI;
    let root = SVGBackend::new(path, (1500, 900)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((2, 3));
    panel(
        &areas[0],
        "Ground track",
        "x (m)",
        "y (m)",
        &per_uav(&t, "x", "y", 1.0, "")?,
        &[],
    )?;
    panel(
        &areas[1],
        "Altitude",
        "time (s)",
        "z (m)",
        &per_uav(&t, "time_s", "z", 1.0, "")?,
        &[],
    )?;
    let mut tilt = per_uav(&t, "time_s", "roll", deg, " roll")?;
    tilt.extend(per_uav(&t, "time_s", "pitch", deg, " pitch")?);
    panel(
        &areas[2],
        "Roll and pitch",
        "time (s)",
        "angle (deg)",
        &tilt,
        &[-15.0, 15.0],
    )?;
    let mut rates = per_uav(&t, "time_s", "p", deg, " p")?;
    rates.extend(per_uav(&t, "time_s", "q", deg, " q")?);
    rates.extend(per_uav(&t, "time_s", "r", deg, " r")?);
    panel(
        &areas[3],
        "Body rates",
        "time (s)",
        "rate (deg/s)",
        &rates,
        &[],
    )?;
    panel(
        &areas[4],
        "Serving-link rate",
        "time (s)",
        "rate (Mbps)",
        &per_uav(&t, "time_s", "rate_mbps", 1.0, "")?,
        &[],
    )?;
    panel(
        &areas[5],
        "Track (x-z)",
        "x (m)",
        "z (m)",
        &per_uav(&t, "x", "z", 1.0, "")?,
        &[],
    )?;
    root.present().map_err(plot_err)
}

fn summary_sheet(table: &Table, path: &Path) -> Result<(), RunError> {
    let root = SVGBackend::new(path, (1200, 800)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((2, 2));
    let cols = [
        ("total_r_tran", "Transport reward"),
        ("total_r_tele", "Telecom reward"),
        ("total_c_safe", "Safety cost"),
        ("total_c_ho", "Handover cost"),
    ];
    for (area, (col, title)) in areas.iter().zip(cols) {
        let pts = table
            .rows
            .iter()
            .map(|r| Ok((table.num(r, "episode")?, table.num(r, col)?)))
            .collect::<Result<Vec<_>, RunError>>()?;
        panel(
            area,
            title,
            "episode",
            "total",
            &vec![(col.to_string(), pts)],
            &[],
        )?;
    }
    root.present().map_err(plot_err)
}

fn sweep_sheet(table: &Table, path: &Path) -> Result<(), RunError> {
    let root = SVGBackend::new(path, (1200, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let areas = root.split_evenly((1, 2));
    let series = |y: &str| -> Result<Series, RunError> {
        Ok(by_key(
            table,
            |r| table.text(r, "variant").to_string(),
            "num_uavs",
            y,
        )?
        .into_iter()
        .map(|(v, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (v, pts)
        })
        .collect())
    };
    panel(
        &areas[0],
        "Transport reward per UAV",
        "number of UAVs",
        "reward",
        &series("transport_reward_mean")?,
        &[],
    )?;
    panel(
        &areas[1],
        "Handover probability",
        "number of UAVs",
        "probability",
        &series("handover_probability_mean")?,
        &[],
    )?;
    root.present().map_err(plot_err)
}

/// Render one SVG per input CSV into `out_dir`. Returns the written paths.
pub fn emit_plots(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for p in csv_paths {
        let table = Table::read(p)?;
        let kind = classify(&table.headers)
            .map_err(|e| RunError::Schema(format!("{}: {e}", p.display())))?;
        if table.rows.is_empty() {
            return Err(RunError::Schema(format!("{}: no data rows", p.display())));
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
        let (suffix, draw): (&str, fn(&Table, &Path) -> Result<(), RunError>) = match kind {
            CsvKind::Steps => ("profile", steps_sheet),
            CsvKind::Summary => ("rewards", summary_sheet),
            CsvKind::Sweep => ("sweep", sweep_sheet),
        };
        let out = out_dir.join(format!("{stem}_{suffix}.svg"));
        draw(&table, &out)?;
        written.push(out);
    }
    Ok(written)
}
