use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::{LocalTrack, TaskMetrics};
use crate::sim::scenario::Task;

/// Printed under every table.
pub const FOOTER: &str = "Deviations are population standard deviations over the maneuver segment.";

const TASK1_HEADER: [&str; 4] = [
    "Platform used",
    "Hovering distance to origin (m)",
    "Height deviation (m)",
    "Trail time length (s)",
];
const LONGITUDINAL_HEADER: [&str; 4] = [
    "Platform used",
    "Lateral deviation (m)",
    "Height deviation (m)",
    "Trail time length (s)",
];

pub fn table_caption(task: Task) -> String {
    format!("{task}: {} flown trails information", task.title())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Markdown tables, one per task present in `metrics`, in task order.
pub fn render_tables(metrics: &[TaskMetrics]) -> String {
    let mut out = String::new();
    for task in Task::ALL {
        let rows: Vec<&TaskMetrics> = metrics.iter().filter(|m| m.task == task).collect();
        if rows.is_empty() {
            continue;
        }
        let header = if task.is_longitudinal() {
            LONGITUDINAL_HEADER
        } else {
            TASK1_HEADER
        };
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "{}\n", table_caption(task));
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for m in rows {
            let first = if task.is_longitudinal() {
                m.lateral_deviation_m
            } else {
                m.hover_distance_to_origin_m
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.4} |",
                m.platform_tag,
                fmt_opt(first),
                m.height_deviation_m,
                m.trail_time_s
            );
        }
        let _ = writeln!(out, "\n{FOOTER}");
    }
    out
}

/// The plot series written next to a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    TX,
    TY,
    TZ,
    XY,
    XYZ,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 5] = [
        SeriesKind::TX,
        SeriesKind::TY,
        SeriesKind::TZ,
        SeriesKind::XY,
        SeriesKind::XYZ,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            SeriesKind::TX => "t_x.csv",
            SeriesKind::TY => "t_y.csv",
            SeriesKind::TZ => "t_z.csv",
            SeriesKind::XY => "x_y.csv",
            SeriesKind::XYZ => "x_y_z.csv",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            SeriesKind::TX => &["t", "x"],
            SeriesKind::TY => &["t", "y"],
            SeriesKind::TZ => &["t", "z"],
            SeriesKind::XY => &["x", "y"],
            SeriesKind::XYZ => &["x", "y", "z"],
        }
    }
}

/// Writes every series of `track` into `dir` and returns the file names.
pub fn write_series(track: &LocalTrack, dir: &Path) -> io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for kind in SeriesKind::ALL {
        let mut w = csv::Writer::from_path(dir.join(kind.file_name()))?;
        w.write_record(kind.columns())?;
        for s in &track.samples {
            let values: Vec<f64> = kind
                .columns()
                .iter()
                .map(|c| match *c {
                    "t" => s.t,
                    "x" => s.x,
                    "y" => s.y,
                    _ => s.z,
                })
                .collect();
            w.write_record(values.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        names.push(kind.file_name().to_string());
    }
    Ok(names)
}

/// Reads one series back as rows of values.
pub fn read_series(dir: &Path, kind: SeriesKind) -> io::Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(dir.join(kind.file_name()))?;
    let header = r.headers()?.clone();
    if header.iter().ne(kind.columns().iter().copied()) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
