//! Files written by a run: CSV tables, JSON records, SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::calib::{write_calibration_csv, CalibrationReport};
use crate::error::Result;
use crate::experiment::{ResultRecord, Table1Row};
use crate::optim::Task;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// One row per evaluation point: inputs, target, predictive mean and spread.
pub fn band_csv(record: &ResultRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let classification = record.config.task == Task::Classification;
    let mut header: Vec<&str> = if classification { vec!["x1", "x2"] } else { vec!["x"] };
    header.extend(["target", "mean", "std"]);
    if classification {
        header.push("probability");
    }
    w.write_record(&header)?;
    for p in &record.points {
        let mut row: Vec<String> = p.x.iter().map(f64::to_string).collect();
        row.extend([p.target.to_string(), p.mean.to_string(), p.std.to_string()]);
        if let Some(q) = p.probability {
            row.push(q.to_string());
        }
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// `trace,epoch,loss` rows; epochs count from 1.
pub fn traces_csv(traces: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trace", "epoch", "loss"])?;
    for (t, trace) in traces.iter().enumerate() {
        for (e, loss) in trace.iter().enumerate() {
            w.write_record([t.to_string(), (e + 1).to_string(), loss.to_string()])?;
        }
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn calibration_csv(report: &CalibrationReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_calibration_csv(&mut buf, report)?;
    Ok(buf)
}

pub fn record_json(record: &ResultRecord) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(record)?;
    s.push('\n');
    Ok(s.into_bytes())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn path(&self, pts: impl Iterator<Item = (f64, f64)>) -> String {
        let mut d = String::new();
        for (i, (x, y)) in pts.enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, self.px(x), self.py(y));
        }
        d
    }

    fn axes(&self, svg: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (self.px(self.x.0), self.px(self.x.1), self.py(self.y.0), self.py(self.y.1));
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        );
        for (v, px) in [(self.x.0, x0), (self.x.1, x1)] {
            let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{v:.2}</text>"#, y0 + 15.0);
        }
        for (v, py) in [(self.y.0, y0), (self.y.1, y1)] {
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.2}</text>"#, x0 - 5.0, py + 4.0);
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{xlabel}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{ylabel}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean curve with one- and two-sigma bands over the evaluation grid.
pub fn band_svg(record: &ResultRecord) -> String {
    let pts = &record.points;
    let lo = pts.iter().map(|p| (p.mean - 2.0 * p.std).min(p.target)).fold(-1.0, f64::min).max(-3.0);
    let hi = pts.iter().map(|p| (p.mean + 2.0 * p.std).max(p.target)).fold(1.0, f64::max).min(3.0);
    let frame = Frame { x: (0.0, std::f64::consts::TAU), y: (lo, hi) };
    let title = escape(&format!("{} ({})", record.config.method.label(), record.config.variant.as_str()));
    let mut svg = svg_open(&title);
    frame.axes(&mut svg, "x", "f(x)");
    let clamp = |v: f64| v.clamp(lo, hi);
    for (k, opacity) in [(2.0, 0.15), (1.0, 0.3)] {
        let upper = pts.iter().map(|p| (p.x[0], clamp(p.mean + k * p.std)));
        let lower = pts.iter().rev().map(|p| (p.x[0], clamp(p.mean - k * p.std)));
        let d = frame.path(upper.chain(lower));
        let _ = writeln!(svg, r##"<path d="{d}Z" fill="#1f77b4" fill-opacity="{opacity}" stroke="none"/>"##);
    }
    let d = frame.path(pts.iter().map(|p| (p.x[0], clamp(p.mean))));
    let _ = writeln!(svg, r##"<path d="{d}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##);
    for p in &record.train_points {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#555"/>"##,
            frame.px(p.x[0]),
            frame.py(clamp(p.target))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Observed against expected coverage, with the diagonal for reference.
pub fn calibration_svg(report: &CalibrationReport, title: &str) -> String {
    let frame = Frame { x: (0.0, 1.0), y: (0.0, 1.0) };
    let mut svg = svg_open(&escape(&format!("{title} (ECE {:.4})", report.ece)));
    frame.axes(&mut svg, "expected confidence", "observed confidence");
    let diag = frame.path([(0.0, 0.0), (1.0, 1.0)].into_iter());
    let _ = writeln!(svg, r##"<path d="{diag}" stroke="#999" stroke-dasharray="5,4" fill="none"/>"##);
    let d = frame.path(report.levels.iter().copied().zip(report.observed.iter().copied()));
    let _ = writeln!(svg, r##"<path d="{d}" stroke="#d62728" stroke-width="2" fill="none"/>"##);
    for (q, o) in report.levels.iter().zip(&report.observed) {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#d62728"/>"##, frame.px(*q), frame.py(*o));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Evaluation points colored by predicted class probability.
pub fn classification_svg(record: &ResultRecord) -> String {
    let xs = || record.points.iter().map(|p| p.x[0]);
    let ys = || record.points.iter().map(|p| p.x[1]);
    let frame = Frame {
        x: (xs().fold(f64::INFINITY, f64::min) - 0.2, xs().fold(f64::NEG_INFINITY, f64::max) + 0.2),
        y: (ys().fold(f64::INFINITY, f64::min) - 0.2, ys().fold(f64::NEG_INFINITY, f64::max) + 0.2),
    };
    let mut svg = svg_open(&escape(&format!("{} (two moons)", record.config.method.label())));
    frame.axes(&mut svg, "x1", "x2");
    for p in &record.points {
        let q = p.probability.unwrap_or(0.5).clamp(0.0, 1.0);
        let (r, b) = ((255.0 * q) as u8, (255.0 * (1.0 - q)) as u8);
        let stroke = if p.target == 1.0 { "#000" } else { "#fff" };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="rgb({r},80,{b})" stroke="{stroke}"/>"#,
            frame.px(p.x[0]),
            frame.py(p.x[1])
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the record's tables (and plots when `svg` is set) into `dir`; returns the paths written.
pub fn emit_outputs(record: &ResultRecord, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let stem = format!("{}_{}_seed{}", record.config.method, task_tag(record), record.config.seed);
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (dir.join(format!("{stem}.json")), record_json(record)?),
        (dir.join(format!("{stem}_band.csv")), band_csv(record)?),
    ];
    if !record.traces.is_empty() {
        files.push((dir.join(format!("{stem}_trace.csv")), traces_csv(&record.traces)?));
    }
    if let Some(report) = &record.calibration {
        files.push((dir.join(format!("{stem}_calibration.csv")), calibration_csv(report)?));
        if svg {
            let title = record.config.method.label();
            files.push((dir.join(format!("{stem}_calibration.svg")), calibration_svg(report, title).into_bytes()));
        }
    }
    if svg {
        let plot = match record.config.task {
            Task::Regression => band_svg(record),
            Task::Classification => classification_svg(record),
        };
        files.push((dir.join(format!("{stem}_band.svg")), plot.into_bytes()));
    }
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

fn task_tag(record: &ResultRecord) -> &'static str {
    match record.config.task {
        Task::Regression => record.config.variant.as_str(),
        Task::Classification => "moons",
    }
}

pub fn table1_markdown(rows: &[Table1Row]) -> String {
    let seeds = rows.first().map(|r| r.seeds.clone()).unwrap_or_default();
    let mut s = String::from("| Method | Median ECE |");
    for seed in &seeds {
        let _ = write!(s, " seed {seed} |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(seeds.len()));
    s.push('\n');
    for r in rows {
        let _ = write!(s, "| {} | {:.4} |", r.method.label(), r.median());
        for e in &r.eces {
            let _ = write!(s, " {e:.4} |");
        }
        s.push('\n');
    }
    s
}

pub fn table1_csv(rows: &[Table1Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "seed", "ece"])?;
    for r in rows {
        for (seed, e) in r.seeds.iter().zip(&r.eces) {
            w.write_record([r.method.as_str().to_string(), seed.to_string(), e.to_string()])?;
        }
        w.write_record([r.method.as_str().to_string(), "median".to_string(), r.median().to_string()])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, Method};
    use crate::experiment::run_experiment;

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        let leftovers: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_atomic(&blocker.join("child.txt"), b"data").unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn emitted_tables_have_expected_shape() {
        let config = ExperimentConfig { method: Method::Gp, ..ExperimentConfig::default() };
        let record = run_experiment(&config).unwrap().record;
        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(&record, dir.path(), true).unwrap();
        assert_eq!(files.len(), 5);
        let band = fs::read_to_string(dir.path().join("gp_noisy_seed0_band.csv")).unwrap();
        assert_eq!(band.lines().count(), 201);
        assert!(band.starts_with("x,target,mean,std\n"));
        let cal = fs::read_to_string(dir.path().join("gp_noisy_seed0_calibration.csv")).unwrap();
        assert_eq!(cal.lines().count(), 12);
        let svg = fs::read_to_string(dir.path().join("gp_noisy_seed0_band.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("gp_noisy_seed0.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["method"], "gp");
    }

    #[test]
    fn table_formats() {
        let rows = vec![
            Table1Row { method: Method::Bayes, seeds: vec![0, 1, 2], eces: vec![0.1, 0.3, 0.2] },
            Table1Row { method: Method::Gp, seeds: vec![0, 1, 2], eces: vec![0.05, 0.05, 0.07] },
        ];
        let md = table1_markdown(&rows);
        assert!(md.contains("| Bayesian QML | 0.2000 | 0.1000 | 0.3000 | 0.2000 |"));
        let csv = String::from_utf8(table1_csv(&rows).unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
        assert!(csv.contains("gp,median,0.05\n"));
    }
}
