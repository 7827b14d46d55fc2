//! Report emission: CSV tables and SVG detection-rate curves.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use posekit::eval::{Curve, EvalReport, MethodSummary, Protocol};
use posekit::toy::LossRecord;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

/// Named scalar rows of a method summary, filtered by protocol.
pub fn method_rows(m: &MethodSummary, joint_names: &[String], protocol: Option<Protocol>) -> Vec<(String, f64)> {
    let p = |name: &str| format!("{}.{name}", m.name);
    let mut rows = vec![
        (p("matched"), m.matched as f64),
        (p("missed"), m.missed as f64),
        (p("false_positives"), m.false_positives as f64),
    ];
    let want = |x: Protocol| protocol.is_none_or(|p| p == x);
    if want(Protocol::Single) {
        rows.push((p("pckh"), m.pckh));
        rows.push((p("error_2d_px"), m.error_2d_px));
    }
    if want(Protocol::Multi) {
        if let Some(ap) = &m.ap {
            rows.push((p("ap_mean"), ap.mean));
            for (name, v) in joint_names.iter().zip(&ap.per_joint) {
                if let Some(v) = v {
                    rows.push((p(&format!("ap.{name}")), *v));
                }
            }
        }
    }
    if want(Protocol::ThreeD) {
        rows.push((p("mpjpe_abs_m"), m.mpjpe_abs));
        rows.push((p("mpjpe_aligned_m"), m.mpjpe_aligned));
        rows.push((p("pck3d"), m.pck3d));
        for (name, v) in joint_names.iter().zip(&m.per_joint_mpjpe) {
            rows.push((p(&format!("mpjpe_m.{name}")), *v));
        }
    }
    rows
}

pub fn report_rows(report: &EvalReport, joint_names: &[String], protocol: Option<Protocol>) -> Vec<(String, f64)> {
    report
        .methods
        .iter()
        .flat_map(|m| method_rows(m, joint_names, protocol))
        .collect()
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Schema(e.to_string())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// `metric,value` table. Values use the shortest round-trip decimal form.
pub fn metrics_csv(rows: &[(String, f64)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"]).expect("in-memory write");
    for (k, v) in rows {
        w.write_record([k.as_str(), &v.to_string()]).expect("in-memory write");
    }
    into_string(w)
}

pub fn parse_metrics_csv(text: &str) -> CliResult<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["metric", "value"] {
        return Err(CliError::Schema("metrics csv: expected header `metric,value`".into()));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_error)?;
            let v = rec[1]
                .parse::<f64>()
                .map_err(|e| CliError::Schema(format!("metrics csv line {}: field `value`: {e}", i + 2)))?;
            Ok((rec[0].to_string(), v))
        })
        .collect()
}

/// `series,threshold,rate` table.
pub fn curves_csv(curves: &[Curve]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "threshold", "rate"]).expect("in-memory write");
    for c in curves {
        for (t, r) in &c.points {
            w.write_record([c.series.as_str(), &t.to_string(), &r.to_string()]).expect("in-memory write");
        }
    }
    into_string(w)
}

pub fn parse_curves_csv(text: &str) -> CliResult<Vec<Curve>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["series", "threshold", "rate"] {
        return Err(CliError::Schema("curves csv: expected header `series,threshold,rate`".into()));
    }
    let mut out: Vec<Curve> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let num = |k: usize, name: &str| {
            rec[k]
                .parse::<f64>()
                .map_err(|e| CliError::Schema(format!("curves csv line {}: field `{name}`: {e}", i + 2)))
        };
        let point = (num(1, "threshold")?, num(2, "rate")?);
        match out.last_mut() {
            Some(c) if c.series == rec[0] => c.points.push(point),
            _ => out.push(Curve { series: rec[0].to_string(), points: vec![point] }),
        }
    }
    Ok(out)
}

pub fn losses_csv(history: &[LossRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "loss_cls", "loss_reg", "total"]).expect("in-memory write");
    for h in history {
        w.write_record([h.iter.to_string(), h.loss_cls.to_string(), h.loss_reg.to_string(), h.total.to_string()])
            .expect("in-memory write");
    }
    into_string(w)
}

const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"];

/// Self-contained SVG 1.1 plot with one polyline per curve.
pub fn curves_svg(curves: &[Curve], x_label: &str) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 60.0, 150.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black" stroke-width="1"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = top + ph * (1.0 - f);
        let x = left + pw * f;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{f}</text>"#, left - 6.0, y + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            x_max * f
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|(t, r)| format!("{:.2},{:.2}", left + pw * t / x_max, top + ph * (1.0 - r)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&c.series),
            pts.join(" ")
        );
        let ly = top + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            left + pw + 12.0,
            left + pw + 32.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12">{}</text>"#,
            left + pw + 38.0,
            ly + 4.0,
            escape(&c.series)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the requested formats into `dir`; returns the written paths.
pub fn emit_report(report: &EvalReport, joint_names: &[String], dir: &Path, formats: &[Format]) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            Format::Json => {
                let p = dir.join("report.json");
                let env = posekit::schema::Envelope::new(None, &report.config, report.clone());
                write_file(&p, &env.to_json())?;
                written.push(p);
            }
            Format::Csv => {
                let p = dir.join("metrics.csv");
                write_file(&p, &metrics_csv(&report_rows(report, joint_names, None)))?;
                written.push(p);
                let p = dir.join("curves.csv");
                write_file(&p, &curves_csv(&report.curves))?;
                written.push(p);
            }
            Format::Svg => {
                let p = dir.join("curves.svg");
                write_file(&p, &curves_svg(&report.curves, "3D joint error threshold (m)"))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}
