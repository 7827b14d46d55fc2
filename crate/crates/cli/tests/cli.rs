use std::path::Path;
use std::process::{Command, Output};

use posekit::eval::{Curve, EvalConfig, EvalReport};
use posekit::ppi::PpiParams;
use posekit::schema::{parse, DetectionsData, Envelope};
use posekit_cli::report::{
    curves_csv, curves_svg, emit_report, metrics_csv, parse_curves_csv, parse_metrics_csv, Format,
};

fn posekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posekit")).current_dir(dir).args(args).output().unwrap()
}

fn empty_report(curves: Vec<Curve>) -> EvalReport {
    EvalReport {
        spec: "h13".into(),
        config: EvalConfig::default(),
        head_size_rule: String::new(),
        methods: Vec::new(),
        curves,
        records: Vec::new(),
    }
}

fn curve(name: &str, points: &[(f64, f64)]) -> Curve {
    Curve { series: name.into(), points: points.to_vec() }
}

#[test]
fn empty_curve_list_gives_header_only() {
    assert_eq!(curves_csv(&[]), "series,threshold,rate\n");
    assert_eq!(metrics_csv(&[]), "metric,value\n");
    assert!(parse_curves_csv("series,threshold,rate\n").unwrap().is_empty());
}

#[test]
fn three_curves_give_three_polylines() {
    let curves = vec![
        curve("nms", &[(0.0, 0.0), (0.15, 0.7), (0.3, 1.0)]),
        curve("ppi", &[(0.0, 0.0), (0.15, 0.8), (0.3, 1.0)]),
        curve("ub", &[(0.0, 0.0), (0.15, 0.9), (0.3, 1.0)]),
    ];
    let svg = curves_svg(&curves, "threshold (m)");
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert!(svg.contains(r#"version="1.1""#));
    for name in ["nms", "ppi", "ub"] {
        assert!(svg.contains(&format!(r#"data-series="{name}""#)));
    }
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&empty_report(curves), &[], dir.path(), &[Format::Csv, Format::Svg]).unwrap();
    assert_eq!(files.len(), 3);
}

#[test]
fn csv_round_trips_losslessly() {
    let curves = vec![
        curve("nms", &[(0.0, 0.1), (0.01, 1.0 / 3.0), (0.3, 0.9999999999999999)]),
        curve("a,b \"q\"", &[(1e-300, 5e-324), (0.1 + 0.2, 2.0f64.sqrt())]),
    ];
    let text = curves_csv(&curves);
    let back = parse_curves_csv(&text).unwrap();
    assert_eq!(back, curves);
    assert_eq!(curves_csv(&back), text);

    let rows = vec![("ppi.mpjpe_abs_m".to_string(), 0.066_512_345_678_901_23), ("x".to_string(), -0.0), ("y".to_string(), 1e21)];
    let text = metrics_csv(&rows);
    let back = parse_metrics_csv(&text).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
    assert_eq!(metrics_csv(&back), text);
}

#[test]
fn csv_parsers_reject_bad_input() {
    assert!(parse_metrics_csv("name,value\nx,1\n").is_err());
    assert!(parse_metrics_csv("metric,value\nx,abc\n").is_err());
    assert!(parse_curves_csv("series,threshold,rate\nnms,0.1\n").is_err());
}

#[test]
fn unwritable_report_path_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_report(&empty_report(vec![]), &[], &blocker.join("sub"), &[Format::Csv]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn ppi_records_default_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["gen", "--scenes", "4", "--seed", "1", "--out", "s.json"][..],
        &["cluster", "--in", "s.json", "--k", "3", "--out", "a.json"],
        &["simulate", "--scenes", "s.json", "--anchors", "a.json", "--out", "p.json"],
        &["ppi", "--in", "p.json", "--out", "d.json"],
    ] {
        let out = posekit(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let env: Envelope<DetectionsData> = parse(&std::fs::read_to_string(d.join("d.json")).unwrap()).unwrap();
    let params: PpiParams = serde_json::from_value(env.config).unwrap();
    assert_eq!(params.t3d, 0.125);
    assert_eq!(params.sigma_b, 25.0);
    assert_eq!(params.iou_threshold, 0.12);
    assert_eq!(env.seed, Some(0));
    assert_eq!(env.data.method, "ppi");
}

#[test]
fn exit_codes_follow_the_taxonomy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = posekit(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = posekit(d, &["cluster", "--in", "missing.json", "--out", "a.json"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("bad.json"), "{\n  \"schema\": \"pf-1\",\n  \"kind\": \"scenes\",\n  \"data\": [\n").unwrap();
    let out = posekit(d, &["cluster", "--in", "bad.json", "--out", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));

    assert!(posekit(d, &["gen", "--scenes", "3", "--out", "s.json"]).status.success());
    let out = posekit(d, &["ppi", "--in", "s.json", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));

    // Invalid parameters are configuration errors.
    let out = posekit(d, &["gen", "--scenes", "3", "--persons", "4..2", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = posekit(d, &["cluster", "--in", "s.json", "--k", "0", "--out", "a.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_noise_pipeline_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = posekit(dir.path(), &["pipeline", "--seed", "7", "--noise", "zero", "--out-dir", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = parse_metrics_csv(&std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap()).unwrap();
    let get = |k: &str| metrics.iter().find(|(n, _)| n == k).map(|(_, v)| *v).unwrap();
    for m in ["nms", "ppi", "ub"] {
        assert_eq!(get(&format!("{m}.mpjpe_abs_m")), 0.0);
        assert_eq!(get(&format!("{m}.pckh")), 1.0);
    }
    assert_eq!(get("ppi.ap_mean"), 1.0);
    let svg = std::fs::read_to_string(dir.path().join("run/curves.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}
