use std::path::{Path, PathBuf};

use minsurf::cli::{preview_path, run};
use minsurf::io::{read_grid, write_pgm, ReportFile};
use minsurf::synthetic::{generate, Pattern};
use minsurf::Method;
use tempfile::TempDir;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn minsurf(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("minsurf").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Clean 32×32 PGM plus a σ=10 degraded grid next to it.
fn fixture() -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.pgm");
    write_pgm(&clean, &generate(Pattern::Shapes, 32, 32).unwrap()).unwrap();
    let noisy = dir.path().join("noisy.grid");
    let r = minsurf(&[
        "degrade",
        "--input",
        path_str(&clean),
        "--output",
        path_str(&noisy),
        "--sigma",
        "10",
        "--seed",
        "5",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    (dir, clean, noisy)
}

#[test]
fn degrade_writes_grid_and_preview() {
    let (_dir, _clean, noisy) = fixture();
    let g = read_grid(&noisy).unwrap();
    assert_eq!(g.dims(), (32, 32));
    assert!(preview_path(&noisy).exists());
}

#[test]
fn degrade_reports_generator_and_skips_preview_on_request() {
    let (dir, clean, _) = fixture();
    let out = dir.path().join("b.grid");
    let r = minsurf(&[
        "degrade",
        "--input",
        path_str(&clean),
        "--output",
        path_str(&out),
        "--sigma",
        "5",
        "--blur-hsize",
        "5",
        "--blur-sigma",
        "1",
        "--no-preview",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("chacha20+ziggurat/v1"));
    assert!(r.out.contains("G(5,1)"), "{}", r.out);
    assert!(!preview_path(&out).exists());
}

#[test]
fn restore_prints_metrics_and_writes_report() {
    let (dir, clean, noisy) = fixture();
    let out = dir.path().join("restored.grid");
    let report = dir.path().join("report.json");
    let r = minsurf(&[
        "restore",
        "--input",
        path_str(&noisy),
        "--output",
        path_str(&out),
        "--method",
        "fpm",
        "--lambda",
        "0.14",
        "--reference",
        path_str(&clean),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("method=fpm iterations="), "{}", r.out);
    assert!(r.out.contains("SNR_dB="));

    let doc = ReportFile::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc.method, Method::Fpm);
    assert_eq!(doc.lambda, 0.14);
    assert_eq!(doc.alpha, 0.01);
    assert_eq!(doc.energy_trace.len(), doc.iterations + 1);
    assert!(doc.metrics.is_some());
    assert_eq!(read_grid(&out).unwrap().dims(), (32, 32));
}

#[test]
fn restore_improves_snr_for_each_method() {
    let (dir, clean, noisy) = fixture();
    let before = minsurf(&[
        "metrics",
        "--reference",
        path_str(&clean),
        "--input",
        path_str(&noisy),
    ]);
    let snr_of = |text: &str| -> f64 {
        let field = text
            .split_whitespace()
            .find(|w| w.starts_with("SNR_dB="))
            .unwrap();
        field["SNR_dB=".len()..].parse().unwrap()
    };
    let base = snr_of(&before.out);
    for method in ["pdm", "tmm", "fpm"] {
        let out = dir.path().join(format!("{method}.grid"));
        let r = minsurf(&[
            "restore",
            "--input",
            path_str(&noisy),
            "--output",
            path_str(&out),
            "--method",
            method,
            "--lambda",
            "0.14",
            "--max-iter",
            "2000",
            "--no-preview",
        ]);
        assert_eq!(r.code, 0, "{}", r.err);
        let m = minsurf(&[
            "metrics",
            "--reference",
            path_str(&clean),
            "--input",
            path_str(&out),
        ]);
        assert!(snr_of(&m.out) > base + 3.0, "{method}: {} vs {base}", m.out);
    }
}

#[test]
fn explicit_dual_update_is_selectable() {
    let (dir, _clean, noisy) = fixture();
    let out = dir.path().join("e.grid");
    let r = minsurf(&[
        "restore",
        "--input",
        path_str(&noisy),
        "--output",
        path_str(&out),
        "--lambda",
        "0.14",
        "--dual-update",
        "explicit",
        "--max-iter",
        "50",
        "--no-preview",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = minsurf(&[
        "restore",
        "--input",
        path_str(&noisy),
        "--output",
        path_str(&out),
        "--lambda",
        "0.14",
        "--dual-update",
        "sideways",
    ]);
    assert_eq!(r.code, 2);
}

#[test]
fn alpha_zero_is_a_usage_error_for_tmm_and_fpm() {
    let (dir, _clean, noisy) = fixture();
    let out = dir.path().join("x.grid");
    for method in ["tmm", "fpm"] {
        let r = minsurf(&[
            "restore",
            "--input",
            path_str(&noisy),
            "--output",
            path_str(&out),
            "--method",
            method,
            "--lambda",
            "0.14",
            "--alpha",
            "0",
        ]);
        assert_eq!(r.code, 2, "{method}");
        assert!(r.err.contains("alpha"), "{}", r.err);
    }
    let r = minsurf(&[
        "restore",
        "--input",
        path_str(&noisy),
        "--output",
        path_str(&out),
        "--method",
        "pdm",
        "--lambda",
        "0.14",
        "--alpha",
        "0",
        "--no-preview",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
}

#[test]
fn step_contract_is_a_usage_error() {
    let (dir, _clean, noisy) = fixture();
    let out = dir.path().join("x.grid");
    let r = minsurf(&[
        "restore",
        "--input",
        path_str(&noisy),
        "--output",
        path_str(&out),
        "--lambda",
        "0.14",
        "--tau",
        "0.5",
        "--sigma-step",
        "0.25",
    ]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("1/8"), "{}", r.err);
    assert!(!out.exists());
}

#[test]
fn metrics_of_identical_images() {
    let (_dir, clean, _) = fixture();
    let r = minsurf(&[
        "metrics",
        "--reference",
        path_str(&clean),
        "--input",
        path_str(&clean),
    ]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out.trim(), "SNR_dB=inf SSIM=1.000000");
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = minsurf(&[
        "degrade",
        "--input",
        path_str(&dir.path().join("nope.pgm")),
        "--output",
        path_str(&dir.path().join("o.grid")),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("minsurf: error:"), "{}", r.err);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(minsurf(&["restore", "--frobnicate"]).code, 2);
    assert_eq!(minsurf(&[]).code, 2);
}

#[test]
fn bench_csv_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.scn");
    std::fs::write(
        &scn,
        "[scenario small]\nimage = synthetic:ramp:24\nsigma = 10\nlambda = 0.2\nalpha = 0, 0.01\nmax_iter = 60\n",
    )
    .unwrap();
    let r = minsurf(&["bench", "--input", path_str(&scn), "--format", "csv"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert!(lines[0].starts_with("scenario,method,snr_db"));
    // α = 0 runs PDM only; α = 0.01 runs all three
    assert_eq!(lines.len(), 1 + 1 + 3);

    std::fs::write(
        &scn,
        "[scenario bad]\nimage = synthetic:ramp:24\nlambda = minus one\n",
    )
    .unwrap();
    let r = minsurf(&["bench", "--input", path_str(&scn)]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("line 3"), "{}", r.err);
}

#[test]
fn bench_text_table_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.scn");
    let table = dir.path().join("t.txt");
    std::fs::write(
        &scn,
        "[scenario t]\nimage = synthetic:shapes:24\nsigma = 10\nlambda = 0.14\nmethods = pdm, fpm\n",
    )
    .unwrap();
    let r = minsurf(&[
        "bench",
        "--input",
        path_str(&scn),
        "--output",
        path_str(&table),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.is_empty());
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.contains("Method"));
    assert!(text.contains("PDM"));
    assert!(text.contains("FPM"));
}
