use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tdoaloc"))
}

fn campaigns() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("campaigns")
}

fn canonical() -> PathBuf {
    campaigns().join("canonical.cfg")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn classify_canonical_points() {
    let cfg = canonical();
    let cfg = cfg.to_str().unwrap();
    for (x, y, want) in [
        ("1", "1", "Omega"),
        ("3", "0", "DegeneracyLocus"),
        ("-1", "-0.5", "Omega0"),
        ("3", "-1", "Omega1"),
        ("2.5", "4", "Omega2"),
    ] {
        let o = run(&["classify", "--config", cfg, "--x", x, y]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o).trim(), want, "({x}, {y})");
    }
}

#[test]
fn localize_noiseless_measurement_echoes_source() {
    // Range differences of the source (1.2, 0.5).
    let (x, y) = (1.2f64, 0.5f64);
    let r0 = (x * x + y * y).sqrt();
    let r1 = ((x - 2.0).powi(2) + y * y).sqrt();
    let r2 = ((x - 2.0).powi(2) + (y - 2.0).powi(2)).sqrt();
    let (t10, t20) = (format!("{:e}", r1 - r0), format!("{:e}", r2 - r0));
    let cfg = canonical();
    let o = run(&[
        "localize", "--config", cfg.to_str().unwrap(), "--sigma2", "iso", "0.005", "--tau", &t10, &t20,
        "--model", "M",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "model,accepted,lrt_stat,candidate,tau10,tau20,location,x,y");
    let f: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(f[0], "M");
    assert_eq!(f[1], "true");
    assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(f[6], "finite");
    assert!((f[7].parse::<f64>().unwrap() - x).abs() < 1e-12);
    assert!((f[8].parse::<f64>().unwrap() - y).abs() < 1e-12);
}

#[test]
fn blind_localize_reports_every_model() {
    let cfg = canonical();
    let o = run(&["localize", "--config", cfg.to_str().unwrap(), "--sigma2", "1e-4", "0", "1e-4", "--tau", "0.3", "-0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let models: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(models, ["M", "M0", "M1", "M2"]);
}

#[test]
fn clockwise_config_reports_in_caller_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cw.cfg", "m0x = 0\nm0y = 0\nm1x = 2\nm1y = 2\nm2x = 2\nm2y = 0\n");
    let cfg = cfg.to_str().unwrap();
    // (3, -1) lies in the exterior cone of the receiver at (2, 0), labeled m2 here.
    let o = run(&["classify", "--config", cfg, "--x", "3", "-1"]);
    assert_eq!(stdout(&o).trim(), "Omega2");
    let (x, y) = (3.0f64, -1.0f64);
    let r0 = (x * x + y * y).sqrt();
    let r_a = ((x - 2.0).powi(2) + (y - 2.0).powi(2)).sqrt();
    let r_b = ((x - 2.0).powi(2) + y * y).sqrt();
    let (t10, t20) = (format!("{:e}", r_a - r0), format!("{:e}", r_b - r0));
    let o = run(&["localize", "--config", cfg, "--sigma2", "iso", "0.01", "--tau", &t10, &t20, "--model", "M2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let f: Vec<&str> = row.split(',').collect();
    assert_eq!(f[0], "M2");
    assert!((f[4].parse::<f64>().unwrap() - (r_a - r0)).abs() < 1e-12);
    assert!((f[7].parse::<f64>().unwrap() - x).abs() < 1e-9, "{row}");
    assert!((f[8].parse::<f64>().unwrap() - y).abs() < 1e-9, "{row}");
}

#[test]
fn project_lists_facets_and_ellipse_points() {
    let cfg = canonical();
    let o = run(&["project", "--config", cfg.to_str().unwrap(), "--sigma2", "iso", "0.01", "--tau", "0.1", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("facet,")).count(), 6);
    // The origin region of the τ-plane has four projections onto the ellipse.
    assert_eq!(text.lines().filter(|l| l.starts_with("ellipse,")).count(), 4);
}

#[test]
fn discriminant_csv_matches_printed_leading_terms() {
    let cfg = canonical();
    let o = run(&["discriminant", "--config", cfg.to_str().unwrap(), "--sigma2", "iso", "0.005"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,coef"));
    let coef = |i: u32, j: u32| -> f64 {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[0] == i.to_string() && f[1] == j.to_string())
            .map(|f| f[2].parse().unwrap())
            .unwrap()
    };
    let scale = coef(6, 0);
    for (i, j, c) in [(0, 6, 8.0), (2, 2, -588.0), (0, 0, -8000.0)] {
        assert!((coef(i, j) / scale - c).abs() < 1e-6 * c.abs());
    }
}

#[test]
fn report_row_has_every_column() {
    let cfg = canonical();
    let o = run(&["report", "--config", cfg.to_str().unwrap(), "--sigma2", "iso", "0.005", "--x", "3.33", "2.08"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,g11,g12,g22,ginv_eig1,ginv_eig2,bias_r,bias_t,delta_eig1,delta_eig2");
    let values: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 11);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn exit_codes() {
    let cfg = canonical();
    let cfg = cfg.to_str().unwrap();
    let o = run(&["report", "--config", cfg, "--sigma2", "iso", "0.005", "--x", "3", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["classify", "--config", cfg]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["localize", "--config", cfg, "--sigma2", "1", "2", "1", "--tau", "0", "0"]);
    assert_eq!(o.status.code(), Some(1), "indefinite Σ₂");
    let o = run(&["localize", "--config", cfg, "--sigma2", "iso", "0.1", "--tau", "0", "0", "--model", "M7"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn config_errors_name_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.cfg", "m0x = 0\nm0y = 0\nm1x = two\nm1y = 0\nm2x = 2\nm2y = 2\n");
    let o = run(&["classify", "--config", bad.to_str().unwrap(), "--x", "1", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.contains("line 3") && msg.contains("m1x"), "{msg}");

    let missing = write_config(dir.path(), "missing.cfg", "m0x = 0\nm0y = 0\nm1x = 2\nm1y = 0\nm2x = 2\n");
    let o = run(&["classify", "--config", missing.to_str().unwrap(), "--x", "1", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("m2y"));
}

#[test]
fn campaign_writes_file_and_logs_skipped_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.csv");
    let spec = write_config(
        dir.path(),
        "small.cfg",
        &format!(
            "sensors = 0 0 2 0 2 2\nsigma = reduced iso 0.005\ngrid_x = -1 3 3\ngrid_y = 0 2 2\ntrials = 50\npolicy = oracle\nseed = 4\nout = {}\n",
            out.display()
        ),
    );
    let o = run(&["campaign", "--spec", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert_eq!(stderr(&o).lines().filter(|l| l.contains("skipped")).count(), 2);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 2 + 6);

    let again = run(&["campaign", "--spec", spec.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), csv, "byte-identical rerun");
}

#[test]
fn paper_campaign_produces_every_row() {
    let o = run(&["campaign", "--spec", campaigns().join("paper.cfg").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4225);
    assert!(rows.iter().all(|r| r.split(',').count() == 27));
}
