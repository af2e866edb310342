use std::process::Command as Process;

use sacfem::cli::{execute, parse_config, Command, RunConfig};

fn small(command: &str, s: f64, out: &std::path::Path) -> RunConfig {
    let text = format!(
        "command = {command}\ns = {s}\nsamples = 6\nseed = 42\nh_list = 2,3,4\nh_ref = 5\n\
         tau_list = 2,3,4\ntau_ref = 8\nout = {}\n",
        out.display()
    );
    parse_config(&text).unwrap()
}

#[test]
fn converge_space_twice_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = small("converge-space", 1.5005, &dir.path().join("a"));
    let b = small("converge-space", 1.5005, &dir.path().join("b"));
    execute(&a).unwrap();
    execute(&b).unwrap();
    let ra = std::fs::read(dir.path().join("a/report.csv")).unwrap();
    let rb = std::fs::read(dir.path().join("b/report.csv")).unwrap();
    assert_eq!(ra, rb);
    let text = String::from_utf8(ra).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("axis,s,resolution_exponent,ms_error,std_err,samples,slope,seed"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, e) in rows.iter().zip(["2", "3", "4"]) {
        assert_eq!(row.len(), 8);
        assert_eq!(row[0], "space");
        assert_eq!(row[2], e);
        assert_eq!(row[5], "6");
        assert_eq!(row[7], "42");
        assert!(row[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn config_echo_parses_back_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("converge-time", 0.5005, &dir.path().join("t"));
    cfg.emit_plot = true;
    let outcome = execute(&cfg).unwrap();
    let echo = std::fs::read_to_string(dir.path().join("t/config.echo")).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), cfg);
    let plot = std::fs::read_to_string(dir.path().join("t/plot.txt")).unwrap();
    assert!(plot.contains("set logscale xy"));
    assert!(plot.contains("report.csv"));
    assert!(plot.contains("gamma = 1.0005\n"));
    assert!(plot.contains("**(gamma/2)"));
    assert_eq!(outcome.artifacts.len(), 3);
    assert!(outcome.slope.is_some());
}

#[test]
fn simulate_writes_one_value_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("simulate", 1.5005, &dir.path().join("sim"));
    cfg.samples = 1;
    execute(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sim/endpoint.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 31);
    for (j, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[0], "0");
        let x: f64 = cols[1].parse().unwrap();
        assert!((x - (j + 1) as f64 / 32.0).abs() < 1e-15);
        assert!(cols[2].parse::<f64>().unwrap().is_finite());
    }
    assert!(!dir.path().join("sim/report.csv").exists());
}

#[test]
fn operator_check_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&format!("command=operator-check\nout={}\n", dir.path().display())).unwrap();
    assert_eq!(cfg.command, Command::OperatorCheck);
    let outcome = execute(&cfg).unwrap();
    let slope = outcome.slope.unwrap();
    assert!((1.8..=2.2).contains(&slope), "{slope}");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.starts_with("operator,")));
}

#[test]
fn binary_flags_override_and_errors_exit_nonzero() {
    let exe = env!("CARGO_BIN_EXE_sacfem");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "s = 1.5005\nsamples = 500\nseed = 1\nh_ref = 4\ntau_ref = 6\nh_list = 2,3\n").unwrap();
    let out = dir.path().join("out");
    let status = Process::new(exe)
        .args(["converge-space", "--config"])
        .arg(&config)
        .args(["--samples", "3", "--seed", "5", "--workers", "2", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let echo = parse_config(&std::fs::read_to_string(out.join("config.echo")).unwrap()).unwrap();
    assert_eq!((echo.samples, echo.seed, echo.workers), (3, 5, 2));
    assert_eq!(echo.out, out);

    std::fs::write(&config, "s = 0.4\n").unwrap();
    let failed = Process::new(exe)
        .args(["converge-space", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!failed.status.success());
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(stderr.contains("`s`") && stderr.contains("line 1"), "{stderr}");

    let help = Process::new(exe).arg("--help").output().unwrap();
    let help = String::from_utf8_lossy(&help.stdout);
    for key in ["command", "samples", "h_list", "tau_ref", "emit_plot", "workers", "gaps"] {
        assert!(help.contains(key), "{key}");
    }
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = parse_config(&format!("command=operator-check\nout={}\n", blocker.join("sub").display())).unwrap();
    assert!(execute(&cfg).is_err());
}
