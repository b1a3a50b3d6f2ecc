use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoatom")).args(args).output().expect("binary runs")
}

fn table(args: &[&str]) -> (Vec<String>, Vec<Vec<String>>) {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let comments: Vec<String> = text.lines().filter(|l| l.starts_with('#')).map(String::from).collect();
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (comments, rows)
}

fn value(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn spectrum_symmetric_crossing_at_zero() {
    let (comments, rows) = table(&["spectrum", "--grid", "-1:1:0.25"]);
    assert_eq!(rows[0], ["tau", "E1", "E2", "E3", "E4"]);
    assert!(comments.iter().any(|c| c.starts_with("# g0_sigma = 2.83929000000e1")));
    let mid = rows.iter().find(|r| r[0] == "0.00000000000e0").unwrap();
    assert!(value(&mid[1]).abs() < 1e-12 && value(&mid[2]).abs() < 1e-12);
    // every number carries 12 significant digits
    for cell in &rows[1] {
        let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.len(), 13, "{cell}");
    }
}

#[test]
fn spectrum_crossing_moves_with_asymmetry() {
    let (comments, _) = table(&["spectrum", "--epsilon", "0.8", "--grid", "-0.5:0.5:0.01"]);
    let line = comments.iter().find(|c| c.starts_with("# crossing tau")).unwrap();
    let tau = value(line.rsplit(' ').next().unwrap());
    assert!((tau - 0.0558).abs() < 1e-3, "{tau}");
}

#[test]
fn spectrum_detuned_has_three_avoided_crossings() {
    let (comments, _) = table(&["spectrum", "--detuning-sigma", "15", "--grid", "-3:3:0.01"]);
    assert!(comments.contains(&"# avoided crossings = 3".to_string()), "{comments:?}");
}

#[test]
fn angles_rows() {
    let (_, rows) = table(&["angles", "--n", "10000,0", "--epsilon", "1"]);
    assert_eq!(rows[0], ["n", "phi", "theta", "asymptote"]);
    let big = &rows[1];
    assert_eq!(big[0], "10000");
    assert!((value(&big[1]) / value(&big[3]) - 1.0).abs() < 0.01);
    assert!(value(&rows[2][2]).abs() < 1e-9);

    let (_, rows) = table(&["angles", "--n", "-1", "--detuning-sigma", "100"]);
    assert_eq!(rows[0].last().unwrap(), "Theta");
    let closed = 2.0 * 28.3929f64.powi(2) * 2.0 * (std::f64::consts::PI / 2.0).sqrt() / 100.0;
    assert!((value(&rows[1][4]) - closed).abs() < 1e-8 * closed);
}

#[test]
fn epsilon_sweep_peaks_at_one() {
    let (_, rows) = table(&["sweep", "epsilon", "--grid", "0.99:1.0:0.01", "--jobs", "2"]);
    assert_eq!(rows[0], ["epsilon", "fidelity", "success_probability"]);
    assert!(value(&rows[2][1]) > 0.999);
    assert!(value(&rows[1][1]) < 0.9);
}

#[test]
fn gamma_sweep_point() {
    let (comments, rows) = table(&["sweep", "gamma", "--grid", "0.125"]);
    assert!(comments.iter().any(|c| c.starts_with("# g0_sigma = 1.89286000000e1")));
    let f = value(&rows[1][1]);
    assert!(f > 0.85 && f < 0.90, "{f}");
}

#[test]
fn detuning_sweep_drops_below_half() {
    let (_, rows) = table(&["sweep", "detuning", "--grid", "0:1:0.25"]);
    assert!(rows[1..].iter().any(|r| value(&r[1]) < 0.5));
}

#[test]
fn populations_regimes() {
    let (_, rows) = table(&["populations", "--grid", "0:100:20"]);
    assert_eq!(rows[0], ["detuning_sigma", "p_0ee", "p_1ge", "p_1eg", "p_2gg"]);
    let at = |d: &str| rows.iter().find(|r| r[0] == d).unwrap().iter().skip(1).map(|c| value(c)).collect::<Vec<_>>();
    let zero = at("0.00000000000e0");
    assert!((zero.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    let twenty = at("2.00000000000e1");
    assert!(twenty.iter().filter(|&&p| p > 0.05).count() >= 3);
    let hundred = at("1.00000000000e2");
    assert!(hundred[1] + hundred[2] > 0.95);
}

#[test]
fn teleport_outputs() {
    let out = run(&["teleport", "--alpha", "1", "--beta", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# fidelity = 1.00000000000e0"), "{text}");

    let out = run(&["teleport"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let f: f64 = value(text.lines().find(|l| l.starts_with("# fidelity")).unwrap().rsplit(' ').next().unwrap());
    assert!(f > 0.995);

    let out = run(&["teleport", "--stage1-offset", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let g: f64 = value(text.lines().find(|l| l.starts_with("# fidelity")).unwrap().rsplit(' ').next().unwrap());
    assert!(g < f);
    let stage1 = text.lines().find(|l| l.starts_with("1,")).unwrap();
    assert!(stage1.contains("transit angle off target"), "{stage1}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: stage 1"));
}

#[test]
fn scatter_table_with_regime() {
    let (comments, rows) = table(&["scatter", "--n", "-1", "--regime", "resonant-symmetric"]);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0][0], "output");
    let unit = comments.iter().find(|c| c.starts_with("# unitarity error")).unwrap();
    assert!(value(unit.rsplit(' ').next().unwrap()) < 1e-6);
    assert!(comments.iter().any(|c| c.starts_with("# residual")));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["spectrum", "--epsilon", "x"]).status.code(), Some(1));
    assert_eq!(run(&["nothing"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum", "--grid", "1:0:0.1"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum", "--out", "/nonexistent/dir/out.csv"]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--config", "/nonexistent/run.cfg"]).status.code(), Some(2));
    // a two-excitation input cannot fit below one photon
    assert_eq!(run(&["sweep", "gamma", "--grid", "0.1", "--n-max", "1"]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("angles.csv");
    std::fs::write(&cfg, "g0_sigma = 18.9286\nn = -1\n").unwrap();
    let status = run(&["angles", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    assert!(status.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# g0_sigma = 1.89286000000e1"));
    let row = text.lines().last().unwrap();
    let phi: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    // twenty full turns at this coupling
    assert!((phi - 40.0 * std::f64::consts::PI).abs() < 1e-3, "{phi}");

    let overridden = run(&["angles", "--config", cfg.to_str().unwrap(), "--g0-sigma", "28.3929"]);
    assert!(String::from_utf8(overridden.stdout).unwrap().contains("# g0_sigma = 2.83929000000e1"));
}

#[test]
fn reruns_are_byte_identical() {
    let args = ["populations", "--grid", "0:40:10", "--jobs", "4"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let serial = ["populations", "--grid", "0:40:10", "--jobs", "1"];
    assert_eq!(run(&args).stdout, run(&serial).stdout);
}
