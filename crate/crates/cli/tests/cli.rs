use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    path.display().to_string()
}

fn tmp(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_poisson-ntt"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Writes `text` to a fresh file in `dir`.
fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = tmp(dir, name);
    std::fs::write(&path, text).unwrap();
    path
}

/// A fixture with its [ntt] section replaced by `ntt`.
fn with_ntt(dir: &TempDir, base: &str, ntt: &str) -> String {
    let text = read_fixture(base);
    let head = text.split("[ntt]").next().unwrap();
    write(dir, "system.sys", &format!("{head}\n[ntt]\n{ntt}\n"))
}

fn line_value<'a>(stdout: &'a str, prefix: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no line starting with '{prefix}' in\n{stdout}"))
}

/// Residual of `check=<name>` in a key=value report.
fn report_residual(report: &str, check: &str) -> f64 {
    let line = report
        .lines()
        .find(|l| l.starts_with(&format!("check={check} ")))
        .unwrap_or_else(|| panic!("no {check} in\n{report}"));
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix("residual="))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn validate_oscillator() {
    let r = run(&["validate", &fixture("oscillator.sys")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("pass (sampled)"));
}

#[test]
fn validate_rigid_body_away_from_origin() {
    let r = run(&["validate", &fixture("rigid_body.sys")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    for check in ["skew", "jacobi", "casimir", "independence", "rank"] {
        assert!(r.stdout.contains(check));
    }
}

#[test]
fn validate_rejects_false_casimir_with_witness() {
    let dir = TempDir::new().unwrap();
    let text =
        read_fixture("rigid_body.sys").replace("casimir = (x1^2 + x2^2 + x3^2)/2", "casimir = x1");
    let path = write(&dir, "bad.sys", &text);
    let report = tmp(&dir, "report.txt");
    let r = run(&["validate", &path, "--report", &report]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    let kv = std::fs::read_to_string(report).unwrap();
    let line = kv
        .lines()
        .find(|l| l.starts_with("check=casimir "))
        .unwrap();
    assert!(line.contains("verdict=fail"));
    assert!(!line.contains("witness=none"));
    assert!(report_residual(&kv, "casimir") > 0.0);
    assert!(r.stdout.contains("fail") && r.stdout.contains(" at ("));
}

#[test]
fn input_errors_are_located() {
    let dir = TempDir::new().unwrap();
    let text = read_fixture("oscillator.sys").replace("J 1 2 = 1", "J 2 1 = 1");
    let path = write(&dir, "bad.sys", &text);
    let r = run(&["validate", &path]);
    assert_eq!(r.code, 2);
    assert!(
        r.stdout.contains("line 5: only entries J i j with i < j"),
        "{}",
        r.stdout
    );

    let r = run(&["validate", "/nonexistent/system.sys"]);
    assert_eq!(r.code, 2);

    // clap usage errors share the input-error code
    let r = run(&["simulate", &fixture("oscillator.sys")]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn analyze_oscillator() {
    let r = run(&["analyze-ntt", &fixture("oscillator.sys")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r
        .stdout
        .contains("verdict: yes (criterion: gradient test (sampled))"));

    let dir = TempDir::new().unwrap();
    let path = with_ntt(&dir, "oscillator.sys", "eta = x1");
    let r = run(&["analyze-ntt", &path]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    assert!(r.stdout.contains("verdict: no"));
    assert!(r.stdout.contains(" at ("));
}

#[test]
fn analyze_rigid_body_uses_functional_dependence() {
    let dir = TempDir::new().unwrap();
    let path = with_ntt(
        &dir,
        "rigid_body_rescale.sys",
        "eta = (x1^2/2 + x2^2)*((x1^2 + x2^2 + x3^2)/2)^4",
    );
    let r = run(&["analyze-ntt", &path]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r
        .stdout
        .contains("criterion: functional dependence (sampled)"));
}

#[test]
fn analyze_vanishing_eta_is_a_premise_violation() {
    let dir = TempDir::new().unwrap();
    let path = with_ntt(&dir, "oscillator.sys", "eta = x1\nmin_eta = 0.5");
    let r = run(&["analyze-ntt", &path]);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stdout.contains("vanishes at ("));

    // same through the command-line override
    let path = with_ntt(&dir, "oscillator.sys", "eta = x1");
    let r = run(&["analyze-ntt", &path, "--min-eta", "0.5"]);
    assert_eq!(r.code, 3);
}

#[test]
fn analyze_requires_explicit_eta() {
    let r = run(&["analyze-ntt", &fixture("rigid_body_rescale.sys")]);
    assert_eq!(r.code, 2);
    let r = run(&["analyze-ntt", &fixture("rigid_body.sys")]);
    assert_eq!(r.code, 2);
}

#[test]
fn rescale_rigid_body() {
    let r = run(&["rescale", &fixture("rigid_body_rescale.sys")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(
        line_value(&r.stdout, "H* = "),
        "(x1^2/2+x2^2)*((x1^2+x2^2+x3^2)/2)^2"
    );
    assert_eq!(line_value(&r.stdout, "eta = "), "((x1^2+x2^2+x3^2)/2)^2");
}

#[test]
fn rescale_trivial_and_degenerate() {
    let dir = TempDir::new().unwrap();
    let path = with_ntt(&dir, "rigid_body_rescale.sys", "Phi = z1");
    let r = run(&["rescale", &path]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(line_value(&r.stdout, "H* = "), "x1^2/2+x2^2");
    assert_eq!(line_value(&r.stdout, "eta = "), "1");

    let path = with_ntt(&dir, "rigid_body_rescale.sys", "Phi = z2");
    let r = run(&["rescale", &path]);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stdout.contains("premise violated"));
}

#[test]
fn implicit_relations() {
    let dir = TempDir::new().unwrap();
    let path = with_ntt(
        &dir,
        "rigid_body_rescale.sys",
        "F = z2 - z1*z3^2\nHstar = (x1^2/2 + x2^2)*((x1^2 + x2^2 + x3^2)/2)^2",
    );
    let r = run(&["implicit", &path]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(line_value(&r.stdout, "eta = "), "((x1^2+x2^2+x3^2)/2)^2");

    let path = with_ntt(&dir, "oscillator.sys", "F = z2 - z1");
    let r = run(&["implicit", &path]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_eq!(line_value(&r.stdout, "eta = "), "1");

    let path = with_ntt(&dir, "oscillator.sys", "F = z2^2 - z1");
    let r = run(&["implicit", &path]);
    assert_eq!(r.code, 4, "{}", r.stdout);
    assert_eq!(line_value(&r.stdout, "eta = "), "1/(2*z2)");
}

#[test]
fn classify_symplectic_constant() {
    let r = run(&["classify", &fixture("canonical4.sys")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("J* (symplectic)"));
    assert!(r.stdout.contains("J 1 3 = 2"));

    let dir = TempDir::new().unwrap();
    let path = with_ntt(&dir, "canonical4.sys", "Phi = z1^2/2\neta0 = q1");
    let r = run(&["classify", &path]);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stdout.contains("premise violated: premise-rank"));

    let path = with_ntt(&dir, "canonical4.sys", "Phi = z1^2/2");
    assert_eq!(run(&["classify", &path]).code, 2);
}

#[test]
fn ntt_commands_require_a_valid_system() {
    let dir = TempDir::new().unwrap();
    // rank 2 everywhere except the origin, which is now inside the box
    let text = read_fixture("rigid_body.sys").replace("exclude = x1^2 + x2^2 + x3^2\n", "")
        + "\n[ntt]\nPhi = z1\n";
    let path = write(&dir, "singular.sys", &text);
    let r = run(&["rescale", &path]);
    assert_eq!(r.code, 3, "{}", r.stdout);
    assert!(r.stdout.contains("does not pass validation"));
}

#[test]
fn simulate_both_flows_of_oscillator() {
    let dir = TempDir::new().unwrap();
    let report = tmp(&dir, "report.txt");
    let export = tmp(&dir, "orbit.csv");
    let r = run(&[
        "simulate",
        &fixture("oscillator.sys"),
        "--x0",
        "1,0",
        "--t-end",
        "10",
        "--dt",
        "1e-3",
        "--flow",
        "both",
        "--report",
        &report,
        "--export-trajectory",
        &export,
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let kv = std::fs::read_to_string(&report).unwrap();
    assert!(report_residual(&kv, "drift-t-H") <= 1e-8);
    assert!(report_residual(&kv, "drift-tau-H") <= 1e-8);
    assert!(report_residual(&kv, "level-set-H") <= 1e-8);

    let t_flow = std::fs::read_to_string(dir.path().join("orbit.t.csv")).unwrap();
    let tau_flow = std::fs::read_to_string(dir.path().join("orbit.tau.csv")).unwrap();
    assert_eq!(t_flow.lines().next(), Some("t,x1,x2"));
    assert_eq!(t_flow.lines().nth(1), Some("0,1,0"));
    assert_eq!(t_flow.lines().count(), 10_002);
    assert_eq!(tau_flow.lines().count(), 10_002);
}

#[test]
fn simulate_rigid_body_conserves_casimir() {
    let dir = TempDir::new().unwrap();
    let report = tmp(&dir, "report.txt");
    let r = run(&[
        "simulate",
        &fixture("rigid_body.sys"),
        "--x0",
        "0.5,0.4,0.6",
        "--t-end",
        "10",
        "--report",
        &report,
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let kv = std::fs::read_to_string(&report).unwrap();
    assert!(report_residual(&kv, "drift-t-C") <= 1e-8);
}

#[test]
fn simulate_tau_flow_from_phi_tracks_hstar() {
    let dir = TempDir::new().unwrap();
    let report = tmp(&dir, "report.txt");
    let r = run(&[
        "simulate",
        &fixture("rigid_body_rescale.sys"),
        "--x0",
        "1,0.8,1.2",
        "--t-end",
        "2",
        "--flow",
        "tau",
        "--report",
        &report,
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let kv = std::fs::read_to_string(&report).unwrap();
    assert!(report_residual(&kv, "drift-tau-H*") <= 1e-6);
    // boxes are for sampling; leaving them only truncates
    assert!(r.stdout.contains("note:") || !r.stdout.contains("left the domain"));
}

#[test]
fn simulate_input_errors() {
    let osc = fixture("oscillator.sys");
    let base = ["simulate", osc.as_str(), "--x0", "1,0", "--t-end", "1"];
    let mut zero_dt = base.to_vec();
    zero_dt.extend(["--dt", "0"]);
    assert_eq!(run(&zero_dt).code, 2);

    let mut bad_dim = base.to_vec();
    bad_dim[3] = "1,0,0";
    assert_eq!(run(&bad_dim).code, 2);

    // tau-flow without any eta
    let rigid = fixture("rigid_body.sys");
    let r = run(&[
        "simulate",
        &rigid,
        "--x0",
        "0.5,0.4,0.6",
        "--t-end",
        "1",
        "--flow",
        "tau",
    ]);
    assert_eq!(r.code, 2, "{}", r.stdout);
}

#[test]
fn simulate_aborts_on_domain_violation() {
    let dir = TempDir::new().unwrap();
    let text = "\
[system]
vars = x1 x2
J 1 2 = 1
H = sqrt(x1) + x2^2/2
[domain]
range x1 = 0.1 1
range x2 = -2 2
";
    let path = write(&dir, "root.sys", text);
    let export = tmp(&dir, "partial.csv");
    let r = run(&[
        "simulate",
        &path,
        "--x0",
        "0.5,-1",
        "--t-end",
        "5",
        "--dt",
        "1e-2",
        "--export-trajectory",
        &export,
    ]);
    assert_eq!(r.code, 5, "{}", r.stdout);
    assert!(r.stdout.contains("aborted:") && r.stdout.contains("partial t-flow"));
    let rows = std::fs::read_to_string(export).unwrap();
    assert!(rows.lines().count() > 2);
}

#[test]
fn outputs_are_deterministic() {
    let osc = fixture("oscillator.sys");
    let args = ["analyze-ntt", &osc, "--seed", "7"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.code, second.code);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn global_overrides_apply() {
    let dir = TempDir::new().unwrap();
    let report = tmp(&dir, "r.txt");
    let r = run(&[
        "validate",
        &fixture("oscillator.sys"),
        "--points",
        "17",
        "--atol",
        "1e-12",
        "--rtol",
        "0",
        "--report",
        &report,
    ]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("[17 points]"));
    assert!(r.stdout.contains("atol=1e-12"));
    assert_eq!(
        run(&["validate", &fixture("oscillator.sys"), "--points", "0"]).code,
        2
    );
}
