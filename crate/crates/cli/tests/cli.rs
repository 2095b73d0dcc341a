//! End-to-end runs of the `lindkraus` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lindkraus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lindkraus"))
        .args(args)
        .env("LK_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

const JC: &str = "scenario = jc\nm = 6\nkappa = 1e-3\nt_final = 0.5tr\nsteps = 40\n";

#[test]
fn simulate_writes_deterministic_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "jc.cfg", &format!("{JC}integrator = if-lowrank\nepsilon = 1e-10\nsample_stride = 10\nobservables = pop:0\n"));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = lindkraus(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,trace_defect,herm_defect,min_eig,rank,P_e,pop_0");
    assert_eq!(lines.count(), 5);
    let pe = column(&text, "P_e");
    assert!((pe[0] - 1.0).abs() < 1e-15);
    assert!(pe.iter().all(|p| (-1e-12..=1.0 + 1e-12).contains(p)));
    // At least 15 significant digits.
    let first_t = text.lines().nth(2).unwrap().split(',').next().unwrap();
    assert!(first_t.split('e').next().unwrap().len() >= 17, "{first_t}");
}

#[test]
fn config_output_key_and_stdout() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_config.csv");
    let cfg = write(dir.path(), "c.cfg", &format!("{JC}output = {}\n", target.display()));
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&target).unwrap().starts_with("t,"));
    let cfg = write(dir.path(), "d.cfg", JC);
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert!(stdout(&o).starts_with("t,trace_defect"));
}

#[test]
fn unitary_scenario_keeps_population() {
    // H commutes with the projector onto the second level.
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "u.cfg",
        "scenario = custom\nhamiltonian = [[1, 0, [0, 0.3]], [0, 2, 0], [[0, -0.3], 0, 0.5]]\n\
         initial_state = [1, 1, [0, 1]]\nobservable = pop:1\nt_final = 10\nsteps = 25\n",
    );
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pe = column(&stdout(&o), "P_e");
    assert!(pe.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12), "{pe:?}");
}

#[test]
fn rk_on_stiff_model_loses_positivity_but_is_not_aborted() {
    let dir = TempDir::new().unwrap();
    let base = "scenario = stiff\nt_final = 5e-15\ndt = 5e-16\n";
    let cfg = write(dir.path(), "rk.cfg", &format!("{base}integrator = rk\n"));
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let min_eig = column(&stdout(&o), "min_eig");
    assert!(min_eig.iter().cloned().fold(f64::INFINITY, f64::min) < -1e-8);
    let cfg = write(dir.path(), "if.cfg", &format!("{base}integrator = if-dense\n"));
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(column(&stdout(&o), "min_eig").iter().all(|&m| m >= -1e-12));
}

#[test]
fn forced_negative_tableau_runs_only_when_forced() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "neg.cfg",
        "scenario = damping\nt_final = 1\nsteps = 4\n\
         tableau = {\"a\": [[0, 0], [1, 0]], \"b\": [1.5, -0.5]}\n",
    );
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not CP-valid"), "{}", stderr(&o));
    let o = lindkraus(&["simulate", "--config", &cfg, "--force-tableau"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn no_renormalize_exposes_the_linear_map() {
    // The un-normalized IF step is exact for the excited population of
    // amplitude damping, and its trace drifts below one.
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.cfg", "scenario = damping\nt_final = 2\nsteps = 4\n");
    let o = lindkraus(&["simulate", "--config", &cfg, "--no-renormalize"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let pe = column(&csv, "P_e");
    assert!((pe[4] - (-2.0f64).exp()).abs() < 1e-14);
    assert!(column(&csv, "trace_defect")[4] > 1e-6);
}

#[test]
fn converge_table_has_one_row_per_method_and_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "conv.cfg",
        "scenario = jc\nm = 6\nkappa = 1e-3\nt_final = 0.5tr\n\
         methods = rk, if-dense, if-lr-exact, if-lr-taylor:4\ngrid = 50, 100, 200\nepsilon = 1e-12\n",
    );
    let o = lindkraus(&["converge", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,steps,dt,l2_error,final_error,observed_order,exact");
    assert_eq!(lines.len(), 1 + 4 * 3);
    assert!(lines[1].starts_with("rk,50,"));
    assert!(lines[12].starts_with("if-lr-taylor:4,200,"));
    let log = stderr(&o);
    assert!(log.contains("observed orders"), "{log}");
    let dense_order: f64 = lines[6].split(',').nth(5).unwrap().parse().unwrap();
    assert!((dense_order - 4.0).abs() < 0.5, "{dense_order}");
}

#[test]
fn converge_against_analytic_damping() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.cfg", "scenario = damping\nt_final = 2\nmethods = if-dense\ngrid = 10, 20, 40\n");
    let o = lindkraus(&["converge", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let last = stdout(&o).lines().last().unwrap().to_string();
    let order: f64 = last.split(',').nth(5).unwrap().parse().unwrap();
    assert!((order - 4.0).abs() < 0.3, "{last}");
}

#[test]
fn kraus_verify_reports_eleven_operators_for_rk4() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "k.cfg", "scenario = damping\ndt = 0.1\ntableau = rk4\n");
    let o = lindkraus(&["kraus-verify", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("kraus_count = 11\n"), "{text}");
    assert!(text.contains("kraus_count_formula = 11\n"));
    let defect: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("max_reconstruction_defect = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(defect <= 1e-12);
}

#[test]
fn choi_probe_separates_rk_from_if() {
    let dir = TempDir::new().unwrap();
    let base = "scenario = stiff\ndt = 5e-16\n";
    let spectrum = |integrator: &str| -> Vec<f64> {
        let cfg = write(dir.path(), "c.cfg", &format!("{base}integrator = {integrator}\n"));
        let o = lindkraus(&["choi-probe", "--config", &cfg]);
        assert!(o.status.success(), "{}", stderr(&o));
        column(&stdout(&o), "eigenvalue")
    };
    let rk = spectrum("rk");
    let ifd = spectrum("if-dense");
    assert_eq!(rk.len(), 36);
    assert!(rk[0] < -1e-8, "{}", rk[0]);
    assert!(ifd[0] > -1e-12, "{}", ifd[0]);
}

#[test]
fn config_errors_exit_with_status_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.cfg", &format!("{JC}dt = 0.1\n"));
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("conflicting time grid"));
    let cfg = write(dir.path(), "typo.cfg", &format!("{JC}kapa = 2\n"));
    let o = lindkraus(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key"));
    let o = lindkraus(&["simulate", "--config", "/nonexistent/x.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    let o = lindkraus(&["bogus", "--config", &cfg]);
    assert!(!o.status.success());
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.cfg", "scenario = damping\nt_final = 1\nsteps = 2\n");
    let o = Command::new(env!("CARGO_BIN_EXE_lindkraus"))
        .args(["simulate", "--config", &cfg])
        .env("LK_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("LK_THREADS"));
}
