//! End-to-end runs of the `chronoscale` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chronoscale::cli::config::RunConfig;
use chronoscale::cli::example::example_integers;
use chronoscale::network::CoeffKey;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chronoscale"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

/// First `key = value` line under `[section]` (or anywhere when `section` is
/// empty).
fn field(text: &str, section: &str, key: &str) -> Option<String> {
    let mut inside = section.is_empty();
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with('[') {
            inside = section.is_empty() || line == format!("[{section}]");
            continue;
        }
        if !inside {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            if k.trim() == key {
                return Some(v.trim().to_string());
            }
        }
    }
    None
}

fn number(text: &str, section: &str, key: &str) -> f64 {
    field(text, section, key)
        .unwrap_or_else(|| panic!("missing {key} in [{section}]:\n{text}"))
        .parse()
        .expect("numeric field")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: TempDir::new().expect("temp dir") }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).expect("write file");
        p
    }

    /// Built-in configuration as written by the binary itself.
    fn example_config(&self) -> PathBuf {
        let p = self.path("example.cfg");
        let out = run(&["example", "--write-config", path_str(&p)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        p
    }
}

#[test]
fn check_on_example_is_feasible() {
    let ws = Workspace::new();
    let cfg = ws.example_config();
    let out = run(&["check", path_str(&cfg)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!((number(&text, "h3 detail", "kappa") - 0.8296).abs() < 5e-4);
    assert!((number(&text, "h3 detail", "max_r_expr") - 0.4474).abs() < 5e-4);
    assert_eq!(field(&text, "h3 detail", "feasible").as_deref(), Some("true"));
    assert_eq!(number(&text, "summary", "smallest_feasible_r"), 0.45);
}

#[test]
fn doubled_weights_are_infeasible() {
    let mut cfg = example_integers();
    let spec = &mut cfg.network;
    for i in 0..spec.n {
        let mut keys = vec![CoeffKey::B(i), CoeffKey::E(i)];
        for j in 0..spec.n {
            keys.extend([CoeffKey::D(i, j), CoeffKey::Dtau(i, j), CoeffKey::Dbar(i, j), CoeffKey::Dtilde(i, j)]);
        }
        for key in keys {
            let doubled = spec.expr(key).clone().scale(2.0);
            spec.set(key, doubled);
            if let Some(b) = spec.overrides.get_mut(&key) {
                b.sup_abs *= 2.0;
            }
        }
    }
    let ws = Workspace::new();
    let path = ws.write("doubled.cfg", &cfg.to_text());
    let check = run(&["check", path_str(&path)]);
    assert_eq!(code(&check), 1);
    assert_eq!(field(&stdout(&check), "summary", "smallest_feasible_r").as_deref(), Some("none"));
    assert_eq!(code(&run(&["certificate", path_str(&path)])), 1);
}

#[test]
fn malformed_config_reports_line() {
    let ws = Workspace::new();
    let path = ws.write("bad.cfg", "[network]\nn = 1\nalpha_1 = add(const 1,\nc_1 = const 1\n");
    let out = run(&["check", path_str(&path)]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let ws = Workspace::new();
    let out = run(&["check", path_str(&ws.path("absent.cfg"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_flag_value_is_a_config_error() {
    let ws = Workspace::new();
    let cfg = ws.example_config();
    assert_eq!(code(&run(&["check", path_str(&cfg), "--h", "-1"])), 2);
    assert_eq!(code(&run(&["check", path_str(&cfg), "--timescale", "Q"])), 2);
}

#[test]
fn simulate_without_history_is_a_config_error() {
    let mut cfg = example_integers();
    cfg.history = None;
    cfg.history2 = None;
    let ws = Workspace::new();
    let path = ws.write("nohist.cfg", &cfg.to_text());
    assert_eq!(code(&run(&["simulate", path_str(&path)])), 2);
    assert_eq!(code(&run(&["stability", path_str(&path)])), 2);
}

#[test]
fn simulate_writes_one_row_per_grid_point() {
    let ws = Workspace::new();
    let cfg = ws.example_config();
    let csv = ws.path("traj.csv");
    let out = run(&["simulate", path_str(&cfg), "--t-end", "100", "--out", path_str(&csv)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x_1,x_2,S_1,S_2,dx_1,dx_2,dS_1,dS_2"));
    let times: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    let after_start = times.iter().filter(|&&t| t > 0.0).count();
    assert_eq!(after_start, 100);
    assert!(times.len() > 100, "history rows precede the initial time");
    assert!(times.windows(2).all(|w| w[1] - w[0] == 1.0));
    assert!(!text.contains('\r'));
}

#[test]
fn zero_system_stays_at_zero() {
    let text = "\
[network]
n = 2
alpha_1 = const 0
alpha_2 = const 0
c_1 = const 0
c_2 = const 0

[timescale]
kind = R
h = 0.05

[history]
phi_1 = const 0
phi_2 = const 0
psi_1 = const 0
psi_2 = const 0

[run]
t_end = 3
";
    let ws = Workspace::new();
    let path = ws.write("zero.cfg", text);
    let out = run(&["simulate", path_str(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = stdout(&out);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() > 60);
    for row in rows {
        for v in row.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 0.0, "{row}");
        }
    }
}

#[test]
fn certificate_on_integers_and_reals() {
    let ws = Workspace::new();
    let cfg = ws.example_config();
    let z = run(&["certificate", path_str(&cfg)]);
    assert_eq!(code(&z), 0);
    let z = stdout(&z);
    let lambda_z = number(&z, "certificate", "lambda");
    assert!(lambda_z > 0.0);
    assert!(number(&z, "certificate", "M") > 1.0);
    assert_eq!(field(&z, "certificate", "maximal").as_deref(), Some("true"));
    assert_eq!(number(&z, "certificate", "nu_sup"), 1.0);

    let r = run(&["certificate", path_str(&cfg), "--timescale", "R"]);
    assert_eq!(code(&r), 0);
    let r = stdout(&r);
    assert_eq!(number(&r, "certificate", "nu_sup"), 0.0);
    assert!(number(&r, "certificate", "lambda") >= lambda_z);
}

#[test]
fn stability_on_integers_holds_and_negative_control_fails() {
    let ws = Workspace::new();
    let cfg = ws.example_config();
    let csv = ws.path("bound.csv");
    let good = run(&["stability", path_str(&cfg), "--out", path_str(&csv)]);
    assert_eq!(code(&good), 0, "{}", stdout(&good));
    let text = stdout(&good);
    assert_eq!(field(&text, "stability", "violated").as_deref(), Some("false"));
    assert!(number(&text, "stability", "lambda_fit") > 0.0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("t,distance,bound,margin\n"));

    let broken = run(&["stability", path_str(&cfg), "--lambda-override", "100"]);
    assert_eq!(code(&broken), 1);
    assert_eq!(field(&stdout(&broken), "stability", "violated").as_deref(), Some("true"));
}

#[test]
fn identical_histories_give_zero_distance() {
    let cfg = example_integers();
    let ws = Workspace::new();
    let main = ws.write("main.cfg", &cfg.to_text());
    let hist = cfg.history.as_ref().unwrap();
    let mut second = String::from("[history]\n");
    for i in 0..hist.n() {
        second.push_str(&format!("phi_{} = {}\npsi_{} = {}\n", i + 1, hist.phi[i], i + 1, hist.psi[i]));
    }
    let second = ws.write("same.hist", &second);
    let csv = ws.path("same.csv");
    let out = run(&[
        "stability",
        path_str(&main),
        "--history2",
        path_str(&second),
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(number(&text, "stability", "initial_norm"), 0.0);
    assert_eq!(field(&text, "stability", "violated").as_deref(), Some("false"));
    let table = std::fs::read_to_string(&csv).unwrap();
    for row in table.lines().skip(1) {
        let distance: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(distance, 0.0);
    }
}

#[test]
fn written_config_parses_back() {
    let ws = Workspace::new();
    let path = ws.example_config();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(RunConfig::parse(&text).unwrap(), example_integers());
}

#[test]
fn example_run_is_deterministic_and_stable() {
    let first = run(&["example"]);
    let second = run(&["example"]);
    assert_eq!(code(&first), 0, "{}", stdout(&first));
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    for (key, want) in [("P_1", 0.2004), ("P_2", 0.2107), ("Q_1", 0.1097), ("Q_2", 0.1208)] {
        assert!((number(&text, "h3 detail", key) - want).abs() < 5e-4, "{key}");
    }
    let verdicts: Vec<&str> = text
        .lines()
        .filter(|l| l.trim_start().starts_with("violated"))
        .collect();
    assert_eq!(verdicts.len(), 2);
    assert!(verdicts.iter().all(|l| l.ends_with("false")));
}

#[test]
fn example_expression_syntax_survives_the_binary() {
    // a config using every expression node parses and simulates
    let text = "\
[network]
n = 1
activation_1 = tanh 1
alpha_1 = add(const 2, mul(const 0.1, cos (affine 3 0.5 t)))
c_1 = exp (neg (abs (sin t)))
I_1 = scale 0.2 (sin (affine 1 -pi t))
eta_1 = const 0.5

[timescale]
kind = union:[-2,4]+{5:1:20}
h = 0.01

[history]
phi_1 = const 0.1
psi_1 = const 0.2

[run]
t_end = 15
";
    let ws = Workspace::new();
    let path = ws.write("nodes.cfg", text);
    let out = run(&["simulate", path_str(&path)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
