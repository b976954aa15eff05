//! Command-line front end.
//!
//! Exit codes: 0 success, 1 infeasible or bound violated, 2 configuration
//! error, 3 runtime failure. `CHRONOSCALE_SEED` is reserved for stochastic
//! extensions and currently ignored.

pub mod config;
pub mod example;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analyzer::{verify_bound, StabilityReport};
use crate::coeffs::SamplingGrid;
use crate::conditions::{
    check_h3, compute_bounds, f_zero_abs, find_lambda, lipschitz, maximality_witness, search_r,
    BoundSet, Certificate,
};
use crate::network::{history_depth, HistorySpec};
use crate::simulator::{history_start, initial_time, simulate, SimError, SimOptions, Trajectory};
use crate::timescale::TimeScale;

use config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "chronoscale", version, about = "Time-scale simulation and stability certificates for competitive neural networks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Time scale: Z, R or union:<pieces>
    #[arg(long, global = true)]
    pub timescale: Option<String>,
    /// Internal step for dense pieces
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Simulation horizon
    #[arg(long = "t-end", global = true)]
    pub t_end: Option<f64>,
    /// Check a single radius instead of the configured grid
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Output file for CSV data
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replace the certified decay rate (negative controls only)
    #[arg(long = "lambda-override", global = true)]
    pub lambda_override: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print coefficient bounds and the radius/contraction test
    Check { config: PathBuf },
    /// Compute the decay rate and overshoot constant
    Certificate { config: PathBuf },
    /// Integrate the network and write the trajectory as CSV
    Simulate { config: PathBuf },
    /// Run two histories and check the exponential bound
    Stability {
        config: PathBuf,
        /// File with a [history] section for the second run
        #[arg(long)]
        history2: Option<PathBuf>,
    },
    /// Run the built-in example on both the reals and the integers
    Example {
        /// Only write the built-in configuration (integers variant) here
        #[arg(long = "write-config")]
        write_config: Option<PathBuf>,
    },
}

/// Result of one command: exit code plus the text for each stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn fail(code: u8, stdout: String, msg: impl std::fmt::Display) -> Self {
        Outcome {
            code,
            stdout,
            stderr: format!("error: {msg}\n"),
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let g = &cli.global;
    match &cli.command {
        Command::Check { config } => with_config(config, g, cmd_check),
        Command::Certificate { config } => with_config(config, g, cmd_certificate),
        Command::Simulate { config } => with_config(config, g, cmd_simulate),
        Command::Stability { config, history2 } => with_config(config, g, |mut cfg| {
            if let Some(path) = history2 {
                let text = match std::fs::read_to_string(path) {
                    Ok(t) => t,
                    Err(e) => return Outcome::fail(EXIT_CONFIG, String::new(), format!("{}: {e}", path.display())),
                };
                match RunConfig::parse_history_file(&text, cfg.network.n) {
                    Ok(h) => cfg.history2 = Some(h),
                    Err(e) => return Outcome::fail(EXIT_CONFIG, String::new(), format!("{}: {e}", path.display())),
                }
            }
            cmd_stability(cfg, g.lambda_override)
        }),
        Command::Example { write_config } => match write_config {
            Some(path) => {
                let text = example::example_integers().to_text();
                match std::fs::write(path, text) {
                    Ok(()) => Outcome::default(),
                    Err(e) => Outcome::fail(EXIT_RUNTIME, String::new(), format!("{}: {e}", path.display())),
                }
            }
            None => cmd_example(g.out.as_deref()),
        },
    }
}

fn with_config(path: &Path, g: &GlobalOpts, f: impl FnOnce(RunConfig) -> Outcome) -> Outcome {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Outcome::fail(EXIT_CONFIG, String::new(), format!("{}: {e}", path.display())),
    };
    let cfg = RunConfig::parse(&text).and_then(|c| apply_overrides(c, g));
    match cfg {
        Ok(cfg) => f(cfg),
        Err(e) => Outcome::fail(EXIT_CONFIG, String::new(), e),
    }
}

/// Applies command-line flags on top of a parsed config.
pub fn apply_overrides(mut cfg: RunConfig, g: &GlobalOpts) -> Result<RunConfig, ConfigError> {
    let flag_err = |field: &str, msg: String| ConfigError {
        line: None,
        field: Some(field.to_string()),
        msg,
    };
    let step = g.h.unwrap_or(cfg.timescale.step());
    if !(step > 0.0) {
        return Err(flag_err("--h", "step must be positive".into()));
    }
    cfg.timescale = match &g.timescale {
        Some(text) => TimeScale::parse_with_step(text, step)
            .map_err(|e| flag_err("--timescale", e.to_string()))?,
        None => cfg.timescale.with_step(step),
    };
    if let Some(t_end) = g.t_end {
        if !(t_end > 0.0) {
            return Err(flag_err("--t-end", "horizon must be positive".into()));
        }
        cfg.run.t_end = t_end;
    }
    if let Some(r) = g.r {
        if !(r > 0.0) {
            return Err(flag_err("--r", "radius must be positive".into()));
        }
        cfg.run.r = Some(r);
        cfg.run.r_grid = vec![r];
    }
    if let Some(out) = &g.out {
        cfg.run.out = Some(out.display().to_string());
    }
    Ok(cfg)
}

/// Window on which graininess is scanned: the simulated range, history
/// included.
fn working_window(cfg: &RunConfig) -> (f64, f64) {
    let ts = &cfg.timescale;
    let t0 = initial_time(ts).unwrap_or(0.0);
    let depth = history_depth(&cfg.network, &SamplingGrid::default()).unwrap_or(0.0);
    (history_start(ts, t0, depth), cfg.run.t_end.max(t0))
}

fn bounds_for(cfg: &RunConfig) -> Result<BoundSet, String> {
    compute_bounds(
        &cfg.network,
        &cfg.timescale,
        working_window(cfg),
        &SamplingGrid::default(),
    )
    .map_err(|e| e.to_string())
}

/// Radii to test: the grid plus the configured radius.
fn radii(cfg: &RunConfig) -> Vec<f64> {
    let mut out = cfg.run.r_grid.clone();
    if let Some(r) = cfg.run.r {
        if !out.contains(&r) {
            out.push(r);
            out.sort_by(f64::total_cmp);
        }
    }
    out
}

fn check_report(cfg: &RunConfig, b: &BoundSet) -> (String, Option<f64>) {
    let lip = lipschitz(&cfg.network);
    let f0 = f_zero_abs(&cfg.network);
    let mut out = String::new();
    let _ = writeln!(out, "[bounds]\n{}", b.to_kv().render());
    let grid = radii(cfg);
    for &r in &grid {
        let rep = check_h3(b, &lip, &f0, r);
        let _ = writeln!(
            out,
            "[h3 r={r}]\nmax_r_expr = {}\nkappa = {}\nfeasible = {}\n",
            crate::kv::fmt_f64(rep.max_r_expr),
            crate::kv::fmt_f64(rep.kappa),
            rep.feasible
        );
    }
    let feasible = search_r(b, &lip, &f0, &grid);
    let detail_r = cfg.run.r.or(feasible).unwrap_or(grid[0]);
    let rep = check_h3(b, &lip, &f0, detail_r);
    let _ = writeln!(out, "[h3 detail]\n{}", rep.to_kv().render());
    let _ = writeln!(
        out,
        "[summary]\nkappa = {}\nsmallest_feasible_r = {}",
        crate::kv::fmt_f64(rep.kappa),
        feasible.map(crate::kv::fmt_f64).unwrap_or_else(|| "none".into())
    );
    (out, feasible)
}

pub fn cmd_check(cfg: RunConfig) -> Outcome {
    let b = match bounds_for(&cfg) {
        Ok(b) => b,
        Err(e) => return Outcome::fail(EXIT_INFEASIBLE, String::new(), e),
    };
    let (stdout, feasible) = check_report(&cfg, &b);
    Outcome {
        code: if feasible.is_some() { EXIT_OK } else { EXIT_INFEASIBLE },
        stdout,
        stderr: String::new(),
    }
}

fn certificate_for(cfg: &RunConfig) -> Result<(BoundSet, Certificate), String> {
    let b = bounds_for(cfg)?;
    let lip = lipschitz(&cfg.network);
    let f0 = f_zero_abs(&cfg.network);
    if search_r(&b, &lip, &f0, &radii(cfg)).is_none() {
        return Err("no radius in the grid passes the existence test".into());
    }
    let cert = find_lambda(&b, &lip).map_err(|e| e.to_string())?;
    Ok((b, cert))
}

fn certificate_text(b: &BoundSet, cert: &Certificate, lip: &[f64]) -> String {
    let mut kv = cert.to_kv();
    kv.push("maximal", maximality_witness(b, lip, cert));
    format!("[certificate]\n{}", kv.render())
}

pub fn cmd_certificate(cfg: RunConfig) -> Outcome {
    match certificate_for(&cfg) {
        Ok((b, cert)) => Outcome {
            code: EXIT_OK,
            stdout: certificate_text(&b, &cert, &lipschitz(&cfg.network)),
            stderr: String::new(),
        },
        Err(e) => Outcome::fail(EXIT_INFEASIBLE, String::new(), e),
    }
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        h: Some(cfg.timescale.step()),
        corrector_iters: cfg.run.corrector_iters,
        sampling: SamplingGrid::default(),
    }
}

fn run_sim(cfg: &RunConfig, h: &HistorySpec) -> Result<Trajectory, SimError> {
    simulate(&cfg.network, h, &cfg.timescale, cfg.run.t_end, &sim_options(cfg))
}

fn sim_failure(e: SimError) -> Outcome {
    let code = match e {
        SimError::Invalid(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    };
    Outcome::fail(code, String::new(), e)
}

fn write_output<F>(path: &str, write: F) -> Result<(), String>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
{
    let file = std::fs::File::create(path).map_err(|e| format!("{path}: {e}"))?;
    let mut w = std::io::BufWriter::new(file);
    write(&mut w).map_err(|e| format!("{path}: {e}"))
}

pub fn cmd_simulate(cfg: RunConfig) -> Outcome {
    let Some(history) = &cfg.history else {
        return Outcome::fail(EXIT_CONFIG, String::new(), "config has no [history] section");
    };
    let traj = match run_sim(&cfg, history) {
        Ok(t) => t,
        Err(e) => return sim_failure(e),
    };
    match &cfg.run.out {
        Some(path) => match write_output(path, |w| traj.write_csv(w)) {
            Ok(()) => Outcome {
                code: EXIT_OK,
                stdout: format!("rows = {}\nout = {path}\n", traj.len()),
                stderr: String::new(),
            },
            Err(e) => Outcome::fail(EXIT_RUNTIME, String::new(), e),
        },
        None => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).expect("writing to memory");
            Outcome {
                code: EXIT_OK,
                stdout: String::from_utf8(buf).expect("CSV is ASCII"),
                stderr: String::new(),
            }
        }
    }
}

/// Paired simulation and bound verification.
pub fn stability_run(
    cfg: &RunConfig,
    lambda_override: Option<f64>,
) -> Result<(Certificate, StabilityReport), (u8, String)> {
    let (Some(ha), Some(hb)) = (&cfg.history, &cfg.history2) else {
        return Err((EXIT_CONFIG, "stability needs [history] and a second history".into()));
    };
    let (b, mut cert) = certificate_for(cfg).map_err(|e| (EXIT_INFEASIBLE, e))?;
    let _ = b;
    if let Some(l) = lambda_override {
        cert.lambda = l;
    }
    let (ra, rb) = std::thread::scope(|s| {
        let ja = s.spawn(|| run_sim(cfg, ha));
        let jb = s.spawn(|| run_sim(cfg, hb));
        (ja.join().expect("simulation thread"), jb.join().expect("simulation thread"))
    });
    let code_of = |e: &SimError| match e {
        SimError::Invalid(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    };
    let a = ra.map_err(|e| (code_of(&e), e.to_string()))?;
    let bt = rb.map_err(|e| (code_of(&e), e.to_string()))?;
    let report = verify_bound(&a, &bt, ha, hb, &cert, &cfg.timescale, cfg.run.burn_in)
        .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    Ok((cert, report))
}

pub fn cmd_stability(cfg: RunConfig, lambda_override: Option<f64>) -> Outcome {
    let (cert, report) = match stability_run(&cfg, lambda_override) {
        Ok(v) => v,
        Err((code, msg)) => return Outcome::fail(code, String::new(), msg),
    };
    let mut stdout = format!(
        "[certificate]\n{}\n[stability]\n{}",
        cert.to_kv().render(),
        report.to_kv().render()
    );
    if let Some(path) = &cfg.run.out {
        if let Err(e) = write_output(path, |w| report.write_csv(w)) {
            return Outcome::fail(EXIT_RUNTIME, stdout, e);
        }
        let _ = writeln!(stdout, "out = {path}");
    }
    Outcome {
        code: if report.violated { EXIT_INFEASIBLE } else { EXIT_OK },
        stdout,
        stderr: String::new(),
    }
}

/// Runs check, certificate and stability for both built-in variants. With
/// `out_dir`, the stability tables are written there as CSV.
pub fn cmd_example(out_dir: Option<&Path>) -> Outcome {
    let mut stdout = String::new();
    let mut code = EXIT_OK;
    for (name, mut cfg) in [("reals", example::example_reals()), ("integers", example::example_integers())] {
        if let Some(dir) = out_dir {
            cfg.run.out = Some(dir.join(format!("stability_{name}.csv")).display().to_string());
        }
        let _ = writeln!(stdout, "##### {name}: {}\n", cfg.timescale);
        let check = cmd_check(cfg.clone());
        stdout.push_str(&check.stdout);
        stdout.push('\n');
        let stab = cmd_stability(cfg, None);
        stdout.push_str(&stab.stdout);
        stdout.push('\n');
        if check.code != EXIT_OK || stab.code != EXIT_OK {
            code = code.max(check.code).max(stab.code);
            stdout.push_str(&check.stderr);
            stdout.push_str(&stab.stderr);
        }
    }
    Outcome {
        code,
        stdout,
        stderr: String::new(),
    }
}
