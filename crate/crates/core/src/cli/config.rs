//! Run configuration files.
//!
//! A config is sectioned `key = value` text:
//!
//! ```text
//! [network]
//! n = 2
//! activation_1 = sin_half 1        # kind and Lipschitz constant
//! alpha_1 = add(const 0.895, scale 0.005 (sin (affine 2.6457513110645907 0 t)))
//! D_1_2 = scale 0.05 (sin t)       # unspecified coefficients are zero
//!
//! [bounds]                         # optional overrides: sup [inf] [analytic]
//! alpha_1 = 0.9 0.89
//! eta_1 = 0.06
//!
//! [timescale]
//! kind = Z                         # Z, R or union:[a,b]+{a:step:b}
//! h = 0.01                         # internal step of dense pieces
//!
//! [history]                        # phi_i, psi_i required; *_nabla_i default 0
//! phi_1 = const 0.5
//! psi_1 = const -0.2
//!
//! [history2]                       # optional second history for stability runs
//!
//! [run]
//! t_end = 200
//! corrector_iters = 4
//! r_grid = 0.1:1:0.05              # start:end:step or a comma list
//! r = 0.45
//! burn_in = 0.2                    # fraction of the horizon skipped by fits
//! out = trajectory.csv
//! ```
//!
//! `alpha_i` and `c_i` are required for every neuron.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::coeffs::{BoundPair, BoundSource, CoeffExpr};
use crate::kv::{fmt_f64, parse_f64};
use crate::network::{Activation, ActivationKind, CoeffKey, HistorySpec, NetworkSpec};
use crate::timescale::{TimeScale, DEFAULT_STEP};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error{}: {msg}", location(*.line, .field))]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: Option<String>,
    pub msg: String,
}

fn location(line: Option<usize>, field: &Option<String>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!(" (line {l}, field '{f}')"),
        (Some(l), None) => format!(" (line {l})"),
        (None, Some(f)) => format!(" (field '{f}')"),
        (None, None) => String::new(),
    }
}

impl ConfigError {
    fn new(msg: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            field: None,
            msg: msg.into(),
        }
    }

    fn at(entry: &Entry, msg: impl Into<String>) -> Self {
        ConfigError {
            line: Some(entry.line),
            field: Some(entry.key.clone()),
            msg: msg.into(),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    key: String,
    value: String,
}

type Sections = BTreeMap<String, Vec<Entry>>;

fn split_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if out.contains_key(&name) {
                return Err(ConfigError {
                    line: Some(line_no),
                    field: None,
                    msg: format!("section [{name}] appears twice"),
                });
            }
            out.insert(name.clone(), Vec::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError {
            line: Some(line_no),
            field: None,
            msg: "expected 'key = value' or '[section]'".into(),
        })?;
        let section = current.as_ref().ok_or(ConfigError {
            line: Some(line_no),
            field: None,
            msg: "entry outside of any section".into(),
        })?;
        out.get_mut(section).expect("section inserted").push(Entry {
            line: line_no,
            key: key.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn number(entry: &Entry) -> Result<f64> {
    parse_f64(&entry.value)
        .filter(|v| !v.is_nan())
        .ok_or_else(|| ConfigError::at(entry, format!("'{}' is not a number", entry.value)))
}

fn expr(entry: &Entry) -> Result<CoeffExpr> {
    entry
        .value
        .parse()
        .map_err(|e| ConfigError::at(entry, format!("{e}")))
}

/// Settings of the `[run]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub t_end: f64,
    pub corrector_iters: usize,
    pub r_grid: Vec<f64>,
    pub r: Option<f64>,
    pub burn_in: f64,
    pub out: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 100.0,
            corrector_iters: 4,
            r_grid: default_r_grid(),
            r: None,
            burn_in: 0.2,
            out: None,
        }
    }
}

/// `0.1, 0.15, ..., 1.0`.
pub fn default_r_grid() -> Vec<f64> {
    (0..=18).map(|k| round12(0.1 + 0.05 * k as f64)).collect()
}

fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn parse_r_grid(entry: &Entry) -> Result<Vec<f64>> {
    let bad = || ConfigError::at(entry, "expected start:end:step or a comma-separated list");
    let text = entry.value.as_str();
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(parse_f64)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?;
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| round12(a + step * k as f64)).collect()
    } else {
        text.split(',')
            .map(parse_f64)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(bad)?
    };
    if grid.is_empty() || grid.iter().any(|&r| !(r > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::at(entry, "radii must be positive and ascending"));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkSpec,
    pub timescale: TimeScale,
    pub history: Option<HistorySpec>,
    pub history2: Option<HistorySpec>,
    pub run: RunSection,
}

fn parse_network(entries: &[Entry]) -> Result<NetworkSpec> {
    let n_entry = entries
        .iter()
        .find(|e| e.key == "n")
        .ok_or_else(|| ConfigError::new("[network] needs 'n'"))?;
    let n = n_entry
        .value
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::at(n_entry, "n must be a positive integer"))?;
    let mut spec = NetworkSpec::zeros(n);
    let mut seen = std::collections::BTreeSet::new();
    for e in entries {
        if e.key == "n" {
            continue;
        }
        if let Some(idx) = e.key.strip_prefix("activation_") {
            let i = idx
                .parse::<usize>()
                .ok()
                .filter(|&i| (1..=n).contains(&i))
                .ok_or_else(|| ConfigError::at(e, "activation index out of range"))?;
            let mut parts = e.value.split_whitespace();
            let kind: ActivationKind = parts
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|err| ConfigError::at(e, format!("{err}")))?;
            let lipschitz = match parts.next() {
                Some(l) => parse_f64(l).ok_or_else(|| ConfigError::at(e, "bad Lipschitz constant"))?,
                None => 1.0,
            };
            spec.activations[i - 1] = Activation::new(kind, lipschitz);
            continue;
        }
        let key: CoeffKey = e
            .key
            .parse()
            .map_err(|err| ConfigError::at(e, format!("{err}")))?;
        spec.check_key(key)
            .map_err(|err| ConfigError::at(e, format!("{err}")))?;
        if !seen.insert(key) {
            return Err(ConfigError::at(e, "duplicate coefficient"));
        }
        spec.set(key, expr(e)?);
    }
    for i in 0..n {
        for key in [CoeffKey::Alpha(i), CoeffKey::C(i)] {
            if !seen.contains(&key) {
                return Err(ConfigError {
                    line: None,
                    field: Some(key.to_string()),
                    msg: "decay rate missing from [network]".into(),
                });
            }
        }
    }
    Ok(spec)
}

fn parse_bounds(entries: &[Entry], spec: &mut NetworkSpec) -> Result<()> {
    for e in entries {
        let key: CoeffKey = e
            .key
            .parse()
            .map_err(|err| ConfigError::at(e, format!("{err}")))?;
        spec.check_key(key)
            .map_err(|err| ConfigError::at(e, format!("{err}")))?;
        let mut words: Vec<&str> = e.value.split_whitespace().collect();
        let analytic = words.last() == Some(&"analytic");
        if analytic {
            words.pop();
        }
        let nums: Vec<f64> = words
            .iter()
            .map(|w| parse_f64(w))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ConfigError::at(e, "expected 'sup [inf] [analytic]'"))?;
        let (sup, inf) = match nums[..] {
            [s] => (s, 0.0),
            [s, i] => (s, i),
            _ => return Err(ConfigError::at(e, "expected 'sup [inf] [analytic]'")),
        };
        if !(sup >= 0.0) || !(inf >= 0.0) || inf > sup {
            return Err(ConfigError::at(e, "need 0 <= inf <= sup"));
        }
        spec.overrides.insert(key, BoundPair::user(sup, inf, analytic));
    }
    Ok(())
}

fn parse_history(entries: &[Entry], n: usize, section: &str) -> Result<HistorySpec> {
    let mut h = HistorySpec {
        phi: vec![CoeffExpr::zero(); n],
        phi_nabla: vec![CoeffExpr::zero(); n],
        psi: vec![CoeffExpr::zero(); n],
        psi_nabla: vec![CoeffExpr::zero(); n],
    };
    let mut have_phi = vec![false; n];
    let mut have_psi = vec![false; n];
    for e in entries {
        let (field, idx) = e
            .key
            .rsplit_once('_')
            .ok_or_else(|| ConfigError::at(e, "unknown history field"))?;
        let i = idx
            .parse::<usize>()
            .ok()
            .filter(|&i| (1..=n).contains(&i))
            .ok_or_else(|| ConfigError::at(e, "history index out of range"))?
            - 1;
        let value = expr(e)?;
        match field {
            "phi" => {
                h.phi[i] = value;
                have_phi[i] = true;
            }
            "phi_nabla" => h.phi_nabla[i] = value,
            "psi" => {
                h.psi[i] = value;
                have_psi[i] = true;
            }
            "psi_nabla" => h.psi_nabla[i] = value,
            _ => return Err(ConfigError::at(e, "unknown history field")),
        }
    }
    for i in 0..n {
        if !have_phi[i] || !have_psi[i] {
            return Err(ConfigError {
                line: None,
                field: Some(format!("phi_{0} / psi_{0}", i + 1)),
                msg: format!("[{section}] must define phi and psi for every neuron"),
            });
        }
    }
    Ok(h)
}

fn parse_timescale(entries: &[Entry]) -> Result<TimeScale> {
    let mut step = DEFAULT_STEP;
    let mut kind: Option<&Entry> = None;
    for e in entries {
        match e.key.as_str() {
            "kind" => kind = Some(e),
            "h" => {
                step = number(e)?;
                if !(step > 0.0) {
                    return Err(ConfigError::at(e, "h must be positive"));
                }
            }
            _ => return Err(ConfigError::at(e, "unknown [timescale] key")),
        }
    }
    let kind = kind.ok_or_else(|| ConfigError::new("[timescale] needs 'kind'"))?;
    TimeScale::parse_with_step(&kind.value, step).map_err(|err| ConfigError::at(kind, format!("{err}")))
}

fn parse_run(entries: &[Entry]) -> Result<RunSection> {
    let mut run = RunSection::default();
    for e in entries {
        match e.key.as_str() {
            "t_end" => run.t_end = number(e)?,
            "corrector_iters" => {
                run.corrector_iters = e
                    .value
                    .parse()
                    .map_err(|_| ConfigError::at(e, "expected a non-negative integer"))?
            }
            "r_grid" => run.r_grid = parse_r_grid(e)?,
            "r" => {
                let r = number(e)?;
                if !(r > 0.0) {
                    return Err(ConfigError::at(e, "r must be positive"));
                }
                run.r = Some(r);
            }
            "burn_in" => {
                run.burn_in = number(e)?;
                if !(0.0..1.0).contains(&run.burn_in) {
                    return Err(ConfigError::at(e, "burn_in must lie in [0, 1)"));
                }
            }
            "out" => run.out = Some(e.value.clone()),
            _ => return Err(ConfigError::at(e, "unknown [run] key")),
        }
    }
    if !(run.t_end > 0.0) {
        return Err(ConfigError::new("t_end must be positive"));
    }
    Ok(run)
}

const KNOWN_SECTIONS: [&str; 6] = ["network", "bounds", "timescale", "history", "history2", "run"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;
        if let Some(name) = sections.keys().find(|k| !KNOWN_SECTIONS.contains(&k.as_str())) {
            return Err(ConfigError::new(format!("unknown section [{name}]")));
        }
        let network = sections
            .get("network")
            .ok_or_else(|| ConfigError::new("missing [network] section"))?;
        let mut spec = parse_network(network)?;
        if let Some(bounds) = sections.get("bounds") {
            parse_bounds(bounds, &mut spec)?;
        }
        let timescale = parse_timescale(
            sections
                .get("timescale")
                .ok_or_else(|| ConfigError::new("missing [timescale] section"))?,
        )?;
        let history = sections
            .get("history")
            .map(|h| parse_history(h, spec.n, "history"))
            .transpose()?;
        let history2 = sections
            .get("history2")
            .map(|h| parse_history(h, spec.n, "history2"))
            .transpose()?;
        let run = match sections.get("run") {
            Some(r) => parse_run(r)?,
            None => RunSection::default(),
        };
        Ok(RunConfig {
            network: spec,
            timescale,
            history,
            history2,
            run,
        })
    }

    /// Reads only a `[history]` section (as in a standalone history file).
    pub fn parse_history_file(text: &str, n: usize) -> Result<HistorySpec> {
        let sections = split_sections(text)?;
        let entries = sections
            .get("history")
            .ok_or_else(|| ConfigError::new("missing [history] section"))?;
        parse_history(entries, n, "history")
    }

    pub fn to_text(&self) -> String {
        let spec = &self.network;
        let mut out = String::new();
        let _ = writeln!(out, "[network]\nn = {}", spec.n);
        for (i, act) in spec.activations.iter().enumerate() {
            let _ = writeln!(out, "activation_{} = {} {}", i + 1, act.kind.name(), fmt_f64(act.lipschitz));
        }
        for key in spec.keys() {
            let e = spec.expr(key);
            if !e.is_zero() || matches!(key, CoeffKey::Alpha(_) | CoeffKey::C(_)) {
                let _ = writeln!(out, "{key} = {e}");
            }
        }
        if !spec.overrides.is_empty() {
            out.push_str("\n[bounds]\n");
            for (key, b) in &spec.overrides {
                let analytic = matches!(b.source, BoundSource::UserOverride { analytic: true });
                let _ = writeln!(
                    out,
                    "{key} = {} {}{}",
                    fmt_f64(b.sup_abs),
                    fmt_f64(b.inf_abs),
                    if analytic { " analytic" } else { "" }
                );
            }
        }
        let _ = writeln!(
            out,
            "\n[timescale]\nkind = {}\nh = {}",
            self.timescale,
            fmt_f64(self.timescale.step())
        );
        for (name, h) in [("history", &self.history), ("history2", &self.history2)] {
            if let Some(h) = h {
                let _ = writeln!(out, "\n[{name}]");
                for i in 0..h.n() {
                    let _ = writeln!(out, "phi_{} = {}", i + 1, h.phi[i]);
                    let _ = writeln!(out, "phi_nabla_{} = {}", i + 1, h.phi_nabla[i]);
                    let _ = writeln!(out, "psi_{} = {}", i + 1, h.psi[i]);
                    let _ = writeln!(out, "psi_nabla_{} = {}", i + 1, h.psi_nabla[i]);
                }
            }
        }
        let run = &self.run;
        let grid: Vec<String> = run.r_grid.iter().map(|&r| fmt_f64(r)).collect();
        let _ = writeln!(
            out,
            "\n[run]\nt_end = {}\ncorrector_iters = {}\nr_grid = {}\nburn_in = {}",
            fmt_f64(run.t_end),
            run.corrector_iters,
            grid.join(", "),
            fmt_f64(run.burn_in)
        );
        if let Some(r) = run.r {
            let _ = writeln!(out, "r = {}", fmt_f64(r));
        }
        if let Some(o) = &run.out {
            let _ = writeln!(out, "out = {o}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
# a one-neuron network
[network]
n = 1
activation_1 = tanh 1
alpha_1 = const 0.5
c_1 = add(const 0.3, scale 0.01 (sin t))
D_1_1 = const 0.1

[bounds]
alpha_1 = 0.5 0.5 analytic
eta_1 = 0.2

[timescale]
kind = union:[0,1]+{2:0.5:10}
h = 0.05

[history]
phi_1 = const 1
psi_1 = const 0

[run]
t_end = 5
r_grid = 0.2:0.6:0.2
";

    #[test]
    fn parses_all_sections() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.network.n, 1);
        assert_eq!(cfg.network.activations[0].kind, ActivationKind::Tanh);
        assert_eq!(cfg.network.d[0][0], CoeffExpr::constant(0.1));
        assert!(cfg.network.tau[0][0].is_zero());
        assert_eq!(cfg.network.overrides[&CoeffKey::Eta(0)].sup_abs, 0.2);
        assert_eq!(cfg.timescale.step(), 0.05);
        assert_eq!(cfg.run.r_grid, vec![0.2, 0.4, 0.6]);
        assert!(cfg.history.is_some() && cfg.history2.is_none());
    }

    #[test]
    fn round_trip_is_stable() {
        let cfg = RunConfig::parse(SMALL).unwrap();
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let bad = SMALL.replace("D_1_1 = const 0.1", "D_1_1 = const zz");
        let err = RunConfig::parse(&bad).unwrap_err();
        assert_eq!(err.line, Some(8));
        assert_eq!(err.field.as_deref(), Some("D_1_1"));
        let missing = SMALL.replace("alpha_1 = const 0.5\n", "");
        assert_eq!(
            RunConfig::parse(&missing).unwrap_err().field.as_deref(),
            Some("alpha_1")
        );
        assert!(RunConfig::parse("[network]\nn = 0\n").is_err());
        assert!(RunConfig::parse("garbage").is_err());
        let out_of_range = SMALL.replace("D_1_1", "D_1_2");
        assert!(RunConfig::parse(&out_of_range).is_err());
    }

    #[test]
    fn history_file_alone() {
        let h = RunConfig::parse_history_file("[history]\nphi_1 = const 2\npsi_1 = t\n", 1).unwrap();
        assert_eq!(h.phi[0].eval(0.0), 2.0);
        assert!(RunConfig::parse_history_file("[history]\nphi_1 = const 2\n", 1).is_err());
    }
}
