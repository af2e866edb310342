//! Config-file driven entry point.
//!
//! A run is described by a flat `key = value` file. Blank lines and text
//! after `#` are ignored. Every key may appear at most once; unknown keys
//! are rejected. [`parse_config`] validates the whole file and
//! [`execute`] runs the command and writes its artifacts into the output
//! directory:
//!
//! - `report.csv` with one row per resolution (not written by `simulate`),
//! - `endpoint.csv` with the nodal values of `X(T)` (`simulate` only),
//! - `config.echo`, the normalized config, which parses back to the same
//!   [`RunConfig`],
//! - `plot.txt`, a gnuplot script for `report.csv`, when `emit_plot` is set.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fem::{Reaction, UniformMesh};
use crate::harness::{
    operator_error_probe, reference_endpoints, regularity_probe, run_experiment, sci, Axis,
    InitialCondition, RegularityConfig, StudyConfig, CSV_HEADER,
};
use crate::spectral::CovarianceSpec;

/// Reference for every config key, printed by `--help`.
pub const CONFIG_HELP: &str = "\
CONFIG FILE
  One `key = value` per line; `#` starts a comment. Exponents e are dyadic:
  h = 2^-e or tau = 2^-e, each in [1, 20]. Lists are comma separated.

  command    simulate | converge-space | converge-time | operator-check |
             regularity                                   (required)
  s          covariance exponent of Q = A^-s, s > 1/2
                                    (required except for operator-check)
  samples    Monte Carlo samples in [1, 1000000]                 [500]
  seed       master seed                                           [0]
  T          terminal time                                         [1]
  h_list     trial h exponents for converge-space          [2,3,4,5]
  tau_list   trial tau exponents for converge-time         [3,4,5,6]
  h_ref      reference h exponent; the mesh of time studies,
             simulate and regularity                               [7]
  tau_ref    reference tau exponent; the step of space studies,
             simulate and regularity                              [12]
  initial    sin-pi | zero                                    [sin-pi]
  modes      noise modes K, or auto for one per reference node [auto]
  reaction   allen-cahn | linear | zero                   [allen-cahn]
  t          operator-check evaluation time                      [0.1]
  meshes     operator-check h exponents                    [3,4,5,6]
  gaps       regularity gaps T - u = 2^-e              [2,3,4,5,6,7]
  noise      regularity with noise: true | false                [true]
  out        output directory                                    [out]
  emit_plot  also write plot.txt: true | false                 [false]
  workers    worker threads, 0 for one per core                    [0]
";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    ConvergeSpace,
    ConvergeTime,
    OperatorCheck,
    Regularity,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Simulate,
        Command::ConvergeSpace,
        Command::ConvergeTime,
        Command::OperatorCheck,
        Command::Regularity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ConvergeSpace => "converge-space",
            Command::ConvergeTime => "converge-time",
            Command::OperatorCheck => "operator-check",
            Command::Regularity => "regularity",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown command `{s}`, expected one of {}", names.join(", "))
            })
    }
}

/// A fully validated run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// Absent only for `operator-check`.
    pub s: Option<f64>,
    pub samples: u64,
    pub seed: u64,
    pub horizon: f64,
    pub h_list: Vec<u32>,
    pub tau_list: Vec<u32>,
    pub h_ref: u32,
    pub tau_ref: u32,
    pub initial: InitialCondition,
    pub modes: Option<usize>,
    pub reaction: Reaction,
    pub t: f64,
    pub meshes: Vec<u32>,
    pub gaps: Vec<u32>,
    pub noise: bool,
    pub out: PathBuf,
    pub emit_plot: bool,
    pub workers: usize,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub samples: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub emit_plot: bool,
}

const KEYS: [&str; 19] = [
    "command", "s", "samples", "seed", "T", "h_list", "tau_list", "h_ref", "tau_ref", "initial",
    "modes", "reaction", "t", "meshes", "gaps", "noise", "out", "emit_plot", "workers",
];

const MAX_EXPONENT: u32 = 20;
const MAX_SAMPLES: u64 = 1_000_000;

fn reaction_name(r: Reaction) -> &'static str {
    match r {
        Reaction::AllenCahn => "allen-cahn",
        Reaction::Linear => "linear",
        Reaction::Zero => "zero",
    }
}

fn join(xs: &[u32]) -> String {
    xs.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    fn defaults(command: Command) -> Self {
        Self {
            command,
            s: None,
            samples: 500,
            seed: 0,
            horizon: 1.0,
            h_list: vec![2, 3, 4, 5],
            tau_list: vec![3, 4, 5, 6],
            h_ref: 7,
            tau_ref: 12,
            initial: InitialCondition::SinePi,
            modes: None,
            reaction: Reaction::AllenCahn,
            t: 0.1,
            meshes: vec![3, 4, 5, 6],
            gaps: vec![2, 3, 4, 5, 6, 7],
            noise: true,
            out: PathBuf::from("out"),
            emit_plot: false,
            workers: 0,
        }
    }

    /// Normalized config text; every key is written.
    pub fn to_echo(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("command", self.command.to_string());
        if let Some(s) = self.s {
            kv("s", s.to_string());
        }
        kv("samples", self.samples.to_string());
        kv("seed", self.seed.to_string());
        kv("T", self.horizon.to_string());
        kv("h_list", join(&self.h_list));
        kv("tau_list", join(&self.tau_list));
        kv("h_ref", self.h_ref.to_string());
        kv("tau_ref", self.tau_ref.to_string());
        kv("initial", self.initial.as_str().to_string());
        kv("modes", self.modes.map_or("auto".to_string(), |k| k.to_string()));
        kv("reaction", reaction_name(self.reaction).to_string());
        kv("t", self.t.to_string());
        kv("meshes", join(&self.meshes));
        kv("gaps", join(&self.gaps));
        kv("noise", self.noise.to_string());
        kv("out", self.out.display().to_string());
        kv("emit_plot", self.emit_plot.to_string());
        kv("workers", self.workers.to_string());
        out
    }

    fn covariance(&self) -> Result<CovarianceSpec> {
        CovarianceSpec::new(self.s.unwrap_or(0.0))
    }

    /// Study settings of a convergence or simulate command.
    pub fn study(&self) -> Result<StudyConfig> {
        let (axis, trials) = match self.command {
            Command::ConvergeTime => (Axis::Time, self.tau_list.clone()),
            _ => (Axis::Space, self.h_list.clone()),
        };
        Ok(StudyConfig {
            axis,
            covariance: self.covariance()?,
            trial_exponents: trials,
            h_ref_exponent: self.h_ref,
            tau_ref_exponent: self.tau_ref,
            samples: self.samples,
            seed: self.seed,
            horizon: self.horizon,
            initial: self.initial,
            modes: self.modes,
            reaction: self.reaction,
        })
    }

    pub fn regularity(&self) -> Result<RegularityConfig> {
        Ok(RegularityConfig {
            covariance: self.covariance()?,
            h_exponent: self.h_ref,
            tau_exponent: self.tau_ref,
            samples: self.samples,
            seed: self.seed,
            horizon: self.horizon,
            gap_exponents: self.gaps.clone(),
            noise: self.noise,
            initial: self.initial,
            modes: self.modes,
        })
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn config_error(key: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, e: &Entry) -> Result<T>
where
    T::Err: fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| config_error(key, e.line, format!("invalid value `{}`: {err}", e.value)))
}

fn parse_exponent(key: &str, line: usize, text: &str) -> Result<u32> {
    let e: u32 = text
        .trim()
        .parse()
        .map_err(|_| config_error(key, line, format!("invalid exponent `{}`", text.trim())))?;
    if !(1..=MAX_EXPONENT).contains(&e) {
        return Err(config_error(key, line, format!("exponent {e} outside [1, {MAX_EXPONENT}]")));
    }
    Ok(e)
}

fn parse_list(key: &str, e: &Entry) -> Result<Vec<u32>> {
    let list = e
        .value
        .split(',')
        .map(|part| parse_exponent(key, e.line, part))
        .collect::<Result<Vec<u32>>>()?;
    let mut sorted = list.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != list.len() {
        return Err(config_error(key, e.line, "repeated exponent"));
    }
    Ok(list)
}

fn parse_bool(key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        v => Err(config_error(key, e.line, format!("expected true or false, got `{v}`"))),
    }
}

/// Parses and validates a config file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &Overrides::default())
}

/// Parses a config file, applies command-line overrides, then validates.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut entries: HashMap<&str, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_error(content, line, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&known) = KEYS.iter().find(|k| **k == key) else {
            return Err(config_error(key, line, "unknown key"));
        };
        if value.is_empty() {
            return Err(config_error(key, line, "empty value"));
        }
        if let Some(prev) = entries.get(known) {
            return Err(config_error(key, line, format!("duplicate key, first set on line {}", prev.line)));
        }
        entries.insert(
            known,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }

    let command = match (overrides.command, entries.get("command")) {
        (Some(c), _) => c,
        (None, Some(e)) => parse_value::<Command>("command", e)?,
        (None, None) => return Err(config_error("command", 0, "missing required key")),
    };
    let mut cfg = RunConfig::defaults(command);
    let line_of = |key: &str| entries.get(key).map_or(0, |e| e.line);

    for (&key, e) in &entries {
        match key {
            "command" => {}
            "s" => cfg.s = Some(parse_value("s", e)?),
            "samples" => cfg.samples = parse_value("samples", e)?,
            "seed" => cfg.seed = parse_value("seed", e)?,
            "T" => cfg.horizon = parse_value("T", e)?,
            "h_list" => cfg.h_list = parse_list(key, e)?,
            "tau_list" => cfg.tau_list = parse_list(key, e)?,
            "h_ref" => cfg.h_ref = parse_exponent(key, e.line, &e.value)?,
            "tau_ref" => cfg.tau_ref = parse_exponent(key, e.line, &e.value)?,
            "initial" => {
                cfg.initial = match e.value.as_str() {
                    "sin-pi" => InitialCondition::SinePi,
                    "zero" => InitialCondition::Zero,
                    v => return Err(config_error(key, e.line, format!("expected sin-pi or zero, got `{v}`"))),
                }
            }
            "modes" => {
                cfg.modes = match e.value.as_str() {
                    "auto" => None,
                    _ => Some(parse_value("modes", e)?),
                }
            }
            "reaction" => {
                cfg.reaction = match e.value.as_str() {
                    "allen-cahn" => Reaction::AllenCahn,
                    "linear" => Reaction::Linear,
                    "zero" => Reaction::Zero,
                    v => {
                        return Err(config_error(
                            key,
                            e.line,
                            format!("expected allen-cahn, linear or zero, got `{v}`"),
                        ))
                    }
                }
            }
            "t" => cfg.t = parse_value("t", e)?,
            "meshes" => cfg.meshes = parse_list(key, e)?,
            "gaps" => cfg.gaps = parse_list(key, e)?,
            "noise" => cfg.noise = parse_bool(key, e)?,
            "out" => cfg.out = PathBuf::from(&e.value),
            "emit_plot" => cfg.emit_plot = parse_bool(key, e)?,
            "workers" => cfg.workers = parse_value("workers", e)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }

    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = overrides.samples {
        cfg.samples = samples;
    }
    if let Some(out) = &overrides.out {
        cfg.out = out.clone();
    }
    if let Some(workers) = overrides.workers {
        cfg.workers = workers;
    }
    cfg.emit_plot |= overrides.emit_plot;

    match cfg.s {
        None if command != Command::OperatorCheck => {
            return Err(config_error("s", 0, "missing required key"));
        }
        Some(s) if !(s > 0.5) || !s.is_finite() => {
            return Err(config_error(
                "s",
                line_of("s"),
                format!("s = {s} violates the admissibility condition s > 1/2"),
            ));
        }
        _ => {}
    }
    if !(1..=MAX_SAMPLES).contains(&cfg.samples) {
        return Err(config_error(
            "samples",
            line_of("samples"),
            format!("{} outside [1, {MAX_SAMPLES}]", cfg.samples),
        ));
    }
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        return Err(config_error("T", line_of("T"), "terminal time must be positive"));
    }
    if !(cfg.t > 0.0) || !cfg.t.is_finite() {
        return Err(config_error("t", line_of("t"), "probe time must be positive"));
    }
    if cfg.modes == Some(0) {
        return Err(config_error("modes", line_of("modes"), "need at least one mode"));
    }

    let cross = |key: &str, err: Error| config_error(key, line_of(key), err.to_string());
    match command {
        Command::ConvergeSpace | Command::ConvergeTime => {
            let list_key = if command == Command::ConvergeSpace { "h_list" } else { "tau_list" };
            cfg.study()?.validate().map_err(|e| cross(list_key, e))?;
        }
        Command::Simulate => {
            let study = cfg.study()?;
            study.fine_steps().map_err(|e| cross("T", e))?;
            study.mode_count().map_err(|e| cross("modes", e))?;
        }
        Command::Regularity => {
            let steps = cfg.horizon * 2f64.powi(cfg.tau_ref as i32);
            if (steps - steps.round()).abs() > 1e-9 * steps || steps.round() < 1.0 {
                return Err(config_error("T", line_of("T"), "not a multiple of 2^-tau_ref"));
            }
            if let Some(&j) = cfg.gaps.iter().find(|&&j| j > cfg.tau_ref || 2f64.powi(-(j as i32)) >= cfg.horizon) {
                return Err(config_error(
                    "gaps",
                    line_of("gaps"),
                    format!("gap 2^-{j} must be a multiple of 2^-tau_ref and shorter than T"),
                ));
            }
            if cfg.gaps.len() < 2 {
                return Err(config_error("gaps", line_of("gaps"), "need at least two gaps"));
            }
        }
        Command::OperatorCheck => {
            if cfg.meshes.len() < 2 {
                return Err(config_error("meshes", line_of("meshes"), "need at least two meshes"));
            }
        }
    }
    Ok(cfg)
}

/// What a successful run produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    /// Fitted slope, when the command fits one.
    pub slope: Option<f64>,
    /// Rate the theory predicts for the fitted slope.
    pub predicted: Option<f64>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// gnuplot script plotting `report.csv` with guide lines at slopes `γ` and
/// `γ/2` through the finest point.
fn plot_script(title: &str, xlabel: &str, gamma: f64, finest: Option<(f64, f64)>) -> String {
    let (x0, y0) = finest.unwrap_or((1.0, 1.0));
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# gnuplot script; run `gnuplot plot.txt` next to report.csv");
    let _ = writeln!(w, "set terminal pngcairo size 800,600");
    let _ = writeln!(w, "set output 'plot.png'");
    let _ = writeln!(w, "set datafile separator ','");
    let _ = writeln!(w, "set logscale xy");
    let _ = writeln!(w, "set format xy '%g'");
    let _ = writeln!(w, "set key left top");
    let _ = writeln!(w, "set grid");
    let _ = writeln!(w, "set title '{title}'");
    let _ = writeln!(w, "set xlabel '{xlabel}'");
    let _ = writeln!(w, "set ylabel 'error'");
    let _ = writeln!(w, "gamma = {gamma}");
    let _ = writeln!(w, "x0 = {}", sci(x0));
    let _ = writeln!(w, "y0 = {}", sci(y0));
    let _ = writeln!(
        w,
        "plot 'report.csv' every ::1 using (2**(-$3)):4:5 with yerrorlines lw 2 pt 7 title 'measured', \\"
    );
    let _ = writeln!(w, "     y0*(x/x0)**gamma dt 2 title sprintf('slope %g', gamma), \\");
    let _ = writeln!(w, "     y0*(x/x0)**(gamma/2) dt 3 title sprintf('slope %g', gamma/2)");
    out
}

/// Runs the command and writes its artifacts.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&cfg.out).map_err(|source| Error::Io {
        path: cfg.out.clone(),
        source,
    })?;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, contents: &str| -> Result<()> {
        let path = cfg.out.join(name);
        write_file(&path, contents)?;
        artifacts.push(path);
        Ok(())
    };

    let s_col = cfg.s.map_or_else(String::new, sci);
    let mut slope = None;
    let mut predicted = None;
    let mut plot = None;

    match cfg.command {
        Command::Simulate => {
            let study = cfg.study()?;
            let ends = reference_endpoints(&study, cfg.workers)?;
            let mesh = study.reference_mesh()?;
            let mut csv = String::from("sample,x,value\n");
            for (i, end) in ends.iter().enumerate() {
                for (j, v) in end.state.coeffs().iter().enumerate() {
                    let _ = writeln!(csv, "{i},{},{}", sci(mesh.node(j)), sci(*v));
                }
            }
            emit("endpoint.csv", &csv)?;
        }
        Command::ConvergeSpace | Command::ConvergeTime => {
            let study = cfg.study()?;
            let report = run_experiment(&study, cfg.workers)?;
            emit("report.csv", &report.to_csv())?;
            slope = report.fit.map(|f| f.slope);
            predicted = Some(study.expected_slope());
            let finest = report.rows.iter().rev().find(|r| r.rms_error > 0.0);
            let (title, xlabel) = match study.axis {
                Axis::Space => ("strong error in space", "h"),
                Axis::Time => ("strong error in time", "tau"),
            };
            plot = Some(plot_script(
                title,
                xlabel,
                study.covariance.regularity_index(),
                finest.map(|r| (r.resolution, r.rms_error)),
            ));
        }
        Command::OperatorCheck => {
            let meshes = cfg
                .meshes
                .iter()
                .map(|&e| UniformMesh::dyadic(e))
                .collect::<Result<Vec<_>>>()?;
            let report = operator_error_probe(&meshes, cfg.t, &[1.0], 0.0)?;
            slope = report.fit.map(|f| f.slope);
            predicted = Some(2.0);
            let slope_col = sci(slope.unwrap_or(f64::NAN));
            let mut csv = format!("{CSV_HEADER}\n");
            for p in &report.points {
                let e = (p.mesh.elements() as f64).log2().round() as u32;
                let _ = writeln!(
                    csv,
                    "operator,{s_col},{e},{},{},0,{slope_col},{}",
                    sci(p.error),
                    sci(0.0),
                    cfg.seed
                );
            }
            emit("report.csv", &csv)?;
            let finest = report.points.last().map(|p| (p.mesh.h(), p.error));
            plot = Some(plot_script("semigroup error", "h", 2.0, finest));
        }
        Command::Regularity => {
            let rc = cfg.regularity()?;
            let report = regularity_probe(&rc, cfg.workers)?;
            slope = report.fit.map(|f| f.slope);
            predicted = Some(report.predicted);
            let slope_col = sci(slope.unwrap_or(f64::NAN));
            let mut csv = format!("{CSV_HEADER}\n");
            for r in &report.rows {
                let _ = writeln!(
                    csv,
                    "regularity,{s_col},{},{},{},{},{slope_col},{}",
                    r.exponent,
                    sci(r.rms_error),
                    sci(r.std_err),
                    r.samples,
                    cfg.seed
                );
            }
            emit("report.csv", &csv)?;
            let finest = report.rows.iter().rev().find(|r| r.rms_error > 0.0);
            plot = Some(plot_script(
                "time increments of the reference solution",
                "t - u",
                rc.covariance.regularity_index(),
                finest.map(|r| (r.resolution, r.rms_error)),
            ));
        }
    }

    emit("config.echo", &cfg.to_echo())?;
    if cfg.emit_plot {
        if let Some(script) = plot {
            emit("plot.txt", &script)?;
        }
    }
    Ok(Outcome {
        artifacts,
        slope,
        predicted,
    })
}
