//! Command-line front end. Every subcommand writes one CSV table: `#`
//! comment lines with the effective parameters, a header row, then data in
//! `{:.11e}` notation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::analysis::{check_input_output, populations, scatter_matrix, Regime};
use crate::dynamics::{propagate_schrodinger, PropagationConfig};
use crate::error::Error;
use crate::model::{manifold_basis, Atom, BasisLabel, ManifoldBasis, PureState, State, SystemParams};
use crate::protocols::{entangle_atoms, teleport, teleport_stages, DEFAULT_STAGE2_COUPLING};
use crate::spectrum::{phi_angle, theta_angle, theta_big_quadrature, track_spectrum, MixingAngles};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGS: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const DEFAULT_COUPLING: f64 = 28.3929;
const LOSS_COUPLING: f64 = 18.9286;
const POPULATION_COUPLING: f64 = 50.0;
/// Grid subdivisions tried when the spectrum tracker asks for more points.
const SPECTRUM_REFINEMENTS: u32 = 4;

#[derive(Parser, Debug)]
#[command(name = "twoatom", version, about = "Two atoms crossing a cavity: spectra, transit maps, entanglement and state transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Peak coupling of atom 1, in units of 1/sigma.
    #[arg(long, global = true, allow_negative_numbers = true)]
    g0_sigma: Option<f64>,
    /// Ratio of the peak couplings, g2/g1.
    #[arg(long, global = true, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Dimensionless delay between the atoms.
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Atom-cavity detuning, in units of 1/sigma
    #[arg(long, global = true, allow_negative_numbers = true)]
    detuning_sigma: Option<f64>,
    /// Photon loss rate, in units of 1/sigma.
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma_sigma: Option<f64>,
    /// Block index n (N = n + 2 excitations); a comma list for `angles`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    n: Option<String>,
    /// Half width of the integration window, in units of sigma.
    #[arg(long, global = true, allow_negative_numbers = true)]
    window_sigma: Option<f64>,
    /// Highest photon number of the truncated space (damped runs).
    #[arg(long, global = true)]
    n_max: Option<u32>,
    /// Grid `start:stop:step` or a single value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Worker threads for sweeps (default: all processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// File of `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Adiabatic energies of one block against tau.
    Spectrum,
    /// Mixing angles for a list of blocks.
    Angles,
    /// Entangling fidelity against one parameter.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
    },
    /// Final block populations from |1;eg> against the detuning.
    Populations,
    /// Three-cavity transfer of alpha|0> + beta|1>.
    Teleport {
        /// Amplitude of |0>, e.g. `0.6` or `0.3+0.4i`; the pair is renormalized
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// Amplitude of |1>
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<String>,
        /// Peak coupling of the second cavity, in units of 1/sigma
        #[arg(long, allow_negative_numbers = true)]
        stage2_g0_sigma: Option<f64>,
        /// Shift of the first transit's target angle, in radians.
        #[arg(long, allow_negative_numbers = true)]
        stage1_offset: Option<f64>,
    },
    /// Transit map of one block.
    Scatter {
        /// Compare with the predicted map of this regime.
        #[arg(long)]
        regime: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Epsilon,
    Detuning,
    Gamma,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::Epsilon => "epsilon",
            SweepKind::Detuning => "detuning_sigma",
            SweepKind::Gamma => "gamma_sigma",
        }
    }
}

/// Inclusive uniform grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.step == 0.0 || self.start == self.stop {
            return vec![self.start];
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.start + self.step * k as f64).collect()
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad number `{x}` in grid `{s}`"));
        let grid = match parts.as_slice() {
            [x] => {
                let x = num(x)?;
                GridSpec { start: x, stop: x, step: 0.0 }
            }
            [a, b, c] => GridSpec {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            },
            _ => return Err(format!("grid `{s}` is not start:stop:step")),
        };
        let finite = grid.start.is_finite() && grid.stop.is_finite() && grid.step.is_finite();
        if !finite || (grid.start != grid.stop && !(grid.step > 0.0 && grid.stop > grid.start)) {
            return Err(format!("grid `{s}` is empty"));
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Spectrum,
    Angles,
    Sweep(SweepKind),
    Populations,
    Teleport {
        alpha: C64,
        beta: C64,
        stage2_g0: f64,
        stage1_offset: f64,
    },
    Scatter {
        regime: Option<Regime>,
    },
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Angles => "angles",
            Task::Sweep(_) => "sweep",
            Task::Populations => "populations",
            Task::Teleport { .. } => "teleport",
            Task::Scatter { .. } => "scatter",
        }
    }
}

/// Fully resolved run: defaults, then the config file, then flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub params: SystemParams,
    pub n: Vec<i64>,
    pub grid: GridSpec,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Failure with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn args(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ARGS,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams(_) | Error::UnknownRegime(_) | Error::UnknownLabel(_) => EXIT_ARGS,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_NUMERIC,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "g0-sigma",
    "epsilon",
    "delta",
    "detuning-sigma",
    "gamma-sigma",
    "n",
    "window-sigma",
    "n-max",
    "grid",
    "jobs",
    "out",
    "alpha",
    "beta",
    "stage2-g0-sigma",
    "stage1-offset",
    "regime",
];

/// Parses `key = value` lines; `#` starts a comment, `_` and `-` are
/// interchangeable in keys.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::args(format!("config line {}: expected key = value", k + 1)))?;
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::args(format!("config line {}: unknown key `{key}`", k + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

struct Layered<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layered<'_> {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::args(format!("config value `{v}` for `{key}` is invalid"))),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<i64>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse::<i64>().map_err(|_| CliError::args(format!("bad block index `{x}`"))))
        .collect()
}

fn parse_complex(s: &str) -> Result<C64, CliError> {
    C64::from_str(&s.replace(' ', "")).map_err(|_| CliError::args(format!("bad complex number `{s}`")))
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let c = cli.common;
    let file = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError {
                code: EXIT_IO,
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let l = Layered { file: &file };

    let task = match cli.command {
        Command::Spectrum => Task::Spectrum,
        Command::Angles => Task::Angles,
        Command::Sweep { kind } => Task::Sweep(kind),
        Command::Populations => Task::Populations,
        Command::Teleport {
            alpha,
            beta,
            stage2_g0_sigma,
            stage1_offset,
        } => {
            let alpha = l.get(alpha, "alpha")?.unwrap_or_else(|| "0.7071067811865476".into());
            let beta = l.get(beta, "beta")?.unwrap_or_else(|| "0.7071067811865476".into());
            let (alpha, beta): (C64, C64) = (parse_complex(&alpha)?, parse_complex(&beta)?);
            let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(CliError::args("alpha and beta must not both vanish"));
            }
            Task::Teleport {
                alpha: alpha / norm,
                beta: beta / norm,
                stage2_g0: l.get(stage2_g0_sigma, "stage2-g0-sigma")?.unwrap_or(DEFAULT_STAGE2_COUPLING),
                stage1_offset: l.get(stage1_offset, "stage1-offset")?.unwrap_or(0.0),
            }
        }
        Command::Scatter { regime } => Task::Scatter {
            regime: match l.get(regime, "regime")? {
                Some(tag) => Some(tag.parse::<Regime>().map_err(|e| CliError::args(e.to_string()))?),
                None => None,
            },
        },
    };

    let default_g0 = match task {
        Task::Sweep(SweepKind::Gamma) => LOSS_COUPLING,
        Task::Populations => POPULATION_COUPLING,
        _ => DEFAULT_COUPLING,
    };
    let default_window = if task == Task::Populations { 6.0 } else { 12.0 };
    let default_grid = match task {
        Task::Spectrum => "-4:4:0.01",
        Task::Sweep(SweepKind::Epsilon) => "0.9:1.1:0.001",
        Task::Sweep(SweepKind::Detuning) => "0:10:0.1",
        Task::Sweep(SweepKind::Gamma) => "0:0.2:0.01",
        Task::Populations => "0:100:1",
        _ => "0",
    };
    let default_n = if task == Task::Angles { "-1,0,1,2,3" } else { "0" };

    let window = l.get(c.window_sigma, "window-sigma")?.unwrap_or(default_window);
    if !(window > 0.0) || !window.is_finite() {
        return Err(CliError::args("window must be positive"));
    }
    let mut params = SystemParams {
        g0: l.get(c.g0_sigma, "g0-sigma")?.unwrap_or(default_g0),
        epsilon: l.get(c.epsilon, "epsilon")?.unwrap_or(1.0),
        sigma: 1.0,
        delta: l.get(c.delta, "delta")?.unwrap_or(1.0),
        detuning: l.get(c.detuning_sigma, "detuning-sigma")?.unwrap_or(0.0),
        gamma: l.get(c.gamma_sigma, "gamma-sigma")?.unwrap_or(0.0),
        n_max: l.get(c.n_max, "n-max")?.unwrap_or(3),
        t_span: (-window, window),
    };
    if matches!(task, Task::Teleport { .. }) {
        params.gamma = 0.0;
    }
    params.validate().map_err(CliError::from)?;

    let n_text = l.get(c.n, "n")?.unwrap_or_else(|| default_n.into());
    let n = parse_list(&n_text)?;
    if n.is_empty() {
        return Err(CliError::args("empty block list"));
    }
    let grid_text = l.get(c.grid, "grid")?.unwrap_or_else(|| default_grid.into());
    let grid = grid_text.parse::<GridSpec>().map_err(CliError::args)?;
    let jobs = l.get(c.jobs, "jobs")?;
    if jobs == Some(0) {
        return Err(CliError::args("--jobs must be at least 1"));
    }
    let out = l.get(c.out, "out")?;
    Ok(RunConfig {
        task,
        params,
        n,
        grid,
        jobs,
        out,
    })
}

/// Scientific notation with 12 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

fn header_comments(cfg: &RunConfig) -> String {
    let p = &cfg.params;
    let mut s = String::new();
    let _ = writeln!(s, "# command = {}", cfg.task.name());
    if let Task::Sweep(kind) = cfg.task {
        let _ = writeln!(s, "# sweep = {}", kind.name());
    }
    for (key, value) in [
        ("g0_sigma", p.g0),
        ("epsilon", p.epsilon),
        ("delta", p.delta),
        ("detuning_sigma", p.detuning),
        ("gamma_sigma", p.gamma),
        ("window_sigma", p.t_span.1),
    ] {
        let _ = writeln!(s, "# {key} = {}", num(value));
    }
    let _ = writeln!(s, "# n_max = {}", p.n_max);
    let list: Vec<String> = cfg.n.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(s, "# n = {}", list.join(","));
    let g = cfg.grid;
    let _ = writeln!(s, "# grid = {}:{}:{}", num(g.start), num(g.stop), num(g.step));
    if let Task::Teleport {
        alpha,
        beta,
        stage2_g0,
        stage1_offset,
    } = &cfg.task
    {
        let _ = writeln!(s, "# alpha = {} {}", num(alpha.re), num(alpha.im));
        let _ = writeln!(s, "# beta = {} {}", num(beta.re), num(beta.im));
        let _ = writeln!(s, "# stage2_g0_sigma = {}", num(*stage2_g0));
        let _ = writeln!(s, "# stage1_offset = {}", num(*stage1_offset));
    }
    if let Task::Scatter { regime: Some(r) } = &cfg.task {
        let _ = writeln!(s, "# regime = {r}");
    }
    s
}

fn row(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|&x| num(x)).collect();
    cells.join(",") + "\n"
}

fn single_block(cfg: &RunConfig) -> Result<i64, CliError> {
    match cfg.n.as_slice() {
        [n] if *n >= -2 => Ok(*n),
        _ => Err(CliError::args("this command takes a single block index n >= -2")),
    }
}

fn spectrum_table(cfg: &RunConfig) -> Result<String, CliError> {
    let p = &cfg.params;
    let n = single_block(cfg)?;
    let basis = ManifoldBasis { n };
    let taus = cfg.grid.points();
    if taus.len() < 2 {
        return Err(CliError::args("the spectrum needs at least two grid points"));
    }
    let mut factor = 1usize;
    let curve = loop {
        let fine: Vec<f64> = (0..(taus.len() - 1) * factor + 1)
            .map(|k| {
                let (i, r) = (k / factor, k % factor);
                let tau = if r == 0 {
                    taus[i]
                } else {
                    taus[i] + (taus[i + 1] - taus[i]) * r as f64 / factor as f64
                };
                p.time(tau)
            })
            .collect();
        match track_spectrum(p, basis, &fine) {
            Ok(curve) => break curve,
            Err(Error::Refinement { .. }) if factor < 1 << SPECTRUM_REFINEMENTS => factor *= 2,
            Err(e) => return Err(e.into()),
        }
    };
    let dim = curve.dim();
    // paper labels for four states: E1 = -E-, E2 = +E-, E3 = -E+, E4 = +E+
    let order: Vec<usize> = if dim == 4 { vec![1, 2, 0, 3] } else { (0..dim).collect() };
    let mut s = header_comments(cfg);
    for c in &curve.crossings {
        let _ = writeln!(s, "# crossing tau = {}", num(p.tau(c.time)));
    }
    for a in &curve.avoided {
        let _ = writeln!(s, "# avoided crossing tau = {} gap = {}", num(p.tau(a.time)), num(a.gap / p.g0));
    }
    let _ = writeln!(s, "# avoided crossings = {}", curve.avoided.len());
    let names: Vec<String> = (1..=dim).map(|k| format!("E{k}")).collect();
    let _ = writeln!(s, "tau,{}", names.join(","));
    let scale = if p.g0 > 0.0 { p.g0 } else { 1.0 };
    for (i, &tau) in taus.iter().enumerate() {
        let k = i * factor;
        let mut values = vec![tau];
        values.extend(order.iter().map(|&label| curve.energies[k][label] / scale));
        s.push_str(&row(&values));
    }
    Ok(s)
}

fn angles_table(cfg: &RunConfig) -> Result<String, CliError> {
    let p = &cfg.params;
    let resonant = p.with_detuning(0.0);
    let detuned = p.detuning != 0.0;
    let mut s = header_comments(cfg);
    if detuned {
        s.push_str("# phi and theta are evaluated at zero detuning\n");
    }
    s.push_str(if detuned {
        "n,phi,theta,asymptote,Theta\n"
    } else {
        "n,phi,theta,asymptote\n"
    });
    let big = if detuned { Some(theta_big_quadrature(p)?) } else { None };
    let rows: Vec<Result<String, CliError>> = cfg
        .n
        .par_iter()
        .map(|&n| {
            if n < -1 {
                return Err(CliError::args(format!("angles need n >= -1, got {n}")));
            }
            let phi = phi_angle(n, &resonant)?;
            let theta = theta_angle(n, &resonant)?;
            let asymptote = if n >= 0 {
                4.0 * p.g0 * p.sigma * (n as f64 * std::f64::consts::PI).sqrt()
            } else {
                f64::NAN
            };
            let mut values = vec![n as f64, phi, theta, asymptote];
            values.extend(big);
            let mut line = row(&values);
            // the index column is an integer
            let first = line.find(',').unwrap_or(0);
            line.replace_range(..first, &n.to_string());
            Ok(line)
        })
        .collect();
    for r in rows {
        s.push_str(&r?);
    }
    Ok(s)
}

fn sweep_table(cfg: &RunConfig, kind: SweepKind) -> Result<String, CliError> {
    let config = PropagationConfig::for_sigma(cfg.params.sigma);
    let points = cfg.grid.points();
    let results: Vec<Result<(f64, f64), Error>> = points
        .par_iter()
        .map(|&x| {
            let p = match kind {
                SweepKind::Epsilon => cfg.params.with_epsilon(x),
                SweepKind::Detuning => cfg.params.with_detuning(x),
                SweepKind::Gamma => cfg.params.with_gamma(x),
            };
            p.validate()?;
            entangle_atoms(&p, &config).map(|r| (r.fidelity, r.success_probability))
        })
        .collect();
    let mut s = header_comments(cfg);
    let _ = writeln!(s, "{},fidelity,success_probability", kind.name());
    for (&x, r) in points.iter().zip(results) {
        let (f, success) = r?;
        s.push_str(&row(&[x, f, success]));
    }
    Ok(s)
}

fn populations_table(cfg: &RunConfig) -> Result<String, CliError> {
    let config = PropagationConfig::for_sigma(cfg.params.sigma);
    let block = manifold_basis(2)?;
    let labels = block.labels();
    let start = BasisLabel::new(1, Atom::Excited, Atom::Ground);
    let psi0 = PureState::basis_state(block, &start)?;
    let points = cfg.grid.points();
    let results: Vec<Result<Vec<f64>, Error>> = points
        .par_iter()
        .map(|&d| {
            let p = cfg.params.with_detuning(d).with_gamma(0.0);
            let out = propagate_schrodinger(&psi0, &p, &config)?;
            populations(&State::Pure(out), &labels)
        })
        .collect();
    let mut s = header_comments(cfg);
    let _ = writeln!(s, "# initial state = {start}");
    let names: Vec<String> = labels
        .iter()
        .map(|l| format!("p_{}{}{}", l.photons, l.atom1.symbol(), l.atom2.symbol()))
        .collect();
    let _ = writeln!(s, "detuning_sigma,{}", names.join(","));
    for (&d, r) in points.iter().zip(results) {
        let mut values = vec![d];
        values.extend(r?);
        s.push_str(&row(&values));
    }
    Ok(s)
}

fn teleport_table(cfg: &RunConfig, alpha: C64, beta: C64, stage2_g0: f64, stage1_offset: f64) -> Result<(String, String), CliError> {
    let config = PropagationConfig::for_sigma(cfg.params.sigma);
    let stages = teleport_stages(&cfg.params, stage2_g0, stage1_offset, &config)?;
    let r = teleport(alpha, beta, &stages, &config)?;
    let mut s = header_comments(cfg);
    s.push_str("stage,g0_sigma,phi,target,residual,warning\n");
    for (k, st) in r.stages.iter().enumerate() {
        let prefix = format!("stage {}:", k + 1);
        let warning: Vec<&str> = r
            .warnings
            .iter()
            .filter(|w| w.starts_with(&prefix))
            .map(|w| w[prefix.len()..].trim())
            .collect();
        let target = st.target.map(num).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            k + 1,
            num(st.g0),
            num(st.phi),
            target,
            num(st.residual),
            warning.join("; ")
        );
    }
    let _ = writeln!(s, "# fidelity = {}", num(r.fidelity));
    let phis: Vec<String> = r.stages.iter().map(|st| num(st.phi)).collect();
    let mut summary = format!("fidelity {} phi {}", num(r.fidelity), phis.join(" "));
    for w in &r.warnings {
        summary.push_str(&format!("\nwarning: {w}"));
    }
    Ok((s, summary))
}

fn scatter_table(cfg: &RunConfig, regime: Option<Regime>) -> Result<String, CliError> {
    let n = single_block(cfg)?;
    let config = PropagationConfig::for_sigma(cfg.params.sigma);
    let sm = scatter_matrix(&cfg.params, n + 2, &config)?;
    let labels = sm.basis.labels();
    let report = match regime {
        Some(r) => {
            let angles = MixingAngles::evaluate(n, &cfg.params)?;
            Some(check_input_output(&sm, &angles, r)?)
        }
        None => None,
    };
    let mut s = header_comments(cfg);
    let _ = writeln!(s, "# unitarity error = {}", num(sm.unitarity_error()));
    if let Some(r) = &report {
        let _ = writeln!(s, "# residual = {}", num(r.residual));
    }
    s.push_str(if report.is_some() {
        "output,input,re,im,predicted_re,predicted_im\n"
    } else {
        "output,input,re,im\n"
    });
    for (i, input) in labels.iter().enumerate() {
        for (j, output) in labels.iter().enumerate() {
            let z = sm.matrix[(j, i)];
            let mut values = vec![z.re, z.im];
            if let Some(r) = &report {
                let w = r.predicted[(j, i)] * r.phase;
                values.extend([w.re, w.im]);
            }
            let _ = write!(s, "{output},{input},{}", row(&values));
        }
    }
    Ok(s)
}

/// Runs a resolved configuration; returns the table and an optional
/// summary for standard error.
pub fn execute(cfg: &RunConfig) -> Result<(String, Option<String>), CliError> {
    let body = || -> Result<(String, Option<String>), CliError> {
        Ok(match &cfg.task {
            Task::Spectrum => (spectrum_table(cfg)?, None),
            Task::Angles => (angles_table(cfg)?, None),
            Task::Sweep(kind) => (sweep_table(cfg, *kind)?, None),
            Task::Populations => (populations_table(cfg)?, None),
            Task::Teleport {
                alpha,
                beta,
                stage2_g0,
                stage1_offset,
            } => {
                let (t, summary) = teleport_table(cfg, *alpha, *beta, *stage2_g0, *stage1_offset)?;
                (t, Some(summary))
            }
            Task::Scatter { regime } => (scatter_table(cfg, *regime)?, None),
        })
    };
    match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError {
                code: EXIT_NUMERIC,
                message: format!("cannot start worker pool: {e}"),
            })?
            .install(body),
        None => body(),
    }
}

/// Parses arguments (including the program name) into a configuration.
pub fn parse_args<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError {
        code: if e.use_stderr() { EXIT_ARGS } else { EXIT_OK },
        message: e.to_string(),
    })?;
    resolve(cli)
}

/// Entry point; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_args(args).and_then(|cfg| {
        let (table, summary) = execute(&cfg)?;
        let written = match &cfg.out {
            Some(path) => fs::write(path, table.as_bytes()),
            None => std::io::stdout().lock().write_all(table.as_bytes()),
        };
        written.map_err(|e| CliError {
            code: EXIT_IO,
            message: format!("cannot write output: {e}"),
        })?;
        if let Some(summary) = summary {
            eprintln!("{summary}");
        }
        Ok(())
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.code == EXIT_OK => {
            print!("{}", e.message);
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_args(std::iter::once("twoatom").chain(args.iter().copied()))
    }

    #[test]
    fn grids() {
        let g: GridSpec = "0.9:1.1:0.1".parse().unwrap();
        assert_eq!(g.points().len(), 3);
        assert_eq!("2.5".parse::<GridSpec>().unwrap().points(), vec![2.5]);
        assert_eq!("-4:4:0.01".parse::<GridSpec>().unwrap().points().len(), 801);
        assert!("1:0:0.1".parse::<GridSpec>().is_err());
        assert!("0:1:0".parse::<GridSpec>().is_err());
        assert!("0:1".parse::<GridSpec>().is_err());
    }

    #[test]
    fn defaults_follow_the_command() {
        let c = parse(&["sweep", "gamma"]).unwrap();
        assert_eq!(c.params.g0, LOSS_COUPLING);
        assert_eq!(c.grid.step, 0.01);
        let c = parse(&["populations"]).unwrap();
        assert_eq!(c.params.g0, POPULATION_COUPLING);
        assert_eq!(c.params.t_span, (-6.0, 6.0));
        let c = parse(&["angles", "--detuning-sigma", "-5", "--n", "-1,0"]).unwrap();
        assert_eq!(c.n, vec![-1, 0]);
        assert_eq!(c.params.detuning, -5.0);
    }

    #[test]
    fn flags_override_config() {
        let map = parse_config("epsilon = 0.9\n# note\ng0_sigma=20 # inline\n").unwrap();
        assert_eq!(map["g0-sigma"], "20");
        assert!(parse_config("bogus = 1").is_err());
        assert!(parse_config("epsilon 1").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "epsilon = 0.9\ng0-sigma = 20\n").unwrap();
        let p = path.to_str().unwrap();
        let c = parse(&["spectrum", "--config", p, "--epsilon", "0.8"]).unwrap();
        assert_eq!(c.params.epsilon, 0.8);
        assert_eq!(c.params.g0, 20.0);
    }

    #[test]
    fn bad_arguments() {
        assert_eq!(parse(&["spectrum", "--epsilon", "abc"]).unwrap_err().code, EXIT_ARGS);
        assert_eq!(parse(&["frobnicate"]).unwrap_err().code, EXIT_ARGS);
        assert_eq!(parse(&["spectrum", "--grid", "1:0:1"]).unwrap_err().code, EXIT_ARGS);
        assert_eq!(parse(&["spectrum", "--epsilon", "-1"]).unwrap_err().code, EXIT_ARGS);
        assert_eq!(parse(&["scatter", "--regime", "odd"]).unwrap_err().code, EXIT_ARGS);
        assert_eq!(parse(&["spectrum", "--config", "/nonexistent/x.cfg"]).unwrap_err().code, EXIT_IO);
        assert_eq!(parse(&["--help"]).unwrap_err().code, EXIT_OK);
    }

    #[test]
    fn number_format() {
        assert_eq!(num(28.3929), "2.83929000000e1");
        assert_eq!(num(-0.001), "-1.00000000000e-3");
    }

    #[test]
    fn teleport_amplitudes_are_normalised() {
        let c = parse(&["teleport", "--alpha", "1", "--beta", "0+1i"]).unwrap();
        let Task::Teleport { alpha, beta, .. } = c.task else { panic!() };
        assert!((alpha.norm_sqr() + beta.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((beta.im - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }
}
