//! Command-line front end: a TOML config file plus a subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::SddeError;
use crate::experiment::{self, fmt_float, ExperimentConfig};
use crate::mesh::{self, DelaySet};
use crate::noise::{Artm, IntegralOptions, SeedInfo, WienerPaths};
use crate::problem::{self, ProblemOverrides, SddeProblem};
use crate::schemes::{run_trajectory, DelayedValueMode, SchemeGrid, SchemeKind};

const CONFIG_KEYS: &str = "\
Config file keys (TOML):
  [problem]  name, delays = [..], T
  [mesh]     h_initial, h_refined_initial, extra_observation_times = [..], cap
  [study]    schemes = [..], h_initial_list = [..], n_trials, seed, observation_times = [..]
  [output]   dir, formats = [\"csv\", \"summary\"]

Scheme ids: em, mem, milstein-simple, milstein-refined, mm-simple, mm-refined,
each optionally suffixed with -li for linearly interpolated delayed values.

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 divergence, 4 mesh size cap exceeded.";

#[derive(Debug, Parser)]
#[command(name = "sdde", version, about = "Solvers and convergence studies for stochastic delay-differential equations", after_help = CONFIG_KEYS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the augmented mesh for [mesh].h_initial and report its size.
    Mesh {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write every mesh point to <out>/mesh_points.csv.
        #[arg(long)]
        dump: bool,
        /// Also count the points of the nested construction with exact float dedup.
        #[arg(long)]
        literal: bool,
        /// Skip the check that h_initial is below the smallest delay.
        #[arg(long)]
        allow_large_step: bool,
    },
    /// Run one scheme on one path set and write <out>/trajectory.csv.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Scheme id; defaults to the first entry of [study].schemes.
        #[arg(long)]
        scheme: Option<String>,
        /// Trial index selecting the random stream.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run a Monte Carlo convergence study and write <out>/errors.csv.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads; defaults to the number of cores.
        #[arg(long, env = "SDDE_WORKERS")]
        workers: Option<usize>,
    },
    /// List the built-in problems.
    ListProblems,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Path to the TOML config file.
    pub config: PathBuf,
    /// Override [study].seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override [study].n_trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override [output].dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    pub delays: Option<Vec<f64>>,
    #[serde(rename = "T")]
    pub terminal_time: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub h_initial: Option<f64>,
    pub h_refined_initial: Option<f64>,
    #[serde(default)]
    pub extra_observation_times: Vec<f64>,
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub schemes: Option<Vec<String>>,
    pub h_initial_list: Option<Vec<f64>>,
    pub n_trials: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub observation_times: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
}

const DEFAULT_TRIALS: usize = 200;
const DEFAULT_REFINED_STEP: f64 = 1.0 / 1024.0;

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        CliConfig::parse(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "{name} must be finite and positive, got {v}"
                )))
            }
        };
        for &d in self.problem.delays.iter().flatten() {
            positive("problem.delays", d)?;
        }
        if let Some(t) = self.problem.terminal_time {
            positive("problem.T", t)?;
        }
        if let Some(h) = self.mesh.h_initial {
            positive("mesh.h_initial", h)?;
        }
        if let Some(h) = self.mesh.h_refined_initial {
            positive("mesh.h_refined_initial", h)?;
        }
        for &t in &self.mesh.extra_observation_times {
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::Config(format!(
                    "mesh.extra_observation_times: bad value {t}"
                )));
            }
        }
        for &h in self.study.h_initial_list.iter().flatten() {
            positive("study.h_initial_list", h)?;
        }
        for &t in &self.study.observation_times {
            positive("study.observation_times", t)?;
        }
        if self.study.n_trials == Some(0) {
            return Err(CliError::Config("study.n_trials must be at least 1".into()));
        }
        for f in self.output.formats.iter().flatten() {
            if f != "csv" && f != "summary" {
                return Err(CliError::Config(format!(
                    "unknown output format `{f}`; expected csv or summary"
                )));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<SddeProblem, CliError> {
        let overrides = ProblemOverrides {
            delays: self.problem.delays.clone(),
            terminal_time: self.problem.terminal_time,
        };
        Ok(problem::builtin(&self.problem.name, &overrides)?)
    }

    pub fn schemes(&self) -> Result<Vec<SchemeKind>, CliError> {
        match &self.study.schemes {
            None => Ok(SchemeKind::all(DelayedValueMode::MeshExact).to_vec()),
            Some(ids) if ids.is_empty() => Err(CliError::Config("study.schemes is empty".into())),
            Some(ids) => Ok(ids
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<_>, _>>()?),
        }
    }

    fn h_initial(&self) -> Result<f64, CliError> {
        self.mesh
            .h_initial
            .ok_or_else(|| CliError::Config("mesh.h_initial is required for this command".into()))
    }

    fn cap(&self) -> usize {
        self.mesh.cap.unwrap_or(mesh::DEFAULT_MESH_CAP)
    }

    fn formats(&self) -> Vec<String> {
        self.output
            .formats
            .clone()
            .unwrap_or_else(|| vec!["csv".into(), "summary".into()])
    }

    pub fn experiment(
        &self,
        seed: Option<u64>,
        trials: Option<usize>,
    ) -> Result<ExperimentConfig, CliError> {
        let h_list = self
            .study
            .h_initial_list
            .clone()
            .unwrap_or_else(|| (2..=7).map(|k| 2f64.powi(-k)).collect());
        let mut cfg = ExperimentConfig::new(
            h_list,
            self.mesh.h_refined_initial.unwrap_or(DEFAULT_REFINED_STEP),
            self.schemes()?,
            trials.or(self.study.n_trials).unwrap_or(DEFAULT_TRIALS),
            seed.or(self.study.seed).unwrap_or(0),
        );
        cfg.observation_times = self.study.observation_times.clone();
        cfg.extra_observation_times = self.mesh.extra_observation_times.clone();
        cfg.mesh_cap = self.cap();
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sdde(#[from] SddeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Sdde(e) => match e {
                SddeError::Divergence { .. } => 3,
                SddeError::MeshCapExceeded { .. } => 4,
                SddeError::InvalidConfig(_)
                | SddeError::StepTooLarge { .. }
                | SddeError::NotDivisible { .. }
                | SddeError::UnknownProblem { .. }
                | SddeError::DimensionMismatch { .. }
                | SddeError::InsufficientData(_) => 2,
                SddeError::NonFinite(_)
                | SddeError::MeshMiss { .. }
                | SddeError::OutsideGrid { .. }
                | SddeError::BeyondFrontier { .. } => 1,
            },
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::ListProblems => {
            for name in problem::BUILTIN_NAMES {
                writeln!(out, "{name}")?;
            }
            Ok(())
        }
        Command::Mesh {
            common,
            dump,
            literal,
            allow_large_step,
        } => cmd_mesh(&common, dump, literal, allow_large_step, out),
        Command::Simulate {
            common,
            scheme,
            trial,
        } => cmd_simulate(&common, scheme.as_deref(), trial, out),
        Command::Converge { common, workers } => cmd_converge(&common, workers, out),
    }
}

fn output_dir(common: &CommonArgs, cfg: &CliConfig) -> Result<PathBuf, CliError> {
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_mesh(
    common: &CommonArgs,
    dump: bool,
    literal: bool,
    allow_large_step: bool,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let cfg = CliConfig::load(&common.config)?;
    let problem = cfg.problem()?;
    let delays = problem.delays();
    let h = cfg.h_initial()?;
    if !allow_large_step {
        delays.check_step(h)?;
    }
    let mesh = mesh::build_scheme_mesh(delays, h, &cfg.mesh.extra_observation_times, cfg.cap())?;
    let report = mesh_report(delays, h, &mesh, literal, &cfg)?;
    out.write_all(report.as_bytes())?;
    if dump {
        let path = output_dir(common, &cfg)?.join("mesh_points.csv");
        let mut text = String::from("t\n");
        for &t in mesh.points() {
            writeln!(text, "{}", fmt_float(t)).expect("writing to a String");
        }
        fs::write(&path, text)?;
        writeln!(out, "points written to {}", path.display())?;
    }
    Ok(())
}

fn mesh_report(
    delays: &DelaySet,
    h: f64,
    mesh: &mesh::AugmentedMesh,
    literal: bool,
    cfg: &CliConfig,
) -> Result<String, CliError> {
    let steps: Vec<f64> = mesh.steps().collect();
    let min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let max = steps.iter().copied().fold(0.0, f64::max);
    let mean = delays.terminal_time() / steps.len() as f64;
    let bellman = mesh::bellman_points(delays);
    let mut s = String::new();
    writeln!(s, "delays: {:?}", delays.delays()).expect("writing to a String");
    writeln!(s, "T: {}", delays.terminal_time()).expect("writing to a String");
    writeln!(s, "h_initial: {h}").expect("writing to a String");
    writeln!(s, "points: {}", mesh.len()).expect("writing to a String");
    if literal {
        let mut obs = mesh::literal_observation_times(delays, h)?;
        obs.extend(cfg.mesh.extra_observation_times.iter().copied());
        obs.sort_by(f64::total_cmp);
        obs.dedup();
        let n = mesh::literal_mesh_points(&obs, delays, cfg.cap())?.len();
        writeln!(s, "points (exact float dedup): {n}").expect("writing to a String");
    }
    writeln!(s, "step min: {min:.6e}").expect("writing to a String");
    writeln!(s, "step mean: {mean:.6e}").expect("writing to a String");
    writeln!(s, "step max: {max:.6e}").expect("writing to a String");
    let list: Vec<String> = bellman.iter().map(|b| format!("{b:.12}")).collect();
    writeln!(s, "bellman points ({}): {}", bellman.len(), list.join(", "))
        .expect("writing to a String");
    writeln!(
        s,
        "near-coincident merges: {}",
        mesh.near_coincident_merges()
    )
    .expect("writing to a String");
    Ok(s)
}

fn cmd_simulate(
    common: &CommonArgs,
    scheme: Option<&str>,
    trial: u64,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let cfg = CliConfig::load(&common.config)?;
    let problem = cfg.problem()?;
    let delays = problem.delays();
    let kind = match scheme {
        Some(id) => id.parse()?,
        None => cfg.schemes()?[0],
    };
    let h = cfg.h_initial()?;
    let h_refined = cfg.mesh.h_refined_initial.unwrap_or(h);
    let extras = &cfg.mesh.extra_observation_times;
    let artm = Artm::build(delays, h, h_refined, extras, cfg.cap())?;
    let grid = SchemeGrid::for_kind(kind, delays, h, extras, &artm, cfg.cap())?;
    let seed = common.seed.or(cfg.study.seed).unwrap_or(0);
    let paths = WienerPaths::sample(&artm, problem.noise_dim(), SeedInfo::new(seed, trial));
    let traj = run_trajectory(&problem, kind, &grid, &paths, IntegralOptions::default())?;

    let mut text = String::from("t");
    for c in 1..=problem.dim() {
        write!(text, ",y{c}").expect("writing to a String");
    }
    text.push('\n');
    for (t, y) in traj.times.iter().zip(&traj.values) {
        text.push_str(&fmt_float(*t));
        for v in y.iter() {
            text.push(',');
            text.push_str(&fmt_float(*v));
        }
        text.push('\n');
    }
    let path = output_dir(common, &cfg)?.join("trajectory.csv");
    fs::write(&path, text)?;
    writeln!(
        out,
        "{kind}: {} points written to {}",
        traj.times.len(),
        path.display()
    )?;
    Ok(())
}

fn cmd_converge(
    common: &CommonArgs,
    workers: Option<usize>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let cfg = CliConfig::load(&common.config)?;
    let problem = cfg.problem()?;
    let study = cfg.experiment(common.seed, common.trials)?;
    let workers = match workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let result = experiment::run_study(&problem, &study, workers)?;
    let dir = output_dir(common, &cfg)?;
    let summary = experiment::summary(&result.table);
    let formats = cfg.formats();
    if formats.iter().any(|f| f == "csv") {
        fs::write(dir.join("errors.csv"), result.table.to_csv())?;
    }
    if formats.iter().any(|f| f == "summary") {
        fs::write(dir.join("summary.txt"), &summary)?;
    }
    out.write_all(summary.as_bytes())?;
    if result.reference_failures > 0 {
        writeln!(
            out,
            "reference solution diverged in {} trials",
            result.reference_failures
        )?;
    }
    Ok(())
}
