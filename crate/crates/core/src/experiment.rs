//! Monte Carlo convergence studies.
//!
//! Every trial samples one set of Wiener paths on the ARTM, computes a
//! reference solution on the full ARTM and runs every (scheme, step) cell on
//! the same paths. The error at an observation time is the root mean square
//! over trials of `|Y - X|`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Result, SddeError};
use crate::mesh::{self, DelaySet};
use crate::noise::{Artm, IntegralOptions, SeedInfo, WienerPaths};
use crate::problem::SddeProblem;
use crate::schemes::{
    run_with_stepper, DelayedValueMode, SchemeGrid, SchemeKind, Stepper, Trajectory,
};

pub const CSV_HEADER: &str =
    "scheme,integral_mode,delayed_value_mode,h_initial,obs_time,mse,n_ok,n_failed,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub h_initial_list: Vec<f64>,
    pub h_refined_initial: f64,
    pub schemes: Vec<SchemeKind>,
    pub n_trials: usize,
    pub master_seed: u64,
    /// Empty means `{T}`.
    pub observation_times: Vec<f64>,
    /// Added to the observation set of every augmented mesh.
    pub extra_observation_times: Vec<f64>,
    pub mesh_cap: usize,
    pub integral_options: IntegralOptions,
}

impl ExperimentConfig {
    pub fn new(
        h_initial_list: Vec<f64>,
        h_refined_initial: f64,
        schemes: Vec<SchemeKind>,
        n_trials: usize,
        master_seed: u64,
    ) -> Self {
        ExperimentConfig {
            h_initial_list,
            h_refined_initial,
            schemes,
            n_trials,
            master_seed,
            observation_times: Vec::new(),
            extra_observation_times: Vec::new(),
            mesh_cap: mesh::DEFAULT_MESH_CAP,
            integral_options: IntegralOptions::default(),
        }
    }

    pub fn resolved_observation_times(&self, delays: &DelaySet) -> Vec<f64> {
        if self.observation_times.is_empty() {
            vec![delays.terminal_time()]
        } else {
            let mut v = self.observation_times.clone();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() <= delays.tolerance());
            v
        }
    }

    fn mesh_extras(&self, delays: &DelaySet) -> Vec<f64> {
        let mut v = self.extra_observation_times.clone();
        v.extend(self.resolved_observation_times(delays));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scheme: SchemeKind,
    pub h_initial: f64,
    pub obs_time: f64,
    /// `NaN` when every trial failed.
    pub mse: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.scheme,
                r.scheme.integral_label(),
                r.scheme.delayed_value_mode().label(),
                fmt_float(r.h_initial),
                fmt_float(r.obs_time),
                fmt_float(r.mse),
                r.n_ok,
                r.n_failed,
                r.seed
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn rows_for<'a>(
        &'a self,
        scheme: SchemeKind,
        obs_time: f64,
    ) -> impl Iterator<Item = &'a ErrorRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.scheme == scheme && (r.obs_time - obs_time).abs() <= 1e-9 * obs_time.abs().max(1.0)
        })
    }

    pub fn get(&self, scheme: SchemeKind, h_initial: f64, obs_time: f64) -> Option<&ErrorRow> {
        self.rows_for(scheme, obs_time)
            .find(|r| (r.h_initial - h_initial).abs() <= 1e-12 * h_initial)
    }
}

/// 17 significant digits; `nan` for missing values.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub table: ErrorTable,
    /// Per-trial squared errors of the successful trials, aligned with `table.rows`.
    pub squared_errors: Vec<Vec<f64>>,
    /// Trials whose reference solution diverged.
    pub reference_failures: usize,
}

/// Simple Milstein with exact delayed values on every ARTM point.
pub fn reference_solution(
    problem: &SddeProblem,
    artm: &Artm,
    paths: &WienerPaths<'_>,
) -> Result<Trajectory> {
    let stepper = Stepper::new(problem)?;
    let grid = SchemeGrid::full(artm)?;
    run_with_stepper(
        &stepper,
        SchemeKind::reference(),
        &grid,
        paths,
        IntegralOptions::default(),
    )
}

struct Cell {
    scheme: SchemeKind,
    h_initial: f64,
    grid: SchemeGrid,
}

/// Squared errors per cell and observation time, `None` for a diverged run.
type TrialOutcome = Vec<Option<Vec<f64>>>;

pub fn run_study(
    problem: &SddeProblem,
    config: &ExperimentConfig,
    workers: usize,
) -> Result<StudyResult> {
    let delays = problem.delays();
    if config.n_trials == 0 {
        return Err(SddeError::InvalidConfig(
            "n_trials must be at least 1".into(),
        ));
    }
    if config.h_initial_list.is_empty() || config.schemes.is_empty() {
        return Err(SddeError::InvalidConfig(
            "need at least one scheme and one step size".into(),
        ));
    }
    let obs = config.resolved_observation_times(delays);
    if let Some(bad) = obs
        .iter()
        .find(|&&t| !(t.is_finite() && t > 0.0 && t <= delays.terminal_time() + delays.tolerance()))
    {
        return Err(SddeError::InvalidConfig(format!(
            "observation time {bad} outside (0, {}]",
            delays.terminal_time()
        )));
    }
    let extras = config.mesh_extras(delays);
    let finest = config
        .h_initial_list
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    for &h in &config.h_initial_list {
        mesh::divides(h, config.h_refined_initial, 1e-9 * h)?;
    }
    let artm = Artm::build(
        delays,
        finest,
        config.h_refined_initial,
        &extras,
        config.mesh_cap,
    )?;

    let mut cells = Vec::new();
    for &scheme in &config.schemes {
        for &h in &config.h_initial_list {
            let grid = SchemeGrid::for_kind(scheme, delays, h, &extras, &artm, config.mesh_cap)?;
            for &t in &obs {
                grid.locate(t).map_err(|_| {
                    SddeError::InvalidConfig(format!(
                        "observation time {t} is not a grid point of {scheme} at h = {h}"
                    ))
                })?;
            }
            cells.push(Cell {
                scheme,
                h_initial: h,
                grid,
            });
        }
    }
    let stepper = Stepper::new(problem)?;
    let reference_grid = SchemeGrid::full(&artm)?;

    let run_trial = |trial: usize| -> Result<Option<TrialOutcome>> {
        let paths = WienerPaths::sample(
            &artm,
            problem.noise_dim(),
            SeedInfo::new(config.master_seed, trial as u64),
        );
        let reference = match run_with_stepper(
            &stepper,
            SchemeKind::reference(),
            &reference_grid,
            &paths,
            IntegralOptions::default(),
        ) {
            Ok(r) => r,
            Err(SddeError::Divergence { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let exact = obs
            .iter()
            .map(|&t| reference.value_at(t).cloned())
            .collect::<Result<Vec<_>>>()?;
        let mut outcome = Vec::with_capacity(cells.len());
        for cell in &cells {
            match run_with_stepper(
                &stepper,
                cell.scheme,
                &cell.grid,
                &paths,
                config.integral_options,
            ) {
                Ok(traj) => {
                    let errs = obs
                        .iter()
                        .zip(&exact)
                        .map(|(&t, x)| Ok((traj.value_at(t)? - x).norm_sq()))
                        .collect::<Result<Vec<_>>>()?;
                    outcome.push(Some(errs));
                }
                Err(SddeError::Divergence { .. }) => outcome.push(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(outcome))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SddeError::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<Option<TrialOutcome>> = pool.install(|| {
        (0..config.n_trials)
            .into_par_iter()
            .map(run_trial)
            .collect::<Result<Vec<_>>>()
    })?;

    let reference_failures = outcomes.iter().filter(|o| o.is_none()).count();
    let mut rows = Vec::new();
    let mut squared_errors = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for (o, &t) in obs.iter().enumerate() {
            let samples: Vec<f64> = outcomes
                .iter()
                .filter_map(|trial| {
                    trial
                        .as_ref()
                        .and_then(|cells| cells[c].as_ref())
                        .map(|e| e[o])
                })
                .collect();
            let n_ok = samples.len();
            let mse = if n_ok == 0 {
                f64::NAN
            } else {
                (pairwise_sum(&samples) / n_ok as f64).sqrt()
            };
            rows.push(ErrorRow {
                scheme: cell.scheme,
                h_initial: cell.h_initial,
                obs_time: t,
                mse,
                n_ok,
                n_failed: config.n_trials - n_ok,
                seed: config.master_seed,
            });
            squared_errors.push(samples);
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&rows[a], &rows[b]);
        ra.scheme
            .id()
            .cmp(&rb.scheme.id())
            .then(ra.h_initial.total_cmp(&rb.h_initial))
            .then(ra.obs_time.total_cmp(&rb.obs_time))
    });
    Ok(StudyResult {
        table: ErrorTable {
            rows: order.iter().map(|&i| rows[i].clone()).collect(),
        },
        squared_errors: order.iter().map(|&i| squared_errors[i].clone()).collect(),
        reference_failures,
    })
}

/// Pairwise (cascade) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Least-squares slope of `ln mse` against `ln h_initial`.
pub fn fit_slope(table: &ErrorTable, scheme: SchemeKind, obs_time: f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = table
        .rows_for(scheme, obs_time)
        .map(|r| (r.h_initial, r.mse))
        .collect();
    let mut hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(SddeError::InsufficientData(format!(
            "{scheme} at t = {obs_time}: need 3 distinct step sizes, have {}",
            hs.len()
        )));
    }
    if let Some(bad) = points.iter().find(|p| !(p.1.is_finite() && p.1 > 0.0)) {
        return Err(SddeError::InsufficientData(format!(
            "{scheme} at h = {}: error {} is not positive",
            bad.0, bad.1
        )));
    }
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.0.ln(), p.1.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// One line per scheme and observation time with the fitted slope.
pub fn summary(table: &ErrorTable) -> String {
    let mut keys: Vec<(SchemeKind, f64)> = Vec::new();
    for r in &table.rows {
        if !keys.iter().any(|(s, t)| *s == r.scheme && *t == r.obs_time) {
            keys.push((r.scheme, r.obs_time));
        }
    }
    let mut out = String::new();
    for (scheme, t) in keys {
        let slope = match fit_slope(table, scheme, t) {
            Ok(s) => format!("{s:.3}"),
            Err(e) => format!("n/a ({e})"),
        };
        let failed: usize = table.rows_for(scheme, t).map(|r| r.n_failed).sum();
        writeln!(
            out,
            "{scheme:<22} t = {t:<10.6} slope = {slope}  failed runs = {failed}"
        )
        .expect("writing to a String");
    }
    out
}

/// Whether the schemes in `config` include an interpolating variant.
pub fn uses_interpolation(config: &ExperimentConfig) -> bool {
    config
        .schemes
        .iter()
        .any(|s| s.delayed_value_mode() == DelayedValueMode::LinearInterpolation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin, ProblemOverrides};

    fn synthetic(scheme: SchemeKind, f: impl Fn(f64) -> f64) -> ErrorTable {
        let rows = (2..7)
            .map(|k| {
                let h = 2f64.powi(-k);
                ErrorRow {
                    scheme,
                    h_initial: h,
                    obs_time: 4.0,
                    mse: f(h),
                    n_ok: 1,
                    n_failed: 0,
                    seed: 0,
                }
            })
            .collect();
        ErrorTable { rows }
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let s: SchemeKind = "em".parse().unwrap();
        assert!((fit_slope(&synthetic(s, |h| 3.0 * h), s, 4.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            (fit_slope(&synthetic(s, |h| 0.2 * h.sqrt()), s, 4.0).unwrap() - 0.5).abs() < 1e-12
        );
        assert!(fit_slope(&synthetic(s, |_| 0.0), s, 4.0).is_err());
        let mut short = synthetic(s, |h| h);
        short.rows.truncate(2);
        assert!(matches!(
            fit_slope(&short, s, 4.0),
            Err(SddeError::InsufficientData(_))
        ));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_exact_values() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn csv_format() {
        let s: SchemeKind = "mm-refined-li".parse().unwrap();
        let mut t = synthetic(s, |h| h);
        t.rows.truncate(1);
        t.rows[0].mse = f64::NAN;
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(
            lines.next(),
            Some("mm-refined-li,trapezoidal,linear_interpolation,2.5000000000000000e-1,4.0000000000000000e0,nan,1,0,0")
        );
    }

    #[test]
    fn zero_problem_has_zero_error() {
        let p = builtin(
            "zero",
            &ProblemOverrides {
                delays: None,
                terminal_time: Some(1.0),
            },
        )
        .unwrap();
        let schemes = SchemeKind::all(DelayedValueMode::MeshExact).to_vec();
        let cfg = ExperimentConfig::new(vec![0.25, 0.125], 1.0 / 32.0, schemes, 4, 1);
        let res = run_study(&p, &cfg, 2).unwrap();
        assert_eq!(res.table.rows.len(), 12);
        for r in &res.table.rows {
            assert_eq!(r.mse, 0.0);
            assert_eq!((r.n_ok, r.n_failed), (4, 0));
        }
    }

    #[test]
    fn li_observation_times_must_be_grid_points() {
        let p = builtin(
            "example1",
            &ProblemOverrides {
                delays: Some(vec![1.0, std::f64::consts::FRAC_PI_4]),
                terminal_time: Some(2.0),
            },
        )
        .unwrap();
        let mut cfg =
            ExperimentConfig::new(vec![0.25], 1.0 / 16.0, vec!["em-li".parse().unwrap()], 1, 0);
        cfg.observation_times = vec![std::f64::consts::FRAC_PI_4];
        assert!(matches!(
            run_study(&p, &cfg, 1),
            Err(SddeError::InvalidConfig(_))
        ));
        cfg.schemes = vec!["em".parse().unwrap()];
        assert!(run_study(&p, &cfg, 1).is_ok());
    }

    #[test]
    fn refined_milstein_converges_to_reference() {
        let p = builtin(
            "example1",
            &ProblemOverrides {
                delays: None,
                terminal_time: Some(2.0),
            },
        )
        .unwrap();
        let d = p.delays();
        let (coarse, fine) = (1.0 / 64.0, 1.0 / 128.0);
        let artm = Artm::build(d, 0.25, fine / 2.0, &[], mesh::DEFAULT_MESH_CAP).unwrap();
        let mut diffs = [0.0; 2];
        for trial in 0..100 {
            let paths = WienerPaths::sample(&artm, 2, SeedInfo::new(17, trial));
            let best = reference_solution(&p, &artm, &paths).unwrap();
            let stepper = Stepper::new(&p).unwrap();
            for (slot, h) in [coarse, fine].into_iter().enumerate() {
                let grid = SchemeGrid::uniform(d, h, &artm).unwrap();
                let traj = run_with_stepper(
                    &stepper,
                    "milstein-refined".parse().unwrap(),
                    &grid,
                    &paths,
                    IntegralOptions::default(),
                )
                .unwrap();
                diffs[slot] += (traj.last() - best.last()).norm_sq();
            }
        }
        let ratio = (diffs[0] / diffs[1]).sqrt();
        assert!(ratio > 1.5, "ratio {ratio}");
    }
}
