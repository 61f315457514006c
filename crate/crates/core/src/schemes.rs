//! One-step maps (EM, Milstein, MEM, MM) and the trajectory driver.
//!
//! Delayed values come either from exact lookup on the augmented mesh or from
//! linear interpolation on a uniform grid.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SddeError};
use crate::linalg::{commutator, mat_exp, Matrix, Vector};
use crate::mesh::{self, locate_in, neighbors_in, DelaySet};
use crate::noise::{Artm, IntegralMode, IntegralOptions, StepIntegrals, WienerPaths};
use crate::problem::SddeProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeFamily {
    Em,
    Milstein,
    Mem,
    Mm,
}

impl SchemeFamily {
    pub fn uses_iterated_integrals(self) -> bool {
        matches!(self, SchemeFamily::Milstein | SchemeFamily::Mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DelayedValueMode {
    MeshExact,
    LinearInterpolation,
}

impl DelayedValueMode {
    pub fn label(self) -> &'static str {
        match self {
            DelayedValueMode::MeshExact => "mesh_exact",
            DelayedValueMode::LinearInterpolation => "linear_interpolation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemeKind {
    family: SchemeFamily,
    integral_mode: IntegralMode,
    delayed_value_mode: DelayedValueMode,
}

impl SchemeKind {
    /// EM and MEM have no iterated integrals; their mode is stored as simple.
    pub fn new(
        family: SchemeFamily,
        integral_mode: IntegralMode,
        delayed_value_mode: DelayedValueMode,
    ) -> Self {
        let integral_mode = if family.uses_iterated_integrals() {
            integral_mode
        } else {
            IntegralMode::Simple
        };
        SchemeKind {
            family,
            integral_mode,
            delayed_value_mode,
        }
    }

    /// Simple Milstein with exact delayed values, as used for reference solutions.
    pub fn reference() -> Self {
        SchemeKind::new(
            SchemeFamily::Milstein,
            IntegralMode::Simple,
            DelayedValueMode::MeshExact,
        )
    }

    /// The six scheme variants in a fixed order.
    pub fn all(mode: DelayedValueMode) -> [SchemeKind; 6] {
        use IntegralMode::*;
        use SchemeFamily::*;
        [
            SchemeKind::new(Em, Simple, mode),
            SchemeKind::new(Mem, Simple, mode),
            SchemeKind::new(Milstein, Simple, mode),
            SchemeKind::new(Mm, Simple, mode),
            SchemeKind::new(Milstein, Trapezoidal, mode),
            SchemeKind::new(Mm, Trapezoidal, mode),
        ]
    }

    pub fn family(&self) -> SchemeFamily {
        self.family
    }

    pub fn integral_mode(&self) -> IntegralMode {
        self.integral_mode
    }

    pub fn delayed_value_mode(&self) -> DelayedValueMode {
        self.delayed_value_mode
    }

    pub fn integral_label(&self) -> &'static str {
        match (self.family.uses_iterated_integrals(), self.integral_mode) {
            (false, _) => "none",
            (true, IntegralMode::Simple) => "simple",
            (true, IntegralMode::Trapezoidal) => "trapezoidal",
        }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let refined = self.integral_mode == IntegralMode::Trapezoidal;
        let base = match (self.family, refined) {
            (SchemeFamily::Em, _) => "em",
            (SchemeFamily::Mem, _) => "mem",
            (SchemeFamily::Milstein, false) => "milstein-simple",
            (SchemeFamily::Milstein, true) => "milstein-refined",
            (SchemeFamily::Mm, false) => "mm-simple",
            (SchemeFamily::Mm, true) => "mm-refined",
        };
        f.write_str(base)?;
        if self.delayed_value_mode == DelayedValueMode::LinearInterpolation {
            f.write_str("-li")?;
        }
        Ok(())
    }
}

impl FromStr for SchemeKind {
    type Err = SddeError;

    fn from_str(s: &str) -> Result<Self> {
        use IntegralMode::*;
        use SchemeFamily::*;
        let (base, mode) = match s.strip_suffix("-li") {
            Some(b) => (b, DelayedValueMode::LinearInterpolation),
            None => (s, DelayedValueMode::MeshExact),
        };
        let (family, integral) = match base {
            "em" => (Em, Simple),
            "mem" => (Mem, Simple),
            "milstein-simple" => (Milstein, Simple),
            "milstein-refined" => (Milstein, Trapezoidal),
            "mm-simple" => (Mm, Simple),
            "mm-refined" => (Mm, Trapezoidal),
            _ => {
                return Err(SddeError::InvalidConfig(format!(
                    "unknown scheme `{s}`; expected one of em, mem, milstein-simple, \
                     milstein-refined, mm-simple, mm-refined, optionally suffixed with -li"
                )))
            }
        };
        Ok(SchemeKind::new(family, integral, mode))
    }
}

/// State a single step reads.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub t: f64,
    pub y: &'a Vector,
    /// `Y^{τ_k}` for every delay.
    pub delayed: &'a [Vector],
    /// `twice_delayed[k][l]` is `Y^{τ_l, τ_k}`, the value at `t - τ_k - τ_l`.
    /// Only read for delays whose integrals are active.
    pub twice_delayed: &'a [Vec<Vector>],
    pub integrals: &'a StepIntegrals,
}

/// One-step maps for a fixed problem, with the matrix products they share.
pub struct Stepper<'p> {
    problem: &'p SddeProblem,
    ito_drift: Matrix,
    drift_commutators: Vec<Matrix>,
    noise_commutators: Vec<(usize, usize, Matrix)>,
}

struct Evaluated {
    drift: Vector,
    g: Vec<Vector>,
    /// `B_i y + g_i`.
    b: Vec<Vector>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p SddeProblem) -> Result<Self> {
        let a0 = problem.drift_matrix();
        let mut ito_drift = a0.clone();
        for b in problem.noise_matrices() {
            ito_drift.add_scaled(-0.5, &b.matmul(b));
        }
        let drift_commutators = problem
            .noise_matrices()
            .iter()
            .map(|b| commutator(a0, b))
            .collect::<Result<Vec<_>>>()?;
        let m = problem.noise_dim();
        let mut noise_commutators = Vec::new();
        for p in 0..m {
            for q in p + 1..m {
                let c = commutator(problem.noise_matrix(p), problem.noise_matrix(q))?;
                if !c.is_zero() {
                    noise_commutators.push((p, q, c));
                }
            }
        }
        Ok(Stepper {
            problem,
            ito_drift,
            drift_commutators,
            noise_commutators,
        })
    }

    pub fn problem(&self) -> &'p SddeProblem {
        self.problem
    }

    pub fn step(&self, family: SchemeFamily, input: &StepInput<'_>) -> Result<Vector> {
        match family {
            SchemeFamily::Em => self.em(input),
            SchemeFamily::Milstein => self.milstein(input),
            SchemeFamily::Mem => self.mem(input),
            SchemeFamily::Mm => self.mm(input),
        }
    }

    fn evaluate(&self, s: &StepInput<'_>) -> Result<Evaluated> {
        let p = self.problem;
        let drift = p.drift(s.t, s.y, s.delayed)?;
        let g = (0..p.noise_dim())
            .map(|j| p.diffusion(j, s.t, s.y, s.delayed))
            .collect::<Result<Vec<_>>>()?;
        let b = g
            .iter()
            .enumerate()
            .map(|(j, gj)| &(p.noise_matrix(j) * s.y) + gj)
            .collect();
        Ok(Evaluated { drift, g, b })
    }

    pub fn em(&self, s: &StepInput<'_>) -> Result<Vector> {
        let e = self.evaluate(s)?;
        let h = s.integrals.dt;
        let mut out = s.y.clone();
        out.axpy(h, &(&(self.problem.drift_matrix() * s.y) + &e.drift));
        for (j, bj) in e.b.iter().enumerate() {
            out.axpy(s.integrals.dw[j], bj);
        }
        Ok(out)
    }

    pub fn milstein(&self, s: &StepInput<'_>) -> Result<Vector> {
        let p = self.problem;
        let e = self.evaluate(s)?;
        let h = s.integrals.dt;
        let mut out = s.y.clone();
        out.axpy(h, &(&(p.drift_matrix() * s.y) + &e.drift));
        for (j, bj) in e.b.iter().enumerate() {
            out.axpy(s.integrals.dw[j], bj);
        }
        for j in 0..p.noise_dim() {
            let lead = p.noise_matrix(j) + &p.jacobian_x(j, s.t, s.y, s.delayed);
            for (i, bi) in e.b.iter().enumerate() {
                out.axpy(s.integrals.ij(i, j), &(&lead * bi));
            }
        }
        self.add_delayed_correction(s, &mut out)?;
        Ok(out)
    }

    pub fn mem(&self, s: &StepInput<'_>) -> Result<Vector> {
        let e = self.evaluate(s)?;
        let propagator = mat_exp(&self.first_order_exponent(s.integrals))?;
        Ok(&propagator * &self.euler_brace(s, &e))
    }

    pub fn mm(&self, s: &StepInput<'_>) -> Result<Vector> {
        let p = self.problem;
        let e = self.evaluate(s)?;
        let ints = s.integrals;
        let mut exponent = self.first_order_exponent(ints);
        for (j, c) in self.drift_commutators.iter().enumerate() {
            exponent.add_scaled(0.5 * (ints.i_j0[j] - ints.i_0j[j]), c);
        }
        for (pi, qi, c) in &self.noise_commutators {
            exponent.add_scaled(0.5 * (ints.ij(*qi, *pi) - ints.ij(*pi, *qi)), c);
        }
        let mut brace = self.euler_brace(s, &e);
        for j in 0..p.noise_dim() {
            let jac = p.jacobian_x(j, s.t, s.y, s.delayed);
            for (i, bi) in e.b.iter().enumerate() {
                let term = &(&jac * bi) - &(p.noise_matrix(i) * &e.g[j]);
                brace.axpy(ints.ij(i, j), &term);
            }
        }
        self.add_delayed_correction(s, &mut brace)?;
        Ok(&mat_exp(&exponent)? * &brace)
    }

    /// `(A_0 - ½ Σ B_i²) h + Σ B_j ΔW_j`.
    fn first_order_exponent(&self, ints: &StepIntegrals) -> Matrix {
        let mut omega = self.ito_drift.scale(ints.dt);
        for (j, b) in self.problem.noise_matrices().iter().enumerate() {
            omega.add_scaled(ints.dw[j], b);
        }
        omega
    }

    /// `y + f̃ h + Σ g_j ΔW_j`.
    fn euler_brace(&self, s: &StepInput<'_>, e: &Evaluated) -> Vector {
        let p = self.problem;
        let h = s.integrals.dt;
        let mut out = s.y.clone();
        out.axpy(h, &e.drift);
        for (j, gj) in e.g.iter().enumerate() {
            out.axpy(-h, &(p.noise_matrix(j) * gj));
            out.axpy(s.integrals.dw[j], gj);
        }
        out
    }

    fn add_delayed_correction(&self, s: &StepInput<'_>, out: &mut Vector) -> Result<()> {
        let p = self.problem;
        let taus = p.delays().delays();
        for (k, &tau) in taus.iter().enumerate() {
            if !s.integrals.delayed_active[k] {
                continue;
            }
            let yk = &s.delayed[k];
            let inner: Vec<Vector> = (0..p.noise_dim())
                .map(|i| {
                    let gi = p.diffusion(i, s.t - tau, yk, &s.twice_delayed[k])?;
                    Ok(&(p.noise_matrix(i) * yk) + &gi)
                })
                .collect::<Result<_>>()?;
            for j in 0..p.noise_dim() {
                let jac = p.jacobian_delay(j, k, s.t, s.y, s.delayed);
                if jac.is_zero() {
                    continue;
                }
                for (i, ci) in inner.iter().enumerate() {
                    out.axpy(s.integrals.delayed_ij(k, i, j), &(&jac * ci));
                }
            }
        }
        Ok(())
    }
}

/// Value of a partially computed trajectory at `t_target`.
///
/// `values[n]` belongs to `times[n]`; only the first `values.len()` points are
/// known. Times `<= 0` are read from the history.
pub fn delayed_value(
    problem: &SddeProblem,
    times: &[f64],
    values: &[Vector],
    tolerance: f64,
    t_target: f64,
    mode: DelayedValueMode,
) -> Result<Vector> {
    if t_target <= 0.0 {
        return Ok(problem.history(t_target));
    }
    let frontier = values.len();
    let beyond = || SddeError::BeyondFrontier {
        t: t_target,
        frontier: if frontier == 0 {
            f64::NEG_INFINITY
        } else {
            times[frontier - 1]
        },
    };
    match mode {
        DelayedValueMode::MeshExact => {
            let idx = locate_in(times, tolerance, t_target)?;
            values.get(idx).cloned().ok_or_else(beyond)
        }
        DelayedValueMode::LinearInterpolation => {
            let (pre, post) = neighbors_in(times, tolerance, t_target)?;
            let offset = t_target - times[pre];
            if pre == post || offset.abs() <= tolerance {
                return values.get(pre).cloned().ok_or_else(beyond);
            }
            let (y_pre, y_post) = match (values.get(pre), values.get(post)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(beyond()),
            };
            Ok(y_pre.lerp(y_post, offset / (times[post] - times[pre])))
        }
    }
}

/// Time points a scheme steps through, each tied to its ARTM index.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeGrid {
    times: Vec<f64>,
    artm_indices: Vec<usize>,
    tolerance: f64,
}

impl SchemeGrid {
    /// Augmented mesh of initial step `h_initial`, for exact delayed values.
    pub fn augmented(
        delays: &DelaySet,
        h_initial: f64,
        extra_obs: &[f64],
        artm: &Artm,
        cap: usize,
    ) -> Result<Self> {
        let m = mesh::build_scheme_mesh(delays, h_initial, extra_obs, cap)?;
        SchemeGrid::from_times(m.points().to_vec(), delays, artm)
    }

    /// Uniform grid `n h` on `[0, T]`, for interpolated delayed values.
    pub fn uniform(delays: &DelaySet, h: f64, artm: &Artm) -> Result<Self> {
        let n = mesh::divides(delays.terminal_time(), h, delays.tolerance())?;
        let times = (0..=n).map(|i| i as f64 * h).collect();
        SchemeGrid::from_times(times, delays, artm)
    }

    /// Every ARTM point.
    pub fn full(artm: &Artm) -> Result<Self> {
        SchemeGrid::from_times(artm.points().to_vec(), artm.delays(), artm)
    }

    pub fn for_kind(
        kind: SchemeKind,
        delays: &DelaySet,
        h_initial: f64,
        extra_obs: &[f64],
        artm: &Artm,
        cap: usize,
    ) -> Result<Self> {
        match kind.delayed_value_mode() {
            DelayedValueMode::MeshExact => {
                SchemeGrid::augmented(delays, h_initial, extra_obs, artm, cap)
            }
            DelayedValueMode::LinearInterpolation => SchemeGrid::uniform(delays, h_initial, artm),
        }
    }

    fn from_times(times: Vec<f64>, delays: &DelaySet, artm: &Artm) -> Result<Self> {
        if times.len() < 2 {
            return Err(SddeError::InvalidConfig(
                "grid needs at least two points".into(),
            ));
        }
        let max_step = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        delays.check_step(max_step)?;
        let artm_indices = times
            .iter()
            .map(|&t| artm.mesh().locate(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(SchemeGrid {
            times,
            artm_indices,
            tolerance: delays.tolerance(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn artm_index(&self, n: usize) -> usize {
        self.artm_indices[n]
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn locate(&self, t: f64) -> Result<usize> {
        locate_in(&self.times, self.tolerance, t)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryStats {
    /// Steps on which the delayed correction of each delay was active.
    pub delayed_steps: Vec<usize>,
    /// Earliest step start time with an active delayed correction, per delay.
    pub first_delayed_time: Vec<Option<f64>>,
    /// Delayed integrals that fell back to the simple formula.
    pub integral_fallbacks: usize,
    /// Twice-delayed lookups clamped to the start of the history.
    pub clamped_lookups: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
    pub stats: TrajectoryStats,
    tolerance: f64,
}

impl Trajectory {
    pub fn value_at(&self, t: f64) -> Result<&Vector> {
        Ok(&self.values[locate_in(&self.times, self.tolerance, t)?])
    }

    pub fn last(&self) -> &Vector {
        self.values.last().expect("trajectory is never empty")
    }
}

/// Runs one scheme over `grid` with noise from `paths`.
pub fn run_trajectory(
    problem: &SddeProblem,
    kind: SchemeKind,
    grid: &SchemeGrid,
    paths: &WienerPaths<'_>,
    opts: IntegralOptions,
) -> Result<Trajectory> {
    let stepper = Stepper::new(problem)?;
    run_with_stepper(&stepper, kind, grid, paths, opts)
}

pub fn run_with_stepper(
    stepper: &Stepper<'_>,
    kind: SchemeKind,
    grid: &SchemeGrid,
    paths: &WienerPaths<'_>,
    opts: IntegralOptions,
) -> Result<Trajectory> {
    let problem = stepper.problem();
    if paths.noise_dim() != problem.noise_dim() {
        return Err(SddeError::DimensionMismatch {
            expected: problem.noise_dim(),
            actual: paths.noise_dim(),
        });
    }
    let taus = problem.delays().delays();
    let history_start = -problem.delays().max_delay();
    let (times, tol, mode) = (grid.times(), grid.tolerance(), kind.delayed_value_mode());
    let family = kind.family();
    let k_count = taus.len();

    let mut values = Vec::with_capacity(times.len());
    values.push(problem.history(0.0));
    let mut stats = TrajectoryStats {
        delayed_steps: vec![0; k_count],
        first_delayed_time: vec![None; k_count],
        ..Default::default()
    };
    let mut ints = StepIntegrals::zeros(problem.noise_dim(), k_count);
    let mut twice: Vec<Vec<Vector>> = vec![Vec::new(); k_count];

    for n in 0..times.len() - 1 {
        let t = times[n];
        let (a, b) = (grid.artm_index(n), grid.artm_index(n + 1));
        if family.uses_iterated_integrals() {
            ints.fallbacks = 0;
            paths.fill_integrals(a, b, kind.integral_mode(), opts, &mut ints)?;
            stats.integral_fallbacks += ints.fallbacks;
        } else {
            paths.fill_increments(a, b, &mut ints)?;
            ints.delayed_active.iter_mut().for_each(|x| *x = false);
        }

        let delayed = taus
            .iter()
            .map(|&tau| delayed_value(problem, times, &values, tol, t - tau, mode))
            .collect::<Result<Vec<_>>>()?;
        for k in 0..k_count {
            if !ints.delayed_active[k] {
                continue;
            }
            stats.delayed_steps[k] += 1;
            stats.first_delayed_time[k].get_or_insert(t);
            twice[k] = taus
                .iter()
                .map(|&tau_l| {
                    let mut target = t - taus[k] - tau_l;
                    if target < history_start {
                        stats.clamped_lookups += 1;
                        target = history_start;
                    }
                    delayed_value(problem, times, &values, tol, target, mode)
                })
                .collect::<Result<Vec<_>>>()?;
        }

        let input = StepInput {
            t,
            y: &values[n],
            delayed: &delayed,
            twice_delayed: &twice,
            integrals: &ints,
        };
        let next = match stepper.step(family, &input) {
            Ok(v) if v.is_finite() => v,
            Ok(_) | Err(SddeError::NonFinite(_)) => {
                return Err(SddeError::Divergence { step: n, t })
            }
            Err(e) => return Err(e),
        };
        values.push(next);
    }

    Ok(Trajectory {
        times: times.to_vec(),
        values,
        stats,
        tolerance: tol,
    })
}
