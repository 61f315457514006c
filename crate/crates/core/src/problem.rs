//! SDDE instances
//!
//! ```text
//! dX = [A_0 X + f(t, X, X_τ1, ..., X_τK)] dt + Σ_j [B_j X + g_j(t, X, X_τ1, ..., X_τK)] dW_j
//! ```
//!
//! with `X(t) = φ(t)` on `[-max τ, 0]`, and a registry of named built-ins.
//!
//! Noise indices are zero-based: `noise_matrix(j)` and `diffusion(j, ..)`
//! belong to the Wiener process `W_{j+1}`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SddeError};
use crate::linalg::{Matrix, Vector};
use crate::mesh::DelaySet;

/// Coefficient `(t, x, [x_τ1, ..., x_τK]) -> R^d`.
pub type CoefficientFn = Arc<dyn Fn(f64, &Vector, &[Vector]) -> Vector + Send + Sync>;
/// Jacobian of a coefficient with respect to one of its state arguments.
pub type JacobianFn = Arc<dyn Fn(f64, &Vector, &[Vector]) -> Matrix + Send + Sync>;
/// History `φ(t)` for `t <= 0`.
pub type HistoryFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["example1", "linear-decoupled", "zero"];

#[derive(Clone)]
pub struct SddeProblem {
    name: String,
    dim: usize,
    drift_matrix: Matrix,
    noise_matrices: Vec<Matrix>,
    drift: CoefficientFn,
    diffusion: Vec<CoefficientFn>,
    jacobian_x: Option<Vec<JacobianFn>>,
    /// Indexed `[j][k]`.
    jacobian_delay: Option<Vec<Vec<JacobianFn>>>,
    history: HistoryFn,
    delays: DelaySet,
}

impl fmt::Debug for SddeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SddeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_matrices.len())
            .field("delays", &self.delays.delays())
            .field("terminal_time", &self.delays.terminal_time())
            .finish_non_exhaustive()
    }
}

impl SddeProblem {
    /// `matrices[0]` is the drift matrix `A_0`, the rest are `B_1..B_m`.
    pub fn new(
        name: impl Into<String>,
        matrices: Vec<Matrix>,
        drift: CoefficientFn,
        diffusion: Vec<CoefficientFn>,
        history: HistoryFn,
        delays: DelaySet,
    ) -> Result<Self> {
        let mut matrices = matrices.into_iter();
        let drift_matrix = matrices.next().ok_or_else(|| {
            SddeError::InvalidConfig("at least the drift matrix is required".into())
        })?;
        let noise_matrices: Vec<Matrix> = matrices.collect();
        let dim = drift_matrix.dim();
        if dim == 0 {
            return Err(SddeError::InvalidConfig(
                "state dimension must be positive".into(),
            ));
        }
        if noise_matrices.is_empty() {
            return Err(SddeError::InvalidConfig(
                "at least one Wiener process is required".into(),
            ));
        }
        if let Some(bad) = noise_matrices.iter().find(|b| b.dim() != dim) {
            return Err(SddeError::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        if diffusion.len() != noise_matrices.len() {
            return Err(SddeError::DimensionMismatch {
                expected: noise_matrices.len(),
                actual: diffusion.len(),
            });
        }
        if !drift_matrix.is_finite() || !noise_matrices.iter().all(Matrix::is_finite) {
            return Err(SddeError::NonFinite("coefficient matrices"));
        }
        let problem = SddeProblem {
            name: name.into(),
            dim,
            drift_matrix,
            noise_matrices,
            drift,
            diffusion,
            jacobian_x: None,
            jacobian_delay: None,
            history,
            delays,
        };
        let phi0 = problem.history(0.0);
        if phi0.len() != dim {
            return Err(SddeError::DimensionMismatch {
                expected: dim,
                actual: phi0.len(),
            });
        }
        Ok(problem)
    }

    pub fn with_jacobian_x(mut self, jac: Vec<JacobianFn>) -> Result<Self> {
        if jac.len() != self.noise_dim() {
            return Err(SddeError::DimensionMismatch {
                expected: self.noise_dim(),
                actual: jac.len(),
            });
        }
        self.jacobian_x = Some(jac);
        Ok(self)
    }

    /// `jac[j][k]` is the Jacobian of `g_{j+1}` in its `x_τk` argument.
    pub fn with_jacobian_delay(mut self, jac: Vec<Vec<JacobianFn>>) -> Result<Self> {
        if jac.len() != self.noise_dim() {
            return Err(SddeError::DimensionMismatch {
                expected: self.noise_dim(),
                actual: jac.len(),
            });
        }
        if let Some(bad) = jac.iter().find(|row| row.len() != self.delay_count()) {
            return Err(SddeError::DimensionMismatch {
                expected: self.delay_count(),
                actual: bad.len(),
            });
        }
        self.jacobian_delay = Some(jac);
        Ok(self)
    }

    /// Same problem without analytic Jacobians, so finite differences are used.
    pub fn without_analytic_jacobians(mut self) -> Self {
        self.jacobian_x = None;
        self.jacobian_delay = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_matrices.len()
    }

    pub fn delay_count(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &DelaySet {
        &self.delays
    }

    pub fn terminal_time(&self) -> f64 {
        self.delays.terminal_time()
    }

    pub fn drift_matrix(&self) -> &Matrix {
        &self.drift_matrix
    }

    pub fn noise_matrix(&self, j: usize) -> &Matrix {
        &self.noise_matrices[j]
    }

    pub fn noise_matrices(&self) -> &[Matrix] {
        &self.noise_matrices
    }

    pub fn history(&self, t: f64) -> Vector {
        (self.history)(t)
    }

    pub fn drift(&self, t: f64, x: &Vector, delayed: &[Vector]) -> Result<Vector> {
        finite((self.drift)(t, x, delayed), "drift coefficient")
    }

    pub fn diffusion(&self, j: usize, t: f64, x: &Vector, delayed: &[Vector]) -> Result<Vector> {
        finite((self.diffusion[j])(t, x, delayed), "diffusion coefficient")
    }

    /// `f - Σ_j B_j g_j`.
    pub fn f_tilde(&self, t: f64, x: &Vector, delayed: &[Vector]) -> Result<Vector> {
        let mut out = self.drift(t, x, delayed)?;
        for j in 0..self.noise_dim() {
            let g = self.diffusion(j, t, x, delayed)?;
            out.axpy(-1.0, &(&self.noise_matrices[j] * &g));
        }
        Ok(out)
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jacobian_x.is_some() && self.jacobian_delay.is_some()
    }

    /// Jacobian of `g_{j+1}` in `x`.
    pub fn jacobian_x(&self, j: usize, t: f64, x: &Vector, delayed: &[Vector]) -> Matrix {
        match &self.jacobian_x {
            Some(jac) => jac[j](t, x, delayed),
            None => self.fd_jacobian_x(j, t, x, delayed),
        }
    }

    /// Jacobian of `g_{j+1}` in `x_τk`.
    pub fn jacobian_delay(
        &self,
        j: usize,
        k: usize,
        t: f64,
        x: &Vector,
        delayed: &[Vector],
    ) -> Matrix {
        match &self.jacobian_delay {
            Some(jac) => jac[j][k](t, x, delayed),
            None => self.fd_jacobian_delay(j, k, t, x, delayed),
        }
    }

    pub fn fd_jacobian_x(&self, j: usize, t: f64, x: &Vector, delayed: &[Vector]) -> Matrix {
        let g = &self.diffusion[j];
        central_difference(x, |p| g(t, p, delayed))
    }

    pub fn fd_jacobian_delay(
        &self,
        j: usize,
        k: usize,
        t: f64,
        x: &Vector,
        delayed: &[Vector],
    ) -> Matrix {
        let g = &self.diffusion[j];
        let mut args = delayed.to_vec();
        central_difference(&delayed[k], |p| {
            args[k] = p.clone();
            g(t, x, &args)
        })
    }
}

fn finite(v: Vector, what: &'static str) -> Result<Vector> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SddeError::NonFinite(what))
    }
}

fn central_difference(at: &Vector, mut eval: impl FnMut(&Vector) -> Vector) -> Matrix {
    let n = at.len();
    let step_scale = f64::EPSILON.cbrt();
    let mut columns = Vec::with_capacity(n);
    let mut probe = at.clone();
    for c in 0..n {
        let step = step_scale * at[c].abs().max(1.0);
        probe[c] = at[c] + step;
        let plus = eval(&probe);
        probe[c] = at[c] - step;
        let minus = eval(&probe);
        probe[c] = at[c];
        columns.push((&plus - &minus).scale(1.0 / (2.0 * step)));
    }
    let rows = transpose_columns(&columns);
    Matrix::from_rows(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>())
        .expect("square finite-difference Jacobian")
}

fn transpose_columns(columns: &[Vector]) -> Vec<Vec<f64>> {
    let n = columns.len();
    (0..n)
        .map(|r| (0..n).map(|c| columns[c][r]).collect())
        .collect()
}

/// Numeric overrides for a built-in problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemOverrides {
    pub delays: Option<Vec<f64>>,
    pub terminal_time: Option<f64>,
}

pub fn builtin(name: &str, overrides: &ProblemOverrides) -> Result<SddeProblem> {
    match name {
        "example1" => example1(overrides),
        "linear-decoupled" => linear_decoupled(overrides),
        "zero" => zero(overrides),
        _ => Err(SddeError::UnknownProblem {
            name: name.to_string(),
            known: BUILTIN_NAMES.join(", "),
        }),
    }
}

fn delay_set(
    overrides: &ProblemOverrides,
    default_delays: &[f64],
    default_t: f64,
) -> Result<DelaySet> {
    let delays = overrides
        .delays
        .clone()
        .unwrap_or_else(|| default_delays.to_vec());
    DelaySet::new(delays, overrides.terminal_time.unwrap_or(default_t))
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_rows(&[&[a, b], &[c, d]]).expect("2x2 literal")
}

fn v2(a: f64, b: f64) -> Vector {
    Vector::new(vec![a, b])
}

fn example1(overrides: &ProblemOverrides) -> Result<SddeProblem> {
    let delays = delay_set(overrides, &[1.0, 0.5], 4.0)?;
    if delays.len() != 2 {
        return Err(SddeError::InvalidConfig(format!(
            "example1 takes exactly 2 delays, got {}",
            delays.len()
        )));
    }
    let matrices = vec![
        m2(-0.1, 0.03, -0.2, -0.04),
        m2(0.05, 0.04, 0.02, 0.03),
        m2(0.05, 0.03, 0.04, 0.01),
    ];
    let drift: CoefficientFn = Arc::new(|_, x, _| v2(x[0].sin() / 5.0, x[1].cos() / 5.0));
    let g1: CoefficientFn = Arc::new(|_, _, d| {
        let (y, z) = (&d[0], &d[1]);
        v2((z[0] - y[0]) / 3.0, (y[1] - z[1]) / 3.0)
    });
    let g2: CoefficientFn = Arc::new(|_, x, d| {
        let (y, z) = (&d[0], &d[1]);
        let e = |v: f64| (-v * v).exp();
        v2(
            (e(x[1]) + e(y[0]) + e(y[1])) / 10.0,
            (e(x[0]) + e(z[0]) + e(z[1])) / 10.0,
        )
    });
    let history: HistoryFn = Arc::new(|t| {
        use std::f64::consts::PI;
        v2(
            (4.0 + t * t * (3.0 * PI * t).sin()) / 5.0,
            (1.0 + t * t * (2.0 * PI * t).cos()) / 5.0,
        )
    });

    // d/dv exp(-v^2) / 10
    let de = |v: f64| -2.0 * v * (-v * v).exp() / 10.0;
    let jx: Vec<JacobianFn> = vec![
        Arc::new(|_, _, _| Matrix::zeros(2)),
        Arc::new(move |_, x, _| m2(0.0, de(x[1]), de(x[0]), 0.0)),
    ];
    let third = 1.0 / 3.0;
    let jd: Vec<Vec<JacobianFn>> = vec![
        vec![
            Arc::new(move |_, _, _| m2(-third, 0.0, 0.0, third)),
            Arc::new(move |_, _, _| m2(third, 0.0, 0.0, -third)),
        ],
        vec![
            Arc::new(move |_, _, d| m2(de(d[0][0]), de(d[0][1]), 0.0, 0.0)),
            Arc::new(move |_, _, d| m2(0.0, 0.0, de(d[1][0]), de(d[1][1]))),
        ],
    ];

    SddeProblem::new("example1", matrices, drift, vec![g1, g2], history, delays)?
        .with_jacobian_x(jx)?
        .with_jacobian_delay(jd)
}

fn zero_coefficient() -> CoefficientFn {
    Arc::new(|_, x, _| Vector::zeros(x.len()))
}

fn zero_jacobians(m: usize, k: usize) -> (Vec<JacobianFn>, Vec<Vec<JacobianFn>>) {
    let z: JacobianFn = Arc::new(|_, x, _| Matrix::zeros(x.len()));
    (vec![z.clone(); m], vec![vec![z; k]; m])
}

fn zero(overrides: &ProblemOverrides) -> Result<SddeProblem> {
    let delays = delay_set(overrides, &[1.0, 0.5], 4.0)?;
    let k = delays.len();
    let history: HistoryFn = Arc::new(|t| v2(1.0 + t, 2.0 - t * t));
    let (jx, jd) = zero_jacobians(2, k);
    SddeProblem::new(
        "zero",
        vec![Matrix::zeros(2); 3],
        zero_coefficient(),
        vec![zero_coefficient(), zero_coefficient()],
        history,
        delays,
    )?
    .with_jacobian_x(jx)?
    .with_jacobian_delay(jd)
}

fn linear_decoupled(overrides: &ProblemOverrides) -> Result<SddeProblem> {
    let delays = delay_set(overrides, &[1.0, 0.5], 4.0)?;
    let k = delays.len();
    let history: HistoryFn = Arc::new(|_| v2(1.0, 0.5));
    let (jx, jd) = zero_jacobians(2, k);
    SddeProblem::new(
        "linear-decoupled",
        vec![
            Matrix::from_diag(&[-0.5, 0.2]),
            Matrix::from_diag(&[0.3, 0.1]),
            Matrix::from_diag(&[0.2, -0.4]),
        ],
        zero_coefficient(),
        vec![zero_coefficient(), zero_coefficient()],
        history,
        delays,
    )?
    .with_jacobian_x(jx)?
    .with_jacobian_delay(jd)
}
