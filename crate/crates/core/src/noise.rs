//! Wiener paths on the augmented refined time mesh (ARTM) and the iterated
//! stochastic integral approximations a scheme step consumes.
//!
//! Brownian motions are sampled once per trial on the ARTM; every coarser
//! scheme mesh is a subset, so coarse increments are sums of fine ones and all
//! schemes of a trial share one realisation.
//!
//! Integrals over a scheme step `[t_a, t_b]` (ARTM indices `a < b`) come in two
//! flavours:
//!
//! * simple: `I_ij ≈ ΔW_i ΔW_j / 2` and `I_ij^τ ≈ ΔW_i^τ ΔW_j / 2`;
//! * trapezoidal: with ARTM subpoints `t_a = s_0 < ... < s_F = t_b`,
//!   `I_ij ≈ Σ_l δW_i^l δW_j^l / 2 + Σ_l δW_i^l (W_j(t_b) - W_j(s_{l+1}))`,
//!   and the delayed version replaces `δW_i^l` by the increment over
//!   `[s_l - τ_k, s_{l+1} - τ_k]`.
//!
//! The deterministic integrals `I_i0`, `I_0j` use `W_0(t) = t` in the same
//! formulas. Diagonal terms use `I_jj = (ΔW_j² - h)/2` unless disabled.
//!
//! Wiener indices in this module are zero-based: index `i` stands for `W_{i+1}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SddeError};
use crate::mesh::{self, AugmentedMesh, DelaySet};

/// Identifies the random stream of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedInfo {
    pub master: u64,
    pub trial: u64,
}

impl SeedInfo {
    pub fn new(master: u64, trial: u64) -> Self {
        SeedInfo { master, trial }
    }

    /// 64-bit seed of Wiener path `path` (1-based) in this trial.
    pub fn path_seed(&self, path: usize) -> u64 {
        let mut h = splitmix64(self.master);
        h = splitmix64(h ^ self.trial);
        splitmix64(h ^ path as u64)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ARTM together with its delays and the index of every delay-shifted point.
#[derive(Debug, Clone)]
pub struct Artm {
    mesh: AugmentedMesh,
    delays: DelaySet,
    shifts: Vec<Vec<Option<usize>>>,
}

impl Artm {
    pub fn new(mesh: AugmentedMesh, delays: DelaySet) -> Result<Self> {
        let eps = mesh.tolerance();
        let shifts = delays
            .delays()
            .iter()
            .map(|&tau| {
                mesh.points()
                    .iter()
                    .map(|&t| {
                        let s = t - tau;
                        if s < -eps {
                            Ok(None)
                        } else {
                            mesh.locate(s).map(Some)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Artm {
            mesh,
            delays,
            shifts,
        })
    }

    /// Builds the ARTM for refined initial step `h_refined_initial`.
    pub fn build(
        delays: &DelaySet,
        h_initial: f64,
        h_refined_initial: f64,
        extra_obs: &[f64],
        cap: usize,
    ) -> Result<Self> {
        let mesh = mesh::build_artm_with_cap(delays, h_initial, h_refined_initial, extra_obs, cap)?;
        Artm::new(mesh, delays.clone())
    }

    pub fn mesh(&self) -> &AugmentedMesh {
        &self.mesh
    }

    pub fn delays(&self) -> &DelaySet {
        &self.delays
    }

    pub fn points(&self) -> &[f64] {
        self.mesh.points()
    }

    /// ARTM index of `t_i - tau_k`, or `None` when that time is negative.
    pub fn shifted_index(&self, k: usize, i: usize) -> Option<usize> {
        self.shifts[k][i]
    }
}

/// `m` independent Brownian paths on an ARTM, plus row 0 holding `W_0(t) = t`.
#[derive(Debug, Clone)]
pub struct WienerPaths<'a> {
    artm: &'a Artm,
    values: Vec<Vec<f64>>,
    seed: Option<SeedInfo>,
}

impl<'a> WienerPaths<'a> {
    pub fn sample(artm: &'a Artm, m: usize, seed: SeedInfo) -> Self {
        let times = artm.points();
        let mut values = Vec::with_capacity(m + 1);
        values.push(times.to_vec());
        for j in 1..=m {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.path_seed(j));
            let mut row = Vec::with_capacity(times.len());
            let mut w = 0.0;
            row.push(w);
            for pair in times.windows(2) {
                let z: f64 = StandardNormal.sample(&mut rng);
                w += (pair[1] - pair[0]).sqrt() * z;
                row.push(w);
            }
            values.push(row);
        }
        WienerPaths {
            artm,
            values,
            seed: Some(seed),
        }
    }

    /// Paths from explicit Brownian values (`rows[j]` is `W_{j+1}` on the ARTM).
    pub fn from_rows(artm: &'a Artm, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = artm.points().len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(SddeError::DimensionMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() + 1);
        values.push(artm.points().to_vec());
        values.extend(rows);
        Ok(WienerPaths {
            artm,
            values,
            seed: None,
        })
    }

    pub fn artm(&self) -> &'a Artm {
        self.artm
    }

    pub fn seed(&self) -> Option<SeedInfo> {
        self.seed
    }

    /// Number of Brownian motions `m`.
    pub fn noise_dim(&self) -> usize {
        self.values.len() - 1
    }

    /// Row `j` of the value table; row 0 is the time itself.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// `W_j(t_b - shift) - W_j(t_a - shift)` for `j = 0..=m`.
    pub fn increments(&self, a: usize, b: usize, shift: Option<f64>) -> Result<Vec<f64>> {
        let (ia, ib) = match shift {
            None => (a, b),
            Some(tau) => {
                let pts = self.artm.points();
                let mesh = self.artm.mesh();
                (mesh.locate(pts[a] - tau)?, mesh.locate(pts[b] - tau)?)
            }
        };
        Ok(self.values.iter().map(|row| row[ib] - row[ia]).collect())
    }

    fn check_step(&self, a: usize, b: usize) -> Result<f64> {
        let pts = self.artm.points();
        if !(a < b && b < pts.len()) {
            return Err(SddeError::InvalidConfig(format!(
                "invalid step indices ({a}, {b})"
            )));
        }
        let h = pts[b] - pts[a];
        self.artm.delays().check_step(h)?;
        Ok(h)
    }

    pub fn simple_integrals(
        &self,
        a: usize,
        b: usize,
        opts: IntegralOptions,
    ) -> Result<StepIntegrals> {
        let mut out = StepIntegrals::zeros(self.noise_dim(), self.artm.delays().len());
        self.fill_simple(a, b, opts, &mut out)?;
        Ok(out)
    }

    pub fn trapezoidal_integrals(
        &self,
        a: usize,
        b: usize,
        opts: IntegralOptions,
    ) -> Result<StepIntegrals> {
        let mut out = StepIntegrals::zeros(self.noise_dim(), self.artm.delays().len());
        self.fill_trapezoidal(a, b, opts, &mut out)?;
        Ok(out)
    }

    /// Fills `out` with the integrals over `[t_a, t_b]` in the given mode.
    pub fn fill_integrals(
        &self,
        a: usize,
        b: usize,
        mode: IntegralMode,
        opts: IntegralOptions,
        out: &mut StepIntegrals,
    ) -> Result<()> {
        match mode {
            IntegralMode::Simple => self.fill_simple(a, b, opts, out),
            IntegralMode::Trapezoidal => self.fill_trapezoidal(a, b, opts, out),
        }
    }

    /// Fills only `dt` and `dW`; enough for EM and MEM steps.
    pub fn fill_increments(&self, a: usize, b: usize, out: &mut StepIntegrals) -> Result<()> {
        out.dt = self.check_step(a, b)?;
        for j in 0..out.m {
            let w = &self.values[j + 1];
            out.dw[j] = w[b] - w[a];
        }
        Ok(())
    }

    fn shifted_endpoints(&self, k: usize, a: usize, b: usize) -> Result<(usize, usize)> {
        let pts = self.artm.points();
        let tau = self.artm.delays().delays()[k];
        let miss = |i: usize| SddeError::MeshMiss {
            t: pts[i] - tau,
            tolerance: self.artm.mesh().tolerance(),
        };
        let sa = self.artm.shifted_index(k, a).ok_or_else(|| miss(a))?;
        let sb = self.artm.shifted_index(k, b).ok_or_else(|| miss(b))?;
        // integrand window [t_a - τ, t_b - τ] ends before the integrator window starts
        debug_assert!(sb <= a, "delayed window overlaps the step");
        Ok((sa, sb))
    }

    fn fill_simple(
        &self,
        a: usize,
        b: usize,
        opts: IntegralOptions,
        out: &mut StepIntegrals,
    ) -> Result<()> {
        self.fill_increments(a, b, out)?;
        let (m, h) = (out.m, out.dt);
        for i in 0..m {
            for j in 0..m {
                out.iterated[i * m + j] = 0.5 * out.dw[i] * out.dw[j];
            }
            out.i_j0[i] = 0.5 * out.dw[i] * h;
            out.i_0j[i] = 0.5 * h * out.dw[i];
        }
        if opts.diagonal_exact {
            out.apply_diagonal_identity();
        }
        let t_a = self.artm.points()[a];
        for k in 0..out.k {
            out.delayed_active[k] = self.artm.delays().indicator(k, t_a);
            if out.delayed_active[k] {
                let (sa, sb) = self.shifted_endpoints(k, a, b)?;
                self.fill_delayed_simple(k, sa, sb, out);
            } else {
                out.clear_delayed(k);
            }
        }
        Ok(())
    }

    fn fill_delayed_simple(&self, k: usize, sa: usize, sb: usize, out: &mut StepIntegrals) {
        let m = out.m;
        for i in 0..m {
            let w = &self.values[i + 1];
            let dwi = w[sb] - w[sa];
            for j in 0..m {
                out.delayed[(k * m + i) * m + j] = 0.5 * dwi * out.dw[j];
            }
        }
    }

    fn fill_trapezoidal(
        &self,
        a: usize,
        b: usize,
        opts: IntegralOptions,
        out: &mut StepIntegrals,
    ) -> Result<()> {
        self.fill_increments(a, b, out)?;
        let m = out.m;
        let t = self.artm.points();
        out.iterated.iter_mut().for_each(|v| *v = 0.0);
        out.i_j0.iter_mut().for_each(|v| *v = 0.0);
        out.i_0j.iter_mut().for_each(|v| *v = 0.0);

        let mut delta = vec![0.0; m];
        let mut tail = vec![0.0; m];
        for l in a..b {
            let dt = t[l + 1] - t[l];
            let time_tail = t[b] - t[l + 1];
            for i in 0..m {
                let w = &self.values[i + 1];
                delta[i] = w[l + 1] - w[l];
                tail[i] = w[b] - w[l + 1];
            }
            for i in 0..m {
                for j in 0..m {
                    out.iterated[i * m + j] += 0.5 * delta[i] * delta[j] + delta[i] * tail[j];
                }
                out.i_j0[i] += 0.5 * delta[i] * dt + delta[i] * time_tail;
                out.i_0j[i] += 0.5 * dt * delta[i] + dt * tail[i];
            }
        }
        if opts.diagonal_exact {
            out.apply_diagonal_identity();
        }

        for k in 0..out.k {
            out.delayed_active[k] = self.artm.delays().indicator(k, t[a]);
            if !out.delayed_active[k] {
                out.clear_delayed(k);
                continue;
            }
            let (sa, sb) = self.shifted_endpoints(k, a, b)?;
            let shifted: Option<Vec<usize>> =
                (a..=b).map(|l| self.artm.shifted_index(k, l)).collect();
            let Some(shifted) = shifted else {
                // a shifted subpoint is missing: fall back to the simple formula
                out.fallbacks += 1;
                self.fill_delayed_simple(k, sa, sb, out);
                continue;
            };
            out.clear_delayed(k);
            for l in a..b {
                let (s0, s1) = (shifted[l - a], shifted[l + 1 - a]);
                for (d, w) in delta.iter_mut().zip(&self.values[1..]) {
                    *d = w[s1] - w[s0];
                }
                for (j, w) in self.values[1..].iter().enumerate() {
                    let dj = w[l + 1] - w[l];
                    let tail = w[b] - w[l + 1];
                    for (i, di) in delta.iter().enumerate() {
                        out.delayed[(k * m + i) * m + j] += 0.5 * di * dj + di * tail;
                    }
                }
            }
        }
        Ok(())
    }
}

/// How the iterated integrals of a step are approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntegralMode {
    Simple,
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegralOptions {
    /// Replace `I_jj` by `(ΔW_j² - h)/2`.
    pub diagonal_exact: bool,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        IntegralOptions {
            diagonal_exact: true,
        }
    }
}

/// Everything one scheme step needs from the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct StepIntegrals {
    m: usize,
    k: usize,
    pub dt: f64,
    pub dw: Vec<f64>,
    /// `I_ij`, row-major `m x m`.
    pub iterated: Vec<f64>,
    /// `I_ij^{τ_k}`, laid out `[k][i][j]`; zero when the delay is inactive.
    pub delayed: Vec<f64>,
    /// Whether `t_n >= τ_k` held for the step.
    pub delayed_active: Vec<bool>,
    /// `I_i0`: inner `dW_i`, outer `ds`.
    pub i_j0: Vec<f64>,
    /// `I_0j`: inner `du`, outer `dW_j`.
    pub i_0j: Vec<f64>,
    /// Delayed integrals that fell back to the simple formula.
    pub fallbacks: usize,
}

impl StepIntegrals {
    pub fn zeros(m: usize, k: usize) -> Self {
        StepIntegrals {
            m,
            k,
            dt: 0.0,
            dw: vec![0.0; m],
            iterated: vec![0.0; m * m],
            delayed: vec![0.0; k * m * m],
            delayed_active: vec![false; k],
            i_j0: vec![0.0; m],
            i_0j: vec![0.0; m],
            fallbacks: 0,
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn delay_count(&self) -> usize {
        self.k
    }

    pub fn ij(&self, i: usize, j: usize) -> f64 {
        self.iterated[i * self.m + j]
    }

    pub fn set_ij(&mut self, i: usize, j: usize, v: f64) {
        self.iterated[i * self.m + j] = v;
    }

    pub fn delayed_ij(&self, k: usize, i: usize, j: usize) -> f64 {
        self.delayed[(k * self.m + i) * self.m + j]
    }

    pub fn set_delayed_ij(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.delayed[(k * self.m + i) * self.m + j] = v;
    }

    fn apply_diagonal_identity(&mut self) {
        for j in 0..self.m {
            self.iterated[j * self.m + j] = 0.5 * (self.dw[j] * self.dw[j] - self.dt);
        }
    }

    fn clear_delayed(&mut self, k: usize) {
        let mm = self.m * self.m;
        self.delayed[k * mm..(k + 1) * mm]
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }
}
