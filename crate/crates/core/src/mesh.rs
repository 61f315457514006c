//! Time meshes for schemes with several fixed delays.
//!
//! The augmented mesh is the set of observation times shifted left by every
//! non-negative integer combination of the delays, clipped to `[0, T]`. A
//! scheme stepping on it finds every delayed time `t_n - tau_k` (and every
//! twice-delayed time) among the points it has already computed.
//!
//! Points are floats. Two candidates closer than the mesh tolerance
//! `1e-9 * max(1, T)` are the same point; each cluster keeps its smallest
//! member, except that the clusters at `0` and `T` snap to those exact values.

use std::cmp::Ordering;

use crate::error::{Result, SddeError};

/// Default upper bound on the number of points in one augmented mesh.
pub const DEFAULT_MESH_CAP: usize = 10_000_000;

/// Merges closer than ε but wider than this (relative to `max(1, T)`) are
/// counted separately in [`AugmentedMesh::near_coincident_merges`]; gaps below
/// it are ordinary summation round-off.
const ROUNDOFF_GAP: f64 = 1e-12;

pub fn mesh_tolerance(terminal_time: f64) -> f64 {
    1e-9 * terminal_time.max(1.0)
}

/// The constant delays of a problem together with its terminal time.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySet {
    delays: Vec<f64>,
    terminal_time: f64,
    multiples: Vec<usize>,
}

impl DelaySet {
    pub fn new(delays: Vec<f64>, terminal_time: f64) -> Result<Self> {
        if !(terminal_time.is_finite() && terminal_time > 0.0) {
            return Err(SddeError::InvalidConfig(format!(
                "terminal time must be positive and finite, got {terminal_time}"
            )));
        }
        if delays.is_empty() {
            return Err(SddeError::InvalidConfig(
                "at least one delay is required".into(),
            ));
        }
        if let Some(bad) = delays.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(SddeError::InvalidConfig(format!(
                "delays must be positive and finite, got {bad}"
            )));
        }
        let eps = mesh_tolerance(terminal_time);
        let multiples = delays
            .iter()
            .map(|&tau| {
                let mut n = (terminal_time / tau).ceil().max(1.0) as usize;
                // N_k = min{N : N tau_k >= T}, with T within ε counting as reached
                while n > 1 && (n - 1) as f64 * tau >= terminal_time - eps {
                    n -= 1;
                }
                n
            })
            .collect();
        Ok(DelaySet {
            delays,
            terminal_time,
            multiples,
        })
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    /// `N_k`, the number of multiples of `tau_k` needed to reach `T`.
    pub fn multiples(&self) -> &[usize] {
        &self.multiples
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn tolerance(&self) -> f64 {
        mesh_tolerance(self.terminal_time)
    }

    /// The indicator `t >= tau_k`, evaluated with the mesh tolerance.
    pub fn indicator(&self, k: usize, t: f64) -> bool {
        t >= self.delays[k] - self.tolerance()
    }

    /// Rejects steps that violate `h < min_k tau_k`.
    pub fn check_step(&self, step: f64) -> Result<()> {
        let min_delay = self.min_delay();
        if step >= min_delay - self.tolerance() {
            return Err(SddeError::StepTooLarge { step, min_delay });
        }
        Ok(())
    }

    /// Delay multiples `i * tau_k <= T`, unsorted.
    fn multiples_within_horizon(&self) -> impl Iterator<Item = f64> + '_ {
        let limit = self.terminal_time + self.tolerance();
        self.delays
            .iter()
            .zip(&self.multiples)
            .flat_map(move |(&tau, &n)| (1..=n).map(move |i| i as f64 * tau))
            .filter(move |&t| t <= limit)
    }
}

/// Number of whole steps of `step` in `span`, if `step` divides `span`.
pub fn divides(span: f64, step: f64, tolerance: f64) -> Result<usize> {
    let err = SddeError::NotDivisible {
        numerator: span,
        divisor: step,
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(err);
    }
    let n = (span / step).round();
    if n < 1.0 || (n * step - span).abs() > tolerance {
        return Err(err);
    }
    Ok(n as usize)
}

fn sort_floats(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| a.total_cmp(b));
}

/// Collapses clusters of sorted points whose consecutive gaps are `<= eps`,
/// keeping the smallest member. Returns how many merges had a gap wider than
/// `roundoff`.
fn dedup_sorted(points: &mut Vec<f64>, eps: f64, roundoff: f64) -> usize {
    let mut suspicious = 0;
    let mut kept = 0;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..points.len() {
        let x = points[i];
        if i > 0 && x - prev <= eps {
            if x - points[kept - 1] > roundoff {
                suspicious += 1;
            }
        } else {
            points[kept] = x;
            kept += 1;
        }
        prev = x;
    }
    points.truncate(kept);
    suspicious
}

/// Sorted, tolerance-deduplicated copy of `points` with the clusters at `0`
/// and `terminal_time` snapped onto those values.
fn canonicalize(mut points: Vec<f64>, terminal_time: f64) -> (Vec<f64>, usize) {
    let eps = mesh_tolerance(terminal_time);
    sort_floats(&mut points);
    let merges = dedup_sorted(&mut points, eps, ROUNDOFF_GAP * terminal_time.max(1.0));
    if let Some(first) = points.first_mut() {
        if first.abs() <= eps {
            *first = 0.0;
        }
    }
    if let Some(last) = points.last_mut() {
        if (*last - terminal_time).abs() <= eps {
            *last = terminal_time;
        }
    }
    (points, merges)
}

/// Uniform times `n * h_initial` together with every delay multiple up to `T`.
///
/// Fails when `h_initial` does not divide `T` or is not strictly below the
/// smallest delay.
pub fn observation_times(delays: &DelaySet, h_initial: f64) -> Result<Vec<f64>> {
    let t_end = delays.terminal_time();
    let n = divides(t_end, h_initial, delays.tolerance())?;
    let points: Vec<f64> = (0..=n)
        .map(|i| i as f64 * h_initial)
        .chain(delays.multiples_within_horizon())
        .collect();
    Ok(canonicalize(points, t_end).0)
}

/// Bellman boundaries `0 = sigma_0 < ... < sigma_last = T`.
pub fn bellman_points(delays: &DelaySet) -> Vec<f64> {
    let t_end = delays.terminal_time();
    let points: Vec<f64> = std::iter::once(0.0)
        .chain(delays.multiples_within_horizon())
        .chain(std::iter::once(t_end))
        .collect();
    canonicalize(points, t_end).0
}

/// Sorted time points closed under every delay shift that stays in `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMesh {
    points: Vec<f64>,
    tolerance: f64,
    terminal_time: f64,
    observation_flags: Vec<bool>,
    bellman_flags: Vec<bool>,
    near_coincident_merges: usize,
}

impl AugmentedMesh {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    pub fn observation_flags(&self) -> &[bool] {
        &self.observation_flags
    }

    pub fn bellman_flags(&self) -> &[bool] {
        &self.bellman_flags
    }

    /// Distinct candidates that were merged although their gap exceeded
    /// plain round-off (nearly but not exactly rationally related delays).
    pub fn near_coincident_merges(&self) -> usize {
        self.near_coincident_merges
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[1] - w[0])
    }

    pub fn max_step(&self) -> f64 {
        self.steps().fold(0.0, f64::max)
    }

    pub fn locate(&self, t: f64) -> Result<usize> {
        locate_in(&self.points, self.tolerance, t)
    }

    pub fn neighbors(&self, t: f64) -> Result<(usize, usize)> {
        neighbors_in(&self.points, self.tolerance, t)
    }

    /// Exhaustive scan: every `t - tau_k >= -ε` must be a mesh point.
    pub fn verify_delay_closure(&self, delays: &DelaySet) -> Result<()> {
        for &t in &self.points {
            for &tau in delays.delays() {
                let shifted = t - tau;
                if shifted >= -self.tolerance {
                    self.locate(shifted)?;
                }
            }
        }
        Ok(())
    }

    /// Whether every point of `self` is also a point of `other`.
    pub fn is_subset_of(&self, other: &AugmentedMesh) -> bool {
        self.points.iter().all(|&t| other.locate(t).is_ok())
    }
}

/// Index of the unique point within `tolerance` of `t`.
pub fn locate_in(points: &[f64], tolerance: f64, t: f64) -> Result<usize> {
    let miss = SddeError::MeshMiss { t, tolerance };
    let idx = points.partition_point(|&p| p < t);
    let mut best: Option<(usize, f64)> = None;
    for cand in [idx.wrapping_sub(1), idx] {
        if let Some(&p) = points.get(cand) {
            let gap = (p - t).abs();
            if gap <= tolerance && best.is_none_or(|(_, g)| gap < g) {
                best = Some((cand, gap));
            }
        }
    }
    best.map(|(i, _)| i).ok_or(miss)
}

/// `(pre, post)`: the greatest index with time `<= t` (a point within
/// `tolerance` of `t` counts) and the least with time `> t`. At the last
/// point both indices coincide.
pub fn neighbors_in(points: &[f64], tolerance: f64, t: f64) -> Result<(usize, usize)> {
    let (Some(&start), Some(&end)) = (points.first(), points.last()) else {
        return Err(SddeError::InsufficientData("empty grid".into()));
    };
    if t < start - tolerance || t > end + tolerance {
        return Err(SddeError::OutsideGrid { t, start, end });
    }
    let pre = points
        .partition_point(|&p| p <= t + tolerance)
        .saturating_sub(1);
    let post = (pre + 1).min(points.len() - 1);
    Ok((pre, post))
}

/// Builds the augmented mesh of `obs` by expanding one delay at a time,
/// deduplicating after each delay. The default point cap applies.
pub fn build_augmented_mesh(obs: &[f64], delays: &DelaySet) -> Result<AugmentedMesh> {
    build_augmented_mesh_with_cap(obs, delays, DEFAULT_MESH_CAP)
}

pub fn build_augmented_mesh_with_cap(
    obs: &[f64],
    delays: &DelaySet,
    cap: usize,
) -> Result<AugmentedMesh> {
    let t_end = delays.terminal_time();
    let eps = delays.tolerance();
    if obs.is_empty() {
        return Err(SddeError::InvalidConfig("observation set is empty".into()));
    }
    if let Some(bad) = obs
        .iter()
        .find(|t| !(t.is_finite() && **t >= -eps && **t <= t_end + eps))
    {
        return Err(SddeError::InvalidConfig(format!(
            "observation time {bad} outside [0, {t_end}]"
        )));
    }

    let (obs_sorted, _) = canonicalize(obs.to_vec(), t_end);
    let (mut current, mut merges) = (obs_sorted.clone(), 0);
    for &tau in delays.delays() {
        let mut expanded = current.clone();
        for &t in &current {
            let mut i = 1usize;
            loop {
                let shifted = t - i as f64 * tau;
                if shifted < -eps {
                    break;
                }
                expanded.push(shifted);
                i += 1;
            }
        }
        let (next, m) = canonicalize(expanded, t_end);
        if next.len() > cap {
            return Err(SddeError::MeshCapExceeded {
                size: next.len(),
                cap,
            });
        }
        current = next;
        merges += m;
    }

    let mut observation_flags = vec![false; current.len()];
    for &t in &obs_sorted {
        observation_flags[locate_in(&current, eps, t)?] = true;
    }
    let mut bellman_flags = vec![false; current.len()];
    for t in bellman_points(delays) {
        if let Ok(i) = locate_in(&current, eps, t) {
            bellman_flags[i] = true;
        }
    }
    Ok(AugmentedMesh {
        points: current,
        tolerance: eps,
        terminal_time: t_end,
        observation_flags,
        bellman_flags,
        near_coincident_merges: merges,
    })
}

/// Augmented mesh seeded by [`observation_times`] for `h_initial` plus any
/// extra observation times.
pub fn build_scheme_mesh(
    delays: &DelaySet,
    h_initial: f64,
    extra_obs: &[f64],
    cap: usize,
) -> Result<AugmentedMesh> {
    let mut obs = observation_times(delays, h_initial)?;
    obs.extend_from_slice(extra_obs);
    build_augmented_mesh_with_cap(&obs, delays, cap)
}

/// The augmented refined time mesh: the augmented mesh built from the finer
/// initial step `h_refined_initial`, which must divide `h_initial`. Every
/// scheme mesh built from `h_initial` (with the same extra times) is a subset.
pub fn build_artm(
    delays: &DelaySet,
    h_initial: f64,
    h_refined_initial: f64,
    extra_obs: &[f64],
) -> Result<AugmentedMesh> {
    build_artm_with_cap(
        delays,
        h_initial,
        h_refined_initial,
        extra_obs,
        DEFAULT_MESH_CAP,
    )
}

pub fn build_artm_with_cap(
    delays: &DelaySet,
    h_initial: f64,
    h_refined_initial: f64,
    extra_obs: &[f64],
    cap: usize,
) -> Result<AugmentedMesh> {
    // relative check: the ratio is a small integer
    divides(h_initial, h_refined_initial, 1e-9 * h_initial)?;
    build_scheme_mesh(delays, h_refined_initial, extra_obs, cap)
}

/// Observation times as produced by the published construction: products
/// `n * h` and `i * tau_k <= T`, deduplicated only when bitwise equal.
pub fn literal_observation_times(delays: &DelaySet, h_initial: f64) -> Result<Vec<f64>> {
    let t_end = delays.terminal_time();
    let n = divides(t_end, h_initial, delays.tolerance())?;
    let mut points: Vec<f64> = (0..=n).map(|i| i as f64 * h_initial).collect();
    for (&tau, &count) in delays.delays().iter().zip(delays.multiples()) {
        points.extend((1..=count).map(|i| i as f64 * tau).filter(|&t| t <= t_end));
    }
    sort_floats(&mut points);
    points.dedup_by(|a, b| a == b);
    Ok(points)
}

/// Replays the nested-loop construction of the augmented mesh verbatim: for
/// every index tuple `(i_1, ..., i_K)` with `0 <= i_k <= N_k` (first delay
/// outermost) the current set is extended by `((t - i_1 tau_1) - i_2 tau_2) - ...`,
/// negatives are dropped and exact float duplicates removed.
///
/// Round-off makes one mathematical point reachable as several nearby floats,
/// and this construction keeps them all; its cardinality is what published
/// mesh-size tables report. Use [`build_augmented_mesh`] for simulation.
pub fn literal_mesh_points(obs: &[f64], delays: &DelaySet, cap: usize) -> Result<Vec<f64>> {
    let mut current = obs.to_vec();
    sort_floats(&mut current);
    current.dedup_by(|a, b| a == b);
    current.retain(|&t| t >= 0.0);

    let taus = delays.delays();
    let limits = delays.multiples();
    let mut index = vec![0usize; taus.len()];
    let mut shifted = Vec::new();
    let mut merged = Vec::new();
    loop {
        if index.iter().any(|&i| i != 0) {
            shifted.clear();
            shifted.extend(current.iter().filter_map(|&t| {
                let v = index
                    .iter()
                    .zip(taus)
                    .fold(t, |acc, (&i, &tau)| acc - i as f64 * tau);
                (v >= 0.0).then_some(v)
            }));
            merge_dedup(&current, &shifted, &mut merged);
            if merged.len() > cap {
                return Err(SddeError::MeshCapExceeded {
                    size: merged.len(),
                    cap,
                });
            }
            std::mem::swap(&mut current, &mut merged);
        }
        // odometer over (i_1, ..., i_K), last index fastest
        let mut pos = taus.len();
        loop {
            if pos == 0 {
                return Ok(current);
            }
            pos -= 1;
            if index[pos] < limits[pos] {
                index[pos] += 1;
                break;
            }
            index[pos] = 0;
        }
    }
}

/// Merges two non-decreasing slices into `out`, dropping exact duplicates.
fn merge_dedup(a: &[f64], b: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let push = |v: f64, out: &mut Vec<f64>| {
        if out.last() != Some(&v) {
            out.push(v);
        }
    };
    while i < a.len() && j < b.len() {
        match a[i].partial_cmp(&b[j]).unwrap_or(Ordering::Equal) {
            Ordering::Less => {
                push(a[i], out);
                i += 1;
            }
            Ordering::Greater => {
                push(b[j], out);
                j += 1;
            }
            Ordering::Equal => {
                push(a[i], out);
                i += 1;
                j += 1;
            }
        }
    }
    for &v in &a[i..] {
        push(v, out);
    }
    for &v in &b[j..] {
        push(v, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ds(delays: &[f64], t: f64) -> DelaySet {
        DelaySet::new(delays.to_vec(), t).unwrap()
    }

    fn assert_points(actual: &[f64], expected: &[f64]) {
        assert_eq!(actual.len(), expected.len(), "{actual:?} vs {expected:?}");
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= 1e-9, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn multiples_reach_terminal_time() {
        let d = ds(&[1.0, 2.0, 2.0 / 3.0, PI / 2.0], 3.0);
        assert_eq!(d.multiples(), &[3, 2, 5, 2]);
        for (&tau, &n) in d.delays().iter().zip(d.multiples()) {
            assert!(n as f64 * tau >= 3.0 - 1e-9);
            assert!(((n - 1) as f64) * tau < 3.0);
        }
    }

    #[test]
    fn rejects_bad_delay_sets() {
        assert!(DelaySet::new(vec![], 1.0).is_err());
        assert!(DelaySet::new(vec![0.0], 1.0).is_err());
        assert!(DelaySet::new(vec![1.0], -1.0).is_err());
        assert!(DelaySet::new(vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn observation_times_single_delay_equal_to_horizon() {
        let obs = observation_times(&ds(&[1.0], 1.0), 0.25).unwrap();
        assert_points(&obs, &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn observation_times_with_irrational_delay() {
        let obs = observation_times(&ds(&[PI / 4.0], 1.0), 0.5).unwrap();
        assert_points(&obs, &[0.0, 0.5, PI / 4.0, 1.0]);
    }

    #[test]
    fn observation_times_on_grid_delays() {
        let obs = observation_times(&ds(&[1.0, 0.5], 4.0), 0.5).unwrap();
        let expected: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        assert_points(&obs, &expected);
    }

    #[test]
    fn observation_times_validation() {
        let d = ds(&[0.5], 1.0);
        assert!(matches!(
            observation_times(&d, 0.3),
            Err(SddeError::NotDivisible { .. })
        ));
        assert!(matches!(
            observation_times(&d, -0.25),
            Err(SddeError::InvalidConfig(_)) | Err(SddeError::NotDivisible { .. })
        ));
    }

    #[test]
    fn bellman_points_of_mixed_delays() {
        let b = bellman_points(&ds(&[1.0, 2.0, 2.0 / 3.0, PI / 2.0], 3.0));
        assert_points(
            &b,
            &[
                0.0,
                2.0 / 3.0,
                1.0,
                4.0 / 3.0,
                PI / 2.0,
                2.0,
                8.0 / 3.0,
                3.0,
            ],
        );
    }

    #[test]
    fn bellman_points_trivial_cases() {
        assert_points(&bellman_points(&ds(&[1.0], 1.0)), &[0.0, 1.0]);
        assert_points(
            &bellman_points(&ds(&[0.5], 2.0)),
            &[0.0, 0.5, 1.0, 1.5, 2.0],
        );
        // T is appended even when no delay divides it
        assert_points(
            &bellman_points(&ds(&[PI / 4.0], 1.0)),
            &[0.0, PI / 4.0, 1.0],
        );
    }

    #[test]
    fn endpoint_only_mesh() {
        let mesh = build_augmented_mesh(&[0.0, 2.0], &ds(&[2.0], 2.0)).unwrap();
        assert_eq!(mesh.points(), &[0.0, 2.0]);
        assert!(mesh.observation_flags().iter().all(|&f| f));
        assert!(mesh.bellman_flags().iter().all(|&f| f));
    }

    #[test]
    fn small_table_cells() {
        let d = ds(&[1.0, 1.0, 1.0, 1.0], 1.0);
        let mesh = build_scheme_mesh(&d, 0.25, &[], DEFAULT_MESH_CAP).unwrap();
        assert_eq!(mesh.len(), 5);

        let d = ds(&[0.25, PI / 4.0, 1.0, 1.0], 1.0);
        let mesh = build_scheme_mesh(&d, 1.0 / 16.0, &[], DEFAULT_MESH_CAP).unwrap();
        assert_eq!(mesh.len(), 25);
        mesh.verify_delay_closure(&d).unwrap();
    }

    #[test]
    fn literal_construction_keeps_roundoff_duplicates() {
        let d = ds(
            &[0.1, PI / 10.0, 1.0 / 10f64.sqrt(), (-2f64).exp() / 2.0],
            1.0,
        );
        let obs = literal_observation_times(&d, 0.25).unwrap();
        let literal = literal_mesh_points(&obs, &d, DEFAULT_MESH_CAP).unwrap();
        assert_eq!(literal.len(), 4344);
        let mesh = build_scheme_mesh(&d, 0.25, &[], DEFAULT_MESH_CAP).unwrap();
        assert_eq!(mesh.len(), 896);
        let (clustered, _) = canonicalize(literal, 1.0);
        assert_eq!(clustered.len(), mesh.len());
        for (a, b) in clustered.iter().zip(mesh.points()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mesh_cap_is_enforced() {
        let d = ds(
            &[0.1, PI / 10.0, 1.0 / 10f64.sqrt(), (-2f64).exp() / 2.0],
            1.0,
        );
        let err = build_scheme_mesh(&d, 0.25, &[], 500).unwrap_err();
        assert!(matches!(err, SddeError::MeshCapExceeded { cap: 500, .. }));
    }

    #[test]
    fn artm_equal_steps_matches_scheme_mesh() {
        let d = ds(&[1.0, PI / 4.0], 4.0);
        let a = build_artm(&d, 0.25, 0.25, &[]).unwrap();
        let b = build_scheme_mesh(&d, 0.25, &[], DEFAULT_MESH_CAP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn artm_of_divisible_delays_is_uniform() {
        let d = ds(&[1.0, 0.5], 4.0);
        let artm = build_artm(&d, 0.5, 0.125, &[]).unwrap();
        let expected: Vec<f64> = (0..33).map(|i| i as f64 * 0.125).collect();
        assert_eq!(artm.points(), expected.as_slice());
    }

    #[test]
    fn artm_requires_divisibility() {
        let d = ds(&[1.0], 1.0);
        assert!(matches!(
            build_artm(&d, 0.25, 0.1, &[]),
            Err(SddeError::NotDivisible { .. })
        ));
    }

    #[test]
    fn locate_and_tolerance_window() {
        let d = ds(&[1.0, PI / 4.0], 2.0);
        let mesh = build_scheme_mesh(&d, 0.5, &[], DEFAULT_MESH_CAP).unwrap();
        let eps = mesh.tolerance();
        for (j, &t) in mesh.points().iter().enumerate() {
            assert_eq!(mesh.locate(t).unwrap(), j);
            assert_eq!(mesh.locate(t + eps / 2.0).unwrap(), j);
            assert_eq!(mesh.locate(t - eps / 2.0).unwrap(), j);
        }
        let p = mesh.points();
        let mid = 0.5 * (p[1] + p[2]);
        assert!(matches!(mesh.locate(mid), Err(SddeError::MeshMiss { .. })));
    }

    #[test]
    fn neighbors_on_uniform_grids() {
        assert_eq!(neighbors_in(&[0.0, 1.0], 1e-9, 0.3).unwrap(), (0, 1));
        let grid: Vec<f64> = (0..=48).map(|i| -2.0 + i as f64 * 0.125).collect();
        let t = 1.0 - PI / 4.0;
        let (pre, post) = neighbors_in(&grid, 1e-9, t).unwrap();
        assert_eq!((pre, post), (17, 18));
        assert!(grid[pre] <= t && grid[post] > t);
        // on a grid point
        assert_eq!(neighbors_in(&grid, 1e-9, 0.5).unwrap(), (20, 21));
        assert_eq!(neighbors_in(&grid, 1e-9, 0.5 - 1e-10).unwrap(), (20, 21));
        assert_eq!(neighbors_in(&grid, 1e-9, 4.0).unwrap(), (48, 48));
        assert!(matches!(
            neighbors_in(&grid, 1e-9, 4.5),
            Err(SddeError::OutsideGrid { .. })
        ));
    }

    #[test]
    fn merge_dedup_handles_overlap() {
        let mut out = Vec::new();
        merge_dedup(&[0.0, 1.0, 2.0], &[0.5, 1.0, 1.0, 3.0], &mut out);
        assert_eq!(out, vec![0.0, 0.5, 1.0, 2.0, 3.0]);
    }
}
