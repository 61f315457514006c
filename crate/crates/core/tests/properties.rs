use proptest::prelude::*;

use sdde::linalg::{commutator, mat_exp, Matrix};
use sdde::mesh::{self, build_augmented_mesh, build_scheme_mesh, DelaySet};
use sdde::noise::{Artm, IntegralMode, IntegralOptions, SeedInfo, StepIntegrals, WienerPaths};

fn matrix(n: usize, entries: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            m[(r, c)] = entries[r * n + c];
        }
    }
    m
}

/// Random square matrix of size 1..=4 rescaled to the given infinity norm.
fn arb_matrix(max_norm: f64) -> impl Strategy<Value = Matrix> {
    (
        1usize..=4,
        prop::collection::vec(-1.0f64..1.0, 16),
        0.0..=1.0f64,
    )
        .prop_map(move |(n, e, frac)| {
            let m = matrix(n, &e);
            let norm = m.norm_inf();
            if norm == 0.0 {
                m
            } else {
                m.scale(frac * max_norm / norm)
            }
        })
}

fn arb_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..=4, prop::collection::vec(-3.0f64..3.0, 32))
        .prop_map(|(n, e)| (matrix(n, &e[..16]), matrix(n, &e[16..])))
}

/// exp(A) by scaling to norm <= 1/2, 30 Taylor terms, then repeated squaring.
fn exp_series(a: &Matrix) -> Matrix {
    let n = a.dim();
    let mut k = 0;
    while a.norm_inf() / 2f64.powi(k) > 0.5 {
        k += 1;
    }
    let scaled = a.scale(1.0 / 2f64.powi(k));
    let mut result = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for i in 1..=30 {
        term = (&term * &scaled).scale(1.0 / i as f64);
        result.add_scaled(1.0, &term);
    }
    for _ in 0..k {
        result = &result * &result;
    }
    result
}

proptest! {
    #[test]
    fn commutator_is_antisymmetric((a, b) in arb_pair()) {
        let ab = commutator(&a, &b).unwrap();
        let ba = commutator(&b, &a).unwrap();
        prop_assert!((&ab + &ba).norm_inf() == 0.0);
    }

    #[test]
    fn exp_of_negation_is_inverse(a in arb_matrix(5.0)) {
        let prod = &mat_exp(&a).unwrap() * &mat_exp(&a.scale(-1.0)).unwrap();
        prop_assert!(prod.max_abs_diff(&Matrix::identity(a.dim())) <= 1e-10);
    }

    #[test]
    fn exp_is_a_one_parameter_group(a in arb_matrix(2.0), s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let lhs = &mat_exp(&a.scale(s)).unwrap() * &mat_exp(&a.scale(t)).unwrap();
        let rhs = mat_exp(&a.scale(s + t)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn exp_matches_series_oracle(a in arb_matrix(2.0)) {
        let got = mat_exp(&a).unwrap();
        let want = exp_series(&a);
        prop_assert!(got.max_abs_diff(&want) <= 1e-11 * want.norm_inf());
    }
}

fn arb_delays(max_k: usize, min_delay: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(min_delay..1.0f64, 1..=max_k)
}

/// Observation set: T plus a few random times in [0, T].
fn arb_obs(t_end: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=t_end, 0..5).prop_map(move |mut v| {
        v.push(t_end);
        v
    })
}

/// Every point reachable as t - sum_k i_k tau_k, deduplicated with the same chain rule.
fn brute_force_mesh(obs: &[f64], delays: &DelaySet) -> Vec<f64> {
    let eps = delays.tolerance();
    let mut pts = Vec::new();
    let counts: Vec<usize> = delays.multiples().to_vec();
    for &t in obs {
        let mut idx = vec![0usize; counts.len()];
        loop {
            let shift: f64 = idx
                .iter()
                .zip(delays.delays())
                .map(|(&i, &tau)| i as f64 * tau)
                .sum();
            if t - shift >= -eps {
                pts.push((t - shift).max(0.0));
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] <= counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for p in pts {
        if p - last > eps {
            out.push(p);
        }
        last = p;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mesh_is_closed_under_delays(delays in arb_delays(3, 0.15), obs in arb_obs(2.0)) {
        let d = DelaySet::new(delays, 2.0).unwrap();
        let m = build_augmented_mesh(&obs, &d).unwrap();
        prop_assert!(m.verify_delay_closure(&d).is_ok());
        prop_assert!(m.steps().all(|s| s > d.tolerance()));
    }

    #[test]
    fn sequential_construction_equals_product(delays in arb_delays(3, 0.25), obs in arb_obs(1.0)) {
        let d = DelaySet::new(delays, 1.0).unwrap();
        let m = build_augmented_mesh(&obs, &d).unwrap();
        let brute = brute_force_mesh(&obs, &d);
        prop_assert_eq!(m.len(), brute.len());
        for (a, b) in m.points().iter().zip(&brute) {
            prop_assert!((a - b).abs() <= d.tolerance(), "{} vs {}", a, b);
        }
    }

    #[test]
    fn mesh_is_monotone_in_observations(delays in arb_delays(3, 0.15), small in arb_obs(2.0), more in arb_obs(2.0)) {
        let d = DelaySet::new(delays, 2.0).unwrap();
        let mut big = small.clone();
        big.extend(more);
        let a = build_augmented_mesh(&small, &d).unwrap();
        let b = build_augmented_mesh(&big, &d).unwrap();
        prop_assert!(a.is_subset_of(&b));
    }

    #[test]
    fn refined_mesh_contains_coarse_mesh(delays in arb_delays(2, 0.3), e in 2i32..5, r in 1i32..3) {
        let d = DelaySet::new(delays, 1.0).unwrap();
        let h = 2f64.powi(-e);
        let coarse = build_scheme_mesh(&d, h, &[], mesh::DEFAULT_MESH_CAP).unwrap();
        let fine = build_scheme_mesh(&d, h / 2f64.powi(r), &[], mesh::DEFAULT_MESH_CAP).unwrap();
        prop_assert!(coarse.is_subset_of(&fine));
    }
}

fn scale(a: f64, b: f64, h: f64) -> f64 {
    (a * b).abs() + h
}

fn check_identities(s: &StepIntegrals) -> Result<(), TestCaseError> {
    let h = s.dt;
    for i in 0..s.noise_dim() {
        for j in 0..s.noise_dim() {
            let prod = s.dw[i] * s.dw[j];
            let pair = s.ij(i, j) + s.ij(j, i);
            let expected = if i == j { prod - h } else { prod };
            prop_assert!((pair - expected).abs() <= 1e-12 * scale(s.dw[i], s.dw[j], h));
        }
        let time_pair = s.i_0j[i] + s.i_j0[i];
        prop_assert!((time_pair - h * s.dw[i]).abs() <= 1e-12 * h * (s.dw[i].abs() + h.sqrt()));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairing_identities_hold_for_both_modes(
        seed in any::<u64>(),
        step in 0usize..7,
        fine in 0u32..3,
    ) {
        let d = DelaySet::new(vec![1.0, std::f64::consts::FRAC_PI_4], 2.0).unwrap();
        let h = 0.25;
        let artm = Artm::build(&d, h, h / 2f64.powi(fine as i32 + 1), &[], mesh::DEFAULT_MESH_CAP).unwrap();
        let grid = build_scheme_mesh(&d, h, &[], mesh::DEFAULT_MESH_CAP).unwrap();
        let paths = WienerPaths::sample(&artm, 3, SeedInfo::new(seed, 0));
        let n = step * (grid.len() - 1) / 7;
        let a = artm.mesh().locate(grid.points()[n]).unwrap();
        let b = artm.mesh().locate(grid.points()[n + 1]).unwrap();
        for mode in [IntegralMode::Simple, IntegralMode::Trapezoidal] {
            let mut s = StepIntegrals::zeros(3, 2);
            paths.fill_integrals(a, b, mode, IntegralOptions::default(), &mut s).unwrap();
            check_identities(&s)?;
        }
    }
}
