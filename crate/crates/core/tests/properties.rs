use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use thouless_pump::dynamics::{accumulate_phases, evolve_steps, EvolveOptions, Integrator};
use thouless_pump::effective::{
    effective_cycle_hamiltonian, region_of, split_diagonal, sw_block_diagonal, sw_generic, Region,
};
use thouless_pump::kspace::{k_derivative, k_grid, unwrap_phase, BlochTransform};
use thouless_pump::linalg::{HermitianMatrix, C64};
use thouless_pump::model::{site_of, LatticeGenerator, ModelParams, Sign, TunnelingMode};
use thouless_pump::observables::measure;
use thouless_pump::spectrum::{bands_at, default_time_grid, solve_bands, BandSolution};
use thouless_pump::wannier::{mlws_gauge, spread_decomposition, WannierBasis};

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

prop_compose! {
    fn model()(
        q in 2usize..=5,
        p_raw in 1usize..5,
        cells in 3usize..=7,
        j in 0.1f64..2.0,
        v0 in 0.5f64..40.0,
        phi0 in -PI..PI,
        omega in 0.001f64..0.1,
        sine in any::<bool>(),
        minus in any::<bool>(),
    ) -> ModelParams {
        let mut p = 1 + p_raw % (q - 1);
        while gcd(p, q) != 1 {
            p -= 1;
        }
        ModelParams {
            j,
            v0,
            p,
            q,
            phi0,
            omega,
            cells,
            tunneling: if sine { TunnelingMode::SineModulated } else { TunnelingMode::Uniform },
            sign: if minus { Sign::Minus } else { Sign::Plus },
        }
    }
}

/// Smallest direct gap between neighbouring bands over the sampled torus.
fn min_gap(sol: &BandSolution) -> f64 {
    sol.flatness()
        .gaps
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn random_state(n: usize, seed: &[f64]) -> DVector<C64> {
    let v = DVector::from_fn(n, |i, _| {
        let a = seed[i % seed.len()] + i as f64;
        C64::new(a.sin(), (1.7 * a).cos())
    });
    v.normalize()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian_and_valid(p in model(), t in 0.0f64..1000.0) {
        prop_assert!(p.validate().is_ok());
        let h = p.real_space(t);
        let m = h.as_matrix();
        prop_assert!((m - m.adjoint()).norm() < 1e-12);
        prop_assert_eq!(h.dim(), p.q * p.cells);
    }

    #[test]
    fn translation_by_one_cell_is_a_symmetry(p in model(), t in 0.0f64..1000.0) {
        let h = p.real_space(t);
        let n = h.dim();
        let shift = DMatrix::from_fn(n, n, |i, j| {
            C64::new(if i == (j + p.q) % n { 1.0 } else { 0.0 }, 0.0)
        });
        let moved = &shift * h.as_matrix() * shift.adjoint();
        prop_assert!((moved - h.as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn bloch_blocks_reproduce_ring_spectrum(p in model(), t in 0.0f64..1000.0) {
        let ring = sorted(p.real_space(t).eigenvalues());
        let blocks = sorted(k_grid(p.q, p.cells).iter().flat_map(|&k| p.bloch(k, t).eigenvalues()).collect());
        let scale = 1.0 + p.v0 + 2.0 * p.j;
        for (a, b) in ring.iter().zip(&blocks) {
            prop_assert!((a - b).abs() < 1e-10 * scale, "{} vs {}", a, b);
        }
    }

    #[test]
    fn reversed_sign_negates_the_generator(p in model(), t in 0.0f64..1000.0) {
        let flipped = p.clone().with_sign(p.sign.flipped());
        let sum = p.real_space(t).as_matrix() + flipped.real_space(t).as_matrix();
        prop_assert!(sum.norm() < 1e-12);
    }

    #[test]
    fn bloch_transform_is_unitary(q in 2usize..5, cells in 3usize..9, seed in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let tr = BlochTransform::new(q, cells);
        let psi = random_state(q * cells, &seed);
        let coeffs = tr.to_bloch(&psi);
        let total: f64 = coeffs.iter().map(|c| c.norm_squared()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((tr.to_sites(&coeffs) - &psi).norm() < 1e-12);
    }

    #[test]
    fn observables_ignore_global_phase(seed in proptest::collection::vec(-3.0f64..3.0, 4), alpha in -PI..PI) {
        let psi = random_state(45, &seed);
        let rotated = &psi * C64::from_polar(1.0, alpha);
        let a = measure(&psi, &[("self", &psi)]).unwrap();
        let b = measure(&rotated, &[("self", &psi)]).unwrap();
        prop_assert!((a.mean_x - b.mean_x).abs() < 1e-12);
        prop_assert!((a.d_w - b.d_w).abs() < 1e-12);
        prop_assert!((b.projection("self").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolution_preserves_norm(t0 in 0.0f64..600.0, seed in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let p = ModelParams::default();
        let psi = random_state(45, &seed);
        let opts = EvolveOptions { seam_threshold: 1.0, ..EvolveOptions::default() };
        let evo = evolve_steps(&p, &psi, t0, 1e-3, 200, 50, &opts).unwrap();
        for s in &evo.states {
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bloch_and_dense_steps_agree(p in model(), t0 in 0.0f64..600.0, seed in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let psi = random_state(p.sites(), &seed);
        let base = EvolveOptions { seam_threshold: 1.0, ..EvolveOptions::default() };
        let dense = EvolveOptions { integrator: Integrator::Dense, ..base.clone() };
        let a = evolve_steps(&p, &psi, t0, 1e-2, 40, 40, &base).unwrap();
        let b = evolve_steps(&p, &psi, t0, 1e-2, 40, 40, &dense).unwrap();
        let err = (a.states.last().unwrap() - b.states.last().unwrap()).norm();
        prop_assert!(err < 1e-10, "{}", err);
    }

    #[test]
    fn sw_output_is_hermitian_and_shift_covariant(
        e in proptest::collection::vec(-5.0f64..5.0, 2),
        far in proptest::collection::vec(20.0f64..30.0, 2),
        v in proptest::collection::vec(-0.5f64..0.5, 6),
        shift in -10.0f64..10.0,
    ) {
        let energies = [e[0], e[1], far[0], far[1]];
        let mut vm = DMatrix::<f64>::zeros(4, 4);
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for (x, &(i, j)) in v.iter().zip(&pairs) {
            vm[(i, j)] = *x;
            vm[(j, i)] = *x;
        }
        let h0 = HermitianMatrix::from_real(&DMatrix::from_diagonal(&DVector::from_row_slice(&energies))).unwrap();
        let hv = HermitianMatrix::from_real(&vm).unwrap();
        let a = sw_generic(&h0, &hv, &[0, 1], 3, 1.0).unwrap();
        let shifted = HermitianMatrix::from_real(&DMatrix::from_diagonal(&DVector::from_iterator(4, energies.iter().map(|x| x + shift)))).unwrap();
        let b = sw_generic(&shifted, &hv, &[0, 1], 3, 1.0).unwrap();
        let m = a.as_matrix();
        prop_assert!((m - m.adjoint()).norm() < 1e-14);
        let diff = b.as_matrix() - m - DMatrix::<C64>::identity(2, 2) * C64::new(shift, 0.0);
        prop_assert!(diff.norm() < 1e-12);
    }

    #[test]
    fn closed_forms_match_engine(phi in 0.0f64..(2.0 * PI), j in -3.0f64..3.0, sine in any::<bool>()) {
        let mode = if sine { TunnelingMode::SineModulated } else { TunnelingMode::Uniform };
        let p = ModelParams { j, cells: 4, ..ModelParams::default() }.with_tunneling(mode);
        let t = phi / p.omega;
        let region = region_of(p.phase(t));
        let kept: Vec<usize> = (0..12).filter(|i| i % 3 != region.eliminated()).collect();
        let engine = sw_block_diagonal(&p.real_space(t), &kept, 3, 3.0).unwrap();
        let closed = effective_cycle_hamiltonian(&p, t).unwrap();
        prop_assert!(engine.max_abs_diff(&closed) < 1e-12);
    }

    #[test]
    fn regions_cover_the_circle(phi in -20.0f64..20.0) {
        let r = region_of(phi);
        prop_assert_eq!(r, region_of(phi + 2.0 * PI));
        let kept = r.kept();
        prop_assert!(!kept.contains(&r.eliminated()));
        prop_assert!(matches!(r, Region::I | Region::II | Region::III));
    }

    #[test]
    fn spectral_derivative_is_exact_for_harmonics(a in -1.0f64..1.0, b in -1.0f64..1.0, w in -2i64..=2, n in 5usize..20) {
        let q = 3usize;
        let zone = 2.0 * PI / q as f64;
        let ks: Vec<f64> = (0..n).map(|i| zone * i as f64 / n as f64).collect();
        let f = |k: f64| w as f64 * q as f64 * k + a * (q as f64 * k).sin() + b * (2.0 * q as f64 * k).cos();
        let df = |k: f64| w as f64 * q as f64 + a * q as f64 * (q as f64 * k).cos() - 2.0 * b * q as f64 * (2.0 * q as f64 * k).sin();
        // resolvable only if neighbouring samples differ by less than pi
        let max_step = (0..n).map(|i| (f(ks[i]) - f(ks[i] + zone / n as f64)).abs()).fold(0.0, f64::max);
        prop_assume!(max_step < 0.9 * PI);
        let raw: Vec<f64> = ks.iter().map(|&k| f(k).rem_euclid(2.0 * PI)).collect();
        let phase = unwrap_phase(&raw);
        prop_assume!(phase.is_ok());
        let d = k_derivative(&phase.unwrap(), q);
        for (i, &k) in ks.iter().enumerate() {
            prop_assert!((d[i] - df(k)).abs() < 1e-9, "k = {}: {} vs {}", k, d[i], df(k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn chern_numbers_are_integers_summing_to_zero(p in model()) {
        let sol = solve_bands(&p, &default_time_grid(p.period(), 120));
        prop_assume!(sol.is_ok());
        let sol = sol.unwrap();
        prop_assume!(min_gap(&sol) > 0.05 * (p.v0 + 2.0 * p.j));
        let mut total = 0.0;
        for m in 0..p.q {
            let s: f64 = sol.berry_curvature_grid(m).unwrap().iter().flatten().sum::<f64>() / (2.0 * PI);
            prop_assert!((s - s.round()).abs() < 1e-8, "band {}: {}", m, s);
            total += s;
        }
        prop_assert!(total.abs() < 1e-8);
    }

    #[test]
    fn chern_numbers_are_gauge_independent(phases in proptest::collection::vec(-PI..PI, 45)) {
        let p = ModelParams::default();
        let mut sol = solve_bands(&p, &default_time_grid(p.period(), 60)).unwrap();
        let before = sol.chern_numbers().unwrap();
        for (it, slice) in sol.slices.iter_mut().enumerate() {
            for (ik, u) in slice.states.iter_mut().enumerate() {
                for m in 0..3 {
                    let z = C64::from_polar(1.0, phases[(it * 7 + ik * 3 + m) % 45] * (1 + it % 5) as f64);
                    for a in 0..3 {
                        u[(a, m)] *= z;
                    }
                }
            }
        }
        prop_assert_eq!(sol.chern_numbers().unwrap(), before);
    }

    #[test]
    fn sign_reversal_reverses_band_order(p in model()) {
        let plus = p.clone().with_sign(Sign::Plus);
        let minus = p.clone().with_sign(Sign::Minus);
        let grid = default_time_grid(p.period(), 120);
        let (a, b) = (solve_bands(&plus, &grid), solve_bands(&minus, &grid));
        prop_assume!(a.is_ok() && b.is_ok());
        let (a, b) = (a.unwrap(), b.unwrap());
        prop_assume!(min_gap(&a) > 0.05 * (p.v0 + 2.0 * p.j));
        let (ca, cb) = (a.chern_numbers().unwrap(), b.chern_numbers().unwrap());
        let reversed: Vec<i64> = ca.iter().rev().copied().collect();
        prop_assert_eq!(cb, reversed);
    }

    #[test]
    fn invariant_spread_is_gauge_independent(amp in proptest::collection::vec(-0.4f64..0.4, 6)) {
        let p = ModelParams::default();
        let slice = bands_at(&p, 37.0);
        let mlws = WannierBasis::maximally_localized(&slice).unwrap();
        let ks = k_grid(3, 15);
        let gauges: Vec<Vec<f64>> = (0..3)
            .map(|m| {
                let base = mlws_gauge(&slice, m).unwrap();
                base.iter()
                    .zip(&ks)
                    .map(|(th, &k)| th + amp[2 * m] * (3.0 * k).sin() + amp[2 * m + 1] * (3.0 * k).cos())
                    .collect()
            })
            .collect();
        let other = WannierBasis::from_gauges(&slice, &gauges).unwrap();
        for m in 0..3 {
            let a = spread_decomposition(mlws.get(m, 8).unwrap(), &mlws).unwrap();
            let b = spread_decomposition(other.get(m, 8).unwrap(), &other).unwrap();
            prop_assert!((a.omega_i - b.omega_i).abs() < 1e-8 * (1.0 + a.omega_i), "{} vs {}", a.omega_i, b.omega_i);
            prop_assert!(b.omega >= a.omega - 1e-12);
        }
    }
}

#[test]
fn dynamical_shift_scales_inversely_with_ramp_speed() {
    let p = ModelParams::default();
    let slow = ModelParams {
        omega: p.omega / 2.0,
        ..p.clone()
    };
    let a = accumulate_phases(
        &solve_bands(&p, &default_time_grid(p.period(), 960)).unwrap(),
        2,
    )
    .unwrap();
    let b = accumulate_phases(
        &solve_bands(&slow, &default_time_grid(slow.period(), 960)).unwrap(),
        2,
    )
    .unwrap();
    for (x, y) in a.x_d.iter().zip(&b.x_d) {
        assert!((2.0 * x - y).abs() < 1e-9 * (1.0 + y.abs()), "{x} {y}");
    }
    for (x, y) in a.x_b.iter().zip(&b.x_b) {
        assert!((x - y).abs() < 1e-9, "{x} {y}");
    }
}

#[test]
fn translated_site_shifts_mean_by_one_cell() {
    let n = 45;
    let mut psi = DVector::<C64>::zeros(n);
    psi[site_of(5, 2, 3) - 1] = C64::new(0.6, 0.0);
    psi[site_of(6, 1, 3) - 1] = C64::new(0.0, 0.8);
    let moved = DVector::from_fn(n, |i, _| psi[(i + n - 3) % n]);
    let a = measure(&psi, &[]).unwrap();
    let b = measure(&moved, &[]).unwrap();
    assert!((b.mean_x - a.mean_x - 3.0).abs() < 1e-12);
    assert!((b.d_w - a.d_w).abs() < 1e-12);
}

#[test]
fn split_diagonal_recombines() {
    let p = ModelParams::default();
    let h = p.real_space(12.3);
    let (d, v) = split_diagonal(&h);
    assert!((d.as_matrix() + v.as_matrix() - h.as_matrix()).norm() < 1e-15);
    assert!((0..45).all(|i| v.get(i, i).norm() == 0.0));
}
