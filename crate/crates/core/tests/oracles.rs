//! Checks against results obtained independently of the library's own
//! numerics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use thouless_pump::dynamics::{dynamical_phase_trace, evolve_steps, EvolveOptions, Protocol};
use thouless_pump::kspace::k_grid;
use thouless_pump::linalg::C64;
use thouless_pump::model::{LatticeGenerator, ModelParams, TunnelingMode};
use thouless_pump::observables::site_state;
use thouless_pump::spectrum::bands_at;
use thouless_pump::wannier::WannierBasis;

/// Eigenvalues of a 3x3 Hermitian matrix from the trigonometric solution of
/// its characteristic cubic.
fn cubic_eigenvalues(h: &DMatrix<C64>) -> [f64; 3] {
    let tr = (h[(0, 0)] + h[(1, 1)] + h[(2, 2)]).re;
    let minors = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)] + h[(0, 0)] * h[(2, 2)]
        - h[(0, 2)] * h[(2, 0)]
        + h[(1, 1)] * h[(2, 2)]
        - h[(1, 2)] * h[(2, 1)])
        .re;
    let det = (h[(0, 0)] * (h[(1, 1)] * h[(2, 2)] - h[(1, 2)] * h[(2, 1)])
        - h[(0, 1)] * (h[(1, 0)] * h[(2, 2)] - h[(1, 2)] * h[(2, 0)])
        + h[(0, 2)] * (h[(1, 0)] * h[(2, 1)] - h[(1, 1)] * h[(2, 0)]))
        .re;
    // x^3 - tr x^2 + minors x - det = 0, shifted by tr / 3
    let s = tr / 3.0;
    let p = minors - tr * tr / 3.0;
    let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
    let r = 2.0 * (-p / 3.0).sqrt();
    let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
    let phi = arg.acos() / 3.0;
    let mut e = [0.0; 3];
    for (i, x) in e.iter_mut().enumerate() {
        *x = s + r * (phi - 2.0 * PI * i as f64 / 3.0).cos();
    }
    e.sort_by(f64::total_cmp);
    e
}

/// `exp(-i H t) psi` by a Taylor series on `n` sub-intervals.
fn taylor_propagate(h: &DMatrix<C64>, psi: &DVector<C64>, t: f64, n: usize) -> DVector<C64> {
    let dt = t / n as f64;
    let mut out = psi.clone();
    for _ in 0..n {
        let mut term = out.clone();
        let mut acc = out.clone();
        for order in 1..40 {
            term = (h * &term) * C64::new(0.0, -dt / order as f64);
            acc += &term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        out = acc;
    }
    out
}

#[test]
fn bloch_spectra_match_cubic_roots() {
    for mode in [TunnelingMode::Uniform, TunnelingMode::SineModulated] {
        let p = ModelParams::default().with_tunneling(mode);
        for t in [0.0, 55.5, 123.4, 400.0] {
            for &k in &k_grid(3, 15) {
                let h = p.bloch(k, t);
                let exact = cubic_eigenvalues(h.as_matrix());
                let ours = h.eigenvalues();
                for (a, b) in exact.iter().zip(&ours) {
                    assert!(
                        (a - b).abs() < 1e-11,
                        "{mode:?} t = {t} k = {k}: {a} vs {b}"
                    );
                }
            }
        }
    }
}

#[test]
fn static_evolution_matches_taylor_series() {
    let p = ModelParams {
        omega: 0.0,
        ..ModelParams::default()
    };
    let psi = site_state(45, 22).unwrap();
    let opts = EvolveOptions {
        seam_threshold: 1.0,
        ..EvolveOptions::default()
    };
    let evo = evolve_steps(&p, &psi, 0.0, 0.01, 200, 200, &opts).unwrap();
    let exact = taylor_propagate(p.real_space(0.0).as_matrix(), &psi, 2.0, 400);
    let err = (evo.states.last().unwrap() - exact).norm();
    assert!(err < 1e-11, "{err:e}");
}

#[test]
fn midpoint_rule_is_second_order() {
    let p = ModelParams {
        omega: 0.05,
        ..ModelParams::default()
    };
    let psi = site_state(45, 27).unwrap();
    let opts = EvolveOptions {
        seam_threshold: 1.0,
        ..EvolveOptions::default()
    };
    let span = 1.0;
    let run = |steps: usize| evo_final(&p, &psi, span / steps as f64, steps, &opts);
    let reference = run(6400);
    let e1 = (run(100) - &reference).norm();
    let e2 = (run(200) - &reference).norm();
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.1, "observed order {order}");
}

fn evo_final(
    p: &ModelParams,
    psi: &DVector<C64>,
    dt: f64,
    steps: usize,
    opts: &EvolveOptions,
) -> DVector<C64> {
    evolve_steps(p, psi, 3.0, dt, steps, steps, opts)
        .unwrap()
        .states
        .pop()
        .unwrap()
}

#[test]
fn starting_site_is_mostly_the_top_band_wannier_state() {
    // 27th site, C sublattice of cell 9: 99.9% on the top-band MLWS
    let p = ModelParams::default();
    let basis = WannierBasis::maximally_localized(&bands_at(&p, 0.0)).unwrap();
    let w = &basis.get(2, 9).unwrap().amplitudes;
    let overlap = w[26].norm_sqr();
    assert!((overlap - 0.999).abs() < 5e-4, "{overlap}");
}

#[test]
fn weak_tunneling_wannier_states_are_single_sites() {
    let p = ModelParams {
        j: 1e-3,
        ..ModelParams::default()
    };
    // away from the A-B crossing at phi = 0
    let t = 0.3 / p.omega;
    let slice = bands_at(&p, t);
    let basis = WannierBasis::maximally_localized(&slice).unwrap();
    let terms = p.cell_terms(t);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| terms.onsite[a].total_cmp(&terms.onsite[b]));
    for (band, &a) in order.iter().enumerate() {
        let w = &basis.get(band, 5).unwrap().amplitudes;
        assert!(w[3 * 4 + a].norm_sqr() > 1.0 - 1e-5, "band {band}");
    }
}

#[test]
fn echo_cancels_dynamical_phase() {
    let p = ModelParams::default();
    let t = p.period();
    let grid: Vec<f64> = (0..=4000).map(|i| 2.0 * t * i as f64 / 4000.0).collect();
    let ks: Vec<usize> = (0..15).collect();
    let echo = dynamical_phase_trace(&p, Protocol::Echo, 2, &ks, &grid).unwrap();
    let trad = dynamical_phase_trace(&p, Protocol::Traditional, 2, &ks, &grid).unwrap();
    for ik in 0..15 {
        assert!(echo[ik][4000].abs() < 1e-6, "k {ik}: {}", echo[ik][4000]);
        assert_eq!(echo[ik][0], 0.0);
        let (one, two) = (trad[ik][2000], trad[ik][4000]);
        assert!(
            (two - 2.0 * one).abs() < 1e-9 * one.abs(),
            "k {ik}: {one} {two}"
        );
    }
}
