//! End-to-end acceptance criteria at the reference parameters
//! (`N = 45`, `J = 1`, `V0 = 30`, `phi0 = 0`, `omega = 0.01`).
//!
//! Prints one PASS/FAIL line per criterion and fails if any criterion does.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thouless_pump::dynamics::{
    accumulate_phases, run_protocol, EvolveOptions, InitialState, Protocol, PumpTrajectory,
};
use thouless_pump::effective::{
    compare_effective, effective_cycle_hamiltonian, effective_params, region_of, sw_block_diagonal,
};
use thouless_pump::model::{LatticeGenerator, ModelParams, TunnelingMode};
use thouless_pump::spectrum::{bands_at, default_time_grid, solve_bands, BandSolution};
use thouless_pump::wannier::{
    berry_connection, center_from_connection, maximally_localize, predict_dispersion,
    spread_decomposition, WannierBasis,
};

const TOP: usize = 2;

struct Verdict {
    id: usize,
    pass: bool,
    detail: String,
}

fn chern_sums(sol: &BandSolution) -> Vec<f64> {
    (0..sol.bands())
        .map(|m| {
            sol.berry_curvature_grid(m)
                .unwrap()
                .iter()
                .flatten()
                .sum::<f64>()
                / (2.0 * PI)
        })
        .collect()
}

fn max_d_w_until(traj: &PumpTrajectory, t_end: f64) -> f64 {
    traj.samples
        .iter()
        .filter(|s| s.t <= t_end * (1.0 + 1e-12))
        .map(|s| s.d_w)
        .fold(0.0, f64::max)
}

fn norm_drift(traj: &PumpTrajectory) -> f64 {
    traj.states
        .iter()
        .map(|s| (s.norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let p = ModelParams::default().with_tunneling(TunnelingMode::SineModulated);
    let coarse = solve_bands(&p, &default_time_grid(p.period(), 240)).unwrap();
    let fine_params = ModelParams {
        cells: 30,
        ..p.clone()
    };
    let fine = solve_bands(&fine_params, &default_time_grid(p.period(), 480)).unwrap();
    let (a, b) = (chern_sums(&coarse), chern_sums(&fine));
    let elapsed = start.elapsed().as_secs_f64();
    let dev = a
        .iter()
        .chain(&b)
        .map(|s| (s - s.round()).abs())
        .fold(0.0, f64::max);
    let ca: Vec<i64> = a.iter().map(|s| s.round() as i64).collect();
    let cb: Vec<i64> = b.iter().map(|s| s.round() as i64).collect();
    Verdict {
        id: 1,
        pass: dev < 1e-6 && ca[TOP] == -1 && ca == cb && elapsed < 10.0,
        detail: format!(
            "C = {ca:?}, refined {cb:?}, max |sum - round| = {dev:.1e}, {elapsed:.2} s"
        ),
    }
}

fn criterion_2(
    trad: &PumpTrajectory,
    supp: &PumpTrajectory,
    chern_uniform: i64,
    chern_sine: i64,
) -> Verdict {
    let t = trad.period();
    let dp_u = trad.sample_at(t).delta_p;
    let dp_s = supp.sample_at(t).delta_p;
    let pass = (dp_u - chern_uniform as f64).abs() < 1e-2
        && (dp_s - chern_sine as f64).abs() < 1e-2
        && (dp_s + 0.999).abs() <= 0.005;
    Verdict {
        id: 2,
        pass,
        detail: format!(
            "Delta P(T): uniform {dp_u:.5} (C = {chern_uniform}), sine-modulated {dp_s:.5} (C = {chern_sine}); target -0.999 +- 0.005"
        ),
    }
}

fn criterion_3(echo: &PumpTrajectory, trad: &PumpTrajectory) -> Verdict {
    let t = echo.period();
    let last = echo.final_sample();
    let proj = last.projection("mlws_7").unwrap();
    let ratio = last.d_w / echo.max_d_w();
    let (dw1, dw2) = (trad.sample_at(t).d_w, trad.sample_at(2.0 * t).d_w);
    let pass = (proj - 0.989).abs() <= 0.01 && ratio < 0.05 && dw2 > dw1;
    Verdict {
        id: 3,
        pass,
        detail: format!(
            "echo |<C_7|psi(2T)>|^2 = {proj:.5} (0.989 +- 0.01), D_W(2T)/max D_W = {ratio:.4} (< 0.05); traditional D_W(T) = {dw1:.4}, D_W(2T) = {dw2:.4}"
        ),
    }
}

fn criterion_4(supp: &PumpTrajectory, trad: &PumpTrajectory) -> Verdict {
    let t = supp.period();
    let proj = supp.final_sample().projection("mlws_8").unwrap();
    let (ms, mu) = (supp.max_d_w(), max_d_w_until(trad, t));
    Verdict {
        id: 4,
        pass: (proj - 0.999).abs() <= 0.005 && ms < mu,
        detail: format!("|<C_8|psi(T)>|^2 = {proj:.5} (0.999 +- 0.005), max D_W sine-modulated {ms:.4} < uniform {mu:.4}"),
    }
}

fn criterion_5(uniform_bands: &BandSolution) -> Verdict {
    let rec = accumulate_phases(uniform_bands, TOP).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max_abs = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let (mxd, mxb) = (mean(&rec.x_d), mean(&rec.x_b));
    let (axd, axi) = (max_abs(&rec.x_d), max_abs(&rec.xi));
    let q_c = 3.0 * rec.chern as f64;
    Verdict {
        id: 5,
        pass: mxd.abs() < 1e-3 * axd && (mxb - q_c).abs() <= 1e-2 && axd > 10.0 * axi,
        detail: format!(
            "mean X_d = {mxd:.2e} (max |X_d| = {axd:.4}), mean X_b = {mxb:.6} vs qC = {q_c}, max |xi| = {axi:.4}"
        ),
    }
}

fn criterion_6(mlws_run: &PumpTrajectory, omega_i: f64, uniform_bands: &BandSolution) -> Verdict {
    let rec = accumulate_phases(uniform_bands, TOP).unwrap();
    let predicted = predict_dispersion(&rec.gamma, 3).unwrap();
    let d_w = mlws_run.sample_at(mlws_run.period()).d_w;
    let measured = d_w * d_w - omega_i;
    let rel = (predicted - measured).abs() / measured.abs();
    Verdict {
        id: 6,
        pass: rel < 0.02,
        detail: format!("predicted {predicted:.5}, D_W(T)^2 - Omega_I = {measured:.5}, relative difference {rel:.2e}"),
    }
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut worst_rel = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..200 {
        let v0 = rng.gen_range(5.0..50.0);
        let ratio: f64 = rng.gen_range(0.01..0.1);
        let j = if rng.gen_bool(0.5) {
            ratio * v0
        } else {
            -ratio * v0
        };
        let mode = if rng.gen_bool(0.5) {
            TunnelingMode::Uniform
        } else {
            TunnelingMode::SineModulated
        };
        let phi = rng.gen_range(0.0..2.0 * PI);
        let p = ModelParams {
            j,
            v0,
            cells: 4,
            ..ModelParams::default()
        }
        .with_tunneling(mode);
        let t = phi / p.omega;
        let region = region_of(p.phase(t));
        let kept: Vec<usize> = (0..12).filter(|i| i % 3 != region.eliminated()).collect();
        let engine = sw_block_diagonal(&p.real_space(t), &kept, 3, 0.1 * v0).unwrap();
        let closed = effective_cycle_hamiltonian(&p, t).unwrap();
        let floor = 1e-13 * v0;
        for r in 0..12 {
            for c in 0..12 {
                let (g, h) = (engine.get(r, c), closed.get(r, c));
                let err = (g - h).norm();
                if err > 1e-10 * h.norm() + floor {
                    failures += 1;
                }
                if h.norm() > 0.0 {
                    worst_rel = worst_rel.max(err / h.norm());
                }
            }
        }
    }
    let p = ModelParams::default().with_tunneling(TunnelingMode::SineModulated);
    let mut worst_res = 0.0f64;
    for phi in [
        0.0,
        PI,
        PI / 3.0,
        4.0 * PI / 3.0,
        2.0 * PI / 3.0,
        5.0 * PI / 3.0,
    ] {
        let e = effective_params(&p, phi / p.omega, region_of(phi)).unwrap();
        worst_res = worst_res
            .max(e.couplings[1].abs())
            .max(e.couplings[2].abs());
    }
    Verdict {
        id: 7,
        pass: failures == 0 && worst_res < 1e-12,
        detail: format!(
            "200 draws: {failures} mismatched entries, worst relative error {worst_rel:.1e}; max |J^(2)|, |J^(3)| at resonances {worst_res:.1e}"
        ),
    }
}

fn criterion_8(p: &ModelParams, initial: &InitialState, opts: &EvolveOptions) -> Verdict {
    let cmp = compare_effective(p, initial, 1, opts).unwrap();
    Verdict {
        id: 8,
        pass: cmp.max_delta_p_diff < 0.05 && cmp.max_d_w_diff < 0.1,
        detail: format!(
            "max |dP_full - dP_eff| = {:.4} cells (< 0.05), max |D_W,full - D_W,eff| = {:.4} sites (< 0.1)",
            cmp.max_delta_p_diff, cmp.max_d_w_diff
        ),
    }
}

fn criterion_9(
    runs: &[&PumpTrajectory],
    supp: &PumpTrajectory,
    supp_half: &PumpTrajectory,
) -> Verdict {
    let drift = runs
        .iter()
        .map(|r| norm_drift(r) / (r.times.last().unwrap() / r.period()).round())
        .fold(0.0, f64::max);
    let f1 = supp.final_sample().projection("mlws_8").unwrap();
    let f2 = supp_half.final_sample().projection("mlws_8").unwrap();
    let overlap = thouless_pump::dynamics::fidelity(supp.final_state(), supp_half.final_state());

    let p = ModelParams::default();
    let slice = bands_at(&p, 0.0);
    let (state, report, theta) = maximally_localize(&slice, TOP).unwrap();
    let a = berry_connection(&slice, TOP, &theta).unwrap();
    let mean_a = a.iter().sum::<f64>() / a.len() as f64;
    let spread_a = a.iter().map(|x| (x - mean_a).abs()).fold(0.0, f64::max);
    let center = center_from_connection(&slice, TOP, state.cell, &theta).unwrap();
    let center_err = (center - report.center).abs();
    let pass = drift < 1e-10
        && (f1 - f2).abs() < 1e-8
        && report.omega_d < 1e-8
        && spread_a < 1e-8
        && center_err < 1e-8;
    Verdict {
        id: 9,
        pass,
        detail: format!(
            "norm drift/cycle {drift:.1e}; fidelity dt {f1:.12} vs dt/2 {f2:.12} (|diff| {:.1e}, state infidelity {:.1e}); Omega_D = {:.1e}; connection spread {spread_a:.1e}; center error {center_err:.1e}",
            (f1 - f2).abs(),
            (1.0 - overlap).abs(),
            report.omega_d
        ),
    }
}

fn criterion_10() -> Verdict {
    let p = ModelParams::default();
    let grid = default_time_grid(p.period(), 960);
    let u = solve_bands(&p, &grid).unwrap().flatness().ratio_series(TOP);
    let s = solve_bands(
        &p.clone().with_tunneling(TunnelingMode::SineModulated),
        &grid,
    )
    .unwrap()
    .flatness()
    .ratio_series(TOP);
    let violations = u.iter().zip(&s).filter(|(a, b)| b > a).count();
    let excess = u
        .iter()
        .zip(&s)
        .map(|(a, b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max);
    Verdict {
        id: 10,
        pass: violations == 0,
        detail: format!(
            "{violations} of {} phases with delta_sine > delta_uniform (max excess {excess:.2e})",
            grid.len()
        ),
    }
}

#[test]
fn acceptance() {
    let p = ModelParams::default();
    let sine = p.clone().with_tunneling(TunnelingMode::SineModulated);
    let opts = EvolveOptions::default();
    let initial = InitialState::default_for(&p);
    assert_eq!(initial, InitialState::Site(27));

    let mut verdicts = vec![criterion_1()];

    let uniform_bands = solve_bands(&p, &default_time_grid(p.period(), 4800)).unwrap();
    let sine_bands = solve_bands(&sine, &default_time_grid(p.period(), 960)).unwrap();
    let chern_uniform = uniform_bands.chern_number(TOP).unwrap();
    let chern_sine = sine_bands.chern_number(TOP).unwrap();

    let trad = run_protocol(&p, Protocol::Traditional, 2, &initial, &opts).unwrap();
    let echo = run_protocol(&p, Protocol::Echo, 2, &initial, &opts).unwrap();
    let supp = run_protocol(&p, Protocol::Suppressed, 1, &initial, &opts).unwrap();
    let half = EvolveOptions {
        dt: Some(supp.dt / 2.0),
        ..opts.clone()
    };
    let supp_half = run_protocol(&p, Protocol::Suppressed, 1, &initial, &half).unwrap();

    let mlws_start = InitialState::Mlws { band: TOP, cell: 9 };
    let mlws_run = run_protocol(&p, Protocol::Traditional, 1, &mlws_start, &opts).unwrap();
    let slice0 = bands_at(&p, 0.0);
    let basis = WannierBasis::maximally_localized(&slice0).unwrap();
    let omega_i = spread_decomposition(basis.get(TOP, 9).unwrap(), &basis)
        .unwrap()
        .omega_i;

    verdicts.push(criterion_2(&trad, &supp, chern_uniform, chern_sine));
    verdicts.push(criterion_3(&echo, &trad));
    verdicts.push(criterion_4(&supp, &trad));
    verdicts.push(criterion_5(&uniform_bands));
    verdicts.push(criterion_6(&mlws_run, omega_i, &uniform_bands));
    verdicts.push(criterion_7());
    verdicts.push(criterion_8(&p, &initial, &opts));
    verdicts.push(criterion_9(
        &[&trad, &echo, &supp, &mlws_run],
        &supp,
        &supp_half,
    ));
    verdicts.push(criterion_10());

    println!();
    for v in &verdicts {
        println!(
            "criterion {:>2}: {}  {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
