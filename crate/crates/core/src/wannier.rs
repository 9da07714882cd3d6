//! Wannier states of a single isolated band, the maximally localized gauge,
//! and the split of the spread into gauge-invariant and gauge-dependent
//! parts.
//!
//! Gauges are given as phases `theta(k)` multiplying the eigenvectors stored
//! in a [`BandSlice`]. Links between neighbouring momenta are evaluated for
//! the periodic parts `u_a(k) = e^{-i k a} v_a(k)` that include the intracell
//! position `a = 1..q`, so Berry connections are measured in site units.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kspace::{self, BlochTransform};
use crate::linalg::{inner, C64};
use crate::observables::{density, moments};
use crate::spectrum::BandSlice;

/// Largest `Omega_D` accepted from [`maximally_localize`].
pub const MLWS_TOLERANCE: f64 = 1e-8;

/// Tolerance on the Gram matrix of a Wannier basis.
pub const BASIS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct WannierState {
    pub amplitudes: DVector<C64>,
    /// 0-based band index.
    pub band: usize,
    /// 1-based home cell.
    pub cell: usize,
}

impl WannierState {
    /// Amplitudes shifted by `cells` cells around the ring.
    pub fn translated(&self, cells: i64, q: usize) -> DVector<C64> {
        let n = self.amplitudes.len();
        let shift = (cells * q as i64).rem_euclid(n as i64) as usize;
        DVector::from_fn(n, |j, _| self.amplitudes[(j + n - shift) % n])
    }

    /// `site  re  im` rows, sites numbered from 1.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# band {} cell {}", self.band + 1, self.cell)?;
        writeln!(out, "# site\tre\tim")?;
        for (j, z) in self.amplitudes.iter().enumerate() {
            writeln!(out, "{}\t{:.15e}\t{:.15e}", j + 1, z.re, z.im)?;
        }
        Ok(())
    }
}

/// `Omega = <X^2> - <X>^2` and its decomposition, in squared sites.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SpreadReport {
    pub omega: f64,
    pub omega_i: f64,
    pub omega_d: f64,
    pub center: f64,
    pub d_w: f64,
}

struct Layout {
    q: usize,
    cells: usize,
    ks: Vec<f64>,
    dk: f64,
}

fn layout(bands: &BandSlice, m: usize) -> Result<Layout> {
    let cells = bands.states.len();
    let q = bands.states[0].nrows();
    if m >= q {
        return Err(Error::Dimension(format!("band {m} out of range 0..{q}")));
    }
    Ok(Layout {
        q,
        cells,
        ks: kspace::k_grid(q, cells),
        dk: kspace::k_step(q, cells),
    })
}

fn check_cell(cell: usize, cells: usize) -> Result<()> {
    if cell == 0 || cell > cells {
        return Err(Error::Dimension(format!(
            "cell {cell} out of range 1..={cells}"
        )));
    }
    Ok(())
}

/// `<u(k_n)|u(k_{n+1})>` for every link of the closed grid, including the
/// one from the last momentum to the first momentum of the next zone.
fn links(bands: &BandSlice, m: usize, theta: &[f64], lay: &Layout) -> Vec<C64> {
    let shift: Vec<C64> = (1..=lay.q)
        .map(|a| C64::from_polar(1.0, -lay.dk * a as f64))
        .collect();
    (0..lay.cells)
        .map(|n| {
            let next = (n + 1) % lay.cells;
            let a = bands.state(m, n);
            let b = bands.state(m, next);
            let raw: C64 = (0..lay.q).map(|i| a[i].conj() * b[i] * shift[i]).sum();
            raw * C64::from_polar(1.0, theta[next] - theta[n])
        })
        .collect()
}

/// Result of parallel transport along the k-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelTransport {
    pub theta: Vec<f64>,
    /// Phase of the product of all links, in `(-pi, pi]`.
    pub loop_phase: f64,
}

/// Gauge in which every link carries the same phase `loop_phase / L`.
pub fn parallel_transport(bands: &BandSlice, m: usize) -> Result<ParallelTransport> {
    let lay = layout(bands, m)?;
    let mut theta = vec![0.0; lay.cells];
    let raw = links(bands, m, &theta, &lay);
    for n in 1..lay.cells {
        theta[n] = theta[n - 1] - raw[n - 1].arg();
    }
    let closing = raw[lay.cells - 1] * C64::from_polar(1.0, -theta[lay.cells - 1]);
    let loop_phase = closing.arg();
    for (n, th) in theta.iter_mut().enumerate() {
        *th += loop_phase * n as f64 / lay.cells as f64;
    }
    Ok(ParallelTransport { theta, loop_phase })
}

/// Parallel-transport gauge, re-labelled by whole cells so that the state
/// built for cell `l` is centred in `(q(l-1) + 1/2, q(l-1) + q + 1/2]`.
pub fn mlws_gauge(bands: &BandSlice, m: usize) -> Result<Vec<f64>> {
    let lay = layout(bands, m)?;
    let pt = parallel_transport(bands, m)?;
    let offset = -(lay.q as f64) * pt.loop_phase / (2.0 * PI);
    let s = ((offset - 0.5) / lay.q as f64).ceil() - 1.0;
    Ok(pt
        .theta
        .iter()
        .zip(&lay.ks)
        .map(|(th, k)| th + k * lay.q as f64 * s)
        .collect())
}

/// `W_m(l) = L^{-1/2} sum_k e^{-i k q (l-1)} e^{i theta(k)} |psi_m(k)>`.
pub fn wannier_from_bloch(
    bands: &BandSlice,
    m: usize,
    cell: usize,
    theta: &[f64],
) -> Result<WannierState> {
    let lay = layout(bands, m)?;
    check_cell(cell, lay.cells)?;
    if theta.len() != lay.cells {
        return Err(Error::Dimension(format!(
            "gauge has {} phases for {} momenta",
            theta.len(),
            lay.cells
        )));
    }
    let norm = 1.0 / (lay.cells as f64).sqrt();
    let coeffs: Vec<DVector<C64>> = (0..lay.cells)
        .map(|ik| {
            let phase = theta[ik] - lay.ks[ik] * (lay.q * (cell - 1)) as f64;
            bands.state(m, ik) * C64::from_polar(norm, phase)
        })
        .collect();
    let amplitudes = BlochTransform::new(lay.q, lay.cells).to_sites(&coeffs);
    Ok(WannierState {
        amplitudes,
        band: m,
        cell,
    })
}

/// Discrete Berry connection `-arg<u(k_n)|u(k_{n+1})> / dk` on each link.
pub fn berry_connection(bands: &BandSlice, m: usize, theta: &[f64]) -> Result<Vec<f64>> {
    let lay = layout(bands, m)?;
    Ok(links(bands, m, theta, &lay)
        .iter()
        .map(|z| -z.arg() / lay.dk)
        .collect())
}

/// `<X>` predicted from the connection: `q(l-1) + mean_k A(k)`.
pub fn center_from_connection(
    bands: &BandSlice,
    m: usize,
    cell: usize,
    theta: &[f64],
) -> Result<f64> {
    let lay = layout(bands, m)?;
    let a = berry_connection(bands, m, theta)?;
    Ok((lay.q * (cell - 1)) as f64 + kspace::mean(&a))
}

/// All `q L` Wannier states of one instant, ordered band-major.
#[derive(Debug, Clone)]
pub struct WannierBasis {
    pub q: usize,
    pub cells: usize,
    pub states: Vec<WannierState>,
}

impl WannierBasis {
    /// Basis from one gauge per band.
    pub fn from_gauges(bands: &BandSlice, gauges: &[Vec<f64>]) -> Result<Self> {
        let q = bands.states[0].nrows();
        let cells = bands.states.len();
        if gauges.len() != q {
            return Err(Error::IncompleteBasis(format!(
                "{} gauges for {q} bands",
                gauges.len()
            )));
        }
        let mut states = Vec::with_capacity(q * cells);
        for (m, theta) in gauges.iter().enumerate() {
            for cell in 1..=cells {
                states.push(wannier_from_bloch(bands, m, cell, theta)?);
            }
        }
        Ok(Self { q, cells, states })
    }

    /// Maximally localized states of every band.
    pub fn maximally_localized(bands: &BandSlice) -> Result<Self> {
        let q = bands.states[0].nrows();
        let gauges = (0..q)
            .map(|m| mlws_gauge(bands, m))
            .collect::<Result<Vec<_>>>()?;
        Self::from_gauges(bands, &gauges)
    }

    pub fn get(&self, band: usize, cell: usize) -> Option<&WannierState> {
        self.states
            .iter()
            .find(|w| w.band == band && w.cell == cell)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.states.iter().enumerate() {
            for b in &self.states[i..] {
                let z = inner(&a.amplitudes, &b.amplitudes);
                let target = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                worst = worst.max((z - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// `Omega` from the density, `Omega_I` and `Omega_D` from the matrix
/// elements of `X` between `state` and the other members of `basis`.
pub fn spread_decomposition(state: &WannierState, basis: &WannierBasis) -> Result<SpreadReport> {
    let n = state.amplitudes.len();
    if basis.states.len() != n || basis.states.iter().any(|w| w.amplitudes.len() != n) {
        return Err(Error::IncompleteBasis(format!(
            "{} basis states for {n} sites",
            basis.states.len()
        )));
    }
    let gram = basis.gram_error();
    if gram > BASIS_TOLERANCE {
        return Err(Error::IncompleteBasis(format!(
            "Gram matrix deviates by {gram:.3e}"
        )));
    }
    let rho = density(&state.amplitudes);
    let (center, omega) = moments(&rho);
    let x_state = DVector::from_fn(n, |j, _| state.amplitudes[j] * (j + 1) as f64);
    let mut omega_i = 0.0;
    let mut omega_d = 0.0;
    for w in &basis.states {
        let el = inner(&w.amplitudes, &x_state).norm_sqr();
        if w.band != state.band {
            omega_i += el;
        } else if w.cell != state.cell {
            omega_d += el;
        }
    }
    let x2: f64 = rho
        .iter()
        .enumerate()
        .map(|(j, p)| ((j + 1) as f64).powi(2) * p)
        .sum();
    let mismatch = (omega - omega_i - omega_d).abs();
    if mismatch > BASIS_TOLERANCE * x2.max(1.0) {
        return Err(Error::IncompleteBasis(format!(
            "Omega - Omega_I - Omega_D = {mismatch:.3e}; the state is not a member of the basis"
        )));
    }
    Ok(SpreadReport {
        omega,
        omega_i,
        omega_d,
        center,
        d_w: omega.sqrt(),
    })
}

/// Maximally localized state of band `m` in cell `floor(L/2) + 1`, its
/// spread report and gauge.
pub fn maximally_localize(
    bands: &BandSlice,
    m: usize,
) -> Result<(WannierState, SpreadReport, Vec<f64>)> {
    let lay = layout(bands, m)?;
    let theta = mlws_gauge(bands, m)?;
    let basis = WannierBasis::maximally_localized(bands)?;
    let home = lay.cells / 2 + 1;
    let state = basis
        .get(m, home)
        .cloned()
        .ok_or_else(|| Error::IncompleteBasis(format!("no state for band {m}, cell {home}")))?;
    let report = spread_decomposition(&state, &basis)?;
    if report.omega_d > MLWS_TOLERANCE {
        return Err(Error::NonConvergence {
            residual: report.omega_d,
        });
    }
    Ok((state, report, theta))
}

/// Gauge-dependent spread after one cycle, `(1/L) sum_k (X(k) - mean X)^2`
/// with `X(k) = -d gamma / dk`, from the total phase `gamma(k)` known modulo
/// `2 pi`.
pub fn predict_dispersion(gamma: &[f64], q: usize) -> Result<f64> {
    let phase = kspace::unwrap_phase(gamma)?;
    let x: Vec<f64> = kspace::k_derivative(&phase, q).iter().map(|d| -d).collect();
    let mean = kspace::mean(&x);
    Ok(x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64)
}

/// Outcome of [`refine_spread`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub theta: Vec<f64>,
    pub omega: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Minimizes the literal `Omega` of the Wannier state of band `m` in `cell`
/// over `theta(k)` by gradient descent from `theta0`.
pub fn refine_spread(
    bands: &BandSlice,
    m: usize,
    cell: usize,
    theta0: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<Refinement> {
    let lay = layout(bands, m)?;
    check_cell(cell, lay.cells)?;
    let transform = BlochTransform::new(lay.q, lay.cells);
    let norm = 1.0 / (lay.cells as f64).sqrt();
    // per-momentum components at theta = 0
    let parts: Vec<DVector<C64>> = (0..lay.cells)
        .map(|ik| {
            let phase = -lay.ks[ik] * (lay.q * (cell - 1)) as f64;
            transform.bloch_state(ik, &(bands.state(m, ik) * C64::from_polar(norm, phase)))
        })
        .collect();
    let n = parts[0].len();
    // positions relative to the home cell keep <X^2> - <X>^2 well conditioned
    let origin = (lay.q * (cell - 1)) as f64;
    let x = DVector::from_fn(n, |j, _| C64::new((j + 1) as f64 - origin, 0.0));

    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let rotated: Vec<DVector<C64>> = parts
            .iter()
            .zip(theta)
            .map(|(p, th)| p * C64::from_polar(1.0, *th))
            .collect();
        let psi: DVector<C64> = rotated.iter().fold(DVector::zeros(n), |acc, p| acc + p);
        let xpsi = psi.component_mul(&x);
        let x2psi = xpsi.component_mul(&x);
        let m1 = inner(&psi, &xpsi).re;
        let m2 = inner(&psi, &x2psi).re;
        let grad = rotated
            .iter()
            .map(|p| -2.0 * inner(&x2psi, p).im + 4.0 * m1 * inner(&xpsi, p).im)
            .collect();
        (m2 - m1 * m1, grad)
    };

    let mut theta = theta0.to_vec();
    let (mut omega, mut grad) = eval(&theta);
    let gnorm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    // non-monotone Barzilai-Borwein iteration; only gross increases are
    // rejected, since near the minimum changes of Omega drop below rounding
    let mut step = 1.0;
    let mut iterations = 0;
    while gnorm(&grad) > tolerance && iterations < max_iterations {
        iterations += 1;
        let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
        let (o, g) = eval(&trial);
        if o > omega + 1e-3 * omega.abs().max(1e-3) {
            step *= 0.25;
            continue;
        }
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-4, 1e4)
        } else {
            (step * 2.0).min(1e4)
        };
        theta = trial;
        omega = o;
        grad = g;
    }
    let gradient_norm = gnorm(&grad);
    if gradient_norm > tolerance {
        return Err(Error::NonConvergence {
            residual: gradient_norm,
        });
    }
    Ok(Refinement {
        theta,
        omega,
        gradient_norm,
        iterations,
    })
}
