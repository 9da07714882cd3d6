//! Quasi-momentum grid, the Bloch transform between site and (k, sublattice)
//! amplitudes, and derivatives of phases sampled on the grid.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Quasi-momenta `k = 2*pi*n / (q*L)` with `n` in `(-L/2, L/2]`, i.e. the
/// `L` Bloch momenta allowed on a ring of `L` cells, folded into
/// `(-pi/q, pi/q]` and sorted ascending.
pub fn k_grid(q: usize, cells: usize) -> Vec<f64> {
    let l = cells as i64;
    let lo = -(l - 1) / 2;
    let hi = l / 2;
    (lo..=hi)
        .map(|n| 2.0 * PI * n as f64 / (q * cells) as f64)
        .collect()
}

/// Spacing of [`k_grid`].
pub fn k_step(q: usize, cells: usize) -> f64 {
    2.0 * PI / (q * cells) as f64
}

/// Position of `k` on [`k_grid`], if it lies there (up to 1e-9).
pub fn grid_index(k: f64, q: usize, cells: usize) -> Option<usize> {
    let grid = k_grid(q, cells);
    grid.iter().position(|&g| (g - k).abs() < 1e-9)
}

/// Maps site amplitudes to per-k sublattice amplitudes and back.
///
/// A site `j = q*(l-1) + a` (cell `l` in `1..=L`, sublattice `a` in `1..=q`)
/// carries `psi_j = L^{-1/2} sum_k e^{i k q (l-1)} c_k[a]`. The transform is
/// unitary because every `k` on the grid satisfies `e^{i k q L} = 1`.
#[derive(Debug, Clone)]
pub struct BlochTransform {
    q: usize,
    cells: usize,
    ks: Vec<f64>,
    // phases[ik][l] = e^{i k q l} / sqrt(L), l = 0..L
    phases: Vec<Vec<C64>>,
}

impl BlochTransform {
    pub fn new(q: usize, cells: usize) -> Self {
        let ks = k_grid(q, cells);
        let norm = 1.0 / (cells as f64).sqrt();
        let phases = ks
            .iter()
            .map(|&k| {
                (0..cells)
                    .map(|l| C64::from_polar(norm, k * (q * l) as f64))
                    .collect()
            })
            .collect();
        Self {
            q,
            cells,
            ks,
            phases,
        }
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn to_bloch(&self, psi: &DVector<C64>) -> Vec<DVector<C64>> {
        assert_eq!(psi.len(), self.q * self.cells);
        self.phases
            .iter()
            .map(|row| {
                let mut c = DVector::zeros(self.q);
                for (l, ph) in row.iter().enumerate() {
                    let ph = ph.conj();
                    for a in 0..self.q {
                        c[a] += ph * psi[self.q * l + a];
                    }
                }
                c
            })
            .collect()
    }

    pub fn to_sites(&self, coeffs: &[DVector<C64>]) -> DVector<C64> {
        assert_eq!(coeffs.len(), self.ks.len());
        let mut psi = DVector::zeros(self.q * self.cells);
        for (row, c) in self.phases.iter().zip(coeffs) {
            for (l, ph) in row.iter().enumerate() {
                for a in 0..self.q {
                    psi[self.q * l + a] += ph * c[a];
                }
            }
        }
        psi
    }

    /// Real-space Bloch state for a cell-periodic vector `v` at grid index `ik`.
    pub fn bloch_state(&self, ik: usize, v: &DVector<C64>) -> DVector<C64> {
        let mut psi = DVector::zeros(self.q * self.cells);
        for (l, ph) in self.phases[ik].iter().enumerate() {
            for a in 0..self.q {
                psi[self.q * l + a] = ph * v[a];
            }
        }
        psi
    }
}

/// A k-resolved phase made continuous along the grid, with the integer
/// winding picked up across the zone boundary:
/// `gamma(k + 2*pi/q) = gamma(k) + 2*pi*winding`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPhase {
    pub values: Vec<f64>,
    pub winding: i64,
}

/// Removes `2*pi` jumps between neighbouring k-points from a phase known
/// only modulo `2*pi`.
pub fn unwrap_phase(raw: &[f64]) -> Result<ContinuousPhase> {
    let mut values = Vec::with_capacity(raw.len());
    for (i, &x) in raw.iter().enumerate() {
        if i == 0 {
            values.push(x);
            continue;
        }
        let prev = values[i - 1];
        let step = wrap_to_pi(x - prev);
        values.push(prev + step);
    }
    continuous_phase(values)
}

/// Checks that an already continuous phase has no step beyond `pi` and
/// determines its winding across the zone boundary.
pub fn continuous_phase(values: Vec<f64>) -> Result<ContinuousPhase> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Dimension("phase needs at least two k-points".into()));
    }
    for i in 0..n - 1 {
        let step = values[i + 1] - values[i];
        if step.abs() > PI {
            return Err(Error::Unwrap {
                index: i,
                next: i + 1,
                step,
            });
        }
    }
    let closing = values[0] - values[n - 1];
    let winding = ((wrap_to_pi(closing) - closing) / (2.0 * PI)).round() as i64;
    let step = closing + 2.0 * PI * winding as f64;
    if step.abs() > PI + 1e-12 {
        return Err(Error::Unwrap {
            index: n - 1,
            next: 0,
            step,
        });
    }
    Ok(ContinuousPhase { values, winding })
}

/// Derivative `d gamma / dk` on the grid.
///
/// The linear part fixed by the winding is differentiated exactly; the
/// periodic remainder is differentiated through its trigonometric
/// interpolant (Fourier harmonics `e^{i m q k}`), which is exact for
/// band-limited phases and avoids the attenuation of finite differences on
/// coarse grids.
pub fn k_derivative(phase: &ContinuousPhase, q: usize) -> Vec<f64> {
    let n = phase.values.len();
    let zone = 2.0 * PI / q as f64;
    let dk = zone / n as f64;
    let slope = 2.0 * PI * phase.winding as f64 / zone;
    let residual: Vec<f64> = phase
        .values
        .iter()
        .enumerate()
        .map(|(i, &g)| g - slope * dk * i as f64)
        .collect();

    let harmonic = |m: usize| -> i64 {
        if m <= n / 2 {
            m as i64
        } else {
            m as i64 - n as i64
        }
    };
    let coeffs: Vec<C64> = (0..n)
        .map(|m| {
            residual
                .iter()
                .enumerate()
                .map(|(i, &r)| C64::from_polar(r, -2.0 * PI * (m * i) as f64 / n as f64))
                .sum()
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (m, c) in coeffs.iter().enumerate() {
                let h = harmonic(m);
                if n.is_multiple_of(2) && m == n / 2 {
                    continue;
                }
                let factor = C64::new(0.0, (h * q as i64) as f64);
                acc += factor * c * C64::from_polar(1.0, 2.0 * PI * (m * i) as f64 / n as f64);
            }
            slope + acc.re / n as f64
        })
        .collect()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_to_pi(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
