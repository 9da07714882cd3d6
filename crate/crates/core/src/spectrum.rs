//! Bloch bands over the `(k, t)` torus: energies, cell-periodic states,
//! Berry curvature and Chern numbers (plaquette method), gaps, bandwidths and
//! flatness ratios.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kspace;
use crate::linalg::{inner, C64};
use crate::model::{LatticeGenerator, ModelParams};

/// Default number of time samples per period used for topology.
pub const DEFAULT_TIME_SAMPLES: usize = 240;

/// Bands on the full k-grid at one instant.
#[derive(Debug, Clone)]
pub struct BandSlice {
    pub t: f64,
    /// `energies[ik][m]`, ascending in `m`.
    pub energies: Vec<Vec<f64>>,
    /// `states[ik]` holds `u_m(k, t)` as column `m`.
    pub states: Vec<DMatrix<C64>>,
}

impl BandSlice {
    pub fn energy(&self, m: usize, ik: usize) -> f64 {
        self.energies[ik][m]
    }

    pub fn state(&self, m: usize, ik: usize) -> DVector<C64> {
        self.states[ik].column(m).clone_owned()
    }

    /// `E_m(k)` for every grid momentum.
    pub fn band(&self, m: usize) -> Vec<f64> {
        self.energies.iter().map(|e| e[m]).collect()
    }

    fn min_gap(&self, ks: &[f64], tol: f64) -> Option<Error> {
        for (ik, e) in self.energies.iter().enumerate() {
            for m in 0..e.len() - 1 {
                let gap = e[m + 1] - e[m];
                if gap < tol {
                    return Some(Error::BandTouching {
                        lower: m + 1,
                        upper: m + 2,
                        gap,
                        tolerance: tol,
                        k: ks[ik],
                        t: self.t,
                    });
                }
            }
        }
        None
    }
}

/// Bands of a time-dependent generator sampled on a time grid.
#[derive(Debug, Clone)]
pub struct BandSolution {
    pub q: usize,
    pub ks: Vec<f64>,
    pub period: f64,
    pub slices: Vec<BandSlice>,
}

/// Diagonalizes the Bloch Hamiltonian at every grid momentum at time `t`.
pub fn bands_at<G: LatticeGenerator + ?Sized>(generator: &G, t: f64) -> BandSlice {
    let ks = kspace::k_grid(generator.cell_size(), generator.cells());
    let terms = generator.cell_terms(t);
    let (energies, states) = ks
        .iter()
        .map(|&k| {
            let eig = terms.bloch(k).eigh();
            (eig.values, eig.vectors)
        })
        .unzip();
    BandSlice {
        t,
        energies,
        states,
    }
}

/// `N_t` equally spaced times covering `[0, period)`.
pub fn default_time_grid(period: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|i| period * i as f64 / samples as f64)
        .collect()
}

/// Bands of the pump model on `t_grid`, with the default gap tolerance
/// `1e-6 V0`.
pub fn solve_bands(params: &ModelParams, t_grid: &[f64]) -> Result<BandSolution> {
    params.validate()?;
    solve_bands_for(params, t_grid, params.period(), 1e-6 * params.v0.abs())
}

/// Bands of an arbitrary generator. Fails on the first grid point, in time
/// order, where two neighbouring bands come closer than `gap_tolerance`.
pub fn solve_bands_for<G: LatticeGenerator + ?Sized>(
    generator: &G,
    t_grid: &[f64],
    period: f64,
    gap_tolerance: f64,
) -> Result<BandSolution> {
    if t_grid.is_empty() {
        return Err(Error::Dimension("empty time grid".into()));
    }
    let ks = kspace::k_grid(generator.cell_size(), generator.cells());
    let slices: Vec<BandSlice> = t_grid.par_iter().map(|&t| bands_at(generator, t)).collect();
    for s in &slices {
        if let Some(err) = s.min_gap(&ks, gap_tolerance) {
            return Err(err);
        }
    }
    Ok(BandSolution {
        q: generator.cell_size(),
        ks,
        period,
        slices,
    })
}

impl BandSolution {
    pub fn bands(&self) -> usize {
        self.q
    }

    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.t).collect()
    }

    /// Number of distinct time slices forming a closed loop; a trailing
    /// slice at `t_0 + T` is treated as a copy of the first.
    fn torus_len(&self) -> Result<usize> {
        let n = self.slices.len();
        if !self.period.is_finite() || self.period <= 0.0 {
            return Err(Error::OpenTimeGrid(
                "the generator has no finite period".into(),
            ));
        }
        let t0 = self.slices[0].t;
        let tol = 1e-9 * self.period;
        let closed = n > 1 && (self.slices[n - 1].t - t0 - self.period).abs() < tol;
        let distinct = if closed { n - 1 } else { n };
        if distinct < 2 {
            return Err(Error::OpenTimeGrid("fewer than two time slices".into()));
        }
        let dt = self.period / distinct as f64;
        for (i, s) in self.slices.iter().enumerate().take(distinct) {
            if (s.t - t0 - dt * i as f64).abs() > tol {
                return Err(Error::OpenTimeGrid(format!(
                    "slice {i} at t = {} is not on a uniform grid of {distinct} points per period",
                    s.t
                )));
            }
        }
        Ok(distinct)
    }

    fn check_band(&self, m: usize) -> Result<()> {
        if m >= self.q {
            return Err(Error::Dimension(format!(
                "band {m} out of range 0..{}",
                self.q
            )));
        }
        Ok(())
    }

    /// Plaquette field strengths `F_m` indexed `[ik][it]`. The plaquette at
    /// `(k_i, t_n)` has corners `(k_i, t_n) -> (k_{i+1}, t_n) -> (k_{i+1},
    /// t_{n+1}) -> (k_i, t_{n+1})`; both directions wrap around the torus.
    pub fn berry_curvature_grid(&self, m: usize) -> Result<Vec<Vec<f64>>> {
        self.check_band(m)?;
        let nt = self.torus_len()?;
        let nk = self.ks.len();
        let states: Vec<Vec<DVector<C64>>> = (0..nk)
            .map(|ik| (0..nt).map(|it| self.slices[it].state(m, ik)).collect())
            .collect();
        let link = |a: &DVector<C64>, b: &DVector<C64>| {
            let z = inner(a, b);
            z / z.norm()
        };
        Ok((0..nk)
            .map(|ik| {
                let ik1 = (ik + 1) % nk;
                (0..nt)
                    .map(|it| {
                        let it1 = (it + 1) % nt;
                        let u1 = &states[ik][it];
                        let u2 = &states[ik1][it];
                        let u3 = &states[ik1][it1];
                        let u4 = &states[ik][it1];
                        (link(u1, u2) * link(u2, u3) * link(u3, u4) * link(u4, u1)).arg()
                    })
                    .collect()
            })
            .collect())
    }

    /// Chern number of band `m` (0-based) over the `(k, t)` torus.
    pub fn chern_number(&self, m: usize) -> Result<i64> {
        let f = self.berry_curvature_grid(m)?;
        let total: f64 = f.iter().flatten().sum();
        Ok((total / (2.0 * PI)).round() as i64)
    }

    pub fn chern_numbers(&self) -> Result<Vec<i64>> {
        (0..self.q).map(|m| self.chern_number(m)).collect()
    }

    /// Gaps, bandwidths and flatness ratios at every time slice.
    pub fn flatness(&self) -> FlatnessReport {
        let q = self.q;
        let mut gaps = Vec::with_capacity(self.slices.len());
        let mut widths = Vec::with_capacity(self.slices.len());
        let mut ratios = Vec::with_capacity(self.slices.len());
        for s in &self.slices {
            let g: Vec<f64> = (0..q - 1)
                .map(|m| {
                    s.energies
                        .iter()
                        .map(|e| e[m + 1] - e[m])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let w: Vec<f64> = (0..q)
                .map(|m| {
                    let band = s.band(m);
                    let hi = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lo = band.iter().copied().fold(f64::INFINITY, f64::min);
                    hi - lo
                })
                .collect();
            let d: Vec<f64> = (0..q)
                .map(|m| {
                    let gap = match m {
                        0 => g[0],
                        _ if m == q - 1 => g[q - 2],
                        _ => g[m - 1].min(g[m]),
                    };
                    w[m] / gap
                })
                .collect();
            gaps.push(g);
            widths.push(w);
            ratios.push(d);
        }
        FlatnessReport {
            times: self.times(),
            gaps,
            widths,
            ratios,
        }
    }

    /// One row per `(t, k)`: `t  phi  k  E_1 .. E_q`.
    pub fn write_tsv<W: Write>(&self, out: &mut W, phase: impl Fn(f64) -> f64) -> Result<()> {
        writeln!(
            out,
            "# energies in units of the tunneling scale, k in inverse sites"
        )?;
        write!(out, "# t\tphi\tk")?;
        for m in 1..=self.q {
            write!(out, "\tE_{m}")?;
        }
        writeln!(out)?;
        for s in &self.slices {
            for (ik, k) in self.ks.iter().enumerate() {
                write!(out, "{:.6}\t{:.9}\t{:.9}", s.t, phase(s.t), k)?;
                for e in &s.energies[ik] {
                    write!(out, "\t{e:.12e}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// `G_m(t) = min_k (E_{m+1}(k,t) - E_m(k,t))`, `W_m(t)` the width of band
/// `m`, and `delta_m = W_m / G` with `G` the smaller of the gaps adjacent to
/// band `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessReport {
    pub times: Vec<f64>,
    /// `gaps[it][m]` for `m = 0..q-1`.
    pub gaps: Vec<Vec<f64>>,
    pub widths: Vec<Vec<f64>>,
    pub ratios: Vec<Vec<f64>>,
}

impl FlatnessReport {
    /// `delta_m` across the time grid.
    pub fn ratio_series(&self, m: usize) -> Vec<f64> {
        self.ratios.iter().map(|r| r[m]).collect()
    }

    /// One row per time: `t  phi  G_1.. W_1.. delta_1..`.
    pub fn write_tsv<W: Write>(&self, out: &mut W, phase: impl Fn(f64) -> f64) -> Result<()> {
        let q = self.widths.first().map_or(0, Vec::len);
        write!(out, "# t\tphi")?;
        for m in 1..q {
            write!(out, "\tG_{m}")?;
        }
        for m in 1..=q {
            write!(out, "\tW_{m}")?;
        }
        for m in 1..=q {
            write!(out, "\tdelta_{m}")?;
        }
        writeln!(out)?;
        for (i, &t) in self.times.iter().enumerate() {
            write!(out, "{t:.6}\t{:.9}", phase(t))?;
            for x in self.gaps[i]
                .iter()
                .chain(&self.widths[i])
                .chain(&self.ratios[i])
            {
                write!(out, "\t{x:.12e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
