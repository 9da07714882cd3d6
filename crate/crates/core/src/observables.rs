//! Site densities, position moments, projections and band populations of a
//! single-particle state on the ring. Positions are the literal site labels
//! `1..=N`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kspace::BlochTransform;
use crate::linalg::{inner, C64};
use crate::spectrum::BandSlice;

/// Tolerance on `| ||psi|| - 1 |` accepted by [`measure`].
pub const NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSample {
    pub t: f64,
    /// `|psi_j|^2`, indexed from site 1.
    pub density: Vec<f64>,
    /// `<X>` in sites.
    pub mean_x: f64,
    /// `(<X> - x0) / q` in cells.
    pub delta_p: f64,
    /// `sqrt(<X^2> - <X>^2)` in sites.
    pub d_w: f64,
    /// `|<ref|psi>|^2` per labelled reference.
    pub projections: Vec<(String, f64)>,
}

impl ObservableSample {
    /// Stamps the sample with its time and measures the shift from `x0`.
    pub fn with_origin(mut self, t: f64, x0: f64, q: usize) -> Self {
        self.t = t;
        self.delta_p = (self.mean_x - x0) / q as f64;
        self
    }

    pub fn projection(&self, label: &str) -> Option<f64> {
        self.projections
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| *p)
    }

    /// `D_W^2`, the spread `Omega`.
    pub fn spread(&self) -> f64 {
        self.d_w * self.d_w
    }
}

/// Mean and variance of the site label under a density.
pub fn moments(density: &[f64]) -> (f64, f64) {
    let total: f64 = density.iter().sum();
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (i, &p) in density.iter().enumerate() {
        let x = (i + 1) as f64;
        m1 += x * p;
        m2 += x * x * p;
    }
    m1 /= total;
    m2 /= total;
    (m1, (m2 - m1 * m1).max(0.0))
}

pub fn density(state: &DVector<C64>) -> Vec<f64> {
    state.iter().map(|z| z.norm_sqr()).collect()
}

/// Observables of a normalized state; `t` and `delta_p` are left at zero
/// (see [`ObservableSample::with_origin`]).
pub fn measure(
    state: &DVector<C64>,
    references: &[(&str, &DVector<C64>)],
) -> Result<ObservableSample> {
    let norm = state.norm();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Unnormalized(norm));
    }
    let density = density(state);
    let (mean_x, var) = moments(&density);
    let mut projections = Vec::with_capacity(references.len());
    for (label, r) in references {
        if r.len() != state.len() {
            return Err(Error::Dimension(format!(
                "reference {label} has {} sites, state has {}",
                r.len(),
                state.len()
            )));
        }
        projections.push((label.to_string(), inner(r, state).norm_sqr().min(1.0)));
    }
    Ok(ObservableSample {
        t: 0.0,
        density,
        mean_x,
        delta_p: 0.0,
        d_w: var.sqrt(),
        projections,
    })
}

/// Weight of `state` in each band: `sum_k |<psi_m(k)|state>|^2`.
pub fn band_population(state: &DVector<C64>, bands: &BandSlice) -> Vec<f64> {
    let cells = bands.states.len();
    let q = bands.states[0].nrows();
    let coeffs = BlochTransform::new(q, cells).to_bloch(state);
    band_population_bloch(&coeffs, bands)
}

/// [`band_population`] for a state already given as per-k sublattice
/// amplitudes.
pub fn band_population_bloch(coeffs: &[DVector<C64>], bands: &BandSlice) -> Vec<f64> {
    let q = bands.states[0].nrows();
    let mut weights = vec![0.0; q];
    for (c, u) in coeffs.iter().zip(&bands.states) {
        let proj = u.ad_mul(c);
        for (w, z) in weights.iter_mut().zip(proj.iter()) {
            *w += z.norm_sqr();
        }
    }
    weights
}

/// Normalized single-site state `|j>` (1-based).
pub fn site_state(sites: usize, j: usize) -> Result<DVector<C64>> {
    if j == 0 || j > sites {
        return Err(Error::SiteIndex {
            index: j,
            len: sites,
        });
    }
    let mut v = DVector::zeros(sites);
    v[j - 1] = C64::new(1.0, 0.0);
    Ok(v)
}
