//! The commensurate Aubry-Andre-Harper pump: on-site modulation
//! `V_j(t) = V0 cos(2 pi beta j + phi(t))`, nearest-neighbour tunneling
//! `J_j(t)` (uniform or sine-modulated) and the sign-reversed Hamiltonian used
//! by the echo protocol.
//!
//! Every Hamiltonian in the crate is invariant under translation by one cell
//! of `q` sites, so it is described by a [`CellTerms`] table from which both
//! the real-space ring matrix and the `q x q` Bloch matrix are assembled.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace;
use crate::linalg::{HermitianMatrix, C64};

/// How the nearest-neighbour tunneling depends on the bond and on time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TunnelingMode {
    /// `J_j(t) = -J`
    Uniform,
    /// `J_j(t) = -J sin(2 pi beta j + phi(t))`
    SineModulated,
}

/// Overall sign of the Hamiltonian; `Minus` is the reversed generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Static parameters of the pump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Tunneling scale `J`.
    pub j: f64,
    /// On-site modulation amplitude `V0`.
    pub v0: f64,
    /// `beta = p / q`.
    pub p: usize,
    pub q: usize,
    /// Initial modulation phase `phi0` (rad).
    pub phi0: f64,
    /// Ramping speed `omega` (rad per unit time).
    pub omega: f64,
    /// Number of cells `L`.
    pub cells: usize,
    pub tunneling: TunnelingMode,
    pub sign: Sign,
}

impl Default for ModelParams {
    /// `N = 45` (`q = 3`, `L = 15`), `J = 1`, `V0 = 30`, `phi0 = 0`,
    /// `omega = 0.01`, uniform tunneling.
    fn default() -> Self {
        Self {
            j: 1.0,
            v0: 30.0,
            p: 1,
            q: 3,
            phi0: 0.0,
            omega: 0.01,
            cells: 15,
            tunneling: TunnelingMode::Uniform,
            sign: Sign::Plus,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::InvalidParams(format!(
                "q must be >= 2, got {}",
                self.q
            )));
        }
        if self.p == 0 || gcd(self.p, self.q) != 1 {
            return Err(Error::InvalidParams(format!(
                "p = {} and q = {} must be coprime positive integers",
                self.p, self.q
            )));
        }
        if self.cells < 3 {
            return Err(Error::InvalidParams(format!(
                "L must be >= 3, got {}",
                self.cells
            )));
        }
        for (name, x) in [
            ("J", self.j),
            ("V0", self.v0),
            ("phi0", self.phi0),
            ("omega", self.omega),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.omega < 0.0 {
            return Err(Error::InvalidParams("omega must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_tunneling(mut self, mode: TunnelingMode) -> Self {
        self.tunneling = mode;
        self
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }

    /// Total number of sites `N = q L`.
    pub fn sites(&self) -> usize {
        self.q * self.cells
    }

    pub fn beta(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    /// Pumping period `T = 2 pi / omega` (infinite for a static model).
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// `phi(t) = omega t + phi0`.
    pub fn phase(&self, t: f64) -> f64 {
        self.omega * t + self.phi0
    }

    fn check_site(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.sites() {
            return Err(Error::SiteIndex {
                index: j,
                len: self.sites(),
            });
        }
        Ok(())
    }

    fn onsite_at(&self, j: usize, t: f64) -> f64 {
        self.sign.factor() * self.v0 * (2.0 * PI * self.beta() * j as f64 + self.phase(t)).cos()
    }

    fn bond_at(&self, j: usize, t: f64) -> f64 {
        let bare = match self.tunneling {
            TunnelingMode::Uniform => -self.j,
            TunnelingMode::SineModulated => {
                -self.j * (2.0 * PI * self.beta() * j as f64 + self.phase(t)).sin()
            }
        };
        self.sign.factor() * bare
    }
}

/// Sublattice index `(j - 1 mod q) + 1` of site `j` (1-based).
pub fn sublattice(j: usize, q: usize) -> usize {
    (j - 1) % q + 1
}

/// Cell index `(j - 1) / q + 1` of site `j` (1-based).
pub fn cell_of(j: usize, q: usize) -> usize {
    (j - 1) / q + 1
}

/// Site index of sublattice `a` in cell `l` (both 1-based).
pub fn site_of(cell: usize, a: usize, q: usize) -> usize {
    q * (cell - 1) + a
}

/// `V_j(t)`, sign-reversed for [`Sign::Minus`].
pub fn onsite_energy(params: &ModelParams, j: usize, t: f64) -> Result<f64> {
    params.check_site(j)?;
    Ok(params.onsite_at(j, t))
}

/// `J_j(t)` of the bond joining sites `j` and `j + 1` (bond `N` closes the
/// ring), sign-reversed for [`Sign::Minus`].
pub fn tunneling(params: &ModelParams, j: usize, t: f64) -> Result<f64> {
    params.check_site(j)?;
    Ok(params.bond_at(j, t))
}

/// A term `amplitude * c^dag_{l, from} c_{l + offset, to} + h.c.`, repeated in
/// every cell `l`. Sublattices are 0-based here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hopping {
    pub from: usize,
    pub to: usize,
    pub offset: i64,
    pub amplitude: C64,
}

/// Translation-invariant description of a Hamiltonian on a ring of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTerms {
    pub onsite: Vec<f64>,
    pub hoppings: Vec<Hopping>,
}

impl CellTerms {
    pub fn q(&self) -> usize {
        self.onsite.len()
    }

    pub fn hop(&mut self, from: usize, to: usize, offset: i64, amplitude: f64) {
        self.hoppings.push(Hopping {
            from,
            to,
            offset,
            amplitude: C64::new(amplitude, 0.0),
        });
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.onsite.iter_mut().for_each(|v| *v *= factor);
        self.hoppings.iter_mut().for_each(|h| h.amplitude *= factor);
        self
    }

    /// Dense `N x N` matrix on a ring of `cells` cells.
    pub fn real_space(&self, cells: usize) -> HermitianMatrix {
        let q = self.q();
        let n = q * cells;
        let mut m = DMatrix::<C64>::zeros(n, n);
        for l in 0..cells {
            for (a, &v) in self.onsite.iter().enumerate() {
                m[(q * l + a, q * l + a)] += C64::new(v, 0.0);
            }
            for h in &self.hoppings {
                let target = (l as i64 + h.offset).rem_euclid(cells as i64) as usize;
                let i = q * l + h.from;
                let j = q * target + h.to;
                m[(i, j)] += h.amplitude;
                m[(j, i)] += h.amplitude.conj();
            }
        }
        HermitianMatrix::from_raw(m)
    }

    /// `q x q` Bloch matrix in the cell-periodic gauge: a term reaching
    /// `offset` cells away carries `e^{i k q offset}`.
    pub fn bloch(&self, k: f64) -> HermitianMatrix {
        let q = self.q();
        let mut m = DMatrix::<C64>::zeros(q, q);
        for (a, &v) in self.onsite.iter().enumerate() {
            m[(a, a)] += C64::new(v, 0.0);
        }
        for h in &self.hoppings {
            let phase = C64::from_polar(1.0, k * (q as i64 * h.offset) as f64);
            m[(h.from, h.to)] += h.amplitude * phase;
            m[(h.to, h.from)] += (h.amplitude * phase).conj();
        }
        HermitianMatrix::from_raw(m)
    }

    /// Upper bound on the spectral norm (row-sum bound over all bonds).
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.q()];
        for (a, v) in self.onsite.iter().enumerate() {
            rows[a] += v.abs();
        }
        for h in &self.hoppings {
            rows[h.from] += h.amplitude.norm();
            rows[h.to] += h.amplitude.norm();
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// A time-dependent Hamiltonian on a ring of identical cells.
pub trait LatticeGenerator: Sync {
    fn cell_size(&self) -> usize;
    fn cells(&self) -> usize;
    fn cell_terms(&self, t: f64) -> CellTerms;

    /// Sign of the generator at `t`, used to track band relabelling under
    /// reversal.
    fn sign_at(&self, _t: f64) -> Sign {
        Sign::Plus
    }

    fn sites(&self) -> usize {
        self.cell_size() * self.cells()
    }

    fn real_space(&self, t: f64) -> HermitianMatrix {
        self.cell_terms(t).real_space(self.cells())
    }

    fn bloch(&self, k: f64, t: f64) -> HermitianMatrix {
        self.cell_terms(t).bloch(k)
    }
}

impl LatticeGenerator for ModelParams {
    fn cell_size(&self) -> usize {
        self.q
    }

    fn cells(&self) -> usize {
        self.cells
    }

    fn cell_terms(&self, t: f64) -> CellTerms {
        let q = self.q;
        let onsite = (1..=q).map(|a| self.onsite_at(a, t)).collect();
        let mut terms = CellTerms {
            onsite,
            hoppings: Vec::with_capacity(q),
        };
        for a in 1..=q {
            let amp = self.bond_at(a, t);
            if a < q {
                terms.hop(a - 1, a, 0, amp);
            } else {
                terms.hop(q - 1, 0, 1, amp);
            }
        }
        terms
    }

    fn sign_at(&self, _t: f64) -> Sign {
        self.sign
    }
}

/// Dense `N x N` Hamiltonian on the periodic ring.
pub fn real_space_hamiltonian(params: &ModelParams, t: f64) -> Result<HermitianMatrix> {
    params.validate()?;
    Ok(params.real_space(t))
}

/// `q x q` Bloch Hamiltonian at a grid quasi-momentum.
pub fn bloch_hamiltonian(params: &ModelParams, k: f64, t: f64) -> Result<HermitianMatrix> {
    params.validate()?;
    if kspace::grid_index(k, params.q, params.cells).is_none() {
        return Err(Error::OffGrid {
            k,
            cells: params.cells,
        });
    }
    Ok(params.bloch(k, t))
}
