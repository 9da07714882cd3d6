//! Third-order Schrieffer-Wolff effective Hamiltonians of the three-band
//! pump (`q = 3`, sublattices A, B, C).
//!
//! Over a cycle the phase `phi` passes through three kinds of resonance,
//! where two on-site energies cross while the third stays far away. Around
//! each one the two resonant sublattices span the low-energy space `P` and
//! the third sublattice is eliminated perturbatively:
//!
//! | region | `phi mod 2 pi`                                   | `P`    |
//! |--------|--------------------------------------------------|--------|
//! | I      | `[0, pi/6) u [5pi/6, 7pi/6) u [11pi/6, 2pi)`     | A, B   |
//! | II     | `[pi/6, pi/2) u [7pi/6, 3pi/2)`                  | B, C   |
//! | III    | `[pi/2, 5pi/6) u [3pi/2, 11pi/6)`                | C, A   |
//!
//! The closed forms below are cross-checked entry by entry against the
//! generic expansion [`sw_generic`].

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::{
    dt_max, run_generator, EvolveOptions, InitialState, Protocol, PumpTrajectory,
};
use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::model::{CellTerms, LatticeGenerator, ModelParams};

/// Smallest energy denominator accepted, as a fraction of `V0`.
pub const GAP_FLOOR_FRACTION: f64 = 0.1;

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    I,
    II,
    III,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::I => "I",
            Region::II => "II",
            Region::III => "III",
        }
    }

    /// Sublattices (0-based) kept in the low-energy space.
    pub fn kept(self) -> [usize; 2] {
        match self {
            Region::I => [A, B],
            Region::II => [B, C],
            Region::III => [C, A],
        }
    }

    /// The eliminated sublattice.
    pub fn eliminated(self) -> usize {
        match self {
            Region::I => C,
            Region::II => A,
            Region::III => B,
        }
    }
}

/// Region of the phase `phi`, reduced to `[0, 2 pi)`.
pub fn region_of(phi: f64) -> Region {
    let p = phi.rem_euclid(2.0 * PI);
    let sixth = PI / 6.0;
    let s = p / sixth;
    if s < 1.0 || (5.0..7.0).contains(&s) || s >= 11.0 {
        Region::I
    } else if (1.0..3.0).contains(&s) || (7.0..9.0).contains(&s) {
        Region::II
    } else {
        Region::III
    }
}

/// Second- or third-order effective Hamiltonian on the subspace spanned by
/// the basis states `subspace` of `H = H0 + V`, with `H0` diagonal.
///
/// With `E` the diagonal of `H0`, `a, b, l` in the subspace and `m, n`
/// outside it:
///
/// ```text
/// H1[a,b] = E_a d_ab + V_ab
/// H2[a,b] = 1/2 sum_m V_am V_mb (1/(E_a - E_m) + 1/(E_b - E_m))
/// H3[a,b] = 1/2 sum_mn V_am V_mn V_nb (1/((E_a-E_m)(E_a-E_n)) + 1/((E_b-E_m)(E_b-E_n)))
///         - 1/2 sum_lm ( V_am V_ml V_lb / ((E_b-E_m)(E_l-E_m))
///                      + V_al V_lm V_mb / ((E_a-E_m)(E_l-E_m)) )
/// ```
///
/// Rows and columns of the result follow the order of `subspace`.
pub fn sw_generic(
    h0: &HermitianMatrix,
    v: &HermitianMatrix,
    subspace: &[usize],
    order: usize,
    gap_floor: f64,
) -> Result<HermitianMatrix> {
    let n = h0.dim();
    if v.dim() != n {
        return Err(Error::Dimension(format!(
            "H0 is {n}x{n}, V is {0}x{0}",
            v.dim()
        )));
    }
    if !(2..=3).contains(&order) {
        return Err(Error::InvalidParams(format!(
            "order must be 2 or 3, got {order}"
        )));
    }
    let h = h0.as_matrix();
    for i in 0..n {
        for j in 0..n {
            if i != j && h[(i, j)].norm() != 0.0 {
                return Err(Error::InvalidParams("H0 must be diagonal".into()));
            }
        }
    }
    let mut inside = vec![false; n];
    for &a in subspace {
        if a >= n || inside[a] {
            return Err(Error::Dimension(format!(
                "invalid or repeated subspace index {a}"
            )));
        }
        inside[a] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
    let e: Vec<f64> = (0..n).map(|i| h[(i, i)].re).collect();
    let vm = v.as_matrix();

    for &a in subspace {
        for &m in &outside {
            let gap = (e[a] - e[m]).abs();
            if gap < gap_floor {
                return Err(Error::SmallDenominator {
                    gap,
                    floor: gap_floor,
                });
            }
        }
    }

    // couplings from each state to the complement, skipping zeros
    let to_out: Vec<Vec<(usize, C64)>> = (0..n)
        .map(|i| {
            outside
                .iter()
                .filter(|&&m| vm[(i, m)].norm() != 0.0)
                .map(|&m| (m, vm[(i, m)]))
                .collect()
        })
        .collect();

    let p = subspace.len();
    let mut out = DMatrix::<C64>::zeros(p, p);
    for (ia, &a) in subspace.iter().enumerate() {
        for (ib, &b) in subspace.iter().enumerate() {
            let mut acc = vm[(a, b)];
            if a == b {
                acc += C64::new(e[a], 0.0);
            }
            for &(m, vam) in &to_out[a] {
                let vmb = vm[(m, b)];
                acc += vam * vmb * (0.5 * (1.0 / (e[a] - e[m]) + 1.0 / (e[b] - e[m])));
            }
            if order == 3 {
                for &(m, vam) in &to_out[a] {
                    for &(nn, vnb_conj) in &to_out[b] {
                        let vmn = vm[(m, nn)];
                        if vmn.norm() == 0.0 {
                            continue;
                        }
                        let vnb = vnb_conj.conj();
                        let w = 1.0 / ((e[a] - e[m]) * (e[a] - e[nn]))
                            + 1.0 / ((e[b] - e[m]) * (e[b] - e[nn]));
                        acc += vam * vmn * vnb * (0.5 * w);
                    }
                }
                for &l in subspace {
                    let vlb = vm[(l, b)];
                    if vlb.norm() != 0.0 {
                        for &(m, vam) in &to_out[a] {
                            let vml = vm[(m, l)];
                            acc -= vam * vml * vlb * (0.5 / ((e[b] - e[m]) * (e[l] - e[m])));
                        }
                    }
                    let val = vm[(a, l)];
                    if val.norm() != 0.0 {
                        for &(m, vlm) in &to_out[l] {
                            let vmb = vm[(m, b)];
                            acc -= val * vlm * vmb * (0.5 / ((e[a] - e[m]) * (e[l] - e[m])));
                        }
                    }
                }
            }
            out[(ia, ib)] = acc;
        }
    }
    HermitianMatrix::symmetrized(out)
}

/// Splits `H` into its diagonal and off-diagonal parts.
pub fn split_diagonal(h: &HermitianMatrix) -> (HermitianMatrix, HermitianMatrix) {
    let m = h.as_matrix();
    let n = m.nrows();
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let v = m - &d;
    (
        HermitianMatrix::new(d).expect("diagonal of a Hermitian matrix"),
        HermitianMatrix::new(v).expect("off-diagonal part of a Hermitian matrix"),
    )
}

/// `sw_generic` applied to both the kept and the eliminated space, each
/// with the other as complement, reassembled as a block-diagonal `N x N`
/// matrix.
pub fn sw_block_diagonal(
    h: &HermitianMatrix,
    kept: &[usize],
    order: usize,
    gap_floor: f64,
) -> Result<HermitianMatrix> {
    let n = h.dim();
    let (h0, v) = split_diagonal(h);
    let mut in_kept = vec![false; n];
    kept.iter().for_each(|&i| in_kept[i] = true);
    let rest: Vec<usize> = (0..n).filter(|&i| !in_kept[i]).collect();
    let mut out = DMatrix::<C64>::zeros(n, n);
    for block in [kept, rest.as_slice()] {
        let heff = sw_generic(&h0, &v, block, order, gap_floor)?;
        for (i, &a) in block.iter().enumerate() {
            for (j, &b) in block.iter().enumerate() {
                out[(a, b)] = heff.get(i, j);
            }
        }
    }
    HermitianMatrix::new(out)
}

/// Closed-form effective couplings at one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub region: Region,
    pub phi: f64,
    /// Effective on-site energies of A, B, C.
    pub onsite: [f64; 3],
    /// `J^(1)`, `J^(2)`, `J^(3)`.
    pub couplings: [f64; 3],
    /// `(V_A - V_B, V_B - V_C, V_A - V_C)`.
    pub deltas: [f64; 3],
    /// Bare bonds `(J_1, J_2, J_3)`: A-B, B-C and C to the next cell's A.
    pub bare: [f64; 3],
}

fn closed_form(params: &ModelParams, t: f64, region: Region) -> EffectiveParams {
    let terms = params.cell_terms(t);
    let [va, vb, vc] = [terms.onsite[A], terms.onsite[B], terms.onsite[C]];
    let bond = |from: usize| {
        terms
            .hoppings
            .iter()
            .find(|h| h.from == from)
            .map_or(0.0, |h| h.amplitude.re)
    };
    let (j1, j2, j3) = (bond(A), bond(B), bond(C));
    let (d1, d2, d3) = (va - vb, vb - vc, va - vc);
    let (onsite, couplings) = match region {
        Region::I => (
            [
                va + j3 * j3 / d3,
                vb + j2 * j2 / d2,
                vc - j2 * j2 / d2 - j3 * j3 / d3,
            ],
            [
                j1 - j1 * (j2 * j2 + j3 * j3) / (2.0 * d2 * d3),
                0.5 * j2 * j3 * (1.0 / d2 + 1.0 / d3),
                j1 * j2 * j3 / (2.0 * d2 * d3),
            ],
        ),
        Region::II => (
            [
                va + j1 * j1 / d1 + j3 * j3 / d3,
                vb - j1 * j1 / d1,
                vc - j3 * j3 / d3,
            ],
            [
                j2 - j2 * (j1 * j1 + j3 * j3) / (2.0 * d1 * d3),
                -0.5 * j1 * j3 * (1.0 / d1 + 1.0 / d3),
                j1 * j2 * j3 / (2.0 * d1 * d3),
            ],
        ),
        Region::III => (
            [
                va + j1 * j1 / d1,
                vb - j1 * j1 / d1 + j2 * j2 / d2,
                vc - j2 * j2 / d2,
            ],
            [
                j3 + j3 * (j1 * j1 + j2 * j2) / (2.0 * d1 * d2),
                0.5 * j1 * j2 * (1.0 / d1 - 1.0 / d2),
                -j1 * j2 * j3 / (2.0 * d1 * d2),
            ],
        ),
    };
    EffectiveParams {
        region,
        phi: params.phase(t),
        onsite,
        couplings,
        deltas: [d1, d2, d3],
        bare: [j1, j2, j3],
    }
}

fn check_three_band(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.q != 3 {
        return Err(Error::InvalidParams(format!(
            "effective Hamiltonians need three sublattices, got q = {}",
            params.q
        )));
    }
    Ok(())
}

/// Closed-form couplings of `region` at time `t`.
pub fn effective_params(params: &ModelParams, t: f64, region: Region) -> Result<EffectiveParams> {
    check_three_band(params)?;
    let phi = params.phase(t);
    if region_of(phi) != region {
        return Err(Error::RegionMismatch {
            phi: phi.rem_euclid(2.0 * PI),
            region: region.name().into(),
        });
    }
    let eff = closed_form(params, t, region);
    let floor = GAP_FLOOR_FRACTION * params.v0.abs();
    let relevant = match region {
        Region::I => [eff.deltas[1], eff.deltas[2]],
        Region::II => [eff.deltas[0], eff.deltas[2]],
        Region::III => [eff.deltas[0], eff.deltas[1]],
    };
    if let Some(gap) = relevant.iter().map(|d| d.abs()).find(|d| *d < floor) {
        return Err(Error::SmallDenominator { gap, floor });
    }
    Ok(eff)
}

impl EffectiveParams {
    /// Translation-invariant terms of the effective Hamiltonian.
    pub fn cell_terms(&self) -> CellTerms {
        let [j1, j2, j3] = self.couplings;
        let mut terms = CellTerms {
            onsite: self.onsite.to_vec(),
            hoppings: Vec::with_capacity(5),
        };
        match self.region {
            Region::I => {
                terms.hop(A, B, 0, j1);
                // A_l with B_{l-1}
                terms.hop(A, B, -1, j2);
                terms.hop(A, A, 1, -j3);
                terms.hop(B, B, 1, -j3);
                terms.hop(C, C, 1, 2.0 * j3);
            }
            Region::II => {
                terms.hop(B, C, 0, j1);
                // C_l with B_{l+1}
                terms.hop(C, B, 1, j2);
                terms.hop(A, A, 1, 2.0 * j3);
                terms.hop(B, B, 1, -j3);
                terms.hop(C, C, 1, -j3);
            }
            Region::III => {
                // C_l with A_{l+1}
                terms.hop(C, A, 1, j1);
                terms.hop(A, C, 0, j2);
                terms.hop(A, A, 1, -j3);
                terms.hop(B, B, 1, 2.0 * j3);
                terms.hop(C, C, 1, -j3);
            }
        }
        terms
    }
}

/// Piecewise effective generator: at every instant the Hamiltonian of the
/// region containing `phi(t)`. It jumps at region boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCycle {
    pub params: ModelParams,
}

impl EffectiveCycle {
    pub fn new(params: &ModelParams) -> Result<Self> {
        check_three_band(params)?;
        Ok(Self {
            params: params.clone(),
        })
    }
}

impl LatticeGenerator for EffectiveCycle {
    fn cell_size(&self) -> usize {
        3
    }

    fn cells(&self) -> usize {
        self.params.cells
    }

    fn cell_terms(&self, t: f64) -> CellTerms {
        let region = region_of(self.params.phase(t));
        closed_form(&self.params, t, region).cell_terms()
    }
}

/// Effective Hamiltonian of the whole ring at time `t`.
pub fn effective_cycle_hamiltonian(params: &ModelParams, t: f64) -> Result<HermitianMatrix> {
    Ok(EffectiveCycle::new(params)?.real_space(t))
}

/// Full and effective runs from the same initial state with the same step.
#[derive(Debug, Clone)]
pub struct EffectiveComparison {
    pub full: PumpTrajectory,
    pub effective: PumpTrajectory,
    /// `max_t |Delta P_full - Delta P_eff|` in cells.
    pub max_delta_p_diff: f64,
    /// `max_t |D_W,full - D_W,eff|` in sites.
    pub max_d_w_diff: f64,
    pub final_fidelity: f64,
}

impl EffectiveComparison {
    /// `t/T  dP_full  dP_eff  D_W_full  D_W_eff`.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# Delta P in cells, D_W in sites")?;
        writeln!(out, "# t/T\tdelta_p_full\tdelta_p_eff\td_w_full\td_w_eff")?;
        let period = self.full.period();
        for (a, b) in self.full.samples.iter().zip(&self.effective.samples) {
            writeln!(
                out,
                "{:.6}\t{:.12}\t{:.12}\t{:.12}\t{:.12}",
                a.t / period,
                a.delta_p,
                b.delta_p,
                a.d_w,
                b.d_w
            )?;
        }
        Ok(())
    }
}

/// Runs `n_cycles` plain pumping cycles under the full and the effective
/// Hamiltonian.
pub fn compare_effective(
    params: &ModelParams,
    initial: &InitialState,
    n_cycles: usize,
    opts: &EvolveOptions,
) -> Result<EffectiveComparison> {
    let cycle = EffectiveCycle::new(params)?;
    if !(params.omega > 0.0) || n_cycles == 0 {
        return Err(Error::Protocol(
            "comparison needs omega > 0 and at least one cycle".into(),
        ));
    }
    let period = params.period();
    let limit = dt_max(params, period, 240).min(dt_max(&cycle, period, 240));
    let mut opts = opts.clone();
    opts.dt = Some(opts.dt.map_or(limit, |dt| dt.min(limit)));
    let full = run_generator(
        params,
        params,
        Protocol::Traditional,
        n_cycles,
        initial,
        &opts,
    )?;
    let effective = run_generator(
        &cycle,
        params,
        Protocol::Traditional,
        n_cycles,
        initial,
        &opts,
    )?;
    let mut max_delta_p_diff = 0.0f64;
    let mut max_d_w_diff = 0.0f64;
    for (a, b) in full.samples.iter().zip(&effective.samples) {
        max_delta_p_diff = max_delta_p_diff.max((a.delta_p - b.delta_p).abs());
        max_d_w_diff = max_d_w_diff.max((a.d_w - b.d_w).abs());
    }
    let final_fidelity = crate::dynamics::fidelity(full.final_state(), effective.final_state());
    Ok(EffectiveComparison {
        full,
        effective,
        max_delta_p_diff,
        max_d_w_diff,
        final_fidelity,
    })
}

/// One row per time: `t  phi  region  V_A V_B V_C  J1 J2 J3` (effective).
pub fn write_effective_table<W: Write>(
    params: &ModelParams,
    times: &[f64],
    out: &mut W,
) -> Result<()> {
    check_three_band(params)?;
    writeln!(out, "# energies in units of the tunneling scale")?;
    writeln!(out, "# t\tphi\tregion\tV_A\tV_B\tV_C\tJ_1\tJ_2\tJ_3")?;
    for &t in times {
        let phi = params.phase(t);
        let e = closed_form(params, t, region_of(phi));
        write!(
            out,
            "{t:.6}\t{:.9}\t{}",
            phi.rem_euclid(2.0 * PI),
            e.region.name()
        )?;
        for x in e.onsite.iter().chain(&e.couplings) {
            write!(out, "\t{x:.12e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
