//! Time evolution of a particle on the ring and the three pumping protocols:
//! the plain pump, the echo that reverses the Hamiltonian every other
//! cycle, and the pump with sine-modulated tunneling. Also extracts the
//! Berry and dynamical phases a band picks up over one cycle.
//!
//! Stepping uses the exponential midpoint rule `psi <- exp(-i H(t + dt/2) dt)
//! psi`. Every generator in the crate is invariant under translation by one
//! cell, so the default integrator applies the exponential block by block in
//! quasi-momentum; the dense integrator exponentiates the full ring matrix.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::{self, BlochTransform};
use crate::linalg::{inner, C64};
use crate::model::{site_of, CellTerms, LatticeGenerator, ModelParams, Sign, TunnelingMode};
use crate::observables::{self, measure, ObservableSample};
use crate::spectrum::{bands_at, BandSolution};
use crate::wannier::WannierBasis;

/// Safety factor in `dt_max = DT_FACTOR / max_t ||H(t)||`.
pub const DT_FACTOR: f64 = 0.05;

/// Smallest overlap modulus between neighbouring time slices accepted by
/// [`accumulate_phases`].
pub const GAUGE_OVERLAP_FLOOR: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// `H(t)` for every cycle.
    Traditional,
    /// `H(t)` in even cycles and `-H(t)` in odd ones.
    Echo,
    /// `H(t)` with sine-modulated tunneling.
    Suppressed,
}

impl Protocol {
    /// Sign of the generator at `t` (for the echo, cycle `floor(t / T)`).
    pub fn sign_at(self, t: f64, period: f64) -> Sign {
        match self {
            Protocol::Echo if (t / period).floor() as i64 % 2 != 0 => Sign::Minus,
            _ => Sign::Plus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Traditional => "traditional",
            Protocol::Echo => "echo",
            Protocol::Suppressed => "suppressed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Exponential of each `q x q` Bloch block.
    Bloch,
    /// Exponential of the `N x N` ring matrix.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Requested step; `None` uses `dt_max`. The step actually taken is the
    /// largest one not above the request that fits a whole number of times
    /// into a sampling interval.
    pub dt: Option<f64>,
    pub samples_per_period: usize,
    pub integrator: Integrator,
    /// Largest density tolerated on the two sites joined by the ring seam.
    pub seam_threshold: f64,
    pub norm_tolerance: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: None,
            samples_per_period: 400,
            integrator: Integrator::Bloch,
            seam_threshold: 1e-3,
            norm_tolerance: 1e-8,
        }
    }
}

/// `DT_FACTOR / max ||H(t)||` over `samples` times in `[0, period)`.
pub fn dt_max<G: LatticeGenerator + ?Sized>(generator: &G, period: f64, samples: usize) -> f64 {
    let ks = kspace::k_grid(generator.cell_size(), generator.cells());
    let mut norm = 0.0f64;
    for i in 0..samples {
        let terms = generator.cell_terms(period * i as f64 / samples as f64);
        for &k in &ks {
            norm = norm.max(terms.bloch(k).spectral_norm());
        }
    }
    DT_FACTOR / norm
}

/// Generator that alternates `H(t)` and `-H(t)` from one cycle to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSchedule {
    pub base: ModelParams,
}

impl LatticeGenerator for EchoSchedule {
    fn cell_size(&self) -> usize {
        self.base.q
    }

    fn cells(&self) -> usize {
        self.base.cells
    }

    fn cell_terms(&self, t: f64) -> CellTerms {
        let terms = self.base.cell_terms(t);
        match self.sign_at(t) {
            Sign::Plus => terms,
            Sign::Minus => terms.scaled(-1.0),
        }
    }

    fn sign_at(&self, t: f64) -> Sign {
        Protocol::Echo.sign_at(t, self.base.period())
    }
}

/// Sampled states of one run.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub dt: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
}

fn check_sample(state: &DVector<C64>, t: f64, opts: &EvolveOptions) -> Result<()> {
    let drift = (state.norm() - 1.0).abs();
    if drift > opts.norm_tolerance {
        return Err(Error::NormDrift { drift, t });
    }
    let n = state.len();
    let seam = state[0].norm_sqr() + state[n - 1].norm_sqr();
    if seam > opts.seam_threshold {
        return Err(Error::SeamContact { density: seam, t });
    }
    Ok(())
}

/// Evolves `initial` from `t_start` by `steps` steps of `dt`, recording the
/// state before the first step and after every `stride` steps.
pub fn evolve_steps<G: LatticeGenerator + ?Sized>(
    generator: &G,
    initial: &DVector<C64>,
    t_start: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let n = generator.sites();
    if initial.len() != n {
        return Err(Error::Dimension(format!(
            "state has {} sites, ring has {n}",
            initial.len()
        )));
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > opts.norm_tolerance {
        return Err(Error::Unnormalized(norm));
    }
    let stride = stride.max(1);
    let mut times = vec![t_start];
    let mut states = vec![initial.clone()];
    check_sample(initial, t_start, opts)?;

    let q = generator.cell_size();
    let transform = BlochTransform::new(q, generator.cells());
    let mut psi = initial.clone();
    let mut coeffs = transform.to_bloch(initial);
    for step in 0..steps {
        let t_mid = t_start + (step as f64 + 0.5) * dt;
        let terms = generator.cell_terms(t_mid);
        match opts.integrator {
            Integrator::Bloch => {
                for (c, &k) in coeffs.iter_mut().zip(transform.ks()) {
                    terms.bloch(k).apply_exp(dt, c);
                }
            }
            Integrator::Dense => terms.real_space(generator.cells()).apply_exp(dt, &mut psi),
        }
        if (step + 1) % stride == 0 || step + 1 == steps {
            let t = t_start + (step + 1) as f64 * dt;
            let state = match opts.integrator {
                Integrator::Bloch => transform.to_sites(&coeffs),
                Integrator::Dense => psi.clone(),
            };
            check_sample(&state, t, opts)?;
            times.push(t);
            states.push(state);
        }
    }
    Ok(Evolution {
        dt,
        steps,
        times,
        states,
    })
}

/// Evolves under the pump model from `t_start` to `t_end` with steps no
/// longer than `dt`, recording about `samples_per_period` states per cycle.
pub fn evolve(
    params: &ModelParams,
    initial: &DVector<C64>,
    t_start: f64,
    t_end: f64,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    params.validate()?;
    if !(t_end >= t_start) || !(dt > 0.0) {
        return Err(Error::Protocol(format!(
            "need t_end >= t_start and dt > 0 (got {t_start}, {t_end}, {dt})"
        )));
    }
    let reference = if params.omega > 0.0 {
        params.period()
    } else {
        1.0
    };
    let limit = dt_max(params, reference, 240);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt, dt_max: limit });
    }
    let span = t_end - t_start;
    let steps = (span / dt).ceil().max(1.0) as usize;
    let stride = if params.omega > 0.0 {
        let per_period = params.period() / (span / steps as f64);
        (per_period / opts.samples_per_period as f64)
            .round()
            .max(1.0) as usize
    } else {
        (steps / opts.samples_per_period.max(1)).max(1)
    };
    evolve_steps(
        params,
        initial,
        t_start,
        span / steps as f64,
        steps,
        stride,
        opts,
    )
}

/// Initial wave packet of a pumping run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Single occupied site (1-based).
    Site(usize),
    /// Maximally localized Wannier state of `band` (0-based) in `cell`
    /// (1-based) at `t = 0`.
    Mlws {
        band: usize,
        cell: usize,
    },
    Custom(DVector<C64>),
}

/// Cell `ceil(L/2) + 1`, away from the ring seam.
pub fn default_cell(cells: usize) -> usize {
    cells.div_ceil(2) + 1
}

impl InitialState {
    /// The site with the largest on-site energy at `t = 0` in the default
    /// cell, which overlaps almost entirely with the top band for strong
    /// modulation.
    pub fn default_for(params: &ModelParams) -> Self {
        let terms = params.cell_terms(0.0);
        let a = terms
            .onsite
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map_or(0, |(i, _)| i);
        InitialState::Site(site_of(default_cell(params.cells), a + 1, params.q))
    }
}

/// States and observables of a pumping run.
#[derive(Debug, Clone)]
pub struct PumpTrajectory {
    pub protocol: Protocol,
    pub params: ModelParams,
    pub dt: f64,
    pub steps: usize,
    /// Band followed by the run (0-based, labelled by `+H`).
    pub band: usize,
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
    /// Density, `<X>`, `Delta P` (cells), `D_W` (sites) and projections on
    /// the `t = 0` maximally localized states of `band`, labelled
    /// `mlws_<cell>`.
    pub samples: Vec<ObservableSample>,
    /// Instantaneous band weights labelled by the bands of `+H`.
    pub populations: Vec<Vec<f64>>,
    pub signs: Vec<Sign>,
}

impl PumpTrajectory {
    pub fn period(&self) -> f64 {
        self.params.period()
    }

    pub fn delta_p(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.delta_p).collect()
    }

    pub fn d_w(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d_w).collect()
    }

    pub fn max_d_w(&self) -> f64 {
        self.d_w().into_iter().fold(0.0, f64::max)
    }

    pub fn final_sample(&self) -> &ObservableSample {
        self.samples
            .last()
            .expect("a trajectory holds at least the initial sample")
    }

    pub fn final_state(&self) -> &DVector<C64> {
        self.states
            .last()
            .expect("a trajectory holds at least the initial state")
    }

    /// Index of the sample closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map_or(0, |(i, _)| i)
    }

    pub fn sample_at(&self, t: f64) -> &ObservableSample {
        &self.samples[self.index_at(t)]
    }

    /// Lowest population of the followed band over the run.
    pub fn min_band_population(&self) -> f64 {
        self.populations
            .iter()
            .map(|p| p[self.band])
            .fold(f64::INFINITY, f64::min)
    }

    /// `t/T  t  sign  <X>  DeltaP  D_W  pop_1..pop_q`.
    pub fn write_observables_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        let q = self.params.q;
        writeln!(
            out,
            "# protocol {}; Delta P in cells, <X> and D_W in sites",
            self.protocol.name()
        )?;
        write!(out, "# t/T\tt\tsign\tmean_x\tdelta_p\td_w")?;
        for m in 1..=q {
            write!(out, "\tpop_{m}")?;
        }
        writeln!(out)?;
        let period = self.period();
        for ((s, pops), sign) in self.samples.iter().zip(&self.populations).zip(&self.signs) {
            write!(
                out,
                "{:.6}\t{:.6}\t{}\t{:.12}\t{:.12}\t{:.12}",
                s.t / period,
                s.t,
                match sign {
                    Sign::Plus => "+1",
                    Sign::Minus => "-1",
                },
                s.mean_x,
                s.delta_p,
                s.d_w
            )?;
            for p in pops {
                write!(out, "\t{p:.12}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Density heat map, one row per sample and one column per site.
    pub fn write_density_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# rows: samples (see density_times.tsv); columns: sites 1..{}",
            self.params.sites()
        )?;
        for s in &self.samples {
            let row: Vec<String> = s.density.iter().map(|p| format!("{p:.9e}")).collect();
            writeln!(out, "{}", row.join("\t"))?;
        }
        Ok(())
    }

    /// Row axis of the heat map.
    pub fn write_time_axis<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# t/T")?;
        for &t in &self.times {
            writeln!(out, "{:.6}", t / self.period())?;
        }
        Ok(())
    }

    /// Column axis of the heat map.
    pub fn write_site_axis<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "# site")?;
        for j in 1..=self.params.sites() {
            writeln!(out, "{j}")?;
        }
        Ok(())
    }
}

fn resolve_initial(
    params: &ModelParams,
    initial: &InitialState,
    basis: &WannierBasis,
) -> Result<DVector<C64>> {
    match initial {
        InitialState::Site(j) => observables::site_state(params.sites(), *j),
        InitialState::Mlws { band, cell } => basis
            .get(*band, *cell)
            .map(|w| w.amplitudes.clone())
            .ok_or_else(|| {
                Error::Protocol(format!("no Wannier state for band {band}, cell {cell}"))
            }),
        InitialState::Custom(v) => Ok(v.clone()),
    }
}

/// Runs `n_cycles` pumping cycles of `protocol` from `initial`.
pub fn run_protocol(
    params: &ModelParams,
    protocol: Protocol,
    n_cycles: usize,
    initial: &InitialState,
    opts: &EvolveOptions,
) -> Result<PumpTrajectory> {
    let mut params = params.clone();
    params.validate()?;
    if !(params.omega > 0.0) {
        return Err(Error::Protocol("pumping needs omega > 0".into()));
    }
    if n_cycles == 0 {
        return Err(Error::Protocol("at least one cycle is required".into()));
    }
    match protocol {
        Protocol::Echo => {
            if !n_cycles.is_multiple_of(2) {
                return Err(Error::Protocol(format!(
                    "echo needs an even number of cycles, got {n_cycles}"
                )));
            }
            if params.sign == Sign::Minus {
                return Err(Error::Protocol(
                    "echo sets the sign of the Hamiltonian itself".into(),
                ));
            }
        }
        Protocol::Suppressed => params.tunneling = TunnelingMode::SineModulated,
        Protocol::Traditional => {}
    }
    let echo = EchoSchedule {
        base: params.clone(),
    };
    let generator: &dyn LatticeGenerator = match protocol {
        Protocol::Echo => &echo,
        _ => &params,
    };
    run_generator(generator, &params, protocol, n_cycles, initial, opts)
}

/// Runs an arbitrary generator sharing the period and lattice of `params`.
/// Projections and band populations refer to the bands of `params`.
pub fn run_generator(
    generator: &dyn LatticeGenerator,
    params: &ModelParams,
    protocol: Protocol,
    n_cycles: usize,
    initial: &InitialState,
    opts: &EvolveOptions,
) -> Result<PumpTrajectory> {
    let period = params.period();
    let q = params.q;
    let slice0 = bands_at(params, 0.0);
    let basis = WannierBasis::maximally_localized(&slice0)?;
    let psi0 = resolve_initial(params, initial, &basis)?;
    let band = match initial {
        InitialState::Mlws { band, .. } => *band,
        _ => {
            let pops = observables::band_population(&psi0, &slice0);
            (0..q)
                .max_by(|&a, &b| pops[a].total_cmp(&pops[b]))
                .unwrap_or(0)
        }
    };

    let limit = dt_max(generator, period, 240);
    let requested = match opts.dt {
        Some(dt) if dt > limit * (1.0 + 1e-12) => {
            return Err(Error::StepTooLarge { dt, dt_max: limit })
        }
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::Protocol(format!("dt must be positive, got {dt}"))),
        None => limit,
    };
    let per_sample = (period / opts.samples_per_period as f64 / requested).ceil() as usize;
    let steps_per_period = per_sample * opts.samples_per_period;
    let dt = period / steps_per_period as f64;
    let evo = evolve_steps(
        generator,
        &psi0,
        0.0,
        dt,
        steps_per_period * n_cycles,
        per_sample,
        opts,
    )?;

    let refs: Vec<(String, DVector<C64>)> = basis
        .states
        .iter()
        .filter(|w| w.band == band)
        .map(|w| (format!("mlws_{}", w.cell), w.amplitudes.clone()))
        .collect();
    let ref_views: Vec<(&str, &DVector<C64>)> = refs.iter().map(|(l, v)| (l.as_str(), v)).collect();
    let x0 = observables::moments(&observables::density(&psi0)).0;
    let transform = BlochTransform::new(q, params.cells);

    let mut samples = Vec::with_capacity(evo.times.len());
    let mut populations = Vec::with_capacity(evo.times.len());
    let mut signs = Vec::with_capacity(evo.times.len());
    for (&t, psi) in evo.times.iter().zip(&evo.states) {
        samples.push(measure(psi, &ref_views)?.with_origin(t, x0, q));
        let coeffs = transform.to_bloch(psi);
        populations.push(observables::band_population_bloch(
            &coeffs,
            &bands_at(params, t),
        ));
        signs.push(protocol.sign_at(t, period));
    }
    Ok(PumpTrajectory {
        protocol,
        params: params.clone(),
        dt: evo.dt,
        steps: evo.steps,
        band,
        times: evo.times,
        states: evo.states,
        samples,
        populations,
        signs,
    })
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    inner(a, b).norm_sqr()
}

/// Phases picked up by band `m` at each grid momentum over one cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub band: usize,
    pub chern: i64,
    pub ks: Vec<f64>,
    /// Berry phase in `(-pi, pi]`, made continuous in `k`.
    pub gamma_b: Vec<f64>,
    /// `-integral E_m(k, t) dt`.
    pub gamma_d: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x_b: Vec<f64>,
    pub x_d: Vec<f64>,
    /// `X_b(k) - q C_m`.
    pub xi: Vec<f64>,
}

impl PhaseRecord {
    /// `k  gamma_b  gamma_d  gamma  X_b  X_d  xi`.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "# band {} Chern {}; phases in rad, shifts in sites",
            self.band + 1,
            self.chern
        )?;
        writeln!(out, "# k\tgamma_b\tgamma_d\tgamma\tX_b\tX_d\txi")?;
        for i in 0..self.ks.len() {
            writeln!(
                out,
                "{:.9}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}\t{:.12e}",
                self.ks[i],
                self.gamma_b[i],
                self.gamma_d[i],
                self.gamma[i],
                self.x_b[i],
                self.x_d[i],
                self.xi[i]
            )?;
        }
        Ok(())
    }
}

/// Berry and dynamical phases of band `m` over the closed time loop of
/// `bands`, and the shifts `X_b = -d gamma_b / dk`, `X_d = -d gamma_d / dk`.
pub fn accumulate_phases(bands: &BandSolution, m: usize) -> Result<PhaseRecord> {
    let chern = bands.chern_number(m)?;
    let nt = {
        let n = bands.slices.len();
        let closed =
            (bands.slices[n - 1].t - bands.slices[0].t - bands.period).abs() < 1e-9 * bands.period;
        if closed {
            n - 1
        } else {
            n
        }
    };
    let dt = bands.period / nt as f64;
    let q = bands.q;
    let mut raw_b = Vec::with_capacity(bands.ks.len());
    let mut gamma_d = Vec::with_capacity(bands.ks.len());
    for ik in 0..bands.ks.len() {
        let mut product = C64::new(1.0, 0.0);
        for it in 0..nt {
            let a = bands.slices[it].state(m, ik);
            let b = bands.slices[(it + 1) % nt].state(m, ik);
            let z = inner(&a, &b);
            if z.norm() < GAUGE_OVERLAP_FLOOR {
                return Err(Error::GaugeDiscontinuity {
                    k_index: ik,
                    t_index: it,
                    overlap: z.norm(),
                });
            }
            product *= z / z.norm();
        }
        raw_b.push(-product.arg());
        // periodic trapezoid rule
        let integral: f64 = (0..nt)
            .map(|it| bands.slices[it].energy(m, ik))
            .sum::<f64>()
            * dt;
        gamma_d.push(-integral);
    }
    let gamma_b = kspace::unwrap_phase(&raw_b)?;
    let gamma_d_phase = kspace::continuous_phase(gamma_d.clone())?;
    let x_b: Vec<f64> = kspace::k_derivative(&gamma_b, q)
        .iter()
        .map(|d| -d)
        .collect();
    let x_d: Vec<f64> = kspace::k_derivative(&gamma_d_phase, q)
        .iter()
        .map(|d| -d)
        .collect();
    let xi = x_b.iter().map(|x| x - (q as i64 * chern) as f64).collect();
    let gamma = gamma_b
        .values
        .iter()
        .zip(&gamma_d)
        .map(|(a, b)| a + b)
        .collect();
    Ok(PhaseRecord {
        band: m,
        chern,
        ks: bands.ks.clone(),
        gamma_b: gamma_b.values,
        gamma_d,
        gamma,
        x_b,
        x_d,
        xi,
    })
}

/// Running dynamical phase `-integral_0^t s(t') E_m(k, t') dt'` of band `m`
/// (labelled by `+H`) at the momenta `k_indices`, where `s` is the sign the
/// protocol gives the Hamiltonian. `t_grid` must be increasing; each
/// interval uses the trapezoid rule with the sign at its midpoint.
pub fn dynamical_phase_trace(
    params: &ModelParams,
    protocol: Protocol,
    m: usize,
    k_indices: &[usize],
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    if m >= params.q {
        return Err(Error::Dimension(format!(
            "band {m} out of range 0..{}",
            params.q
        )));
    }
    if let Some(&bad) = k_indices.iter().find(|&&ik| ik >= params.cells) {
        return Err(Error::Dimension(format!(
            "k index {bad} out of range 0..{}",
            params.cells
        )));
    }
    let ks = kspace::k_grid(params.q, params.cells);
    let base = params.clone().with_sign(Sign::Plus);
    let energies: Vec<Vec<f64>> = t_grid
        .iter()
        .map(|&t| {
            let terms = base.cell_terms(t);
            k_indices
                .iter()
                .map(|&ik| terms.bloch(ks[ik]).eigenvalues()[m])
                .collect()
        })
        .collect();
    let period = params.period();
    Ok((0..k_indices.len())
        .map(|j| {
            let mut acc = 0.0;
            let mut trace = Vec::with_capacity(t_grid.len());
            for i in 0..t_grid.len() {
                if i > 0 {
                    let mid = 0.5 * (t_grid[i] + t_grid[i - 1]);
                    let s = protocol.sign_at(mid, period).factor();
                    acc -= s
                        * 0.5
                        * (energies[i][j] + energies[i - 1][j])
                        * (t_grid[i] - t_grid[i - 1]);
                }
                trace.push(acc);
            }
            trace
        })
        .collect())
}
