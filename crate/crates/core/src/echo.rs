//! The Loschmidt-echo protocol and its observables.
//!
//! A state is evolved for `t/2` under `H₊ = H₀ + Σ` and then for `t/2` under
//! `H₋ = −H₀ + Σ`, so `U_LE(t) = exp(−iH₋t/2) exp(−iH₊t/2)` and every series is
//! reported against the total time `t`.
//!
//! * `M₁,₁(t) = 2⟨ψ(t)|S^z_1|ψ(t)⟩` averaged over the spin-1-up ensemble,
//!   either exactly (every basis state of 𝒜) or through random-phase states.
//! * `M_MB(t) = mean_{β∈𝒜} |⟨β|U_LE(t)|β⟩|²`. The return amplitude is the
//!   overlap `⟨e^{+iH₋t/2}β | e^{−iH₊t/2}β⟩` of two legs that are both stepped
//!   incrementally along the grid.
//! * `M_X = M₁,₁ − M_MB`.
//!
//! For `M₁,₁` the forward leg is stepped incrementally while the backward leg
//! is rerun from each grid point, since `U₋(t/2)` does not factor through
//! earlier grid times.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{binomial, check_sites, enumerate_sector, sz_of_bits, BasisState, SubsetA};
use crate::error::{Error, Result};
use crate::hamiltonians::{dot, BoundOperator, ModelSpec, Space, SpinOperator, StateVector};
use crate::numfmt::{parse_field, sci12};
use crate::propagator::{evolve_amplitudes, KrylovStepper, PropagationConfig};

/// Largest chain for which `M₁,₁` is traced over every state of 𝒜.
pub const MAX_EXACT_TRACE_SITES: usize = 12;
/// Largest chain for which `M_MB` visits every state of 𝒜.
pub const MAX_EXACT_MMB_SITES: usize = 14;
/// Default number of sampled basis states for `M_MB`.
pub const DEFAULT_MMB_SAMPLES: usize = 1024;

// Forward states gathered before their backward legs run in parallel.
const BACKWARD_BATCH: usize = 16;

/// Model, propagation settings and time grid of one echo experiment.
#[derive(Clone, Debug)]
pub struct EchoProtocol {
    pub spec: ModelSpec,
    pub cfg: PropagationConfig,
    t_grid: Vec<f64>,
}

impl EchoProtocol {
    pub fn new(spec: ModelSpec, cfg: PropagationConfig, t_grid: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        if t_grid.is_empty() {
            return Err(Error::Argument("empty time grid".into()));
        }
        if t_grid[0] != 0.0 {
            return Err(Error::Argument(format!("time grid starts at {}, not 0", t_grid[0])));
        }
        if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("time grid must be finite and strictly increasing".into()));
        }
        Ok(Self { spec, cfg, t_grid })
    }

    /// `n_points` equally spaced times from 0 to `t_max`.
    pub fn uniform(
        spec: ModelSpec,
        cfg: PropagationConfig,
        t_max: f64,
        n_points: usize,
    ) -> Result<Self> {
        Self::new(spec, cfg, uniform_grid(t_max, n_points)?)
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    /// `H₀ + Σ`.
    pub fn forward_generator(&self) -> SpinOperator {
        SpinOperator::h0(&self.spec).combine(1.0, &SpinOperator::sigma(&self.spec), 1.0)
    }

    /// `−H₀ + Σ`.
    pub fn backward_generator(&self) -> SpinOperator {
        SpinOperator::h0(&self.spec).combine(-1.0, &SpinOperator::sigma(&self.spec), 1.0)
    }

    fn legs(&self, space: Space) -> Result<Legs> {
        Ok(Legs {
            plus: BoundOperator::new(&self.forward_generator(), space.clone())?,
            minus: BoundOperator::new(&self.backward_generator(), space)?,
        })
    }

    fn half_times(&self) -> Vec<f64> {
        self.t_grid.iter().map(|t| 0.5 * t).collect()
    }
}

pub fn uniform_grid(t_max: f64, n_points: usize) -> Result<Vec<f64>> {
    if n_points == 0 {
        return Err(Error::Argument("empty time grid".into()));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::Argument(format!("t_max = {t_max}")));
    }
    if n_points == 1 {
        return Ok(vec![0.0]);
    }
    if t_max == 0.0 {
        return Err(Error::Argument("t_max = 0 with more than one grid point".into()));
    }
    let dt = t_max / (n_points - 1) as f64;
    Ok((0..n_points).map(|k| k as f64 * dt).collect())
}

struct Legs {
    plus: BoundOperator,
    minus: BoundOperator,
}

/// Time series of the three echo observables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EchoSeries {
    pub t: Vec<f64>,
    pub m11: Option<Vec<f64>>,
    pub m11_stderr: Option<Vec<f64>>,
    pub m_mb: Option<Vec<f64>>,
    pub m_mb_stderr: Option<Vec<f64>>,
    pub m_x: Option<Vec<f64>>,
    pub m_x_stderr: Option<Vec<f64>>,
    pub meta: BTreeMap<String, String>,
}

pub const ECHO_CSV_HEADER: &str = "t,m11,m11_stderr,m_mb,m_mb_stderr,m_x,m_x_stderr";

impl EchoSeries {
    /// Joins an `M₁,₁` series and an `M_MB` series computed on the same grid.
    pub fn merge(a: &EchoSeries, b: &EchoSeries) -> Result<EchoSeries> {
        if a.t != b.t {
            return Err(Error::Argument("series live on different time grids".into()));
        }
        let pick = |x: &Option<Vec<f64>>, y: &Option<Vec<f64>>| x.clone().or_else(|| y.clone());
        let mut meta = a.meta.clone();
        meta.extend(b.meta.clone());
        Ok(EchoSeries {
            t: a.t.clone(),
            m11: pick(&a.m11, &b.m11),
            m11_stderr: pick(&a.m11_stderr, &b.m11_stderr),
            m_mb: pick(&a.m_mb, &b.m_mb),
            m_mb_stderr: pick(&a.m_mb_stderr, &b.m_mb_stderr),
            m_x: pick(&a.m_x, &b.m_x),
            m_x_stderr: pick(&a.m_x_stderr, &b.m_x_stderr),
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(128 * (self.t.len() + 1));
        out.push_str(ECHO_CSV_HEADER);
        out.push('\n');
        let col = |c: &Option<Vec<f64>>, k: usize| c.as_ref().map_or(f64::NAN, |v| v[k]);
        for k in 0..self.t.len() {
            let fields = [
                self.t[k],
                col(&self.m11, k),
                col(&self.m11_stderr, k),
                col(&self.m_mb, k),
                col(&self.m_mb_stderr, k),
                col(&self.m_x, k),
                col(&self.m_x_stderr, k),
            ];
            let line: Vec<String> = fields.iter().map(|&x| sci12(x)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Parses the CSV layout written by [`EchoSeries::to_csv`]. Columns that
    /// are entirely `nan` come back as `None`.
    pub fn from_csv(text: &str) -> Result<EchoSeries> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Argument("empty CSV".into()))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let expected: Vec<&str> = ECHO_CSV_HEADER.split(',').collect();
        if names != expected {
            return Err(Error::Argument(format!("unexpected header: {header}")));
        }
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); expected.len()];
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected.len() {
                return Err(Error::Argument(format!("row {} has {} fields", row + 1, fields.len())));
            }
            for (c, f) in fields.iter().enumerate() {
                let v = parse_field(f)
                    .ok_or_else(|| Error::Argument(format!("row {}: bad number {f:?}", row + 1)))?;
                cols[c].push(v);
            }
        }
        let opt = |v: &Vec<f64>| (!v.iter().all(|x| x.is_nan()) || v.is_empty()).then(|| v.clone());
        Ok(EchoSeries {
            t: cols[0].clone(),
            m11: opt(&cols[1]),
            m11_stderr: opt(&cols[2]),
            m_mb: opt(&cols[3]),
            m_mb_stderr: opt(&cols[4]),
            m_x: opt(&cols[5]),
            m_x_stderr: opt(&cols[6]),
            meta: BTreeMap::new(),
        })
    }
}

/// Equal-modulus superposition over 𝒜 with independent uniform phases.
#[derive(Clone, Debug)]
pub struct RandomPhaseState {
    pub seed: u64,
    pub state: StateVector,
}

impl RandomPhaseState {
    /// Phases are drawn in ascending bit-pattern order of the members of 𝒜.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        check_sites(n)?;
        let space = Space::full(n)?;
        let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
        let modulus = (0.5f64).powf((n - 1) as f64 / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in SubsetA.states(n)? {
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            amps[s.bits() as usize] = C64::from_polar(modulus, phi);
        }
        Ok(Self {
            seed,
            state: StateVector::new(space, amps)?,
        })
    }
}

/// `U_LE(t)ψ = exp(−iH₋t/2) exp(−iH₊t/2)ψ`, within `ψ`'s own space.
pub fn u_le_apply(protocol: &EchoProtocol, psi: &StateVector, t: f64) -> Result<StateVector> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Argument(format!("echo time {t} must be >= 0")));
    }
    if psi.space().n() != protocol.spec.n {
        return Err(Error::Shape(format!(
            "state has {} sites, model has {}",
            psi.space().n(),
            protocol.spec.n
        )));
    }
    let legs = protocol.legs(psi.space().clone())?;
    let half = evolve_amplitudes(&legs.plus, psi.amplitudes(), 0.5 * t, &protocol.cfg)?;
    let out = evolve_amplitudes(&legs.minus, &half, 0.5 * t, &protocol.cfg)?;
    StateVector::new(psi.space().clone(), out)
}

fn sz1(space: &Space, amps: &[C64]) -> f64 {
    amps.iter()
        .enumerate()
        .map(|(k, a)| a.norm_sqr() * sz_of_bits(space.bits_at(k), 0))
        .sum()
}

// 2⟨S^z_1⟩ after the echo, for every grid time, starting from `psi`.
fn m11_trajectory(
    legs: &Legs,
    psi: Vec<C64>,
    grid: &[f64],
    half: &[f64],
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    let space = legs.plus.space();
    let horizon = *half.last().expect("non-empty grid");
    let mut fwd = KrylovStepper::new(&legs.plus, psi, 1.0, horizon, *cfg)?;
    let mut out = Vec::with_capacity(grid.len());
    let indices: Vec<usize> = (0..grid.len()).collect();
    for batch in indices.chunks(BACKWARD_BATCH) {
        let mut states = Vec::with_capacity(batch.len());
        for &k in batch {
            states.push((k, fwd.advance_to(half[k])?.to_vec()));
        }
        let values: Vec<Result<f64>> = states
            .into_par_iter()
            .map(|(k, phi)| {
                if grid[k] == 0.0 {
                    return Ok(1.0);
                }
                let chi = evolve_amplitudes(&legs.minus, &phi, half[k], cfg)?;
                Ok(2.0 * sz1(space, &chi))
            })
            .collect();
        for v in values {
            out.push(v?);
        }
    }
    Ok(out)
}

fn mean_and_stderr(rows: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let s = rows.len() as f64;
    let mut mean = vec![0.0; len];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s);
    let stderr = if rows.len() < 2 {
        vec![f64::NAN; len]
    } else {
        (0..len)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (s - 1.0);
                (var / s).sqrt()
            })
            .collect()
    };
    (mean, stderr)
}

/// `M₁,₁` from random-phase states, one realization per seed.
///
/// The standard error is the seed scatter over `√S`; it is `nan` for a
/// single seed.
pub fn m11_random_phase(protocol: &EchoProtocol, seeds: &[u64]) -> Result<EchoSeries> {
    if seeds.is_empty() {
        return Err(Error::Argument("at least one seed is required".into()));
    }
    let n = protocol.spec.n;
    let legs = protocol.legs(Space::full(n)?)?;
    let grid = protocol.t_grid();
    let half = protocol.half_times();
    let rows: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let psi = RandomPhaseState::new(n, seed)?.state.into_amplitudes();
            m11_trajectory(&legs, psi, grid, &half, &protocol.cfg)
        })
        .collect::<Result<_>>()?;
    let (mut mean, stderr) = mean_and_stderr(&rows, grid.len());
    mean[0] = 1.0;

    let mut meta = BTreeMap::new();
    meta.insert("m11_estimator".into(), "random_phase".into());
    meta.insert(
        "m11_seeds".into(),
        seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
    );
    meta.insert("m11_realizations".into(), seeds.len().to_string());
    Ok(EchoSeries {
        t: grid.to_vec(),
        m11: Some(mean),
        m11_stderr: Some(stderr),
        meta,
        ..Default::default()
    })
}

// Per-sector echo generators for every magnetization sector touched by 𝒜.
fn sector_legs(protocol: &EchoProtocol) -> Result<Vec<Option<Arc<Legs>>>> {
    let n = protocol.spec.n;
    (0..=n)
        .map(|n_up| {
            if n_up == 0 {
                Ok(None)
            } else {
                Ok(Some(Arc::new(protocol.legs(Space::sector(n, n_up)?)?)))
            }
        })
        .collect()
}

fn basis_amplitudes(legs: &Legs, state: BasisState) -> Result<Vec<C64>> {
    Ok(StateVector::basis(legs.plus.space().clone(), state)?.into_amplitudes())
}

/// `M₁,₁` traced exactly over all `2^{N−1}` states of 𝒜, each evolved in its
/// own magnetization sector.
pub fn m11_exact_trace(protocol: &EchoProtocol) -> Result<EchoSeries> {
    let n = protocol.spec.n;
    if n > MAX_EXACT_TRACE_SITES {
        return Err(Error::Capacity(format!(
            "exact-trace M11 limited to n <= {MAX_EXACT_TRACE_SITES}, got {n}"
        )));
    }
    let legs = sector_legs(protocol)?;
    let grid = protocol.t_grid();
    let half = protocol.half_times();
    let states = SubsetA.states(n)?;
    let rows: Vec<Vec<f64>> = states
        .par_iter()
        .map(|&b| {
            let l = legs[b.n_up()].as_ref().expect("sector of an A state");
            m11_trajectory(l, basis_amplitudes(l, b)?, grid, &half, &protocol.cfg)
        })
        .collect::<Result<_>>()?;
    let (mut mean, _) = mean_and_stderr(&rows, grid.len());
    mean[0] = 1.0;

    let mut meta = BTreeMap::new();
    meta.insert("m11_estimator".into(), "exact_trace".into());
    Ok(EchoSeries {
        t: grid.to_vec(),
        m11: Some(mean),
        m11_stderr: Some(vec![0.0; grid.len()]),
        meta,
        ..Default::default()
    })
}

/// How `M_MB` chooses its basis states.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmbMode {
    /// Every state of 𝒜.
    Exact,
    /// `k` states of 𝒜 without replacement, allocated across magnetization
    /// sectors in proportion to their share of 𝒜.
    Sampled { k: usize, seed: u64 },
}

// |⟨β|U_LE(t)|β⟩|² along the grid.
fn return_probability(
    legs: &Legs,
    state: BasisState,
    half: &[f64],
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    let horizon = *half.last().expect("non-empty grid");
    let psi = basis_amplitudes(legs, state)?;
    let mut fwd = KrylovStepper::new(&legs.plus, psi.clone(), 1.0, horizon, *cfg)?;
    let mut bwd = KrylovStepper::new(&legs.minus, psi, -1.0, horizon, *cfg)?;
    let mut out = Vec::with_capacity(half.len());
    for &h in half {
        if h == 0.0 {
            out.push(1.0);
            continue;
        }
        let a = fwd.advance_to(h)?;
        let b = bwd.advance_to(h)?;
        out.push(dot(b, a).norm_sqr());
    }
    Ok(out)
}

/// Number of draws per stratum: at least one each, at most the stratum size,
/// otherwise proportional to size with largest-remainder rounding.
pub fn allocate_samples(sizes: &[usize], k: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    let strata = sizes.iter().filter(|&&s| s > 0).count();
    if k > total {
        return Err(Error::Argument(format!("k = {k} exceeds population {total}")));
    }
    if k < strata {
        return Err(Error::Argument(format!(
            "k = {k} is smaller than the {strata} sectors to cover"
        )));
    }
    let ideal: Vec<f64> = sizes.iter().map(|&s| k as f64 * s as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = sizes
        .iter()
        .zip(&ideal)
        .map(|(&s, &x)| if s == 0 { 0 } else { (x.floor() as usize).clamp(1, s) })
        .collect();
    loop {
        let assigned: usize = alloc.iter().sum();
        if assigned == k {
            return Ok(alloc);
        }
        let remainder = |i: usize| ideal[i] - alloc[i] as f64;
        if assigned < k {
            let i = (0..sizes.len())
                .filter(|&i| alloc[i] < sizes[i])
                .max_by(|&a, &b| remainder(a).total_cmp(&remainder(b)).then(b.cmp(&a)))
                .expect("room left while k <= total");
            alloc[i] += 1;
        } else {
            let i = (0..sizes.len())
                .filter(|&i| alloc[i] > 1)
                .min_by(|&a, &b| remainder(a).total_cmp(&remainder(b)).then(a.cmp(&b)))
                .expect("reducible stratum while k >= strata");
            alloc[i] -= 1;
        }
    }
}

/// `M_MB` over all of 𝒜 or a stratified sample of it.
pub fn mmb(protocol: &EchoProtocol, mode: MmbMode) -> Result<EchoSeries> {
    let n = protocol.spec.n;
    let population = 1usize << (n - 1);
    // stratum index = n_up - 1; members are the sector states with bit 0 set
    let sizes: Vec<usize> = (1..=n).map(|n_up| binomial(n - 1, n_up - 1) as usize).collect();

    let chosen: Vec<Vec<BasisState>> = match mode {
        MmbMode::Exact => {
            if n > MAX_EXACT_MMB_SITES {
                return Err(Error::Capacity(format!(
                    "exact M_MB limited to n <= {MAX_EXACT_MMB_SITES}, got {n}; use sampled mode"
                )));
            }
            (1..=n)
                .map(|n_up| {
                    Ok(enumerate_sector(n, n_up)?
                        .states()
                        .filter(|&b| SubsetA.contains(b))
                        .collect())
                })
                .collect::<Result<_>>()?
        }
        MmbMode::Sampled { k, seed } => {
            if k > population {
                return Err(Error::Argument(format!(
                    "k = {k} exceeds |A| = {population}"
                )));
            }
            let alloc = allocate_samples(&sizes, k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (1..=n)
                .map(|n_up| {
                    let members: Vec<BasisState> = enumerate_sector(n, n_up)?
                        .states()
                        .filter(|&b| SubsetA.contains(b))
                        .collect();
                    let mut picks = sample(&mut rng, members.len(), alloc[n_up - 1]).into_vec();
                    picks.sort_unstable();
                    Ok(picks.into_iter().map(|i| members[i]).collect())
                })
                .collect::<Result<_>>()?
        }
    };

    let legs = sector_legs(protocol)?;
    let half = protocol.half_times();
    let units: Vec<(usize, BasisState)> = chosen
        .iter()
        .enumerate()
        .flat_map(|(s, v)| v.iter().map(move |&b| (s, b)))
        .collect();
    let rows: Vec<Vec<f64>> = units
        .par_iter()
        .map(|&(_, b)| {
            let l = legs[b.n_up()].as_ref().expect("sector of an A state");
            return_probability(l, b, &half, &protocol.cfg)
        })
        .collect::<Result<_>>()?;

    let len = half.len();
    let mut meta = BTreeMap::new();
    let (mean, stderr) = match mode {
        MmbMode::Exact => {
            meta.insert("mmb_estimator".into(), "exact".into());
            let (mean, _) = mean_and_stderr(&rows, len);
            (mean, vec![0.0; len])
        }
        MmbMode::Sampled { k, seed } => {
            meta.insert("mmb_estimator".into(), "sampled".into());
            meta.insert("mmb_samples".into(), k.to_string());
            meta.insert("mmb_seed".into(), seed.to_string());
            stratified_estimate(&rows, &units, &sizes, population, len)
        }
    };
    let mut mean = mean;
    mean[0] = 1.0;
    Ok(EchoSeries {
        t: protocol.t_grid().to_vec(),
        m_mb: Some(mean),
        m_mb_stderr: Some(stderr),
        meta,
        ..Default::default()
    })
}

// Weighted stratum means; strata drawn once borrow the pooled sample variance.
fn stratified_estimate(
    rows: &[Vec<f64>],
    units: &[(usize, BasisState)],
    sizes: &[usize],
    population: usize,
    len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut by_stratum: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (u, &(s, _)) in units.iter().enumerate() {
        by_stratum[s].push(u);
    }
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for k in 0..len {
        let all: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let pooled_mean = all.iter().sum::<f64>() / all.len() as f64;
        let pooled_var = if all.len() > 1 {
            all.iter().map(|x| (x - pooled_mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64
        } else {
            0.0
        };
        let mut est = 0.0;
        let mut var = 0.0;
        for (s, members) in by_stratum.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let w = sizes[s] as f64 / population as f64;
            let ks = members.len() as f64;
            let m = members.iter().map(|&u| rows[u][k]).sum::<f64>() / ks;
            est += w * m;
            let fpc = 1.0 - ks / sizes[s] as f64;
            if fpc > 0.0 {
                let vs = if members.len() > 1 {
                    members.iter().map(|&u| (rows[u][k] - m).powi(2)).sum::<f64>() / (ks - 1.0)
                } else {
                    pooled_var
                };
                var += w * w * fpc * vs / ks;
            }
        }
        mean[k] = est;
        stderr[k] = var.sqrt();
    }
    (mean, stderr)
}

/// Fills `m_x = m11 − m_mb` with errors added in quadrature.
pub fn m_x(series: &EchoSeries) -> Result<EchoSeries> {
    let (m11, mmb) = match (&series.m11, &series.m_mb) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Argument("m_x needs both m11 and m_mb".into())),
    };
    if m11.len() != series.t.len() || mmb.len() != series.t.len() {
        return Err(Error::Argument("m11 and m_mb grids differ".into()));
    }
    let zeros = vec![0.0; series.t.len()];
    let e11 = series.m11_stderr.as_ref().unwrap_or(&zeros);
    let emb = series.m_mb_stderr.as_ref().unwrap_or(&zeros);
    let mut out = series.clone();
    out.m_x = Some(m11.iter().zip(mmb).map(|(a, b)| a - b).collect());
    out.m_x_stderr = Some(e11.iter().zip(emb).map(|(a, b)| a.hypot(*b)).collect());
    Ok(out)
}

/// Probability that spin 1 is still up, `(M₁,₁ + 1)/2`.
pub fn pi11(series: &EchoSeries) -> Result<Vec<f64>> {
    let m11 = series
        .m11
        .as_ref()
        .ok_or_else(|| Error::Argument("series has no m11".into()))?;
    Ok(m11.iter().map(|m| ((m + 1.0) / 2.0).clamp(0.0, 1.0)).collect())
}

/// How `M₁,₁` is estimated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum M11Mode {
    ExactTrace,
    RandomPhase { seeds: Vec<u64> },
}

/// Both observables and their difference on the protocol grid.
pub fn run_echo(protocol: &EchoProtocol, m11_mode: &M11Mode, mmb_mode: MmbMode) -> Result<EchoSeries> {
    let a = match m11_mode {
        M11Mode::ExactTrace => m11_exact_trace(protocol)?,
        M11Mode::RandomPhase { seeds } => m11_random_phase(protocol, seeds)?,
    };
    let b = mmb(protocol, mmb_mode)?;
    m_x(&EchoSeries::merge(&a, &b)?)
}
