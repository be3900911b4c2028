//! Model definitions and matrix-free Hamiltonian action.
//!
//! `H₀` is the anisotropic nearest-neighbour ring
//! `J₀ Σ_i (½ S^z_i S^z_{i+1} + S^x_i S^x_{i+1} + S^y_i S^y_{i+1})`.
//! The perturbation `Σ` comes from one of four secular families. Every term
//! is either an exchange bond `jz S^z_i S^z_j + jxy (S^x_i S^x_j + S^y_i S^y_j)`
//! or a longitudinal field `h S^z_i`, so all operators conserve the number of
//! up spins and act within a magnetization sector.
//!
//! Nothing is stored as a matrix: the off-diagonal action of a bond is a bit
//! test followed by a two-bit flip, and the diagonal is cached per space.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{check_sites, enumerate_sector, sz_of_bits, BasisState, SectorIndex};
use crate::error::{Error, Result};

/// Vectors at least this long are processed in parallel chunks.
pub(crate) const PAR_THRESHOLD: usize = 1 << 13;
pub(crate) const CHUNK: usize = 1 << 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

/// One entry of a generic secular bond list; the coupling is
/// `weight * j_sigma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Perturbation families. All of them conserve total `S^z`.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaFamily {
    /// `J_Σ Σ (½ S^z_i S^z_{i+2} + S^x_i S^x_{i+2} + S^y_i S^y_{i+2})`.
    NnnXxz { boundary: Boundary },
    /// `Σ_{pairs} J_ij [2α S^z_i S^z_j − (S^x_i S^x_j + S^y_i S^y_j)]`, each
    /// unordered pair listed at most once.
    GenericSecular { bonds: Vec<Coupling> },
    /// `J_Σ Σ S^z_i S^z_{i+2}`; commutes with every `S^z_i`.
    IsingNnn { boundary: Boundary },
    /// `J_Σ Σ_i w_i S^z_i`; commutes with every `S^z_i`.
    OnsiteDisorder { fields: Vec<f64> },
}

impl SigmaFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SigmaFamily::NnnXxz { .. } => "nnn_xxz",
            SigmaFamily::GenericSecular { .. } => "generic_secular",
            SigmaFamily::IsingNnn { .. } => "ising_nnn",
            SigmaFamily::OnsiteDisorder { .. } => "onsite_disorder",
        }
    }

    /// True when `[Σ, S^z_1] = 0` for every coupling strength.
    pub fn commutes_with_sz(&self) -> bool {
        matches!(
            self,
            SigmaFamily::IsingNnn { .. } | SigmaFamily::OnsiteDisorder { .. }
        )
    }

    /// Uniform next-nearest-neighbour pairs on an `n`-site ring, weight 1.
    pub fn ring_nnn_bonds(n: usize) -> Vec<Coupling> {
        nnn_pairs(n, Boundary::Periodic)
            .into_iter()
            .map(|(i, j)| Coupling { i, j, weight: 1.0 })
            .collect()
    }

    /// Disorder weights drawn uniformly from `[-1, 1]`.
    pub fn random_fields(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }
}

/// Couplings, anisotropy and perturbation family for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub j0: f64,
    pub j_sigma: f64,
    pub alpha: f64,
    pub sigma: SigmaFamily,
}

impl ModelSpec {
    /// The XXZ ring with a next-nearest-neighbour XXZ perturbation, `J₀ = 1`.
    pub fn xxz_ring(n: usize, j_sigma: f64) -> Self {
        Self {
            n,
            j0: 1.0,
            j_sigma,
            alpha: 0.0,
            sigma: SigmaFamily::NnnXxz {
                boundary: Boundary::Periodic,
            },
        }
    }

    pub fn with_sigma(mut self, sigma: SigmaFamily) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_sites(self.n)?;
        if !(self.j0.is_finite() && self.j0 >= 0.0) {
            return Err(Error::Argument(format!("j0 = {} must be finite and >= 0", self.j0)));
        }
        if !(self.j_sigma.is_finite() && self.j_sigma >= 0.0) {
            return Err(Error::Argument(format!(
                "j_sigma = {} must be finite and >= 0",
                self.j_sigma
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Argument("alpha must be finite".into()));
        }
        match &self.sigma {
            SigmaFamily::GenericSecular { bonds } => {
                let mut seen = std::collections::HashSet::new();
                for b in bonds {
                    if b.i >= self.n || b.j >= self.n || b.i == b.j {
                        return Err(Error::Argument(format!(
                            "bond ({}, {}) invalid for n = {}",
                            b.i, b.j, self.n
                        )));
                    }
                    if !seen.insert((b.i.min(b.j), b.i.max(b.j))) {
                        return Err(Error::Argument(format!(
                            "pair ({}, {}) listed twice",
                            b.i, b.j
                        )));
                    }
                }
            }
            SigmaFamily::OnsiteDisorder { fields } => {
                if fields.len() != self.n {
                    return Err(Error::Argument(format!(
                        "{} disorder fields given for n = {}",
                        fields.len(),
                        self.n
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `(i, j, J_ij)` for the perturbation, the couplings that enter the
    /// local second moment.
    pub fn sigma_couplings(&self) -> Vec<(usize, usize, f64)> {
        match &self.sigma {
            SigmaFamily::NnnXxz { boundary } | SigmaFamily::IsingNnn { boundary } => {
                nnn_pairs(self.n, *boundary)
                    .into_iter()
                    .map(|(i, j)| (i, j, self.j_sigma))
                    .collect()
            }
            SigmaFamily::GenericSecular { bonds } => bonds
                .iter()
                .map(|b| (b.i, b.j, b.weight * self.j_sigma))
                .collect(),
            SigmaFamily::OnsiteDisorder { .. } => Vec::new(),
        }
    }

    pub fn h0_couplings(&self) -> Vec<(usize, usize, f64)> {
        ring_pairs(self.n)
            .into_iter()
            .map(|(i, j)| (i, j, self.j0))
            .collect()
    }
}

fn dedup_pairs(mut pairs: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut seen = std::collections::HashSet::new();
    pairs.retain(|&(i, j)| seen.insert((i.min(j), i.max(j))));
    pairs
}

// Ring bonds (i, i+1 mod n); for n = 2 the two bonds coincide and are kept once.
fn ring_pairs(n: usize) -> Vec<(usize, usize)> {
    dedup_pairs((0..n).map(|i| (i, (i + 1) % n)).collect())
}

fn nnn_pairs(n: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    match boundary {
        Boundary::Open => (0..n.saturating_sub(2)).map(|i| (i, i + 2)).collect(),
        Boundary::Periodic if n < 3 => Vec::new(),
        Boundary::Periodic => dedup_pairs((0..n).map(|i| (i, (i + 2) % n)).collect()),
    }
}

/// Exchange term `jz S^z_i S^z_j + jxy (S^x_i S^x_j + S^y_i S^y_j)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exchange {
    pub i: usize,
    pub j: usize,
    pub jz: f64,
    pub jxy: f64,
}

/// A magnetization-conserving spin Hamiltonian as a list of local terms.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinOperator {
    n: usize,
    exchange: Vec<Exchange>,
    fields: Vec<(usize, f64)>,
}

impl SpinOperator {
    pub fn new(n: usize, exchange: Vec<Exchange>, fields: Vec<(usize, f64)>) -> Self {
        let mut op = Self {
            n,
            exchange,
            fields,
        };
        op.merge_terms();
        op
    }

    pub fn zero(n: usize) -> Self {
        Self::new(n, Vec::new(), Vec::new())
    }

    /// The unperturbed ring Hamiltonian `H₀`.
    pub fn h0(spec: &ModelSpec) -> Self {
        let exchange = spec
            .h0_couplings()
            .into_iter()
            .map(|(i, j, c)| Exchange {
                i,
                j,
                jz: 0.5 * c,
                jxy: c,
            })
            .collect();
        Self::new(spec.n, exchange, Vec::new())
    }

    /// The perturbation `Σ` selected by `spec.sigma`.
    pub fn sigma(spec: &ModelSpec) -> Self {
        let js = spec.j_sigma;
        match &spec.sigma {
            SigmaFamily::NnnXxz { .. } => {
                let ex = spec
                    .sigma_couplings()
                    .into_iter()
                    .map(|(i, j, c)| Exchange {
                        i,
                        j,
                        jz: 0.5 * c,
                        jxy: c,
                    })
                    .collect();
                Self::new(spec.n, ex, Vec::new())
            }
            SigmaFamily::GenericSecular { .. } => {
                let ex = spec
                    .sigma_couplings()
                    .into_iter()
                    .map(|(i, j, c)| Exchange {
                        i,
                        j,
                        jz: 2.0 * spec.alpha * c,
                        jxy: -c,
                    })
                    .collect();
                Self::new(spec.n, ex, Vec::new())
            }
            SigmaFamily::IsingNnn { .. } => {
                let ex = spec
                    .sigma_couplings()
                    .into_iter()
                    .map(|(i, j, c)| Exchange {
                        i,
                        j,
                        jz: c,
                        jxy: 0.0,
                    })
                    .collect();
                Self::new(spec.n, ex, Vec::new())
            }
            SigmaFamily::OnsiteDisorder { fields } => Self::new(
                spec.n,
                Vec::new(),
                fields.iter().enumerate().map(|(i, &w)| (i, w * js)).collect(),
            ),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn exchange(&self) -> &[Exchange] {
        &self.exchange
    }

    pub fn fields(&self) -> &[(usize, f64)] {
        &self.fields
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SpinOperator, b: f64) -> SpinOperator {
        assert_eq!(self.n, other.n, "operators on different chain lengths");
        let scale = |ex: &Exchange, c: f64| Exchange {
            jz: c * ex.jz,
            jxy: c * ex.jxy,
            ..*ex
        };
        let exchange = self
            .exchange
            .iter()
            .map(|e| scale(e, a))
            .chain(other.exchange.iter().map(|e| scale(e, b)))
            .collect();
        let fields = self
            .fields
            .iter()
            .map(|&(i, h)| (i, a * h))
            .chain(other.fields.iter().map(|&(i, h)| (i, b * h)))
            .collect();
        SpinOperator::new(self.n, exchange, fields)
    }

    // Sum terms acting on the same pair / site and drop vanishing ones.
    fn merge_terms(&mut self) {
        let mut merged: Vec<Exchange> = Vec::new();
        for e in self.exchange.drain(..) {
            let key = (e.i.min(e.j), e.i.max(e.j));
            match merged.iter_mut().find(|m| (m.i, m.j) == key) {
                Some(m) => {
                    m.jz += e.jz;
                    m.jxy += e.jxy;
                }
                None => merged.push(Exchange {
                    i: key.0,
                    j: key.1,
                    ..e
                }),
            }
        }
        merged.retain(|e| e.jz != 0.0 || e.jxy != 0.0);
        self.exchange = merged;

        let mut fields: Vec<(usize, f64)> = Vec::new();
        for (i, h) in self.fields.drain(..) {
            match fields.iter_mut().find(|f| f.0 == i) {
                Some(f) => f.1 += h,
                None => fields.push((i, h)),
            }
        }
        fields.retain(|f| f.1 != 0.0);
        self.fields = fields;
    }

    /// `⟨β|H|β⟩`.
    pub fn diagonal(&self, bits: u32) -> f64 {
        let zz: f64 = self
            .exchange
            .iter()
            .map(|e| e.jz * sz_of_bits(bits, e.i) * sz_of_bits(bits, e.j))
            .sum();
        let z: f64 = self.fields.iter().map(|&(i, h)| h * sz_of_bits(bits, i)).sum();
        zz + z
    }

    /// Explicit matrix in `space`, assembled term by term (oracle use only).
    pub fn to_dense(&self, space: &Space) -> Result<DMatrix<C64>> {
        if space.n() != self.n {
            return Err(Error::Shape(format!(
                "operator on {} sites, space on {}",
                self.n,
                space.n()
            )));
        }
        let dim = space.dim();
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for col in 0..dim {
            let bits = space.bits_at(col);
            m[(col, col)] += C64::new(self.diagonal(bits), 0.0);
            for e in &self.exchange {
                if e.jxy != 0.0 && ((bits >> e.i) ^ (bits >> e.j)) & 1 == 1 {
                    let target = bits ^ ((1 << e.i) | (1 << e.j));
                    let row = space.index_of(target).expect("flip stays in sector");
                    m[(row, col)] += C64::new(0.5 * e.jxy, 0.0);
                }
            }
        }
        Ok(m)
    }
}

/// The Hilbert space a state vector lives in.
#[derive(Clone, Debug)]
pub enum Space {
    /// All `2^n` configurations, indexed by bit pattern.
    Full { n: usize },
    /// One magnetization sector in canonical order.
    Sector(Arc<SectorIndex>),
}

impl Space {
    pub fn full(n: usize) -> Result<Self> {
        check_sites(n)?;
        Ok(Space::Full { n })
    }

    pub fn sector(n: usize, n_up: usize) -> Result<Self> {
        Ok(Space::Sector(Arc::new(enumerate_sector(n, n_up)?)))
    }

    pub fn n(&self) -> usize {
        match self {
            Space::Full { n } => *n,
            Space::Sector(s) => s.n(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Full { n } => 1 << n,
            Space::Sector(s) => s.len(),
        }
    }

    /// Bit pattern of the `k`-th basis vector.
    #[inline]
    pub fn bits_at(&self, k: usize) -> u32 {
        match self {
            Space::Full { .. } => k as u32,
            Space::Sector(s) => s.bit_patterns()[k],
        }
    }

    #[inline]
    pub fn index_of(&self, bits: u32) -> Option<usize> {
        match self {
            Space::Full { n } => ((bits as u64) < (1u64 << n)).then_some(bits as usize),
            Space::Sector(s) => s.rank(bits),
        }
    }

    pub fn same_as(&self, other: &Space) -> bool {
        match (self, other) {
            (Space::Full { n: a }, Space::Full { n: b }) => a == b,
            (Space::Sector(a), Space::Sector(b)) => a.n() == b.n() && a.n_up() == b.n_up(),
            _ => false,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Space::Full { n } => format!("full(n={n})"),
            Space::Sector(s) => format!("sector(n={}, n_up={})", s.n(), s.n_up()),
        }
    }
}

/// Complex amplitudes over a [`Space`].
#[derive(Clone, Debug)]
pub struct StateVector {
    space: Space,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(space: Space, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::Shape(format!(
                "{} amplitudes for {} of dimension {}",
                amps.len(),
                space.describe(),
                space.dim()
            )));
        }
        Ok(Self { space, amps })
    }

    pub fn zeros(space: Space) -> Self {
        let dim = space.dim();
        Self {
            space,
            amps: vec![C64::new(0.0, 0.0); dim],
        }
    }

    /// The basis ket `|β⟩`, which must belong to `space`.
    pub fn basis(space: Space, state: BasisState) -> Result<Self> {
        let k = space.index_of(state.bits()).ok_or_else(|| {
            Error::Shape(format!("{state:?} not in {}", space.describe()))
        })?;
        let mut v = Self::zeros(space);
        v.amps[k] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn dot(&self, other: &StateVector) -> Result<C64> {
        if !self.space.same_as(&other.space) {
            return Err(Error::Shape(format!(
                "{} vs {}",
                self.space.describe(),
                other.space.describe()
            )));
        }
        Ok(dot(&self.amps, &other.amps))
    }

    /// `⟨ψ|S^z_site|ψ⟩`.
    pub fn sz(&self, site: usize) -> f64 {
        let space = &self.space;
        chunked_sum(&self.amps, |k0, chunk| {
            chunk
                .iter()
                .enumerate()
                .map(|(o, a)| a.norm_sqr() * sz_of_bits(space.bits_at(k0 + o), site))
                .sum()
        })
    }
}

// Fixed-order reduction: chunk partials are summed left to right, so the
// result does not depend on thread scheduling.
pub(crate) fn chunked_sum<T: Sync>(xs: &[T], f: impl Fn(usize, &[T]) -> f64 + Sync) -> f64 {
    if xs.len() < PAR_THRESHOLD {
        return f(0, xs);
    }
    let partials: Vec<f64> = xs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| f(c * CHUNK, chunk))
        .collect();
    partials.iter().sum()
}

pub(crate) fn norm_sqr(x: &[C64]) -> f64 {
    chunked_sum(x, |_, c| c.iter().map(|a| a.norm_sqr()).sum())
}

pub(crate) fn dot(x: &[C64], y: &[C64]) -> C64 {
    debug_assert_eq!(x.len(), y.len());
    if x.len() < PAR_THRESHOLD {
        return x.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
    }
    let partials: Vec<C64> = x
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p.conj() * q).sum())
        .collect();
    partials.iter().sum()
}

#[derive(Clone, Copy, Debug)]
struct Hop {
    i: u32,
    j: u32,
    mask: u32,
    amp: f64,
}

/// A [`SpinOperator`] prepared for repeated application in one space.
#[derive(Clone, Debug)]
pub struct BoundOperator {
    space: Space,
    diag: Vec<f64>,
    hops: Vec<Hop>,
}

impl BoundOperator {
    pub fn new(op: &SpinOperator, space: Space) -> Result<Self> {
        if space.n() != op.n() {
            return Err(Error::Shape(format!(
                "operator on {} sites bound to {}",
                op.n(),
                space.describe()
            )));
        }
        let diag = (0..space.dim()).map(|k| op.diagonal(space.bits_at(k))).collect();
        let hops = op
            .exchange()
            .iter()
            .filter(|e| e.jxy != 0.0)
            .map(|e| Hop {
                i: e.i as u32,
                j: e.j as u32,
                mask: (1 << e.i) | (1 << e.j),
                amp: 0.5 * e.jxy,
            })
            .collect();
        Ok(Self { space, diag, hops })
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = H x` on raw amplitude slices.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(y.len(), self.dim());
        if y.len() < PAR_THRESHOLD {
            self.apply_block(0, x, y);
        } else {
            y.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, block)| self.apply_block(c * CHUNK, x, block));
        }
    }

    // Gather form: each output row is written exactly once.
    #[inline]
    fn apply_block(&self, start: usize, x: &[C64], y: &mut [C64]) {
        match &self.space {
            Space::Full { .. } => {
                for (o, out) in y.iter_mut().enumerate() {
                    let k = start + o;
                    let bits = k as u32;
                    let mut acc = x[k] * self.diag[k];
                    for h in &self.hops {
                        if ((bits >> h.i) ^ (bits >> h.j)) & 1 == 1 {
                            acc += x[(bits ^ h.mask) as usize] * h.amp;
                        }
                    }
                    *out = acc;
                }
            }
            Space::Sector(sec) => {
                let pats = sec.bit_patterns();
                for (o, out) in y.iter_mut().enumerate() {
                    let k = start + o;
                    let bits = pats[k];
                    let mut acc = x[k] * self.diag[k];
                    for h in &self.hops {
                        if ((bits >> h.i) ^ (bits >> h.j)) & 1 == 1 {
                            acc += x[sec.rank_unchecked(bits ^ h.mask)] * h.amp;
                        }
                    }
                    *out = acc;
                }
            }
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if !psi.space().same_as(&self.space) {
            return Err(Error::Shape(format!(
                "state in {} but operator bound to {}",
                psi.space().describe(),
                self.space.describe()
            )));
        }
        if psi.amplitudes().iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::Argument("state has non-finite amplitudes".into()));
        }
        let mut out = StateVector::zeros(self.space.clone());
        self.apply_into(psi.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }
}

fn apply_op(op: &SpinOperator, spec: &ModelSpec, psi: &StateVector) -> Result<StateVector> {
    if psi.space().n() != spec.n {
        return Err(Error::Shape(format!(
            "state has {} sites, model has {}",
            psi.space().n(),
            spec.n
        )));
    }
    BoundOperator::new(op, psi.space().clone())?.apply(psi)
}

/// `H₀ψ`, computed without storing a matrix.
pub fn apply_h0(spec: &ModelSpec, psi: &StateVector) -> Result<StateVector> {
    spec.validate()?;
    apply_op(&SpinOperator::h0(spec), spec, psi)
}

/// `Σψ`, computed without storing a matrix.
pub fn apply_sigma(spec: &ModelSpec, psi: &StateVector) -> Result<StateVector> {
    spec.validate()?;
    apply_op(&SpinOperator::sigma(spec), spec, psi)
}

/// Local second moments and the time scales they set (`ħ = 1`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    /// `σ²` used for `τ_Σ` and every short-time prediction.
    pub sigma2: f64,
    /// `σ₀²` used for `T₂`.
    pub sigma0_2: f64,
    /// Site average of `Σ_{j≠i} (J_ij/2)²` over the actual bonds of `Σ`.
    pub sigma2_exact: f64,
    /// Same average for `H₀`.
    pub sigma0_2_exact: f64,
    /// `1/√σ²`; `None` when `σ² = 0`.
    pub tau_sigma: Option<f64>,
    /// `1/√σ₀²`; `None` when `σ₀² = 0`.
    pub t2: Option<f64>,
}

/// Per-site `σ_i² = Σ_{j≠i} (J_ij/2)²` for a coupling list.
pub fn local_second_moments(n: usize, couplings: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut local = vec![0.0; n];
    for &(i, j, c) in couplings {
        let q = (0.5 * c).powi(2);
        local[i] += q;
        local[j] += q;
    }
    local
}

fn site_average(n: usize, couplings: &[(usize, usize, f64)]) -> f64 {
    local_second_moments(n, couplings).iter().sum::<f64>() / n as f64
}

/// Energy scales of `spec`.
///
/// For the nearest/next-nearest XXZ and Ising families the bulk values
/// `σ² = ½J_Σ²` and `σ₀² = ½J₀²` are reported as canonical; an open chain's
/// exact site average differs and is kept in `sigma2_exact`. Disorder fields
/// contribute `w_i² J_Σ²/4` per site.
pub fn second_moments(spec: &ModelSpec) -> Moments {
    let sigma0_2_exact = site_average(spec.n, &spec.h0_couplings());
    let sigma2_exact = match &spec.sigma {
        SigmaFamily::OnsiteDisorder { fields } => {
            fields.iter().map(|w| (0.5 * w * spec.j_sigma).powi(2)).sum::<f64>() / spec.n as f64
        }
        _ => site_average(spec.n, &spec.sigma_couplings()),
    };
    let sigma2 = match &spec.sigma {
        SigmaFamily::NnnXxz { .. } | SigmaFamily::IsingNnn { .. } => 0.5 * spec.j_sigma.powi(2),
        _ => sigma2_exact,
    };
    let sigma0_2 = 0.5 * spec.j0.powi(2);
    let scale = |m2: f64| (m2 > 0.0).then(|| 1.0 / m2.sqrt());
    Moments {
        sigma2,
        sigma0_2,
        sigma2_exact,
        sigma0_2_exact,
        tau_sigma: scale(sigma2),
        t2: scale(sigma0_2),
    }
}
