//! Time propagation `ψ(t) = exp(−iHt)ψ` for Hermitian `H`.
//!
//! The production route is a Lanczos (Hermitian Krylov) projection. One basis
//! of up to `max_krylov_dim` vectors is built at a restart point; its
//! tridiagonal eigen-decomposition then yields the state at *any* time inside
//! the window where the a-posteriori error estimate
//! `β₀ β_m |[exp(−iT_m τ) e₁]_m|` stays below `tol·τ`. Grid points that fall in
//! the same window cost one basis combination each instead of a new basis.
//!
//! The oracle route diagonalizes an explicit matrix and is limited to
//! dimension [`DENSE_ORACLE_MAX_DIM`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonians::{dot, norm_sqr, BoundOperator, StateVector, CHUNK, PAR_THRESHOLD};

pub const DENSE_ORACLE_MAX_DIM: usize = 4096;
/// Krylov windows shorter than this abort with a convergence error.
pub const DT_FLOOR: f64 = 1e-10;

/// Anything that can compute `y = H x` for a Hermitian `H`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

impl LinearOperator for BoundOperator {
    fn dim(&self) -> usize {
        BoundOperator::dim(self)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_into(x, y)
    }
}

/// An explicit matrix used as an operator.
pub struct DenseOperator(pub DMatrix<C64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = (0..x.len()).map(|c| self.0[(r, c)] * x[c]).sum();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Krylov,
    DenseOracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Krylov => "krylov",
            Method::DenseOracle => "dense_oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    /// Target error per unit time.
    pub tol: f64,
    pub max_krylov_dim: usize,
    /// Longest time covered by one Krylov basis.
    pub dt_max: f64,
    pub method: Method,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_krylov_dim: 40,
            dt_max: 8.0,
            method: Method::Krylov,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1e-4) {
            return Err(Error::Argument(format!("tol = {} outside (0, 1e-4)", self.tol)));
        }
        if self.max_krylov_dim < 2 {
            return Err(Error::Argument("max_krylov_dim must be at least 2".into()));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Argument(format!("dt_max = {} must be positive", self.dt_max)));
        }
        Ok(())
    }
}

/// Incremental Krylov propagation of one state along increasing times.
///
/// `direction = +1` evolves with `exp(−iHt)`, `-1` with `exp(+iHt)`.
pub struct KrylovStepper<'a> {
    op: &'a dyn LinearOperator,
    cfg: PropagationConfig,
    direction: f64,
    horizon: f64,
    origin: f64,
    valid: f64,
    beta0: f64,
    basis: Vec<Vec<C64>>,
    evals: Vec<f64>,
    evecs: DMatrix<f64>,
    current: Vec<C64>,
    current_t: f64,
    matvecs: usize,
}

impl<'a> KrylovStepper<'a> {
    pub fn new(
        op: &'a dyn LinearOperator,
        psi: Vec<C64>,
        direction: f64,
        horizon: f64,
        cfg: PropagationConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if psi.len() != op.dim() {
            return Err(Error::Shape(format!(
                "state of length {} for operator of dimension {}",
                psi.len(),
                op.dim()
            )));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon = {horizon}")));
        }
        Ok(Self {
            op,
            cfg,
            direction: direction.signum(),
            horizon,
            origin: 0.0,
            valid: 0.0,
            beta0: 0.0,
            basis: Vec::new(),
            evals: Vec::new(),
            evecs: DMatrix::zeros(0, 0),
            current: psi,
            current_t: 0.0,
            matvecs: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.current_t
    }

    pub fn state(&self) -> &[C64] {
        &self.current
    }

    pub fn into_state(self) -> Vec<C64> {
        self.current
    }

    /// Operator applications spent so far.
    pub fn matvecs(&self) -> usize {
        self.matvecs
    }

    /// Moves the state to time `t ≥ self.time()`.
    pub fn advance_to(&mut self, t: f64) -> Result<&[C64]> {
        let slack = 1e-12 * (1.0 + self.horizon);
        if t < self.current_t - slack || t > self.horizon + slack || !t.is_finite() {
            return Err(Error::Argument(format!(
                "cannot advance from {} to {t} (horizon {})",
                self.current_t, self.horizon
            )));
        }
        let t = t.clamp(self.current_t, self.horizon.max(self.current_t));
        loop {
            if t - self.origin <= self.valid {
                if t != self.current_t {
                    self.current = self.combine(t - self.origin);
                    self.current_t = t;
                }
                return Ok(&self.current);
            }
            if self.current_t > self.origin {
                self.origin = self.current_t;
            } else {
                let end = self.origin + self.valid;
                if self.valid > 0.0 {
                    self.current = self.combine(self.valid);
                }
                self.current_t = end;
                self.origin = end;
            }
            self.build()?;
        }
    }

    // Lanczos basis at the current state and the window it certifies.
    fn build(&mut self) -> Result<()> {
        self.basis.clear();
        let remaining = self.horizon - self.origin;
        let target = remaining.min(self.cfg.dt_max);
        self.beta0 = norm_sqr(&self.current).sqrt();
        if self.beta0 == 0.0 {
            self.evals.clear();
            self.evecs = DMatrix::zeros(0, 0);
            self.valid = f64::INFINITY;
            return Ok(());
        }

        let dim = self.op.dim();
        let m_max = self.cfg.max_krylov_dim.min(dim).max(1);
        let inv = 1.0 / self.beta0;
        self.basis.push(self.current.iter().map(|a| a * inv).collect());
        let mut alphas: Vec<f64> = Vec::with_capacity(m_max);
        let mut betas: Vec<f64> = Vec::with_capacity(m_max);
        let mut w = vec![C64::new(0.0, 0.0); dim];

        for k in 0..m_max {
            self.op.apply(&self.basis[k], &mut w);
            self.matvecs += 1;
            let alpha = dot(&self.basis[k], &w).re;
            axpy(-alpha, &self.basis[k], &mut w);
            if k > 0 {
                axpy(-betas[k - 1], &self.basis[k - 1], &mut w);
            }
            // second pass against the two newest vectors keeps the three-term
            // recurrence from drifting over long windows
            let c = dot(&self.basis[k], &w);
            axpyc(-c, &self.basis[k], &mut w);
            if k > 0 {
                let c = dot(&self.basis[k - 1], &w);
                axpyc(-c, &self.basis[k - 1], &mut w);
            }
            alphas.push(alpha + c.re);
            let beta = norm_sqr(&w).sqrt();
            let m = k + 1;
            let scale = alphas[k].abs().max(betas.last().copied().unwrap_or(0.0)).max(1.0);

            if beta <= 1e-12 * scale || m == dim {
                // invariant subspace: the projection is exact
                self.diagonalize(&alphas, &betas)?;
                self.valid = f64::INFINITY;
                return Ok(());
            }
            betas.push(beta);

            let check = m >= 4 && (m % 4 == 0 || m == m_max);
            if check || m == m_max {
                self.diagonalize(&alphas, &betas[..m - 1])?;
                let tol = self.cfg.tol;
                let ok = |tau: f64| self.error_estimate(tau, beta) <= tol * tau;
                if ok(target) {
                    self.valid = target;
                    return Ok(());
                }
                if m == m_max {
                    let (mut lo, mut hi) = (0.0, target);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if ok(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    if lo < DT_FLOOR {
                        return Err(Error::Convergence(format!(
                            "Krylov window {lo:e} below floor with {m} vectors"
                        )));
                    }
                    self.valid = lo;
                    return Ok(());
                }
            }
            let inv = 1.0 / beta;
            self.basis.push(w.iter().map(|a| a * inv).collect());
        }
        unreachable!("Lanczos loop always returns")
    }

    fn diagonalize(&mut self, alphas: &[f64], betas: &[f64]) -> Result<()> {
        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = symmetric_eigen(t)?;
        self.evals = eig.eigenvalues.iter().copied().collect();
        self.evecs = eig.eigenvectors;
        self.basis.truncate(m);
        Ok(())
    }

    // Krylov coordinates of exp(−i d T τ) e₁.
    fn coefficients(&self, tau: f64) -> Vec<C64> {
        let m = self.evals.len();
        let phases: Vec<C64> = self
            .evals
            .iter()
            .enumerate()
            .map(|(k, &l)| C64::from_polar(self.evecs[(0, k)], -self.direction * l * tau))
            .collect();
        (0..m)
            .map(|j| (0..m).map(|k| phases[k] * self.evecs[(j, k)]).sum())
            .collect()
    }

    fn error_estimate(&self, tau: f64, beta_next: f64) -> f64 {
        let y = self.coefficients(tau);
        self.beta0 * beta_next * y.last().map_or(0.0, |c| c.norm())
    }

    fn combine(&self, tau: f64) -> Vec<C64> {
        let dim = self.current.len();
        if self.basis.is_empty() {
            return vec![C64::new(0.0, 0.0); dim];
        }
        let y: Vec<C64> = self.coefficients(tau).into_iter().map(|c| c * self.beta0).collect();
        let mut out = vec![C64::new(0.0, 0.0); dim];
        let fill = |start: usize, block: &mut [C64]| {
            for (j, v) in self.basis.iter().enumerate() {
                let c = y[j];
                for (o, x) in block.iter_mut().zip(&v[start..]) {
                    *o += c * x;
                }
            }
        };
        if dim < PAR_THRESHOLD {
            fill(0, &mut out);
        } else {
            out.par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, block)| fill(c * CHUNK, block));
        }
        out
    }
}

fn axpy(a: f64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

fn axpyc(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

/// `exp(−iHt)x` on raw amplitudes; negative `t` runs backwards.
pub fn evolve_amplitudes(
    op: &dyn LinearOperator,
    x: &[C64],
    t: f64,
    cfg: &PropagationConfig,
) -> Result<Vec<C64>> {
    cfg.validate()?;
    if x.len() != op.dim() {
        return Err(Error::Shape(format!(
            "state of length {} for operator of dimension {}",
            x.len(),
            op.dim()
        )));
    }
    if t == 0.0 {
        return Ok(x.to_vec());
    }
    match cfg.method {
        Method::Krylov => {
            let mut stepper = KrylovStepper::new(op, x.to_vec(), t.signum(), t.abs(), *cfg)?;
            stepper.advance_to(t.abs())?;
            Ok(stepper.into_state())
        }
        Method::DenseOracle => {
            let h = operator_matrix(op)?;
            dense_oracle(&h, x, t)
        }
    }
}

/// `exp(−iHt)ψ` with `H` bound to `ψ`'s space.
pub fn evolve(
    op: &BoundOperator,
    psi: &StateVector,
    t: f64,
    cfg: &PropagationConfig,
) -> Result<StateVector> {
    if !psi.space().same_as(op.space()) {
        return Err(Error::Shape(format!(
            "state in {} but operator bound to {}",
            psi.space().describe(),
            op.space().describe()
        )));
    }
    let amps = evolve_amplitudes(op, psi.amplitudes(), t, cfg)?;
    StateVector::new(psi.space().clone(), amps)
}

/// Explicit matrix of an operator, column by column.
pub fn operator_matrix(op: &dyn LinearOperator) -> Result<DMatrix<C64>> {
    let dim = op.dim();
    if dim > DENSE_ORACLE_MAX_DIM {
        return Err(Error::Capacity(format!(
            "dense matrix of dimension {dim} exceeds {DENSE_ORACLE_MAX_DIM}"
        )));
    }
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    let mut e = vec![C64::new(0.0, 0.0); dim];
    let mut col = vec![C64::new(0.0, 0.0); dim];
    for c in 0..dim {
        e[c] = C64::new(1.0, 0.0);
        op.apply(&e, &mut col);
        for r in 0..dim {
            m[(r, c)] = col[r];
        }
        e[c] = C64::new(0.0, 0.0);
    }
    Ok(m)
}

// The default deflation threshold of `SymmetricEigen::new` stops early on
// highly degenerate spectra (residuals near 1e-5); a threshold far below
// machine epsilon iterates until off-diagonals are negligible.
fn symmetric_eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let dim = m.nrows();
    SymmetricEigen::try_new(m, 1e-20, 0)
        .ok_or_else(|| Error::Convergence(format!("symmetric eigensolver failed at dimension {dim}")))
}

/// Full Hermitian eigen-decomposition, reusable for many `(ψ, t)` pairs.
///
/// A real symmetric `H` is diagonalized directly. A complex `H = A + iB` is
/// diagonalized through its real form `[[A, −B], [B, A]]`, on which
/// multiplication by `−i` is the commuting map `(a, b) ↦ (b, −a)`.
pub struct DenseSpectrum {
    dim: usize,
    complex: bool,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn new(h: &DMatrix<C64>) -> Result<Self> {
        let dim = h.nrows();
        if dim != h.ncols() {
            return Err(Error::Shape(format!("{}x{} matrix", h.nrows(), h.ncols())));
        }
        if dim > DENSE_ORACLE_MAX_DIM {
            return Err(Error::Capacity(format!(
                "dense oracle dimension {dim} exceeds {DENSE_ORACLE_MAX_DIM}"
            )));
        }
        let complex = h.iter().any(|z| z.im != 0.0);
        let real = if complex {
            let mut m = DMatrix::<f64>::zeros(2 * dim, 2 * dim);
            for r in 0..dim {
                for c in 0..dim {
                    let z = h[(r, c)];
                    m[(r, c)] = z.re;
                    m[(r + dim, c + dim)] = z.re;
                    m[(r, c + dim)] = -z.im;
                    m[(r + dim, c)] = z.im;
                }
            }
            m
        } else {
            h.map(|z| z.re)
        };
        let eig = symmetric_eigen(real)?;
        Ok(Self {
            dim,
            complex,
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            eigenvectors: eig.eigenvectors,
        })
    }

    /// Eigenvalues of `H`; each appears twice for a complex `H`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `exp(−iHt)ψ`.
    pub fn apply(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        let dim = self.dim;
        if psi.len() != dim {
            return Err(Error::Shape(format!("state of length {} for dimension {dim}", psi.len())));
        }
        let q = &self.eigenvectors;
        if !self.complex {
            let coeffs: Vec<C64> = (0..dim)
                .map(|k| {
                    let c: C64 = (0..dim).map(|r| psi[r] * q[(r, k)]).sum();
                    c * C64::from_polar(1.0, -self.eigenvalues[k] * t)
                })
                .collect();
            return Ok((0..dim)
                .map(|r| (0..dim).map(|k| coeffs[k] * q[(r, k)]).sum())
                .collect());
        }
        // Σ_k q_k q_kᵀ (cos(λ_k t) v + sin(λ_k t) J v) with J(a, b) = (b, −a)
        let v: Vec<f64> = psi.iter().map(|z| z.re).chain(psi.iter().map(|z| z.im)).collect();
        let jv: Vec<f64> = psi.iter().map(|z| z.im).chain(psi.iter().map(|z| -z.re)).collect();
        let mut out = vec![0.0; 2 * dim];
        for k in 0..2 * dim {
            let (s, c) = (self.eigenvalues[k] * t).sin_cos();
            let w: f64 = (0..2 * dim).map(|r| q[(r, k)] * (c * v[r] + s * jv[r])).sum();
            for (r, o) in out.iter_mut().enumerate() {
                *o += w * q[(r, k)];
            }
        }
        Ok((0..dim).map(|r| C64::new(out[r], out[r + dim])).collect())
    }
}

/// Exact-to-roundoff `exp(−iHt)ψ` for an explicit Hermitian matrix.
pub fn dense_oracle(h: &DMatrix<C64>, psi: &[C64], t: f64) -> Result<Vec<C64>> {
    DenseSpectrum::new(h)?.apply(psi, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_hermitian_oracle_matches_closed_form() {
        // H = σ_y: exp(−iσ_y t) = cos t − i sin t σ_y, a real rotation
        let z = C64::new(0.0, 0.0);
        let h = DMatrix::from_row_slice(2, 2, &[z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z]);
        let psi = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        for t in [0.0, 0.4, 2.5] {
            let out = dense_oracle(&h, &psi, t).unwrap();
            let (s, c) = f64::sin_cos(t);
            let expect = [psi[0] * c - psi[1] * s, psi[0] * s + psi[1] * c];
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(PropagationConfig::default().validate().is_ok());
        let bad = PropagationConfig {
            tol: 1e-3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = DMatrix::<C64>::zeros(3, 3);
        let psi = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), C64::new(0.0, 0.0)];
        let out = dense_oracle(&h, &psi, 7.5).unwrap();
        for (a, b) in out.iter().zip(&psi) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn dense_capacity() {
        let h = DMatrix::<C64>::zeros(DENSE_ORACLE_MAX_DIM + 1, DENSE_ORACLE_MAX_DIM + 1);
        assert!(matches!(DenseSpectrum::new(&h), Err(Error::Capacity(_))));
    }

    #[test]
    fn stepper_rejects_backwards_time() {
        let op = DenseOperator(DMatrix::from_diagonal_element(2, 2, C64::new(1.0, 0.0)));
        let mut s = KrylovStepper::new(
            &op,
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            1.0,
            2.0,
            PropagationConfig::default(),
        )
        .unwrap();
        s.advance_to(1.0).unwrap();
        assert!(s.advance_to(0.5).is_err());
        assert!(s.advance_to(3.0).is_err());
    }
}
