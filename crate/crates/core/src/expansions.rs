//! Short-time behaviour of the echoes and brute-force checks of the trace
//! identities behind it.
//!
//! At quadratic order `M₁,₁ ≈ 1 − σ²t²`, `M_MB ≈ 1 − (N/4)σ²t²` and
//! `M_X ≈ ((N−4)/4)σ²t²`. When `Σ` commutes with `S^z_1` the quadratic term
//! vanishes and `M₁,₁ ≈ 1 − c₄t⁴`, with `c₄` built from `C = [Σ, H₀]`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::basis::{sz_of_bits, BasisState, SubsetA};
use crate::error::{Error, Result};
use crate::hamiltonians::{
    second_moments, BoundOperator, ModelSpec, SigmaFamily, Space, SpinOperator, StateVector,
};
use crate::numfmt::sci12;

/// Largest chain for which traces are summed state by state.
pub const MAX_BRUTE_FORCE_SITES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionKind {
    M11Order2,
    MmbOrder2,
    MxOrder2,
    M11Order4Commuting,
}

impl PredictionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionKind::M11Order2 => "m11_order2",
            PredictionKind::MmbOrder2 => "mmb_order2",
            PredictionKind::MxOrder2 => "mx_order2",
            PredictionKind::M11Order4Commuting => "m11_order4_commuting",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "m11_order2" => Ok(PredictionKind::M11Order2),
            "mmb_order2" => Ok(PredictionKind::MmbOrder2),
            "mx_order2" => Ok(PredictionKind::MxOrder2),
            "m11_order4_commuting" => Ok(PredictionKind::M11Order4Commuting),
            other => Err(Error::InvalidKind(other.to_string())),
        }
    }

    /// Power of `t` multiplying the coefficient.
    pub fn power(self) -> i32 {
        match self {
            PredictionKind::M11Order4Commuting => 4,
            _ => 2,
        }
    }
}

/// Leading short-time coefficient of one observable.
///
/// For `m11_order2` and `m11_order4_commuting` the series is
/// `1 − coefficient·t^p`; for `mmb_order2` likewise; for `mx_order2` it is
/// `+coefficient·t²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShortTimePrediction {
    pub kind: PredictionKind,
    pub coefficient: f64,
    /// Time below which the expansion is expected to hold; `None` when the
    /// relevant energy scale vanishes.
    pub validity_hint: Option<f64>,
}

impl ShortTimePrediction {
    /// Predicted value of the observable at time `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let term = self.coefficient * t.powi(self.kind.power());
        match self.kind {
            PredictionKind::MxOrder2 => term,
            _ => 1.0 - term,
        }
    }
}

pub fn predict(kind: PredictionKind, spec: &ModelSpec) -> Result<ShortTimePrediction> {
    spec.validate()?;
    let m = second_moments(spec);
    let n = spec.n as f64;
    if kind == PredictionKind::M11Order4Commuting {
        let c4 = m11_order4_commuting(spec)?;
        let scale = m.sigma2 * m.sigma0_2;
        return Ok(ShortTimePrediction {
            kind,
            coefficient: c4,
            validity_hint: (scale > 0.0).then(|| scale.powf(-0.25)),
        });
    }
    if spec.sigma.commutes_with_sz() {
        return Err(Error::InvalidKind(format!(
            "{} vanishes for the commuting family {}; use m11_order4_commuting",
            kind.as_str(),
            spec.sigma.name()
        )));
    }
    let coefficient = match kind {
        PredictionKind::M11Order2 => m.sigma2,
        PredictionKind::MmbOrder2 => n / 4.0 * m.sigma2,
        PredictionKind::MxOrder2 => (n - 4.0) / 4.0 * m.sigma2,
        PredictionKind::M11Order4Commuting => unreachable!(),
    };
    Ok(ShortTimePrediction {
        kind,
        coefficient,
        validity_hint: m.tau_sigma.map(|tau| tau / n),
    })
}

fn check_brute_force(n: usize) -> Result<()> {
    if n > MAX_BRUTE_FORCE_SITES {
        return Err(Error::Capacity(format!(
            "brute-force traces limited to n <= {MAX_BRUTE_FORCE_SITES}, got {n}"
        )));
    }
    Ok(())
}

// Operators bound to each magnetization sector reached from 𝒜.
fn bind_per_sector(op: &SpinOperator, n: usize) -> Result<Vec<Option<BoundOperator>>> {
    (0..=n)
        .map(|n_up| {
            if n_up == 0 {
                Ok(None)
            } else {
                Ok(Some(BoundOperator::new(op, Space::sector(n, n_up)?)?))
            }
        })
        .collect()
}

fn sz1_weighted(space: &Space, v: &StateVector) -> f64 {
    v.amplitudes()
        .iter()
        .enumerate()
        .map(|(k, a)| a.norm_sqr() * sz_of_bits(space.bits_at(k), 0))
        .sum()
}

/// One row of a residual table.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub brute_force: f64,
    pub closed_form: f64,
}

impl IdentityCheck {
    pub fn residual(&self) -> f64 {
        (self.brute_force - self.closed_form).abs()
    }
}

/// Brute-force traces against their closed forms for one `(n, α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceIdentityReport {
    pub n: usize,
    pub alpha: f64,
    /// Exact site average of the local second moment of `Σ`.
    pub sigma2: f64,
    pub checks: Vec<IdentityCheck>,
}

pub const RESIDUAL_CSV_HEADER: &str = "n,alpha,identity,brute_force,closed_form,abs_residual";

impl TraceIdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(IdentityCheck::residual).fold(0.0, f64::max)
    }

    /// Rows without the header, so several reports can share one table.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.n,
                sci12(self.alpha),
                c.name,
                sci12(c.brute_force),
                sci12(c.closed_form),
                sci12(c.residual())
            );
        }
        out
    }
}

pub fn residual_table(reports: &[TraceIdentityReport]) -> String {
    let mut out = format!("{RESIDUAL_CSV_HEADER}\n");
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Averages over 𝒜 of `⟨β|Σ²|β⟩`, `⟨β|Σ S^z_1 Σ|β⟩` and `⟨β|Σ|β⟩²`,
/// each obtained by applying `Σ` to every basis state, compared with
/// `2Nσ²(α²/4 + 1/8)`, `2Nσ²(α²/8 + 1/16) − σ²/2` and `2Nσ²α²/4`.
pub fn verify_trace_identities(spec: &ModelSpec) -> Result<TraceIdentityReport> {
    spec.validate()?;
    if !matches!(spec.sigma, SigmaFamily::GenericSecular { .. }) {
        return Err(Error::InvalidFamily(format!(
            "trace identities need generic_secular, got {}",
            spec.sigma.name()
        )));
    }
    let n = spec.n;
    check_brute_force(n)?;
    let sigma = bind_per_sector(&SpinOperator::sigma(spec), n)?;
    let states = SubsetA.states(n)?;
    let terms: Vec<[f64; 3]> = states
        .par_iter()
        .map(|&b| {
            let op = sigma[b.n_up()].as_ref().expect("sector of an A state");
            let space = op.space();
            let beta = StateVector::basis(space.clone(), b)?;
            let v = op.apply(&beta)?;
            let diag = v.amplitudes()[space.index_of(b.bits()).expect("in sector")].re;
            Ok([v.norm().powi(2), sz1_weighted(space, &v), diag * diag])
        })
        .collect::<Result<_>>()?;
    let count = states.len() as f64;
    let mean = |k: usize| terms.iter().map(|t| t[k]).sum::<f64>() / count;

    let s2 = second_moments(spec).sigma2_exact;
    let a2 = spec.alpha * spec.alpha;
    let nn = n as f64;
    let checks = vec![
        IdentityCheck {
            name: "sigma_squared",
            brute_force: mean(0),
            closed_form: 2.0 * nn * s2 * (a2 / 4.0 + 1.0 / 8.0),
        },
        IdentityCheck {
            name: "sigma_sz1_sigma",
            brute_force: mean(1),
            closed_form: 2.0 * nn * s2 * (a2 / 8.0 + 1.0 / 16.0) - s2 / 2.0,
        },
        IdentityCheck {
            name: "diagonal_squared",
            brute_force: mean(2),
            closed_form: 2.0 * nn * s2 * a2 / 4.0,
        },
    ];
    Ok(TraceIdentityReport {
        n,
        alpha: spec.alpha,
        sigma2: s2,
        checks,
    })
}

/// Quartic coefficient `c₄` of `M₁,₁ = 1 − c₄t⁴` for a perturbation that
/// commutes with `S^z_1`:
/// `c₄ = 2^{−(N+3)} Σ_{β∈𝒜} (2⟨β|C S^z_1 C|β⟩ − ⟨β|C²|β⟩)`, `C = [Σ, H₀]`.
pub fn m11_order4_commuting(spec: &ModelSpec) -> Result<f64> {
    spec.validate()?;
    if !spec.sigma.commutes_with_sz() {
        return Err(Error::InvalidFamily(format!(
            "{} does not commute with S^z_1",
            spec.sigma.name()
        )));
    }
    let n = spec.n;
    check_brute_force(n)?;
    let sigma = bind_per_sector(&SpinOperator::sigma(spec), n)?;
    let h0 = bind_per_sector(&SpinOperator::h0(spec), n)?;
    let states: Vec<BasisState> = SubsetA.states(n)?;
    let terms: Vec<f64> = states
        .par_iter()
        .map(|&b| {
            let s = sigma[b.n_up()].as_ref().expect("sector of an A state");
            let h = h0[b.n_up()].as_ref().expect("sector of an A state");
            let space = s.space();
            let beta = StateVector::basis(space.clone(), b)?;
            let sh = s.apply(&h.apply(&beta)?)?;
            let hs = h.apply(&s.apply(&beta)?)?;
            let mut c = sh;
            for (x, y) in c.amplitudes_mut().iter_mut().zip(hs.amplitudes()) {
                *x -= y;
            }
            // C is anti-Hermitian: ⟨β|CSC|β⟩ = −⟨Cβ|S|Cβ⟩ and ⟨β|C²|β⟩ = −‖Cβ‖².
            let csc = -sz1_weighted(space, &c);
            let cc = -c.norm().powi(2);
            Ok(2.0 * csc - cc)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / 2f64.powi(n as i32 + 3))
}

/// Through-origin least-squares fit of `1 − M` against `t^p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerFit {
    pub coefficient: f64,
    pub points: usize,
}

/// Fits `y = c·t^p` with `y = 1 − M` over `0 < t ≤ t_window`.
pub fn fit_deficit(t: &[f64], m: &[f64], power: i32, t_window: f64) -> Result<PowerFit> {
    fit_through_origin(t, &m.iter().map(|x| 1.0 - x).collect::<Vec<_>>(), power, t_window)
}

/// Fits `y = c·t^p` over `0 < t ≤ t_window`.
pub fn fit_through_origin(t: &[f64], y: &[f64], power: i32, t_window: f64) -> Result<PowerFit> {
    if t.len() != y.len() {
        return Err(Error::Argument(format!("{} times but {} values", t.len(), y.len())));
    }
    let (mut sxy, mut sxx, mut points) = (0.0, 0.0, 0);
    for (&ti, &yi) in t.iter().zip(y) {
        if ti > 0.0 && ti <= t_window {
            let x = ti.powi(power);
            sxy += x * yi;
            sxx += x * x;
            points += 1;
        }
    }
    if points < 2 {
        return Err(Error::Argument(format!(
            "only {points} grid points in the fit window t <= {t_window}"
        )));
    }
    Ok(PowerFit {
        coefficient: sxy / sxx,
        points,
    })
}
