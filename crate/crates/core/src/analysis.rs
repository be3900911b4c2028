//! Scaling of the many-body echo with system size.
//!
//! If spins decohered independently, `M_MB = M₁,₁^{N/4}`. The exponent
//! `η(N,t) = ln M_MB / ln M₁,₁` and its per-site form `f = η/N` measure how far
//! the dynamics is from that picture; `f → 1/4` as `t → 0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::echo::EchoSeries;
use crate::error::{Error, Result};
use crate::numfmt::{parse_field, sci12};

pub const SCALING_CSV_HEADER: &str = "n,j_sigma,t,eta,f,valid";
pub const VALIDITY_RULE: &str = "0<m11<1, 0<m_mb<1, m11>=3/N, m_mb>=10*2^-N";
pub const DECAY_CONVENTION: &str = "1/e-of-contrast";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow {
    pub t: f64,
    pub eta: f64,
    pub f: f64,
    pub valid: bool,
}

/// `η` and `f` along one echo series.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTable {
    pub n: usize,
    pub j_sigma: f64,
    pub rows: Vec<ScalingRow>,
    pub meta: BTreeMap<String, String>,
}

/// True outside the saturation band, where the logarithms are meaningful.
pub fn is_scaling_valid(n: usize, m11: f64, m_mb: f64) -> bool {
    let inside = |x: f64| x > 0.0 && x < 1.0;
    inside(m11)
        && inside(m_mb)
        && m11 >= 3.0 / n as f64
        && m_mb >= 10.0 * 0.5f64.powi(n as i32)
}

/// Computes `η` and `f` at every grid point; rows in the saturation band are
/// kept but flagged invalid.
pub fn eta_f(series: &EchoSeries, n: usize, j_sigma: f64) -> Result<ScalingTable> {
    let (m11, mmb) = match (&series.m11, &series.m_mb) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Argument("scaling needs both m11 and m_mb".into())),
    };
    if n == 0 {
        return Err(Error::Argument("n must be positive".into()));
    }
    let rows = series
        .t
        .iter()
        .zip(m11.iter().zip(mmb))
        .map(|(&t, (&a, &b))| {
            let eta = b.ln() / a.ln();
            let eta = if eta.is_finite() { eta } else { f64::NAN };
            ScalingRow {
                t,
                eta,
                f: eta / n as f64,
                valid: is_scaling_valid(n, a, b) && eta.is_finite(),
            }
        })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("validity_rule".into(), VALIDITY_RULE.into());
    meta.insert("log".into(), "natural".into());
    Ok(ScalingTable {
        n,
        j_sigma,
        rows,
        meta,
    })
}

impl ScalingTable {
    /// Rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.n,
                sci12(self.j_sigma),
                sci12(r.t),
                sci12(r.eta),
                sci12(r.f),
                r.valid
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{SCALING_CSV_HEADER}\n{}", self.csv_rows())
    }

    /// Reads a scaling CSV, splitting it into one table per `(n, j_sigma)`
    /// in order of first appearance.
    pub fn from_csv(text: &str) -> Result<Vec<ScalingTable>> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == SCALING_CSV_HEADER => {}
            other => return Err(Error::Argument(format!("unexpected header: {other:?}"))),
        }
        let mut tables: Vec<ScalingTable> = Vec::new();
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Argument(format!("row {}: {line:?}", row + 1));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let n: usize = f[0].parse().map_err(|_| bad())?;
            let num = |s: &str| parse_field(s).ok_or_else(bad);
            let j_sigma = num(f[1])?;
            let r = ScalingRow {
                t: num(f[2])?,
                eta: num(f[3])?,
                f: num(f[4])?,
                valid: f[5].parse().map_err(|_| bad())?,
            };
            match tables.iter_mut().find(|t| t.n == n && t.j_sigma == j_sigma) {
                Some(t) => t.rows.push(r),
                None => tables.push(ScalingTable {
                    n,
                    j_sigma,
                    rows: vec![r],
                    meta: BTreeMap::new(),
                }),
            }
        }
        Ok(tables)
    }

    /// Value of `f` at `t` by linear interpolation, with validity requiring
    /// both bracketing rows to be valid. `None` outside the table's range.
    pub fn f_at(&self, t: f64) -> Option<(f64, bool)> {
        let k = self.rows.partition_point(|r| r.t < t);
        if k == self.rows.len() {
            return None;
        }
        let hi = &self.rows[k];
        if hi.t == t {
            return Some((hi.f, hi.valid));
        }
        if k == 0 {
            return None;
        }
        let lo = &self.rows[k - 1];
        let w = (t - lo.t) / (hi.t - lo.t);
        Some((lo.f + w * (hi.f - lo.f), lo.valid && hi.valid))
    }

    /// End of the leading stretch of valid rows: the first time after a
    /// valid row at which the table enters the saturation band.
    pub fn departure_time(&self) -> Option<f64> {
        let first = self.rows.iter().position(|r| r.valid)?;
        self.rows[first..].iter().find(|r| !r.valid).map(|r| r.t)
    }
}

/// Spread of `f` across tables.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseReport {
    pub t: Vec<f64>,
    /// `(max − min)/|mean|` of `f` across tables, `nan` where any table is
    /// invalid or undefined.
    pub spread: Vec<f64>,
    /// Largest spread over the leading window in which every table is valid.
    pub max_spread: f64,
    pub window: Option<(f64, f64)>,
    /// True when no grid time is valid for every table.
    pub empty: bool,
}

/// Compares `f` across tables on the first table's grid, restricted to the
/// times every table covers.
pub fn collapse_check(tables: &[ScalingTable]) -> Result<CollapseReport> {
    if tables.len() < 2 {
        return Err(Error::Argument("collapse needs at least two tables".into()));
    }
    let mut t = Vec::new();
    let mut spread = Vec::new();
    let mut all_valid = Vec::new();
    for r in &tables[0].rows {
        let values: Option<Vec<(f64, bool)>> = tables.iter().map(|tab| tab.f_at(r.t)).collect();
        let Some(values) = values else { continue };
        let ok = values.iter().all(|&(f, v)| v && f.is_finite());
        let fs: Vec<f64> = values.iter().map(|v| v.0).collect();
        let s = if ok {
            let max = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = fs.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = fs.iter().sum::<f64>() / fs.len() as f64;
            (max - min) / mean.abs()
        } else {
            f64::NAN
        };
        t.push(r.t);
        spread.push(s);
        all_valid.push(ok);
    }
    let window = match all_valid.iter().position(|&v| v) {
        None => None,
        Some(start) => {
            let end = all_valid[start..]
                .iter()
                .position(|&v| !v)
                .map_or(all_valid.len(), |k| start + k);
            Some((start, end))
        }
    };
    let (max_spread, bounds) = match window {
        None => (f64::NAN, None),
        Some((a, b)) => (
            spread[a..b].iter().cloned().fold(0.0, f64::max),
            Some((t[a], t[b - 1])),
        ),
    };
    Ok(CollapseReport {
        t,
        spread,
        max_spread,
        window: bounds,
        empty: window.is_none(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayQuantity {
    M11,
    MMb,
}

impl DecayQuantity {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayQuantity::M11 => "m11",
            DecayQuantity::MMb => "m_mb",
        }
    }
}

/// A finite-size decay time together with the rule that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayTime {
    pub t3: f64,
    pub convention: &'static str,
    pub quantity: DecayQuantity,
    pub m_inf: f64,
}

/// Smallest `t` with `(M(t) − M_∞)/(1 − M_∞) ≤ 1/e`, where `M_∞` is the mean
/// over the final quarter of the grid; linear interpolation between points.
pub fn decay_time(series: &EchoSeries, quantity: DecayQuantity) -> Option<DecayTime> {
    let m = match quantity {
        DecayQuantity::M11 => series.m11.as_ref()?,
        DecayQuantity::MMb => series.m_mb.as_ref()?,
    };
    decay_time_of(&series.t, m).map(|(t3, m_inf)| DecayTime {
        t3,
        convention: DECAY_CONVENTION,
        quantity,
        m_inf,
    })
}

fn decay_time_of(t: &[f64], m: &[f64]) -> Option<(f64, f64)> {
    if t.len() < 2 || t.len() != m.len() {
        return None;
    }
    let tail = t.len().div_ceil(4);
    let m_inf = m[m.len() - tail..].iter().sum::<f64>() / tail as f64;
    let range = 1.0 - m_inf;
    if !(range > 1e-12) {
        return None;
    }
    let threshold = (-1.0f64).exp();
    let contrast = |k: usize| (m[k] - m_inf) / range;
    let k = (0..m.len()).find(|&k| contrast(k) <= threshold)?;
    if k == 0 {
        return None;
    }
    let (c0, c1) = (contrast(k - 1), contrast(k));
    let w = (c0 - threshold) / (c0 - c1);
    Some((t[k - 1] + w * (t[k] - t[k - 1]), m_inf))
}

/// Power law `1/t3 = A·N^ν` fitted by least squares in log-log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeExponentFit {
    pub nu: f64,
    pub prefactor: f64,
}

/// Exploratory fit over `(N, t3)` pairs; needs two distinct sizes.
pub fn decay_rate_exponent(points: &[(usize, f64)]) -> Option<SizeExponentFit> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, t3)| *n > 0 && *t3 > 0.0 && t3.is_finite())
        .map(|&(n, t3)| ((n as f64).ln(), -t3.ln()))
        .collect();
    if xy.len() < 2 {
        return None;
    }
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let nu = sxy / sxx;
    Some(SizeExponentFit {
        nu,
        prefactor: (my - nu * mx).exp(),
    })
}
