//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! The process exits non-zero when any criterion fails, except those listed
//! as known-unattainable, which still print FAIL with their numbers.

use std::collections::BTreeMap;
use std::time::Instant;

use spin_echo::analysis::{collapse_check, eta_f, ScalingTable};
use spin_echo::echo::{
    m11_exact_trace, m11_random_phase, m_x, mmb, EchoProtocol, EchoSeries, MmbMode,
};
use spin_echo::expansions::{
    fit_deficit, fit_through_origin, m11_order4_commuting, predict, verify_trace_identities,
    PredictionKind,
};
use spin_echo::hamiltonians::{second_moments, Boundary, ModelSpec, SigmaFamily};
use spin_echo::propagator::PropagationConfig;

const T_LONG: f64 = 40.0;
const LATE_WINDOW: (f64, f64) = (30.0, 40.0);
const MMB_SAMPLES: usize = 1024;

struct Outcome {
    name: &'static str,
    pass: bool,
    known_unattainable: bool,
    detail: String,
}

fn cfg() -> PropagationConfig {
    PropagationConfig::default()
}

fn secs(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn uniform(t_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| t_max * k as f64 / (points - 1) as f64).collect()
}

// Fine steps up to t = 2 for the short-time behaviour, then Δt = 0.5.
fn long_grid() -> Vec<f64> {
    let mut t: Vec<f64> = (0..40).map(|k| 0.05 * k as f64).collect();
    t.extend((4..=80).map(|k| 0.5 * k as f64));
    t
}

fn window_mean(t: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    let v: Vec<f64> = t
        .iter()
        .zip(y)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, y)| *y)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

struct LongRun {
    series: EchoSeries,
    mmb_secs: f64,
}

// Long echo runs shared by the plateau, collapse and figure checks.
struct Runs {
    cache: BTreeMap<(usize, u64), LongRun>,
}

impl Runs {
    fn get(&mut self, n: usize, j_sigma: f64) -> &LongRun {
        let key = (n, (j_sigma * 1000.0).round() as u64);
        self.cache.entry(key).or_insert_with(|| {
            let p = EchoProtocol::new(ModelSpec::xxz_ring(n, j_sigma), cfg(), long_grid()).unwrap();
            let a = match n {
                0..=10 => m11_exact_trace(&p).unwrap(),
                11..=12 => m11_random_phase(&p, &(0..8).collect::<Vec<_>>()).unwrap(),
                _ => m11_random_phase(&p, &(0..4).collect::<Vec<_>>()).unwrap(),
            };
            let start = Instant::now();
            let b = if n <= 12 {
                mmb(&p, MmbMode::Exact).unwrap()
            } else {
                mmb(&p, MmbMode::Sampled { k: MMB_SAMPLES, seed: 1 }).unwrap()
            };
            let mmb_secs = secs(start);
            let series = m_x(&EchoSeries::merge(&a, &b).unwrap()).unwrap();
            eprintln!("  computed n={n} j_sigma={j_sigma}");
            LongRun { series, mmb_secs }
        })
    }

    fn table(&mut self, n: usize, j_sigma: f64) -> ScalingTable {
        eta_f(&self.get(n, j_sigma).series, n, j_sigma).unwrap()
    }
}

fn perfect_reversal() -> Outcome {
    let start = Instant::now();
    let p = EchoProtocol::new(ModelSpec::xxz_ring(12, 0.0), cfg(), uniform(30.0, 61)).unwrap();
    let a = m11_random_phase(&p, &[0]).unwrap();
    let b = mmb(&p, MmbMode::Exact).unwrap();
    let elapsed = secs(start);
    let dev = |v: &[f64]| v.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    let (d11, dmb) = (dev(a.m11.as_ref().unwrap()), dev(b.m_mb.as_ref().unwrap()));
    Outcome {
        name: "perfect reversal (N=12, J_sigma=0, t<=30)",
        pass: d11 < 1e-6 && dmb < 1e-6 && elapsed < 60.0,
        known_unattainable: false,
        detail: format!(
            "max|1-M11|={d11:.2e} max|1-M_MB|={dmb:.2e} (<1e-6), {elapsed:.1}s (<60s)"
        ),
    }
}

// Exact N=10 runs on dense grids: `wide` spans the M11 fit window, `fine`
// the narrower window of the many-body fits.
struct ShortRun {
    wide: EchoSeries,
    fine: EchoSeries,
    secs: f64,
    tau: f64,
}

fn short_run() -> ShortRun {
    let spec = ModelSpec::xxz_ring(10, 0.1);
    let tau = second_moments(&spec).tau_sigma.unwrap();
    let start = Instant::now();
    let p = EchoProtocol::new(spec.clone(), cfg(), uniform(0.15 * tau, 121)).unwrap();
    let wide = m11_exact_trace(&p).unwrap();
    let secs = secs(start);
    let q = EchoProtocol::new(spec, cfg(), uniform(0.1 * tau / 10f64.sqrt(), 121)).unwrap();
    let a = m11_exact_trace(&q).unwrap();
    let b = mmb(&q, MmbMode::Exact).unwrap();
    let fine = m_x(&EchoSeries::merge(&a, &b).unwrap()).unwrap();
    ShortRun {
        wide,
        fine,
        secs,
        tau,
    }
}

fn short_time_local(run: &ShortRun) -> Outcome {
    let fit = fit_deficit(&run.wide.t, run.wide.m11.as_ref().unwrap(), 2, 0.15 * run.tau).unwrap();
    let expected = predict(PredictionKind::M11Order2, &ModelSpec::xxz_ring(10, 0.1))
        .unwrap()
        .coefficient;
    let r = rel(fit.coefficient, expected);
    Outcome {
        name: "short-time local echo (N=10, J_sigma=0.1)",
        pass: r < 0.05 && run.secs < 300.0,
        known_unattainable: false,
        detail: format!(
            "fit {:.5e} vs {expected:.5e} over {} points: rel {:.2}% (<5%), {:.1}s (<300s)",
            fit.coefficient,
            fit.points,
            100.0 * r,
            run.secs
        ),
    }
}

fn short_time_many_body(run: &ShortRun) -> Outcome {
    let spec = ModelSpec::xxz_ring(10, 0.1);
    let s = &run.fine;
    let window = 0.1 * run.tau / 10f64.sqrt();
    let fmb = fit_deficit(&s.t, s.m_mb.as_ref().unwrap(), 2, window).unwrap();
    let fx = fit_through_origin(&s.t, s.m_x.as_ref().unwrap(), 2, window).unwrap();
    let emb = predict(PredictionKind::MmbOrder2, &spec).unwrap().coefficient;
    let ex = predict(PredictionKind::MxOrder2, &spec).unwrap().coefficient;
    let (rmb, rx) = (rel(fmb.coefficient, emb), rel(fx.coefficient, ex));
    Outcome {
        name: "short-time many-body and cross echoes (N=10, J_sigma=0.1)",
        pass: rmb < 0.05 && rx < 0.10,
        known_unattainable: false,
        detail: format!(
            "t<={window:.3}: M_MB fit {:.5e} vs {emb:.5e} rel {:.2}% (<5%); M_X fit {:.5e} vs {ex:.5e} rel {:.2}% (<10%)",
            fmb.coefficient,
            100.0 * rmb,
            fx.coefficient,
            100.0 * rx
        ),
    }
}

fn trace_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 0.5, 1.0] {
        let mut spec = ModelSpec::xxz_ring(8, 0.1).with_sigma(SigmaFamily::GenericSecular {
            bonds: SigmaFamily::ring_nnn_bonds(8),
        });
        spec.alpha = alpha;
        worst = worst.max(verify_trace_identities(&spec).unwrap().max_residual());
    }
    Outcome {
        name: "trace identities (N=8 ring, alpha in {0, 1/2, 1})",
        pass: worst < 1e-10,
        known_unattainable: false,
        detail: format!("max residual {worst:.2e} (<1e-10)"),
    }
}

fn fourth_order() -> Outcome {
    let spec = ModelSpec::xxz_ring(8, 0.1).with_sigma(SigmaFamily::IsingNnn {
        boundary: Boundary::Periodic,
    });
    let m = second_moments(&spec);
    let window = 0.05 / (m.sigma2 * m.sigma0_2).sqrt().sqrt();
    let tight = PropagationConfig {
        tol: 1e-13,
        ..cfg()
    };
    let p = EchoProtocol::new(spec.clone(), tight, uniform(window, 41)).unwrap();
    let s = m11_exact_trace(&p).unwrap();
    let fit = fit_deficit(&s.t, s.m11.as_ref().unwrap(), 4, window).unwrap();
    let c4 = m11_order4_commuting(&spec).unwrap();
    let r = rel(fit.coefficient, c4);
    Outcome {
        name: "fourth-order commuting perturbation (ising_nnn, N=8, J_sigma=0.1)",
        pass: r < 0.10,
        known_unattainable: false,
        detail: format!(
            "t<={window:.4}: quartic fit {:.5e} vs formula {c4:.5e} rel {:.2}% (<10%)",
            fit.coefficient,
            100.0 * r
        ),
    }
}

fn estimator_equivalence() -> Outcome {
    let p = EchoProtocol::new(ModelSpec::xxz_ring(8, 0.1), cfg(), uniform(T_LONG, 81)).unwrap();
    let exact = m11_exact_trace(&p).unwrap();
    let rp = m11_random_phase(&p, &(0..20).collect::<Vec<_>>()).unwrap();
    let (e, m, se) = (
        exact.m11.unwrap(),
        rp.m11.unwrap(),
        rp.m11_stderr.unwrap(),
    );
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for k in 0..e.len() {
        let d = (m[k] - e[k]).abs();
        if d > 3.0 * se[k] {
            ok = false;
        }
        if se[k] > 0.0 {
            worst = worst.max(d / se[k]);
        }
    }
    Outcome {
        name: "random-phase vs exact-trace M11 (N=8, 20 seeds)",
        pass: ok,
        known_unattainable: false,
        detail: format!("max deviation {worst:.2} standard errors over {} points (<=3)", e.len()),
    }
}

fn saturation(runs: &mut Runs) -> Outcome {
    let mut pass11 = true;
    let mut passmb = true;
    let mut parts = Vec::new();
    let mut budget = true;
    for n in [10, 12] {
        let run = runs.get(n, 0.1);
        let s = &run.series;
        let m11 = window_mean(&s.t, s.m11.as_ref().unwrap(), LATE_WINDOW.0, LATE_WINDOW.1);
        let mmb = window_mean(&s.t, s.m_mb.as_ref().unwrap(), LATE_WINDOW.0, LATE_WINDOW.1);
        let (lo, hi) = (0.5 / n as f64, 2.0 / n as f64);
        let bound = 10.0 * 0.5f64.powi(n as i32);
        pass11 &= m11 >= lo && m11 <= hi;
        passmb &= mmb < bound;
        if n == 12 {
            budget = run.mmb_secs < 1800.0;
        }
        parts.push(format!(
            "N={n}: M11 {m11:.4} in [{lo:.4}, {hi:.4}], M_MB {mmb:.2e} vs <{bound:.2e}, exact M_MB {:.0}s",
            run.mmb_secs
        ));
    }
    let known = pass11 && budget && !passmb;
    Outcome {
        name: "saturation plateaus (N in {10, 12}, J_sigma=0.1, late window t in [30, 40])",
        pass: pass11 && passmb && budget,
        known_unattainable: known,
        detail: format!(
            "{}{}",
            parts.join("; "),
            if known {
                " [M_MB bound is below the sector-weighted random-matrix floor (N+1)/2^N]"
            } else {
                ""
            }
        ),
    }
}

fn collapse(runs: &mut Runs, sweep_start: Instant) -> Outcome {
    let mut early_ok = true;
    let mut early = Vec::new();
    let mut tables = Vec::new();
    for n in [10, 12, 14] {
        for js in [0.1, 0.2] {
            let tab = runs.table(n, js);
            let first: Vec<f64> = tab.rows.iter().filter(|r| r.valid).take(3).map(|r| r.f).collect();
            let f0 = first.iter().sum::<f64>() / first.len().max(1) as f64;
            early_ok &= first.len() == 3 && (0.23..=0.27).contains(&f0);
            early.push(format!("{f0:.4}"));
            tables.push(tab);
        }
    }
    let report = collapse_check(&tables).unwrap();
    let spread_ok = !report.empty && report.max_spread < 0.10;

    let mut depart_ok = true;
    let mut departs = Vec::new();
    for n in [10, 12, 14] {
        let d: Vec<Option<f64>> = [0.1, 0.2, 0.3].iter().map(|&js| runs.table(n, js).departure_time()).collect();
        let ok = match (d[0], d[1], d[2]) {
            (Some(a), Some(b), Some(c)) => c < a && c < b,
            (_, _, Some(_)) => true,
            _ => false,
        };
        depart_ok &= ok;
        departs.push(format!(
            "N={n}: {}",
            d.iter()
                .map(|x| x.map_or("none".to_string(), |v| format!("{v:.2}")))
                .collect::<Vec<_>>()
                .join("/")
        ));
    }
    let elapsed = secs(sweep_start);
    let window = report
        .window
        .map_or("none".to_string(), |(a, b)| format!("[{a:.2}, {b:.2}]"));
    Outcome {
        name: "scaling collapse (N in {10, 12, 14} x J_sigma in {0.1, 0.2}; 0.3 departs first)",
        pass: early_ok && spread_ok && depart_ok && elapsed < 4.0 * 3600.0,
        known_unattainable: false,
        detail: format!(
            "early f [{}] in [0.23, 0.27]; max spread {:.2}% over {window} (<10%); departure t (0.1/0.2/0.3) {}; sweep {:.0}s",
            early.join(", "),
            100.0 * report.max_spread,
            departs.join(", "),
            elapsed
        ),
    }
}

fn figure_shape(runs: &mut Runs) -> Outcome {
    let n = 14;
    let spec = ModelSpec::xxz_ring(n, 0.1);
    let s = &runs.get(n, 0.1).series;
    let t = &s.t;
    let (m11, mmb, mx) = (
        s.m11.as_ref().unwrap(),
        s.m_mb.as_ref().unwrap(),
        s.m_x.as_ref().unwrap(),
    );

    let identity = (0..t.len())
        .map(|k| (m11[k] - (mmb[k] + mx[k])).abs())
        .fold(0.0, f64::max);
    let identity_ok = identity <= 1e-15;

    let hint = predict(PredictionKind::M11Order2, &spec).unwrap().validity_hint.unwrap();
    let early: Vec<usize> = (1..t.len()).filter(|&k| t[k] <= hint).collect();
    let rises = mx[0] == 0.0 && early.windows(2).all(|w| mx[w[1]] > mx[w[0]]) && mx[early[0]] > 0.0;

    let peak = (0..t.len()).max_by(|&a, &b| mx[a].total_cmp(&mx[b])).unwrap();
    let plateau_x = window_mean(t, mx, LATE_WINDOW.0, LATE_WINDOW.1);
    let plateau_11 = window_mean(t, m11, LATE_WINDOW.0, LATE_WINDOW.1);
    let onset = (0..t.len())
        .find(|&k| m11[k] <= 1.25 * plateau_11)
        .map_or(f64::INFINITY, |k| t[k]);
    let secondary = (1..t.len() - 1)
        .filter(|&k| k != peak && mx[k] >= mx[k - 1] && mx[k] >= mx[k + 1])
        .map(|k| mx[k])
        .fold(f64::NEG_INFINITY, f64::max);
    let dominant = peak > 0
        && peak < t.len() - 1
        && t[peak] < onset
        && secondary - plateau_x <= 0.5 * (mx[peak] - plateau_x);

    let mut worst: f64 = 0.0;
    for (kind, series, deficit) in [
        (PredictionKind::M11Order2, m11, true),
        (PredictionKind::MmbOrder2, mmb, true),
        (PredictionKind::MxOrder2, mx, false),
    ] {
        let pred = predict(kind, &spec).unwrap();
        for &k in &early {
            let p = pred.coefficient * t[k] * t[k];
            let v = if deficit { 1.0 - series[k] } else { series[k] };
            worst = worst.max((v - p).abs() / p);
        }
    }
    let bounds_ok = worst < 0.10;
    Outcome {
        name: "echo decomposition shape (N=14, J_sigma=0.1, sampled M_MB k=1024)",
        pass: identity_ok && rises && dominant && bounds_ok,
        known_unattainable: false,
        detail: format!(
            "M11-(M_MB+M_X) max {identity:.1e}; M_X rises on t<={hint:.3}: {rises}; peak {:.4} at t={:.2} (saturation onset t={onset:.2}, plateau {plateau_x:.4}, next local max {secondary:.4}); short-time curves within {:.2}% (<10%) on {} points",
            mx[peak],
            t[peak],
            100.0 * worst,
            early.len()
        ),
    }
}

fn main() {
    // `cargo test -- --list` and filters from the libtest harness are ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        let tag = match (o.pass, o.known_unattainable) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known unattainable)",
            (false, false) => "FAIL",
        };
        println!("{tag}: {} -- {}", o.name, o.detail);
        outcomes.push(o);
    };

    report(perfect_reversal());
    let short = short_run();
    report(short_time_local(&short));
    report(short_time_many_body(&short));
    report(trace_identities());
    report(fourth_order());
    report(estimator_equivalence());

    let sweep_start = Instant::now();
    let mut runs = Runs {
        cache: BTreeMap::new(),
    };
    report(saturation(&mut runs));
    report(collapse(&mut runs, sweep_start));
    report(figure_shape(&mut runs));

    let passed = outcomes.iter().filter(|o| o.pass).count();
    let hard = outcomes
        .iter()
        .filter(|o| !o.pass && !o.known_unattainable)
        .count();
    println!(
        "acceptance: {passed}/{} criteria pass, {} known unattainable, {hard} unexpected failures",
        outcomes.len(),
        outcomes.len() - passed - hard
    );
    if hard > 0 {
        std::process::exit(1);
    }
}
