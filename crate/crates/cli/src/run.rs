//! Executes a validated configuration and writes CSVs plus a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spin_echo::analysis::{
    collapse_check, decay_rate_exponent, decay_time, eta_f, DecayQuantity, ScalingTable,
    DECAY_CONVENTION, SCALING_CSV_HEADER, VALIDITY_RULE,
};
use spin_echo::echo::{
    m11_exact_trace, run_echo, uniform_grid, EchoProtocol, EchoSeries, M11Mode, MmbMode,
};
use spin_echo::expansions::{
    fit_deficit, predict, residual_table, verify_trace_identities, PredictionKind,
};
use spin_echo::hamiltonians::{second_moments, ModelSpec};

use crate::config::{M11Kind, RunConfig, Task};
use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.ini";
pub const SCALING_CSV_NAME: &str = "scaling.csv";
pub const IDENTITIES_CSV_NAME: &str = "identities.csv";

/// Files written by one invocation.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

type Section = (String, Vec<(String, String)>);

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<PathBuf>,
    sections: Vec<Section>,
}

impl Writer<'_> {
    fn file(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        self.outputs.push(path);
        Ok(())
    }

    fn section(&mut self, name: String, entries: Vec<(String, String)>) {
        self.sections.push((name, entries));
    }
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Label used in file and section names for one sweep point.
pub fn run_tag(n: usize, j_sigma: f64) -> String {
    format!("n{n}_js{j_sigma}")
}

pub fn echo_csv_name(n: usize, j_sigma: f64) -> String {
    format!("echo_{}.csv", run_tag(n, j_sigma))
}

/// Model quantities a plotter needs to redraw the short-time parabolas.
fn derived_entries(spec: &ModelSpec) -> Vec<(String, String)> {
    let m = second_moments(spec);
    let mut e = vec![
        kv("n", spec.n),
        kv("j0", spec.j0),
        kv("j_sigma", spec.j_sigma),
        kv("alpha", spec.alpha),
        kv("sigma", spec.sigma.name()),
        kv("sigma2", m.sigma2),
        kv("sigma0_2", m.sigma0_2),
        kv("tau_sigma", opt(m.tau_sigma)),
        kv("t2", opt(m.t2)),
    ];
    let kinds: &[PredictionKind] = if spec.sigma.commutes_with_sz() {
        &[PredictionKind::M11Order4Commuting]
    } else {
        &[
            PredictionKind::M11Order2,
            PredictionKind::MmbOrder2,
            PredictionKind::MxOrder2,
        ]
    };
    for &k in kinds {
        if let Ok(p) = predict(k, spec) {
            e.push(kv(k.as_str(), p.coefficient));
            e.push(kv(&format!("{}_validity", k.as_str()), opt(p.validity_hint)));
        }
    }
    e
}

fn grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    Ok(uniform_grid(cfg.t_max, cfg.n_points)?)
}

fn echo_point(cfg: &RunConfig, n: usize, js: f64, w: &mut Writer) -> Result<EchoSeries, CliError> {
    let spec = cfg.model(n, js, cfg.alpha[0]);
    let started = Instant::now();
    let protocol = EchoProtocol::new(spec.clone(), cfg.propagation, grid(cfg)?)?;
    let m11 = match cfg.m11_mode {
        M11Kind::ExactTrace => M11Mode::ExactTrace,
        M11Kind::RandomPhase => M11Mode::RandomPhase {
            seeds: (0..cfg.realizations_for(n) as u64).map(|k| cfg.seed + k).collect(),
        },
    };
    let mmb = if cfg.mmb_exact_for(n) {
        MmbMode::Exact
    } else {
        MmbMode::Sampled {
            k: cfg.samples,
            seed: cfg.seed,
        }
    };
    let series = run_echo(&protocol, &m11, mmb)?;
    let name = echo_csv_name(n, js);
    w.file(&name, &series.to_csv())?;

    let mut entries = vec![kv("csv", &name)];
    entries.extend(derived_entries(&spec));
    entries.extend(series.meta.iter().map(|(k, v)| kv(k, v)));
    entries.push(kv("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64())));
    w.section(format!("derived.{}", run_tag(n, js)), entries);
    Ok(series)
}

fn sweep(cfg: &RunConfig, w: &mut Writer) -> Result<Vec<(usize, f64, EchoSeries)>, CliError> {
    let mut out = Vec::new();
    for &n in &cfg.n {
        for &js in &cfg.j_sigma {
            let series = echo_point(cfg, n, js, w)?;
            out.push((n, js, series));
        }
    }
    Ok(out)
}

fn scaling(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let runs = sweep(cfg, w)?;
    let mut tables: Vec<ScalingTable> = Vec::new();
    let mut csv = format!("{SCALING_CSV_HEADER}\n");
    for (n, js, series) in &runs {
        let table = eta_f(series, *n, *js)?;
        csv.push_str(&table.csv_rows());

        let mut entries = vec![
            kv("n", n),
            kv("j_sigma", js),
            kv("departure_time", opt(table.departure_time())),
            kv("decay_convention", DECAY_CONVENTION),
        ];
        for q in [DecayQuantity::M11, DecayQuantity::MMb] {
            let d = decay_time(series, q);
            entries.push(kv(&format!("t3_{}", q.as_str()), opt(d.as_ref().map(|d| d.t3))));
            entries.push(kv(&format!("plateau_{}", q.as_str()), opt(d.as_ref().map(|d| d.m_inf))));
        }
        w.section(format!("results.{}", run_tag(*n, *js)), entries);
        tables.push(table);
    }
    w.file(crate::run::SCALING_CSV_NAME, &csv)?;

    let mut summary = vec![kv("csv", SCALING_CSV_NAME), kv("validity_rule", VALIDITY_RULE)];
    let report = collapse_check(&tables)?;
    summary.push(kv("collapse_max_spread", report.max_spread));
    summary.push(kv("collapse_window", match report.window {
        Some((a, b)) => format!("{a}, {b}"),
        None => "none".into(),
    }));
    summary.push(kv("collapse_empty", report.empty));
    w.section("results.scaling".into(), summary);

    // size dependence of the decay rate at each coupling, exploratory only
    for &js in &cfg.j_sigma {
        let mut entries = vec![kv("j_sigma", js), kv("status", "exploratory")];
        for q in [DecayQuantity::M11, DecayQuantity::MMb] {
            let points: Vec<(usize, f64)> = runs
                .iter()
                .filter(|(_, j, _)| *j == js)
                .filter_map(|(n, _, s)| decay_time(s, q).map(|d| (*n, d.t3)))
                .collect();
            let fit = decay_rate_exponent(&points);
            entries.push(kv(&format!("nu_{}", q.as_str()), opt(fit.map(|f| f.nu))));
            entries.push(kv(&format!("prefactor_{}", q.as_str()), opt(fit.map(|f| f.prefactor))));
        }
        w.section(format!("results.exponent_js{js}"), entries);
    }
    Ok(())
}

fn identities(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for &n in &cfg.n {
        for &js in &cfg.j_sigma {
            for &alpha in &cfg.alpha {
                reports.push(verify_trace_identities(&cfg.model(n, js, alpha))?);
            }
        }
    }
    w.file(IDENTITIES_CSV_NAME, &residual_table(&reports))?;
    let worst = reports.iter().map(|r| r.max_residual()).fold(0.0, f64::max);
    w.section(
        "results.identities".into(),
        vec![
            kv("csv", IDENTITIES_CSV_NAME),
            kv("rows", reports.iter().map(|r| r.checks.len()).sum::<usize>()),
            kv("max_abs_residual", worst),
        ],
    );
    Ok(())
}

fn order4(cfg: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    for &n in &cfg.n {
        for &js in &cfg.j_sigma {
            let spec = cfg.model(n, js, cfg.alpha[0]);
            let protocol = EchoProtocol::new(spec.clone(), cfg.propagation, grid(cfg)?)?;
            let series = m11_exact_trace(&protocol)?;
            let name = format!("order4_{}.csv", run_tag(n, js));
            w.file(&name, &series.to_csv())?;

            let m11 = series.m11.as_deref().unwrap_or_default();
            let fit = fit_deficit(&series.t, m11, 4, cfg.t_max)?;
            let formula = predict(PredictionKind::M11Order4Commuting, &spec)?.coefficient;
            let mut entries = vec![kv("csv", &name)];
            entries.extend(derived_entries(&spec));
            entries.push(kv("fit_window", cfg.t_max));
            entries.push(kv("fit_points", fit.points));
            entries.push(kv("fit_coefficient", fit.coefficient));
            entries.push(kv("relative_difference", (fit.coefficient - formula).abs() / formula.abs()));
            w.section(format!("results.{}", run_tag(n, js)), entries);
        }
    }
    Ok(())
}

/// Runs the configured task. The configuration must already be valid.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    let mut w = Writer {
        dir,
        outputs: Vec::new(),
        sections: Vec::new(),
    };
    match cfg.task {
        Task::Echo => {
            sweep(cfg, &mut w)?;
        }
        Task::Scaling => scaling(cfg, &mut w)?,
        Task::Identities => identities(cfg, &mut w)?,
        Task::Order4 => order4(cfg, &mut w)?,
    }

    let names: Vec<String> = w
        .outputs
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    let mut text = cfg.settings.to_ini();
    let header = vec![
        kv("tool", env!("CARGO_PKG_NAME")),
        kv("version", env!("CARGO_PKG_VERSION")),
        kv("config_sha256", cfg.settings.sha256()),
        kv("threads", rayon::current_num_threads()),
        kv("outputs", names.join(", ")),
        kv("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64())),
    ];
    for (name, entries) in std::iter::once(("manifest".to_string(), header)).chain(w.sections) {
        let _ = writeln!(text, "[{name}]");
        for (k, v) in entries {
            let _ = writeln!(text, "{k} = {v}");
        }
        text.push('\n');
    }
    let manifest = dir.join(MANIFEST_NAME);
    fs::write(&manifest, text).map_err(|e| CliError::Io(manifest.display().to_string(), e))?;
    Ok(Outcome {
        outputs: w.outputs,
        manifest,
    })
}
