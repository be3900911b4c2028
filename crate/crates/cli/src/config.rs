//! Run configuration: layered key/value settings, presets and validation.
//!
//! Settings are collected as `(section, key) → text` in layers (built-in
//! defaults, preset, config file, command-line overrides) and only then
//! parsed, so the fully expanded configuration can be written back verbatim
//! into the manifest and hashed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use ini::Ini;
use sha2::{Digest, Sha256};

use spin_echo::basis::{binomial, MAX_SITES};
use spin_echo::echo::{MAX_EXACT_MMB_SITES, MAX_EXACT_TRACE_SITES};
use spin_echo::expansions::MAX_BRUTE_FORCE_SITES;
use spin_echo::hamiltonians::{Boundary, ModelSpec, SigmaFamily};
use spin_echo::propagator::{Method, PropagationConfig, DENSE_ORACLE_MAX_DIM};

/// Sections whose keys make up a run configuration, in canonical order.
const SECTIONS: [&str; 6] = ["run", "model", "grid", "estimators", "propagation", "output"];

/// Sections a manifest adds; ignored when a manifest is read back as a config.
const MANIFEST_PREFIXES: [&str; 3] = ["manifest", "derived", "results"];

const DEFAULTS: &[(&str, &str, &str)] = &[
    ("run", "task", "echo"),
    ("model", "n", "10"),
    ("model", "j0", "1"),
    ("model", "j_sigma", "0.1"),
    ("model", "alpha", "0"),
    ("model", "sigma", "nnn_xxz"),
    ("model", "boundary", "periodic"),
    ("model", "disorder_seed", "0"),
    ("grid", "t_max", "40"),
    ("grid", "n_points", "81"),
    ("estimators", "m11_mode", "random_phase"),
    ("estimators", "mmb_mode", "auto"),
    ("estimators", "realizations", "auto"),
    ("estimators", "seed", "0"),
    ("estimators", "samples", "1024"),
    ("propagation", "tol", "1e-9"),
    ("propagation", "max_krylov_dim", "40"),
    ("propagation", "dt_max", "8"),
    ("propagation", "method", "krylov"),
    ("output", "dir", "out"),
];

pub const PRESETS: [&str; 4] = ["fig3", "fig4", "identities", "appendix"];

fn preset_layer(name: &str) -> Option<Vec<(&'static str, &'static str, &'static str)>> {
    let layer = match name {
        "fig3" => vec![
            ("run", "task", "echo"),
            ("model", "n", "14"),
            ("model", "j_sigma", "0.1"),
            ("grid", "t_max", "40"),
            ("grid", "n_points", "161"),
            ("estimators", "m11_mode", "random_phase"),
            ("estimators", "mmb_mode", "sampled"),
            ("estimators", "samples", "1024"),
        ],
        "fig4" => vec![
            ("run", "task", "scaling"),
            ("model", "n", "10, 12, 14, 16"),
            ("model", "j_sigma", "0.1, 0.2, 0.3"),
            ("grid", "t_max", "40"),
            ("grid", "n_points", "81"),
            ("estimators", "m11_mode", "random_phase"),
            ("estimators", "mmb_mode", "auto"),
        ],
        "identities" => vec![
            ("run", "task", "identities"),
            ("model", "n", "8"),
            ("model", "j_sigma", "0.1"),
            ("model", "sigma", "generic_secular"),
            ("model", "alpha", "0, 0.5, 1"),
        ],
        // the quartic window is 0.05 (σ²σ₀²)^(−1/4) for J_Σ = 0.1, J₀ = 1
        "appendix" => vec![
            ("run", "task", "order4"),
            ("model", "n", "8"),
            ("model", "j_sigma", "0.1"),
            ("model", "sigma", "ising_nnn"),
            ("grid", "t_max", "0.22360679775"),
            ("grid", "n_points", "41"),
            ("estimators", "m11_mode", "exact_trace"),
            ("propagation", "tol", "1e-13"),
        ],
        _ => return None,
    };
    Some(layer)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Config,
    Capacity,
}

/// One validation finding, tied to the key that caused it.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Config => "config error",
            Severity::Capacity => "capacity error",
        };
        write!(f, "{tag}: [{}]: {}", self.key, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Echo,
    Scaling,
    Identities,
    Order4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum M11Kind {
    RandomPhase,
    ExactTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmbKind {
    Exact,
    Sampled,
    /// Exact up to 12 sites, sampled beyond.
    Auto,
}

pub const AUTO_EXACT_MMB_SITES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaKind {
    NnnXxz,
    GenericSecular,
    IsingNnn,
    OnsiteDisorder,
}

/// Parsed configuration; `settings` keeps the expanded text it came from.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub task: Task,
    pub n: Vec<usize>,
    pub j0: f64,
    pub j_sigma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub sigma: SigmaKind,
    pub boundary: Boundary,
    pub disorder_seed: u64,
    pub t_max: f64,
    pub n_points: usize,
    pub m11_mode: M11Kind,
    pub mmb_mode: MmbKind,
    pub realizations: Option<usize>,
    pub seed: u64,
    pub samples: usize,
    pub propagation: PropagationConfig,
    pub out_dir: PathBuf,
    pub settings: Settings,
}

/// Layered `(section, key) → value` text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<(String, String), String>,
}

impl Settings {
    pub fn defaults() -> Self {
        let mut s = Settings::default();
        for &(sec, key, val) in DEFAULTS {
            s.set(sec, key, val);
        }
        s
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.values
            .insert((section.to_string(), key.to_string()), value.trim().to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<(), Diagnostic> {
        let layer = preset_layer(name).ok_or_else(|| Diagnostic {
            severity: Severity::Config,
            key: "run.preset".into(),
            message: format!("unknown preset {name:?}; expected one of {}", PRESETS.join(", ")),
        })?;
        for (sec, key, val) in layer {
            self.set(sec, key, val);
        }
        self.set("run", "preset", name);
        Ok(())
    }

    /// Overlays an INI document. A `run.preset` key in the file is applied
    /// first so that the file's other keys override it.
    pub fn apply_ini(&mut self, text: &str) -> Vec<Diagnostic> {
        let doc = match Ini::load_from_str(text) {
            Ok(d) => d,
            Err(e) => {
                return vec![Diagnostic {
                    severity: Severity::Config,
                    key: "file".into(),
                    message: format!("cannot parse config: {e}"),
                }]
            }
        };
        let mut diags = Vec::new();
        if let Some(p) = doc.section(Some("run")).and_then(|s| s.get("preset")) {
            if let Err(d) = self.apply_preset(p.trim()) {
                diags.push(d);
            }
        }
        for (sec, props) in doc.iter() {
            let Some(sec) = sec else {
                for (k, _) in props.iter() {
                    diags.push(unknown(format!("{k} (outside any section)")));
                }
                continue;
            };
            if MANIFEST_PREFIXES
                .iter()
                .any(|p| sec == *p || sec.starts_with(&format!("{p}.")))
            {
                continue;
            }
            if !SECTIONS.contains(&sec) {
                diags.push(unknown(format!("[{sec}]")));
                continue;
            }
            for (k, v) in props.iter() {
                let known = DEFAULTS.iter().any(|(s, key, _)| *s == sec && *key == k)
                    || (sec == "run" && k == "preset");
                if known {
                    self.set(sec, k, v);
                } else {
                    diags.push(unknown(format!("{sec}.{k}")));
                }
            }
        }
        diags
    }

    /// Canonical INI text, sections and keys in a fixed order.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        for sec in SECTIONS {
            out.push_str(&format!("[{sec}]\n"));
            for ((s, k), v) in &self.values {
                if s == sec {
                    out.push_str(&format!("{k} = {v}\n"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.to_ini().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn unknown(key: String) -> Diagnostic {
    Diagnostic {
        severity: Severity::Config,
        key: key.clone(),
        message: "unknown setting".into(),
    }
}

struct Parser<'a> {
    settings: &'a Settings,
    diags: Vec<Diagnostic>,
}

impl Parser<'_> {
    fn raw(&self, sec: &str, key: &str) -> &str {
        self.settings.get(sec, key).unwrap_or("")
    }

    fn fail(&mut self, sec: &str, key: &str, message: String) {
        self.diags.push(Diagnostic {
            severity: Severity::Config,
            key: format!("{sec}.{key}"),
            message,
        });
    }

    fn parse<T: std::str::FromStr>(&mut self, sec: &str, key: &str, what: &str, fallback: T) -> T {
        let raw = self.raw(sec, key).to_string();
        match raw.parse() {
            Ok(v) => v,
            Err(_) => {
                self.fail(sec, key, format!("{raw:?} is not {what}"));
                fallback
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, sec: &str, key: &str, what: &str) -> Vec<T> {
        let raw = self.raw(sec, key).to_string();
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.fail(sec, key, format!("{item:?} is not {what}"));
                    return Vec::new();
                }
            }
        }
        out
    }

    fn choice<T: Copy>(&mut self, sec: &str, key: &str, options: &[(&str, T)], fallback: T) -> T {
        let raw = self.raw(sec, key).to_string();
        match options.iter().find(|(name, _)| *name == raw) {
            Some(&(_, v)) => v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(sec, key, format!("{raw:?} is not one of {}", names.join(", ")));
                fallback
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates. Any diagnostic means the run must not start.
    pub fn from_settings(settings: Settings) -> (RunConfig, Vec<Diagnostic>) {
        let mut p = Parser {
            settings: &settings,
            diags: Vec::new(),
        };
        let task = p.choice(
            "run",
            "task",
            &[
                ("echo", Task::Echo),
                ("scaling", Task::Scaling),
                ("identities", Task::Identities),
                ("order4", Task::Order4),
            ],
            Task::Echo,
        );
        let n: Vec<usize> = p.list("model", "n", "a site count");
        let j0 = p.parse("model", "j0", "a number", 1.0);
        let j_sigma: Vec<f64> = p.list("model", "j_sigma", "a number");
        let alpha: Vec<f64> = p.list("model", "alpha", "a number");
        let sigma = p.choice(
            "model",
            "sigma",
            &[
                ("nnn_xxz", SigmaKind::NnnXxz),
                ("generic_secular", SigmaKind::GenericSecular),
                ("ising_nnn", SigmaKind::IsingNnn),
                ("onsite_disorder", SigmaKind::OnsiteDisorder),
            ],
            SigmaKind::NnnXxz,
        );
        let boundary = p.choice(
            "model",
            "boundary",
            &[("periodic", Boundary::Periodic), ("open", Boundary::Open)],
            Boundary::Periodic,
        );
        let disorder_seed = p.parse("model", "disorder_seed", "an unsigned integer", 0);
        let t_max = p.parse("grid", "t_max", "a number", 0.0);
        let n_points = p.parse("grid", "n_points", "an unsigned integer", 0);
        let m11_mode = p.choice(
            "estimators",
            "m11_mode",
            &[("random_phase", M11Kind::RandomPhase), ("exact_trace", M11Kind::ExactTrace)],
            M11Kind::RandomPhase,
        );
        let mmb_mode = p.choice(
            "estimators",
            "mmb_mode",
            &[("exact", MmbKind::Exact), ("sampled", MmbKind::Sampled), ("auto", MmbKind::Auto)],
            MmbKind::Auto,
        );
        let realizations = if p.raw("estimators", "realizations") == "auto" {
            None
        } else {
            Some(p.parse("estimators", "realizations", "\"auto\" or a count", 1))
        };
        let seed = p.parse("estimators", "seed", "an unsigned integer", 0);
        let samples = p.parse("estimators", "samples", "an unsigned integer", 0);
        let method = p.choice(
            "propagation",
            "method",
            &[("krylov", Method::Krylov), ("dense_oracle", Method::DenseOracle)],
            Method::Krylov,
        );
        let propagation = PropagationConfig {
            tol: p.parse("propagation", "tol", "a number", 1e-9),
            max_krylov_dim: p.parse("propagation", "max_krylov_dim", "an unsigned integer", 40),
            dt_max: p.parse("propagation", "dt_max", "a number", 8.0),
            method,
        };
        let out_dir = PathBuf::from(p.raw("output", "dir"));
        let preset = settings.get("run", "preset").map(str::to_string);
        let mut diags = p.diags;

        let cfg = RunConfig {
            preset,
            task,
            n,
            j0,
            j_sigma,
            alpha,
            sigma,
            boundary,
            disorder_seed,
            t_max,
            n_points,
            m11_mode,
            mmb_mode,
            realizations,
            seed,
            samples,
            propagation,
            out_dir,
            settings: settings.clone(),
        };
        if diags.is_empty() {
            diags.extend(cfg.check());
        }
        (cfg, diags)
    }

    /// Model for one point of the sweep.
    pub fn model(&self, n: usize, j_sigma: f64, alpha: f64) -> ModelSpec {
        let family = match self.sigma {
            SigmaKind::NnnXxz => SigmaFamily::NnnXxz {
                boundary: self.boundary,
            },
            SigmaKind::IsingNnn => SigmaFamily::IsingNnn {
                boundary: self.boundary,
            },
            SigmaKind::GenericSecular => SigmaFamily::GenericSecular {
                bonds: SigmaFamily::ring_nnn_bonds(n),
            },
            SigmaKind::OnsiteDisorder => SigmaFamily::OnsiteDisorder {
                fields: SigmaFamily::random_fields(n, self.disorder_seed),
            },
        };
        let mut spec = ModelSpec::xxz_ring(n, j_sigma).with_sigma(family);
        spec.j0 = self.j0;
        spec.alpha = alpha;
        spec
    }

    /// Number of random-phase realizations used for an `n`-site run.
    pub fn realizations_for(&self, n: usize) -> usize {
        self.realizations.unwrap_or(if n <= 10 { 20 } else { 1 })
    }

    pub fn mmb_exact_for(&self, n: usize) -> bool {
        match self.mmb_mode {
            MmbKind::Exact => true,
            MmbKind::Sampled => false,
            MmbKind::Auto => n <= AUTO_EXACT_MMB_SITES,
        }
    }

    fn check(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let mut push = |severity, key: &str, message: String| {
            d.push(Diagnostic {
                severity,
                key: key.to_string(),
                message,
            })
        };
        use Severity::{Capacity, Config};

        if self.n.is_empty() || self.j_sigma.is_empty() || self.alpha.is_empty() {
            push(Config, "model", "n, j_sigma and alpha need at least one value".into());
        }
        if let Err(e) = self.propagation.validate() {
            push(Config, "propagation", e.to_string());
        }
        if self.task != Task::Identities && self.alpha.len() > 1 {
            push(Config, "model.alpha", "a list of alpha values is only swept by the identities task".into());
        }
        match self.task {
            Task::Identities if self.sigma != SigmaKind::GenericSecular => push(
                Config,
                "model.sigma",
                "the identities task needs sigma = generic_secular".into(),
            ),
            Task::Order4 if !matches!(self.sigma, SigmaKind::IsingNnn | SigmaKind::OnsiteDisorder) => {
                push(
                    Config,
                    "model.sigma",
                    "the order4 task needs a perturbation commuting with S^z_1 (ising_nnn or onsite_disorder)".into(),
                )
            }
            Task::Order4 if self.m11_mode != M11Kind::ExactTrace => push(
                Config,
                "estimators.m11_mode",
                "the order4 task fits an exact-trace M11; set m11_mode = exact_trace".into(),
            ),
            Task::Scaling if self.n.len() * self.j_sigma.len() < 2 => push(
                Config,
                "model",
                "the scaling task needs at least two (n, j_sigma) combinations".into(),
            ),
            _ => {}
        }
        if self.task != Task::Identities {
            if self.n_points == 0 {
                push(Config, "grid.n_points", "empty time grid".into());
            } else if !(self.t_max.is_finite() && self.t_max >= 0.0) {
                push(Config, "grid.t_max", format!("t_max = {} must be >= 0", self.t_max));
            } else if self.n_points > 1 && self.t_max == 0.0 {
                push(Config, "grid.t_max", "t_max = 0 with more than one grid point".into());
            }
        }

        for &n in &self.n {
            if !(2..=MAX_SITES).contains(&n) {
                push(Capacity, "model.n", format!("n = {n} outside supported range 2..={MAX_SITES}"));
                continue;
            }
            for &js in &self.j_sigma {
                if let Err(e) = self.model(n, js, self.alpha.first().copied().unwrap_or(0.0)).validate() {
                    push(Config, "model", e.to_string());
                }
            }
            match self.task {
                Task::Identities | Task::Order4 if n > MAX_BRUTE_FORCE_SITES => push(
                    Capacity,
                    "model.n",
                    format!("brute-force traces are limited to n <= {MAX_BRUTE_FORCE_SITES}, got {n}"),
                ),
                Task::Identities => {}
                _ => {
                    if self.m11_mode == M11Kind::ExactTrace && n > MAX_EXACT_TRACE_SITES {
                        push(
                            Capacity,
                            "estimators.m11_mode",
                            format!(
                                "exact_trace is limited to n <= {MAX_EXACT_TRACE_SITES}, got {n}; use random_phase"
                            ),
                        );
                    }
                    let realizations = self.realizations_for(n);
                    if self.m11_mode == M11Kind::RandomPhase && realizations == 0 {
                        push(Config, "estimators.realizations", "need at least one realization".into());
                    }
                    if self.task != Task::Order4 {
                        if self.mmb_exact_for(n) {
                            if n > MAX_EXACT_MMB_SITES {
                                push(
                                    Capacity,
                                    "estimators.mmb_mode",
                                    format!(
                                        "exact M_MB is limited to n <= {MAX_EXACT_MMB_SITES}, got {n}; use mmb_mode = sampled"
                                    ),
                                );
                            }
                        } else {
                            let population = 1usize << (n - 1);
                            if self.samples > population || self.samples < n {
                                push(
                                    Config,
                                    "estimators.samples",
                                    format!(
                                        "samples = {} must lie in {n}..={population} for n = {n}",
                                        self.samples
                                    ),
                                );
                            }
                        }
                    }
                    if self.propagation.method == Method::DenseOracle {
                        let sector = binomial(n, n / 2) as usize;
                        let dim = match self.m11_mode {
                            M11Kind::RandomPhase => 1usize << n,
                            M11Kind::ExactTrace => sector,
                        };
                        if dim > DENSE_ORACLE_MAX_DIM {
                            push(
                                Capacity,
                                "propagation.method",
                                format!(
                                    "dense_oracle is limited to dimension {DENSE_ORACLE_MAX_DIM}, n = {n} needs {dim}; use krylov"
                                ),
                            );
                        }
                    }
                }
            }
        }
        d
    }
}

/// Builds the layered settings for a run: defaults, preset, file, then
/// explicit overrides.
pub fn assemble(
    preset: Option<&str>,
    file_text: Option<&str>,
    overrides: &[(&str, &str, String)],
) -> (Settings, Vec<Diagnostic>) {
    let mut settings = Settings::defaults();
    let mut diags = Vec::new();
    if let Some(p) = preset {
        if let Err(d) = settings.apply_preset(p) {
            diags.push(d);
        }
    }
    if let Some(text) = file_text {
        diags.extend(settings.apply_ini(text));
    }
    for (sec, key, val) in overrides {
        settings.set(sec, key, val);
    }
    (settings, diags)
}
