//! `star` command-line front end.
//!
//! Every subcommand writes its data files into `--out` (atomically, via a
//! temporary file in the same directory) and prints a short rendering of the
//! main result to stdout in the requested `--format`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use star_core::estimator::{build_report, EstimateConfig, EstimateError, EstimateReport, TrotterCost};
use star_core::fabric::Clock;
use star_core::hubbard::HubbardSpec;
use star_core::injection::{Basis, InjectionConfig, PassRate};
use star_core::qcels::{run_demo, DemoReport, SyntheticSpectrum};
use star_core::rus::{
    calibrate_pass_rate, expected_trials, fabric_side_for, simulate_layout, InjectionMode, RusLayout, RusStats,
    RusSummary,
};
use star_core::trotter::{
    compile_step, rough_rus_clocks, serial_clocks, simulate_step, trotter_clocks, StepMode, TrotterSchedule,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "STAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "star", version, about = "Lattice-surgery Trotter compiler and QPE resource estimator")]
pub struct Cli {
    /// Seed for every Monte Carlo draw.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "star-out")]
    pub out: PathBuf,
    /// Rendering printed to stdout; data files keep their own formats.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads for Monte Carlo runs (0 = all cores; STAR_THREADS overrides).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Table of ⟨K⟩_M, the mean trial count of the slowest of M RUS processes.
    AvgTrials(AvgTrialsArgs),
    /// Monte Carlo of M parallel RUS processes.
    SimulateRus(SimulateRusArgs),
    /// Compile one Trotter step into a lattice-surgery timeline.
    CompileTrotter(CompileTrotterArgs),
    /// Serial versus parallel per-step clocks.
    CompareSerial(CompareSerialArgs),
    /// Full QPE resource estimate.
    Estimate(EstimateArgs),
    /// Multi-level QCELS on a synthetic spectrum.
    QcelsDemo(QcelsDemoArgs),
}

#[derive(Debug, Args)]
pub struct AvgTrialsArgs {
    #[arg(long, default_value_t = 64)]
    pub m_max: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Z,
    Zz,
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Basis {
        match b {
            BasisArg::Z => Basis::Z,
            BasisArg::Zz => Basis::Zz,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Naive,
    Adaptive,
    Both,
}

#[derive(Debug, Args)]
pub struct InjectionArgs {
    /// Code distance of the injection patches.
    #[arg(long, default_value_t = 9)]
    pub d: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub p_phys: f64,
    /// Constant post-selection pass rate.
    #[arg(long, default_value_t = 1.0)]
    pub p_pass: f64,
    #[arg(long, default_value_t = 3)]
    pub attempts: u32,
}

impl InjectionArgs {
    fn config(&self) -> Result<InjectionConfig, CliError> {
        let mut cfg = InjectionConfig::for_distance(self.d, self.p_phys);
        cfg.p_pass = PassRate::Constant(self.p_pass);
        cfg.attempts_per_clock = self.attempts;
        cfg.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateRusArgs {
    /// Number of parallel processes.
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = BasisArg::Z)]
    pub basis: BasisArg,
    /// Target rotation angle θ*.
    #[arg(long, default_value_t = 1e-3)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    /// Fit the pass rate so the naive mean equals this many clocks.
    #[arg(long)]
    pub calibrate_naive: Option<f64>,
    #[command(flatten)]
    pub injection: InjectionArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StepModeArg {
    Plain,
    Controlled,
}

#[derive(Debug, Args)]
pub struct CompileTrotterArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 4.0)]
    pub u: f64,
    /// Trotter step Δτ in model units.
    #[arg(long, default_value_t = 0.05)]
    pub dtau: f64,
    #[arg(long, value_enum, default_value_t = StepModeArg::Plain)]
    pub mode: StepModeArg,
    /// Also simulate this many whole steps.
    #[arg(long, default_value_t = 0)]
    pub runs: usize,
    #[command(flatten)]
    pub injection: InjectionArgs,
}

#[derive(Debug, Args)]
pub struct CompareSerialArgs {
    /// Lattice sides to compare (repeatable).
    #[arg(long = "n", default_values_t = [4usize])]
    pub sizes: Vec<usize>,
    /// Monte Carlo runs per size; 0 uses the rough 2⟨K⟩ model.
    #[arg(long, default_value_t = 500)]
    pub runs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub dtau: f64,
    #[command(flatten)]
    pub injection: InjectionArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Lattice side; overrides model.n from the config.
    #[arg(long)]
    pub n: Option<usize>,
    /// JSON config; omitted sections take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Recover W from a published longest-circuit step count.
    #[arg(long)]
    pub calibrate_nmax: Option<f64>,
    /// Use this per-step clock count instead of simulating.
    #[arg(long)]
    pub t_trotter: Option<f64>,
    /// Monte Carlo runs for the per-step clock count; 0 uses the rough model.
    #[arg(long, default_value_t = 300)]
    pub runs: usize,
}

#[derive(Debug, Args)]
pub struct QcelsDemoArgs {
    /// JSON {"phases": [...], "weights": [...]}; default is a three-phase spectrum with p0 = 0.8.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.06)]
    pub delta: f64,
    #[arg(long, default_value_t = 5)]
    pub pairs: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Infeasible(String),
    Io(io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Invalid(_) | CliError::Io(_) => EXIT_INVALID,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        if e.is_infeasible() {
            CliError::Infeasible(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut io::stdout().lock(), &mut io::stderr().lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: usize) -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| invalid(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(flag),
    }
}

/// Run a parsed command and return the stdout rendering.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cli.threads)?)
        .build()
        .map_err(invalid)?;
    fs::create_dir_all(&cli.out)?;
    pool.install(|| match &cli.command {
        Command::AvgTrials(a) => avg_trials(cli, a),
        Command::SimulateRus(a) => simulate_rus(cli, a),
        Command::CompileTrotter(a) => compile_trotter(cli, a),
        Command::CompareSerial(a) => compare_serial(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::QcelsDemo(a) => qcels_demo(cli, a),
    })
}

/// Write `bytes` to `dir/name` through a temporary file and rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| CliError::Io(e.error))?;
    Ok(path)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    fn json(&self) -> String {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.header
                    .iter()
                    .zip(r)
                    .map(|(h, v)| {
                        let val = v.parse::<f64>().ok().and_then(|x| serde_json::Number::from_f64(x)).map_or_else(
                            || serde_json::Value::String(v.clone()),
                            serde_json::Value::Number,
                        );
                        (h.to_string(), val)
                    })
                    .collect()
            })
            .collect();
        to_json(&rows)
    }

    fn text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|i| self.rows.iter().map(|r| r[i].len()).chain([self.header[i].len()]).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        let line = |cells: Vec<&str>, s: &mut String| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            s.push_str(parts.join("  ").trim_end());
            s.push('\n');
        };
        line(self.header.clone(), &mut s);
        for r in &self.rows {
            line(r.iter().map(String::as_str).collect(), &mut s);
        }
        s
    }

    fn render(&self, f: Format) -> String {
        match f {
            Format::Csv => self.csv(),
            Format::Json => self.json(),
            Format::Text => self.text(),
        }
    }
}

fn avg_trials(cli: &Cli, a: &AvgTrialsArgs) -> Result<String, CliError> {
    if a.m_max == 0 {
        return Err(invalid("--m-max must be at least 1"));
    }
    let table = Table {
        header: vec!["m", "expected_trials"],
        rows: (1..=a.m_max).map(|m| vec![m.to_string(), format!("{:.12}", expected_trials(m))]).collect(),
    };
    write_atomic(&cli.out, "avg_trials.csv", table.csv().as_bytes())?;
    Ok(table.render(cli.format))
}

#[derive(Serialize)]
struct RusReport {
    m: usize,
    basis: Basis,
    theta: f64,
    runs: usize,
    seed: u64,
    p_pass: f64,
    calibrated: bool,
    lower_bound: f64,
    naive: Option<RusSummary>,
    adaptive: Option<RusSummary>,
    reduction_pct: Option<f64>,
}

fn simulate_rus(cli: &Cli, a: &SimulateRusArgs) -> Result<String, CliError> {
    if a.m == 0 || a.runs == 0 {
        return Err(invalid("--m and --runs must be at least 1"));
    }
    let basis = Basis::from(a.basis);
    let mut cfg = a.injection.config()?;
    let layout = RusLayout::fabric(fabric_side_for(a.m, basis), a.m, basis, a.theta).map_err(invalid)?;
    let mut p_pass = a.injection.p_pass;
    if let Some(target) = a.calibrate_naive {
        p_pass = calibrate_pass_rate(&layout, &cfg, InjectionMode::Naive, target, a.runs, cli.seed)
            .map_err(|e| CliError::Infeasible(e.to_string()))?;
        cfg.p_pass = PassRate::Constant(p_pass);
    }
    let sim = |mode| simulate_layout(&layout, &cfg, mode, a.runs, cli.seed).map_err(|e| CliError::Infeasible(e.to_string()));
    let naive = matches!(a.mode, ModeArg::Naive | ModeArg::Both).then(|| sim(InjectionMode::Naive)).transpose()?;
    let adaptive = matches!(a.mode, ModeArg::Adaptive | ModeArg::Both).then(|| sim(InjectionMode::Adaptive)).transpose()?;

    let mut hist = String::from("mode,clocks,count\n");
    for (name, stats) in [("naive", &naive), ("adaptive", &adaptive)] {
        if let Some(s) = stats {
            for (c, k) in s.histogram() {
                let _ = writeln!(hist, "{name},{c},{k}");
            }
        }
    }
    let reduction_pct = match (&naive, &adaptive) {
        (Some(n), Some(ad)) => Some(100.0 * (1.0 - ad.mean() / n.mean())),
        _ => None,
    };
    let report = RusReport {
        m: a.m,
        basis,
        theta: a.theta,
        runs: a.runs,
        seed: cli.seed,
        p_pass,
        calibrated: a.calibrate_naive.is_some(),
        lower_bound: 1.0 + star_core::rus::measurement_clocks(basis) as f64 * expected_trials(a.m as u32),
        naive: naive.as_ref().map(|s: &RusStats| s.summary(cli.seed)),
        adaptive: adaptive.as_ref().map(|s| s.summary(cli.seed)),
        reduction_pct,
    };
    write_atomic(&cli.out, "rus_histogram.csv", hist.as_bytes())?;
    let json = to_json(&report);
    write_atomic(&cli.out, "rus_summary.json", json.as_bytes())?;
    let mut table = Table { header: vec!["mode", "mean", "p50", "p95", "max"], rows: Vec::new() };
    for (name, s) in [("naive", &report.naive), ("adaptive", &report.adaptive)] {
        if let Some(s) = s {
            table.rows.push(vec![
                name.into(),
                format!("{:.3}", s.mean),
                s.p50.to_string(),
                s.p95.to_string(),
                s.max.to_string(),
            ]);
        }
    }
    Ok(match cli.format {
        Format::Json => json,
        f => table.render(f),
    })
}

#[derive(Serialize)]
struct GroupRow {
    count: usize,
    basis: Basis,
    theta: f64,
}

#[derive(Serialize)]
struct TrotterSummary {
    n: usize,
    mode: StepMode,
    dtau: f64,
    batches: usize,
    rus_groups: Vec<GroupRow>,
    fixed_clocks: Clock,
    #[serde(rename = "L")]
    fswap_layers: usize,
    formula_clocks: f64,
    timeline_horizon: Clock,
    simulated: Option<RusSummary>,
}

fn compile(n: usize, t: f64, u: f64, dtau: f64, mode: StepMode) -> Result<TrotterSchedule, CliError> {
    let spec = HubbardSpec::new(n, t, u).map_err(invalid)?;
    compile_step(&spec, dtau, mode).map_err(invalid)
}

fn compile_trotter(cli: &Cli, a: &CompileTrotterArgs) -> Result<String, CliError> {
    let mode = match a.mode {
        StepModeArg::Plain => StepMode::Plain,
        StepModeArg::Controlled => StepMode::Controlled,
    };
    let s = compile(a.n, a.t, a.u, a.dtau, mode)?;
    let simulated = if a.runs > 0 {
        let cfg = a.injection.config()?;
        let stats = simulate_step(&s, &cfg, InjectionMode::Adaptive, a.runs, cli.seed).map_err(invalid)?;
        Some(stats.summary(cli.seed))
    } else {
        None
    };
    let extra = if mode == StepMode::Controlled { 18.0 } else { 0.0 };
    let summary = TrotterSummary {
        n: a.n,
        mode,
        dtau: a.dtau,
        batches: s.batches.len(),
        rus_groups: s.rus_groups().into_iter().map(|g| GroupRow { count: g.count, basis: g.basis, theta: g.theta }).collect(),
        fixed_clocks: s.fixed_clocks(),
        fswap_layers: s.fswap_layers(),
        formula_clocks: trotter_clocks(a.n, |m, _| rough_rus_clocks(m)) + extra,
        timeline_horizon: s.timeline.horizon(),
        simulated,
    };
    write_atomic(&cli.out, "timeline.jsonl", s.timeline.to_jsonl().as_bytes())?;
    let json = to_json(&summary);
    write_atomic(&cli.out, "trotter_summary.json", json.as_bytes())?;
    Ok(match cli.format {
        Format::Json => json,
        f => Table {
            header: vec!["n", "mode", "fixed_clocks", "L", "formula_clocks", "simulated_mean"],
            rows: vec![vec![
                a.n.to_string(),
                format!("{mode:?}").to_lowercase(),
                summary.fixed_clocks.to_string(),
                summary.fswap_layers.to_string(),
                format!("{:.3}", summary.formula_clocks),
                summary.simulated.as_ref().map_or("-".into(), |s| format!("{:.3}", s.mean)),
            ]],
        }
        .render(f),
    })
}

fn compare_serial(cli: &Cli, a: &CompareSerialArgs) -> Result<String, CliError> {
    let cfg = a.injection.config()?;
    let mut table = Table { header: vec!["n", "serial_clocks", "parallel_clocks", "reduction_pct"], rows: Vec::new() };
    for &n in &a.sizes {
        let parallel = if a.runs == 0 {
            trotter_clocks(n, |m, _| rough_rus_clocks(m))
        } else {
            let s = compile(n, 1.0, 4.0, a.dtau, StepMode::Plain)?;
            simulate_step(&s, &cfg, InjectionMode::Adaptive, a.runs, cli.seed).map_err(invalid)?.mean()
        };
        let serial = serial_clocks(n);
        table.rows.push(vec![
            n.to_string(),
            serial.to_string(),
            format!("{parallel:.3}"),
            format!("{:.3}", 100.0 * (1.0 - parallel / serial as f64)),
        ]);
    }
    write_atomic(&cli.out, "compare_serial.csv", table.csv().as_bytes())?;
    Ok(table.render(cli.format))
}

/// Parse a config, reporting the path of the offending key on failure.
pub fn parse_config(text: &str) -> Result<EstimateConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Invalid(format!("config key `{path}`: {}", e.into_inner()))
    })
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<String, CliError> {
    let mut cfg = match &a.config {
        Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?)?,
        None => EstimateConfig::default(),
    };
    if let Some(n) = a.n {
        cfg.model.n = n;
    }
    let spec = cfg.spec()?;
    let seed = cli.seed;
    let runs = a.runs;
    let sim = move |inj: &InjectionConfig, dtau: f64| -> Result<f64, String> {
        let s = compile_step(&spec, dtau, StepMode::Plain).map_err(|e| e.to_string())?;
        Ok(simulate_step(&s, inj, InjectionMode::Adaptive, runs, seed).map_err(|e| e.to_string())?.mean())
    };
    let cost = match (a.t_trotter, runs) {
        (Some(t), _) => TrotterCost::Given(t),
        (None, 0) => TrotterCost::Rough,
        (None, _) => TrotterCost::Simulate(&sim),
    };
    let report: EstimateReport = build_report(&cfg, cost, a.calibrate_nmax)?;
    let json = to_json(&report);
    write_atomic(&cli.out, "estimate_report.json", json.as_bytes())?;
    Ok(match cli.format {
        Format::Json => json,
        f => Table {
            header: vec!["n", "lambda", "n_total", "n_max", "d", "t_trotter", "total_runtime_s", "max_runtime_s", "n_qubit"],
            rows: vec![vec![
                report.n.to_string(),
                format!("{}", report.lambda),
                report.n_total.to_string(),
                report.n_max.to_string(),
                report.d.to_string(),
                format!("{:.3}", report.t_trotter),
                format!("{:.2}", report.total_runtime_s),
                format!("{:.3}", report.max_runtime_s),
                report.n_qubit.to_string(),
            ]],
        }
        .render(f),
    })
}

fn qcels_demo(cli: &Cli, a: &QcelsDemoArgs) -> Result<String, CliError> {
    let spectrum = match &a.spectrum {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let s: SyntheticSpectrum = serde_path_to_error::deserialize(de)
                .map_err(|e| invalid(format!("spectrum key `{}`: {}", e.path(), e.inner())))?;
            s
        }
        None => SyntheticSpectrum::demo(),
    };
    let report: DemoReport =
        run_demo(&spectrum, a.eps, a.delta, a.pairs, a.samples, a.trials, cli.seed).map_err(invalid)?;
    let json = to_json(&report);
    write_atomic(&cli.out, "qcels_demo.json", json.as_bytes())?;
    Ok(match cli.format {
        Format::Json => json,
        f => Table {
            header: vec!["trials", "success_rate", "median_error", "levels"],
            rows: vec![vec![
                report.trials.to_string(),
                format!("{:.3}", report.success_rate),
                format!("{:.6}", report.median_error),
                report.params.levels.to_string(),
            ]],
        }
        .render(f),
    })
}
