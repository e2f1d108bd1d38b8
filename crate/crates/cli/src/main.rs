//! `hydrogate`: batch driver for the analytical model, the transport oracle
//! and the calibration pipeline.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hydrogate::calibration::{
    build_selected, compare, fit, holdout_split, load_selected, oracle_shapes, write_rows_csv,
    CalibrationError, GAConfig,
};
use hydrogate::hydraulics::{HydraulicsError, HydraulicsReport, MeanVelocity};
use hydrogate::metrics::{prominent_peaks, ErrorMode, MetricsError, Trace};
use hydrogate::params::{expand_scenarios, ParamError, Scenario, ScenarioParameter};
use hydrogate::pulse_model::{
    generated_pulse, propagated_pulse, pulse_train, ModelError, ModelOptions, TrainWidth,
};
use hydrogate::transport_oracle::{
    measure_many, measure_scenario, run_params, GatingSchedule, OracleConfig, ProbeKind,
    ProfileConvention, RunRequest, TransportError,
};
use hydrogate::{FittingParams, SystemParameters};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("HYDROGATE_BUILD"));

#[derive(Parser)]
#[command(name = "hydrogate", version = VERSION, about = "Hydrodynamic-gating transmitter models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// System parameters as JSON; defaults to the reference configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one parameter, e.g. `--set u_s=0.012`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Fitting constants: `published`, a FittingParams JSON file, or a fit result.
    #[arg(long, default_value = "published")]
    k: String,
    #[arg(long, value_enum, default_value_t = VelocityArg::Approximate)]
    velocity: VelocityArg,
    /// Averaging window for `--velocity averaged`, s.
    #[arg(long, default_value_t = 20.0)]
    average_over: f64,
}

#[derive(Args, Clone)]
struct OracleArgs {
    #[arg(long, default_value_t = 20)]
    cells_across: usize,
    #[arg(long, default_value_t = 5.0)]
    window_start: f64,
    #[arg(long, default_value_t = 25.0)]
    horizon: f64,
    #[arg(long, value_enum, default_value_t = ConventionArg::MeanPreserving)]
    convention: ConventionArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum VelocityArg {
    Approximate,
    CircuitOn,
    Averaged,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    MeanPreserving,
    PeakEqualsMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeArg {
    Centerline,
    Section,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Normalized,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum WidthArg {
    Sigma,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioSet {
    /// All 30 protocol scenarios.
    Auto,
    /// The 20 calibration scenarios.
    Train,
    /// The 10 held-out scenarios.
    Holdout,
}

#[derive(Subcommand)]
enum Command {
    /// Channel resistances and mean propagation velocities.
    Hydraulics {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytical pulse shape and its axial profile.
    Analytic {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle run writing probe series, axial profiles and field snapshots.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Gating schedule JSON (`off_windows`, `horizon`); defaults to one
        /// window of length T_g at `--window-start`.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        probe_x: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        snapshot_t: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ProbeArg::Centerline)]
        lateral: ProbeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle pulse triple for one configuration, or a scenario cache.
    Measure {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        oracle: OracleArgs,
        /// Measure the protocol scenarios into `--oracle-cache`.
        #[arg(long, value_enum, requires = "oracle_cache")]
        scenarios: Option<ScenarioSet>,
        #[arg(long)]
        oracle_cache: Option<PathBuf>,
        /// Recompute entries that already exist.
        #[arg(long)]
        refresh: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One parameter varied over a list of values.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle_args: OracleArgs,
        /// One of c_s, u_s, r_u, T_g, l_ch, l_go.
        #[arg(long)]
        param: String,
        /// Defaults to the protocol values of the parameter.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Add oracle-measured columns.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Genetic-algorithm fit of the four constants to cached oracle results.
    Fit {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = ScenarioSet::Auto)]
        scenarios: ScenarioSet,
        #[arg(long)]
        oracle_cache: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Normalized)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ProbeArg::Centerline)]
        probe: ProbeArg,
        /// GA configuration JSON; `--seed` overrides its seed.
        #[arg(long)]
        ga: Option<PathBuf>,
        #[arg(long)]
        evaluators: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Successive-pulse train, analytical and optionally simulated.
    Train {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        oracle_args: OracleArgs,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, value_enum, default_value_t = WidthArg::Sigma)]
        width: WidthArg,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        /// Also run the oracle for the train.
        #[arg(long)]
        oracle: bool,
        /// Oracle probe position; defaults to mid-channel.
        #[arg(long)]
        probe_x: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        snapshot_t: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Residuals of a parameter set against cached oracle results.
    Compare {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum, default_value_t = ScenarioSet::Auto)]
        scenarios: ScenarioSet,
        #[arg(long)]
        oracle_cache: PathBuf,
        #[arg(long, default_value = "published")]
        k: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Normalized)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ProbeArg::Centerline)]
        probe: ProbeArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Serialize)]
struct CliError {
    error: &'static str,
    message: String,
}

impl CliError {
    fn new(error: &'static str, message: impl Display) -> Self {
        Self {
            error,
            message: message.to_string(),
        }
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        let kind = match e {
            ParamError::UnknownParameter(_) => "unknown_parameter",
            ParamError::Io(_) => "io",
            ParamError::Parse(_) => "parse",
            _ => "invalid_parameter",
        };
        Self::new(kind, e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::new("model", e)
    }
}

impl From<HydraulicsError> for CliError {
    fn from(e: HydraulicsError) -> Self {
        Self::new("hydraulics", e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::new("metrics", e)
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        Self::new("transport", e)
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        let kind = match e {
            CalibrationError::MissingCache { .. } => "missing_cache",
            CalibrationError::StaleCache { .. } => "stale_cache",
            CalibrationError::InsufficientScenarios { .. } => "insufficient_scenarios",
            CalibrationError::DegenerateOracle { .. } => "degenerate_oracle",
            _ => "calibration",
        };
        Self::new(kind, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn load_params(args: &ParamArgs) -> CliResult<SystemParameters> {
    let mut p = match &args.config {
        Some(path) => SystemParameters::load(path)?,
        None => SystemParameters::default(),
    };
    for item in &args.set {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::new("usage", format!("expected NAME=VALUE, got '{item}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| CliError::new("usage", format!("{name}: {e}")))?;
        p.set(name.trim(), value)?;
    }
    Ok(p.validate()?)
}

fn load_k(source: &str) -> CliResult<FittingParams> {
    if source == "published" {
        return Ok(FittingParams::published());
    }
    let text =
        fs::read_to_string(source).map_err(|e| CliError::new("io", format!("{source}: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = value.get("best").cloned().unwrap_or(value);
    let k: FittingParams = serde_json::from_value(inner)?;
    Ok(FittingParams::from_array(
        k.as_array(),
        k.provenance,
        k.bounds,
    )?)
}

fn model_options(m: &ModelArgs) -> ModelOptions {
    ModelOptions {
        velocity: match m.velocity {
            VelocityArg::Approximate => MeanVelocity::Approximate,
            VelocityArg::CircuitOn => MeanVelocity::CircuitOn,
            VelocityArg::Averaged => MeanVelocity::TimeAveraged(m.average_over),
        },
    }
}

fn oracle_config(o: &OracleArgs) -> OracleConfig {
    OracleConfig {
        cells_across: o.cells_across,
        window_start: o.window_start,
        horizon: o.horizon,
        convention: convention(o.convention),
        ..OracleConfig::default()
    }
}

fn convention(c: ConventionArg) -> ProfileConvention {
    match c {
        ConventionArg::MeanPreserving => ProfileConvention::MeanPreserving,
        ConventionArg::PeakEqualsMean => ProfileConvention::PeakEqualsMean,
    }
}

fn probe_kind(p: ProbeArg) -> ProbeKind {
    match p {
        ProbeArg::Centerline => ProbeKind::Centerline,
        ProbeArg::Section => ProbeKind::Section,
    }
}

fn error_mode(m: ModeArg) -> ErrorMode {
    match m {
        ModeArg::Normalized => ErrorMode::Normalized,
        ModeArg::Raw => ErrorMode::Raw,
    }
}

fn selection(set: ScenarioSet, n: usize) -> Vec<usize> {
    let (train, holdout) = holdout_split(n);
    match set {
        ScenarioSet::Auto => (0..n).collect(),
        ScenarioSet::Train => train,
        ScenarioSet::Holdout => holdout,
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult {
    let text = to_json(value)?;
    match out {
        Some(path) => write_text(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_trace(path: &Path, trace: &Trace, axis: &str) -> CliResult {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, axis)?;
    write_text(path, &String::from_utf8_lossy(&buf))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn csv_line(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Serialize)]
struct AnalyticReport {
    params: SystemParameters,
    k: FittingParams,
    generated_amplitude: f64,
    generated_width: f64,
    pulse: hydrogate::PulseShape,
}

fn cmd_analytic(params: &ParamArgs, model: &ModelArgs, points: usize, out: &Path) -> CliResult {
    let p = load_params(params)?;
    let k = load_k(&model.k)?;
    let opts = model_options(model);
    let gen = generated_pulse(&p, &k, opts)?;
    let pulse = propagated_pulse(&p, &k, opts)?;
    let report = AnalyticReport {
        params: p.clone(),
        k,
        generated_amplitude: gen.amplitude,
        generated_width: gen.width,
        pulse,
    };
    write_text(&out.join("pulse.json"), &to_json(&report)?)?;
    let trace = Trace::from_fn(
        linspace(p.generation_point, p.channel_length, points),
        |x| pulse.eval(x),
    );
    write_trace(&out.join("profile.csv"), &trace, "x_m")
}

fn load_schedule(
    path: Option<&Path>,
    p: &SystemParameters,
    o: &OracleArgs,
) -> CliResult<GatingSchedule> {
    match path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
            let raw: GatingSchedule = serde_json::from_str(&text)?;
            Ok(GatingSchedule::new(raw.off_windows, raw.horizon)?)
        }
        None => Ok(GatingSchedule::single(
            o.window_start,
            p.gate_duration,
            o.horizon,
        )?),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    params: &ParamArgs,
    o: &OracleArgs,
    schedule: Option<&Path>,
    probe_x: &[f64],
    snapshot_t: &[f64],
    lateral: ProbeArg,
    out: &Path,
) -> CliResult {
    let p = load_params(params)?;
    let schedule = load_schedule(schedule, &p, o)?;
    let probe_x = if probe_x.is_empty() {
        vec![p.generation_point, p.sampling_point]
    } else {
        probe_x.to_vec()
    };
    let request = RunRequest {
        probe_x: probe_x.clone(),
        profile_times: snapshot_t.to_vec(),
        snapshot_times: snapshot_t.to_vec(),
        check_balance: true,
        ..RunRequest::default()
    };
    let (grid, run) = run_params(
        &p,
        &schedule,
        o.cells_across,
        convention(o.convention),
        &request,
    )?;
    fs::create_dir_all(out)?;
    for probe in &run.probes {
        let trace = match lateral {
            ProbeArg::Centerline => &probe.centerline,
            ProbeArg::Section => &probe.section,
        };
        write_trace(&out.join(format!("trace_t_{}.csv", probe.x)), trace, "t_s")?;
    }
    for profile in &run.profiles {
        let trace = match lateral {
            ProbeArg::Centerline => &profile.centerline,
            ProbeArg::Section => &profile.section,
        };
        write_trace(
            &out.join(format!("trace_x_{}.csv", profile.t)),
            trace,
            "x_m",
        )?;
    }
    for field in &run.snapshots {
        let mut buf = Vec::new();
        field
            .write_csv(&grid, &mut buf)
            .map_err(|e| CliError::new("io", e))?;
        write_text(
            &out.join(format!("field_{}.csv", field.t)),
            &String::from_utf8_lossy(&buf),
        )?;
    }
    write_text(&out.join("run.json"), &to_json(&run.stats)?)
}

fn cmd_measure(
    params: &ParamArgs,
    o: &OracleArgs,
    scenarios: Option<ScenarioSet>,
    cache: Option<&Path>,
    refresh: bool,
    out: Option<&Path>,
) -> CliResult {
    let p = load_params(params)?;
    let cfg = oracle_config(o);
    match (scenarios, cache) {
        (Some(set), Some(dir)) => {
            let all = expand_scenarios(&p)?;
            let entries = build_selected(dir, &all, &selection(set, all.len()), &cfg, refresh)?;
            #[derive(Serialize)]
            struct Row<'a> {
                index: usize,
                name: &'a str,
                centerline: hydrogate::PulseShape,
                section: Option<hydrogate::PulseShape>,
            }
            let rows: Vec<Row> = entries
                .iter()
                .map(|e| Row {
                    index: e.index,
                    name: &e.scenario.name,
                    centerline: e.measurement.centerline.shape,
                    section: e.measurement.section.map(|s| s.shape),
                })
                .collect();
            emit(&rows, out)
        }
        _ => emit(&measure_scenario(&p, &cfg)?, out),
    }
}

fn cmd_sweep(
    params: &ParamArgs,
    model: &ModelArgs,
    o: &OracleArgs,
    name: &str,
    values: &[f64],
    with_oracle: bool,
    out: Option<&Path>,
) -> CliResult {
    let base = load_params(params)?;
    let param = ScenarioParameter::from_name(name).ok_or_else(|| {
        CliError::new(
            "unknown_parameter",
            format!("'{name}' is not one of c_s, u_s, r_u, T_g, l_ch, l_go"),
        )
    })?;
    let values = if values.is_empty() {
        param.protocol_values().to_vec()
    } else {
        values.to_vec()
    };
    let k = load_k(&model.k)?;
    let opts = model_options(model);
    let scenarios = values
        .iter()
        .map(|&v| Scenario::new(&base, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let sims = if with_oracle {
        let ps: Vec<SystemParameters> = scenarios.iter().map(|s| s.params.clone()).collect();
        measure_many(&ps, &oracle_config(o))
            .into_iter()
            .map(|r| r.map(|m| m.centerline.shape.triple()))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let mut text = String::from("param_value,A_p_ana,W_p_ana,T_d_ana");
    if with_oracle {
        text.push_str(",A_p_sim,W_p_sim,T_d_sim");
    }
    text.push('\n');
    for (i, s) in scenarios.iter().enumerate() {
        let mut row = vec![s.value];
        row.extend(propagated_pulse(&s.params, &k, opts)?.triple());
        if with_oracle {
            row.extend(sims[i]);
        }
        text.push_str(&csv_line(&row));
        text.push('\n');
    }
    match out {
        Some(path) => write_text(path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cached_shapes(
    base: &SystemParameters,
    set: ScenarioSet,
    dir: &Path,
    probe: ProbeArg,
) -> CliResult<(Vec<Scenario>, Vec<hydrogate::PulseShape>)> {
    let all = expand_scenarios(base)?;
    let idx = selection(set, all.len());
    let entries = load_selected(dir, &all, &idx)?;
    let shapes = oracle_shapes(&entries, probe_kind(probe))?;
    Ok((idx.iter().map(|&i| all[i].clone()).collect(), shapes))
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    params: &ParamArgs,
    set: ScenarioSet,
    cache: &Path,
    seed: u64,
    mode: ModeArg,
    probe: ProbeArg,
    ga_path: Option<&Path>,
    evaluators: Option<usize>,
    out: &Path,
) -> CliResult {
    let base = load_params(params)?;
    let (scenarios, shapes) = cached_shapes(&base, set, cache, probe)?;
    let mut ga = match ga_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
            serde_json::from_str::<GAConfig>(&text)?
        }
        None => GAConfig::default(),
    };
    ga.seed = seed;
    if let Some(n) = evaluators {
        ga.evaluators = n;
    }
    let result = fit(&scenarios, &shapes, &ga, error_mode(mode))?;
    write_text(out, &to_json(&result)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    params: &ParamArgs,
    model: &ModelArgs,
    o: &OracleArgs,
    count: usize,
    width: WidthArg,
    points: usize,
    with_oracle: bool,
    probe_x: Option<f64>,
    snapshot_t: &[f64],
    out: &Path,
) -> CliResult {
    let p = load_params(params)?;
    let k = load_k(&model.k)?;
    let width = match width {
        WidthArg::Sigma => TrainWidth::Sigma,
        WidthArg::Full => TrainWidth::FullWidth,
    };
    let train = pulse_train(&p, &k, count, model_options(model), width)?;
    write_text(&out.join("train.json"), &to_json(&train)?)?;
    let trace = Trace::from_fn(
        linspace(p.generation_point, p.channel_length, points),
        |x| train.eval(x),
    );
    write_trace(&out.join("train_profile.csv"), &trace, "x_m")?;
    if !with_oracle {
        return Ok(());
    }

    let schedule = GatingSchedule::uniform_train(
        o.window_start,
        p.gate_duration,
        p.gate_period,
        count,
        o.horizon,
    )?;
    let x = probe_x.unwrap_or(0.5 * p.channel_length);
    let request = RunRequest {
        probe_x: vec![x],
        profile_times: snapshot_t.to_vec(),
        ..RunRequest::default()
    };
    let (_, run) = run_params(
        &p,
        &schedule,
        o.cells_across,
        convention(o.convention),
        &request,
    )?;
    let series = &run.probes[0].centerline;
    write_trace(&out.join(format!("oracle_trace_t_{x}.csv")), series, "t_s")?;

    #[derive(Serialize)]
    struct Profile {
        t: f64,
        peaks_m: Vec<f64>,
        mean_spacing_m: Option<f64>,
    }
    #[derive(Serialize)]
    struct OracleTrain {
        probe_x: f64,
        peak_times_s: Vec<f64>,
        profiles: Vec<Profile>,
        analytical_spacing_m: f64,
    }
    let peaks_of = |t: &Trace| -> Vec<f64> {
        let max = t.values.iter().cloned().fold(0.0, f64::max);
        prominent_peaks(&t.values, 0.1 * max)
            .iter()
            .map(|&i| t.axis[i])
            .collect()
    };
    let mut profiles = Vec::new();
    for profile in &run.profiles {
        let tail = profile
            .centerline
            .tail_from(p.supply_length + p.channel_width);
        write_trace(
            &out.join(format!("oracle_trace_x_{}.csv", profile.t)),
            &tail,
            "x_m",
        )?;
        let peaks = peaks_of(&tail);
        let mean_spacing_m = (peaks.len() > 1)
            .then(|| (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64);
        profiles.push(Profile {
            t: profile.t,
            peaks_m: peaks,
            mean_spacing_m,
        });
    }
    let summary = OracleTrain {
        probe_x: x,
        peak_times_s: peaks_of(series),
        profiles,
        analytical_spacing_m: train.spacing,
    };
    write_text(&out.join("oracle_train.json"), &to_json(&summary)?)
}

fn cmd_compare(
    params: &ParamArgs,
    set: ScenarioSet,
    cache: &Path,
    k: &str,
    mode: ModeArg,
    probe: ProbeArg,
    out: &Path,
) -> CliResult {
    let base = load_params(params)?;
    let k = load_k(k)?;
    let (scenarios, shapes) = cached_shapes(&base, set, cache, probe)?;
    let report = compare(&k, &scenarios, &shapes, error_mode(mode))?;
    write_text(&out.join("compare.json"), &to_json(&report)?)?;
    let mut buf = Vec::new();
    write_rows_csv(&report.rows, &mut buf)?;
    write_text(&out.join("residuals.csv"), &String::from_utf8_lossy(&buf))
}

fn execute(cli: Cli) -> CliResult {
    match cli.command {
        Command::Hydraulics { params, out } => {
            let p = load_params(&params)?;
            emit(&HydraulicsReport::new(&p), out.as_deref())
        }
        Command::Analytic {
            params,
            model,
            points,
            out,
        } => cmd_analytic(&params, &model, points, &out),
        Command::Simulate {
            params,
            oracle,
            schedule,
            probe_x,
            snapshot_t,
            lateral,
            out,
        } => cmd_simulate(
            &params,
            &oracle,
            schedule.as_deref(),
            &probe_x,
            &snapshot_t,
            lateral,
            &out,
        ),
        Command::Measure {
            params,
            oracle,
            scenarios,
            oracle_cache,
            refresh,
            out,
        } => cmd_measure(
            &params,
            &oracle,
            scenarios,
            oracle_cache.as_deref(),
            refresh,
            out.as_deref(),
        ),
        Command::Sweep {
            params,
            model,
            oracle_args,
            param,
            values,
            oracle,
            out,
        } => cmd_sweep(
            &params,
            &model,
            &oracle_args,
            &param,
            &values,
            oracle,
            out.as_deref(),
        ),
        Command::Fit {
            params,
            scenarios,
            oracle_cache,
            seed,
            mode,
            probe,
            ga,
            evaluators,
            out,
        } => cmd_fit(
            &params,
            scenarios,
            &oracle_cache,
            seed,
            mode,
            probe,
            ga.as_deref(),
            evaluators,
            &out,
        ),
        Command::Train {
            params,
            model,
            oracle_args,
            count,
            width,
            points,
            oracle,
            probe_x,
            snapshot_t,
            out,
        } => cmd_train(
            &params,
            &model,
            &oracle_args,
            count,
            width,
            points,
            oracle,
            probe_x,
            &snapshot_t,
            &out,
        ),
        Command::Compare {
            params,
            scenarios,
            oracle_cache,
            k,
            mode,
            probe,
            out,
        } => cmd_compare(&params, scenarios, &oracle_cache, &k, mode, probe, &out),
    }
}

fn report(err: &CliError) {
    let text =
        serde_json::to_string(err).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", err.error));
    eprintln!("{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report(&CliError::new("usage", e.render()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}
