//! Command-line front end: argument definitions, input files and output
//! formatting. `run` does the work so it can be driven from tests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{self, BrakeCap, DminResult, KinematicsError, ScenarioParams};
use crate::odd::{self, EvidenceRecord, OddError, OddMachine, PartitionTable, TransitionRecord};
use crate::oracle::{self, SimTrace};
use crate::physics::{self, CurveRadius, PhysicsError, RoadEnvironment};
use crate::units::{self, Dimension, Magnitude, QuantityText};
use crate::verify::{self, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "rss-odd", version, about = "Safe following distances and micro-ODD selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum safe following distance for one scenario.
    Dmin(DminArgs),
    /// Worst-case distance table over a binned parameter space.
    Table(TableArgs),
    /// Simulate both vehicles braking and print the trace.
    Simulate(SimulateArgs),
    /// Run the seeded property suite against the simulation oracle.
    Verify(VerifyArgs),
    /// Replay an evidence log through the micro-ODD state machine.
    OddRun(OddRunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DminArgs {
    /// Scenario file (TOML).
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("layout").required(true).args(["figure4", "config"])))]
pub struct TableArgs {
    /// The reference 6x7 layout at 25 m/s, 0.3 g and 0.5 s.
    #[arg(long)]
    pub figure4: bool,
    /// Table layout file with a [table] section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid points per bounded dimension.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub scenario: PathBuf,
    /// Initial gap, e.g. "5.0" or "5 m".
    #[arg(long, allow_hyphen_values = true)]
    pub gap: String,
    /// Time step, e.g. "0.001" or "1 ms".
    #[arg(long, default_value = "0.001", allow_hyphen_values = true)]
    pub dt: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = verify::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = verify::DEFAULT_DRAWS)]
    pub draws: usize,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub shards: Option<usize>,
    /// Skip the partition-table soundness checks.
    #[arg(long)]
    pub no_cells: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    /// Relative error added to every closed-form distance.
    #[arg(long, hide = true)]
    pub corrupt_dmin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OddRunArgs {
    /// Micro-ODD configuration (TOML).
    pub config: PathBuf,
    /// Evidence log, one JSON object per line.
    pub log: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("no-safe-distance: {0}")]
    NoSafeDistance(String),
    #[error("verification failed")]
    VerificationFailed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NoSafeDistance(_) => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

fn input(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| input(path, e))
}

/// A flag value in SI units; a bare number is taken as already SI.
fn parse_flag(text: &str, dim: Dimension) -> Result<f64, CliError> {
    if let Ok(v) = text.trim().parse::<f64>() {
        return Ok(v);
    }
    units::parse_quantity(text, dim).map_err(|e| CliError::Input(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(deserialize_with = "units::de::speed")]
    v_r: f64,
    #[serde(deserialize_with = "units::de::speed")]
    v_f: f64,
    #[serde(deserialize_with = "units::de::time")]
    rho: f64,
    #[serde(deserialize_with = "units::de::acceleration")]
    a_max_accel: f64,
    #[serde(default, deserialize_with = "units::de::opt_acceleration")]
    a_min_brake: Option<f64>,
    a_max_brake: Option<QuantityText>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    front_brake_cap: Option<QuantityText>,
    rear: RoadEnvironment,
    front: Option<RoadEnvironment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: RawScenario,
    environment: Option<RawEnvironment>,
}

fn parse_cap(text: &QuantityText) -> Result<BrakeCap, CliError> {
    match units::parse_magnitude(&text.0, Dimension::Acceleration) {
        Ok(Magnitude::Finite(v)) => Ok(BrakeCap::Finite(v)),
        Ok(Magnitude::Unbounded) => Ok(BrakeCap::Unbounded),
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

/// A curve with no speed given is taken at the vehicle's own speed.
fn at_speed(mut env: RoadEnvironment, speed: f64) -> RoadEnvironment {
    if env.speed_for_curve == 0.0 && matches!(env.curve_radius, CurveRadius::Radius(_)) {
        env.speed_for_curve = speed;
    }
    env
}

fn physics_error(e: PhysicsError) -> CliError {
    match e {
        PhysicsError::InvalidParameter { .. } => CliError::Input(e.to_string()),
        other => CliError::NoSafeDistance(other.to_string()),
    }
}

/// Scenario from TOML text. Braking comes either from explicit values in
/// `[scenario]` or from road physics in `[environment]`, never both.
pub fn parse_scenario(text: &str) -> Result<ScenarioParams, CliError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Input(e.to_string()))?;
    let s = file.scenario;
    let (a_min_brake, a_max_brake) = match file.environment {
        None => {
            let a_min = s
                .a_min_brake
                .ok_or_else(|| CliError::Input("scenario needs a_min_brake".into()))?;
            let cap = s
                .a_max_brake
                .as_ref()
                .ok_or_else(|| CliError::Input("scenario needs a_max_brake".into()))?;
            (a_min, parse_cap(cap)?)
        }
        Some(env) => {
            if s.a_min_brake.is_some() || s.a_max_brake.is_some() {
                return Err(CliError::Input(
                    "give braking in [scenario] or [environment], not both".into(),
                ));
            }
            let cap = match &env.front_brake_cap {
                Some(t) => parse_cap(t)?,
                None => BrakeCap::Unbounded,
            };
            let rear = at_speed(env.rear, s.v_r);
            let front = at_speed(env.front.unwrap_or(env.rear), s.v_f);
            physics::environment_to_scenario(&rear, &front, cap).map_err(physics_error)?
        }
    };
    let p = ScenarioParams {
        v_r: s.v_r,
        v_f: s.v_f,
        rho: s.rho,
        a_max_accel: s.a_max_accel,
        a_min_brake,
        a_max_brake,
    };
    p.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(p)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioParams, CliError> {
    parse_scenario(&read(path)?).map_err(|e| match e {
        CliError::Input(m) => input(path, m),
        other => other,
    })
}

/// JSON shape of `dmin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DminReport {
    pub params: ScenarioParams,
    #[serde(flatten)]
    pub result: DminResult,
    pub special_case_prevails: bool,
    /// One-decimal presentation of `d_min`.
    pub display: String,
}

impl DminReport {
    pub fn new(params: ScenarioParams) -> Result<Self, KinematicsError> {
        let result = kinematics::d_min(&params)?;
        Ok(DminReport {
            params,
            special_case_prevails: result.special_case_prevails(),
            display: format!("{:.1}", result.d_min),
            result,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_dmin(args: &DminArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = load_scenario(&args.scenario)?;
    let report = DminReport::new(p).map_err(|e| CliError::Input(e.to_string()))?;
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "d_min",
                "d_prime",
                "d_double_prime",
                "d_triple_prime",
                "t_equal",
                "special_case_applied",
                "special_case_prevails",
            ])?;
            let r = &report.result;
            w.write_record([
                r.d_min.to_string(),
                r.d_prime.to_string(),
                opt(r.d_double_prime),
                opt(r.d_triple_prime),
                opt(r.t_equal),
                r.special_case_applied.to_string(),
                report.special_case_prevails.to_string(),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

fn odd_error(e: OddError) -> CliError {
    match e {
        OddError::NoSafeDistance => CliError::NoSafeDistance(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

pub fn build_table(args: &TableArgs) -> Result<PartitionTable, CliError> {
    let (rows, cols, fixed, file_grid) = match &args.config {
        Some(path) => {
            let t = odd::parse_table_config(&read(path)?).map_err(|e| input(path, e))?;
            (t.rows, t.cols, t.fixed, t.grid)
        }
        None => {
            let (r, c, f) = odd::figure4_axes();
            (r, c, f, odd::DEFAULT_GRID)
        }
    };
    let grid = args.grid.unwrap_or(file_grid);
    if grid < 2 {
        return Err(CliError::Input("grid needs at least 2 points".into()));
    }
    odd::build_partition_table(&rows, &cols, &fixed, grid).map_err(odd_error)
}

/// Matrix CSV: row labels down the side, column labels across the top, one
/// decimal per cell with `*` where the mid-braking bound binds.
pub fn write_table_csv(table: &PartitionTable, out: &mut dyn Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let corner = format!("{}\\{}", table.row_param, table.col_param);
    w.write_record(std::iter::once(corner.as_str()).chain(table.col_labels.iter().map(String::as_str)))?;
    for (label, row) in table.row_labels.iter().zip(&table.cells) {
        let values: Vec<String> = row.iter().map(|c| c.value.display()).collect();
        w.write_record(std::iter::once(label.clone()).chain(values))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_table(args: &TableArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let table = build_table(args)?;
    match args.format {
        Format::Csv => write_table_csv(&table, out),
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&table)?)?;
            Ok(())
        }
    }
}

pub fn write_trace_csv(trace: &SimTrace, out: &mut dyn Write) -> Result<(), CliError> {
    {
        let mut w = csv::Writer::from_writer(&mut *out);
        w.write_record(["t", "x_f", "v_f", "x_r", "v_r", "gap"])?;
        for s in &trace.samples {
            w.serialize((s.t, s.x_f, s.v_f, s.x_r, s.v_r, s.gap))?;
        }
        w.flush()?;
    }
    writeln!(
        out,
        "# min_gap={} min_gap_time={} collided={}",
        trace.min_gap, trace.min_gap_time, trace.collided
    )?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = load_scenario(&args.scenario)?;
    let gap = parse_flag(&args.gap, Dimension::Length)?;
    let dt = parse_flag(&args.dt, Dimension::Time)?;
    let trace = oracle::simulate(&p, gap, dt).map_err(|e| CliError::Input(e.to_string()))?;
    match args.format {
        Format::Csv => write_trace_csv(&trace, out),
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string(&trace)?)?;
            Ok(())
        }
    }
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let report = verify::run_verify(&VerifyOptions {
        seed: args.seed,
        draws: args.draws,
        shards: args.shards,
        corrupt: args.corrupt_dmin.unwrap_or(0.0),
        cells: !args.no_cells,
    });
    match args.format {
        ReportFormat::Text => write!(out, "{}", report.to_text())?,
        ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::VerificationFailed)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvidence {
    t: QuantityText,
    key: String,
    value: serde_json::Value,
}

/// Evidence log: one `{"t": "<time>", "key": ..., "value": ...}` object per
/// line. Blank lines are skipped; non-string values are used as printed.
pub fn parse_evidence_log(text: &str) -> Result<Vec<EvidenceRecord>, CliError> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: &dyn std::fmt::Display| CliError::Input(format!("line {}: {e}", n + 1));
        let raw: RawEvidence = serde_json::from_str(line).map_err(|e| at(&e))?;
        let t = units::parse_quantity(&raw.t.0, Dimension::Time).map_err(|e| at(&e))?;
        let value = match raw.value {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        records.push(EvidenceRecord {
            t,
            key: raw.key,
            value,
        });
    }
    Ok(records)
}

pub fn replay(config: &Path, log: &Path) -> Result<Vec<TransitionRecord>, CliError> {
    let config = odd::load_odd_config(config).map_err(|e| input(config, e))?;
    let records = parse_evidence_log(&read(log)?).map_err(|e| input(log, e))?;
    Ok(OddMachine::new(Arc::new(config)).replay(&records))
}

fn joined<'a>(pairs: impl Iterator<Item = (&'a String, String)>) -> String {
    pairs.map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn cmd_odd_run(args: &OddRunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let trace = replay(&args.config, &args.log)?;
    match args.format {
        Format::Json => {
            for r in &trace {
                writeln!(out, "{}", serde_json::to_string(r)?)?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "t",
                "evidence",
                "map_hypothesis",
                "posterior",
                "active_odd",
                "d_min_worst",
                "defensive_reason",
                "preemptive",
            ])?;
            for r in &trace {
                let posterior: BTreeMap<&String, String> = r
                    .posterior
                    .weights()
                    .iter()
                    .map(|(h, w)| (h, w.to_string()))
                    .collect();
                w.write_record([
                    r.t.to_string(),
                    joined(r.evidence.iter().map(|(k, v)| (k, v.clone()))),
                    r.map_hypothesis.join(";"),
                    joined(posterior.into_iter()),
                    r.active_odd.clone(),
                    opt(r.d_min_worst),
                    r.defensive_reason.clone().unwrap_or_default(),
                    r.preemptive.clone().unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Dmin(a) => cmd_dmin(a, out),
        Command::Table(a) => cmd_table(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::OddRun(a) => cmd_odd_run(a, out),
    }
}
