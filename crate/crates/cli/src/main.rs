//! `dimcert`: synthesize, verify and exercise entanglement-dimension
//! certification protocols.
//!
//! Exit codes: 0 on success, 1 when solving or verification fails, 2 on
//! malformed input. Errors are written to standard error as
//! `{"error": {"kind", "field", "message"}}`.
//!
//! Solver options can be overridden with `DIMCERT_SOLVER_OPTIONS`, a JSON
//! object with any of `feas_tol`, `gap_tol`, `max_iter`, `near_feas_tol`,
//! `near_gap_tol`, `verbose`.

mod formats;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dimcert_core::benchmark::{run_benchmark, write_csv};
use dimcert_core::certify::{expected_pvalue_bound, p_value, simulate_rounds_with, CertificationOutcome, DEFAULT_SIGNIFICANCE};
use dimcert_core::conic::SolverOptions;
use dimcert_core::sdp::{effective_povm, randomized_witness_oracle, synthesize, verify_witness_with, OracleReport, WitnessStatus};
use dimcert_core::states::DensityMatrix;
use serde::Serialize;
use serde_json::json;

use formats::{
    parse_document, CertificateDoc, Family, InputError, MeasurementDoc, SettingsName, SettingsSpec, StateDoc, TargetSpec,
    SCHEMA_VERSION,
};

const SOLVER_ENV: &str = "DIMCERT_SOLVER_OPTIONS";

#[derive(Parser)]
#[command(name = "dimcert", version, about = "Optimal one-way LOCC certification of the entanglement dimension")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal protocol and write its certificate.
    Synth(SynthArgs),
    /// Re-check a stored certificate's witness bound and error probabilities.
    Verify(VerifyArgs),
    /// Run the protocol of a certificate on simulated rounds.
    Simulate(SimulateArgs),
    /// Evaluate the binomial p-value or its expected-value bound.
    Pvalue(PvalueArgs),
    /// Robustness and sparsity on random Schmidt-rank-2 targets, as CSV.
    Bench(BenchArgs),
    /// Write a named state or measurement family as an input JSON file.
    Export(ExportArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Named target family.
    #[arg(long, value_enum, conflicts_with = "state")]
    family: Option<Family>,
    /// Mixing parameter of the family.
    #[arg(long)]
    p: Option<f64>,
    /// Local dimension for `max-entangled`.
    #[arg(long)]
    dim: Option<usize>,
    /// State JSON file instead of a named family.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    target: TargetArgs,
    /// Named measurement family.
    #[arg(long, value_enum, conflicts_with = "measurements")]
    settings: Option<SettingsName>,
    /// Measurement JSON file instead of a named family.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Schmidt number bound certified against.
    #[arg(long = "D", alias = "schmidt-dim", default_value_t = 1)]
    schmidt_dim: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Certificate written by `synth`.
    #[arg(long)]
    cert: PathBuf,
    /// Random Schmidt-rank-at-most-D states tried against `p1`.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Slack added to `p1` for the witness check.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    cert: PathBuf,
    #[arg(long)]
    rounds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SIGNIFICANCE)]
    significance: f64,
    /// State to run on; defaults to the certificate's target.
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PvalueArgs {
    /// Number of rounds.
    #[arg(long)]
    n: u64,
    /// Certified type-I error bound.
    #[arg(long)]
    p1: f64,
    /// Observed `C` count; gives the p-value.
    #[arg(long)]
    v: Option<u64>,
    /// Type-II error; gives the expected p-value bound.
    #[arg(long)]
    p2: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    states: usize,
    #[arg(long, value_enum, default_value = "unf")]
    settings: SettingsName,
    #[arg(long = "D", alias = "schmidt-dim", default_value_t = 1)]
    schmidt_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, value_enum, conflicts_with = "family")]
    settings: Option<SettingsName>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Input(InputError),
    Run { kind: &'static str, message: String },
}

impl Failure {
    fn run(kind: &'static str, message: impl ToString) -> Self {
        Failure::Run { kind, message: message.to_string() }
    }

    fn report(&self) -> ExitCode {
        let (doc, code) = match self {
            Failure::Input(e) => (json!({"error": {"kind": "input", "field": e.field, "message": e.message}}), 2),
            Failure::Run { kind, message } => (json!({"error": {"kind": kind, "field": null, "message": message}}), 1),
        };
        eprintln!("{doc}");
        ExitCode::from(code)
    }
}

impl From<InputError> for Failure {
    fn from(e: InputError) -> Self {
        Failure::Input(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Pvalue(a) => cmd_pvalue(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => f.report(),
    }
}

fn solver_options() -> Result<SolverOptions, Failure> {
    match std::env::var(SOLVER_ENV) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| InputError::new(SOLVER_ENV, e.to_string()).into()),
        Err(_) => Ok(SolverOptions::default()),
    }
}

fn read_file(path: &Path, field: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| InputError::new(field, format!("{}: {e}", path.display())).into())
}

fn write_json<T: Serialize>(doc: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| Failure::run("output", e))?;
    match out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Failure::run("output", format!("{}: {e}", p.display()))),
        None => writeln!(io::stdout(), "{text}").map_err(|e| Failure::run("output", e)),
    }
}

impl TargetArgs {
    fn spec(&self) -> Result<Option<TargetSpec>, Failure> {
        if let Some(path) = &self.state {
            let doc: StateDoc = parse_document(&read_file(path, "state")?, "state")?;
            doc.to_state()?;
            return Ok(Some(TargetSpec::Explicit { d_a: doc.d_a, d_b: doc.d_b, matrix: doc.matrix }));
        }
        Ok(self.family.map(|family| TargetSpec::Family { family, p: self.p, dim: self.dim }))
    }
}

fn cmd_synth(a: SynthArgs) -> Result<ExitCode, Failure> {
    let options = solver_options()?;
    let target = a.target.spec()?.ok_or_else(|| InputError::new("family", "give --family or --state"))?;
    let settings = match (&a.settings, &a.measurements) {
        (Some(name), _) => SettingsSpec::Named { name: *name },
        (None, Some(path)) => {
            let doc: MeasurementDoc = parse_document(&read_file(path, "measurements")?, "measurements")?;
            SettingsSpec::Explicit { local_dim: doc.local_dim, settings: doc.settings }
        }
        (None, None) => return Err(InputError::new("settings", "give --settings or --measurements").into()),
    };
    let rho = target.build()?;
    let meas = settings.build()?;
    let cert = synthesize(&rho, &meas, a.schmidt_dim, &options).map_err(|e| Failure::run("solve", e))?;
    write_json(&CertificateDoc::new(target, settings, &cert), a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    passed: bool,
    witness_status: WitnessStatus,
    p1: f64,
    certified_p: Option<f64>,
    lower_bound: f64,
    residual: Option<f64>,
    p2_stored: f64,
    p2_recomputed: f64,
    oracle: OracleReport,
}

fn load_certificate(path: &Path) -> Result<(CertificateDoc, DensityMatrix), Failure> {
    let doc: CertificateDoc = parse_document(&read_file(path, "cert")?, "cert")?;
    let rho = doc.target.build()?;
    Ok((doc, rho))
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, Failure> {
    let options = solver_options()?;
    let (doc, rho) = load_certificate(&a.cert)?;
    let meas = doc.settings.build()?;
    let policy = doc.policy()?;
    let (m_c, m_u) = effective_povm(&policy, &meas).map_err(|e| InputError::new("policy", e.to_string()))?;
    let report = verify_witness_with(&m_c, doc.p1 + a.tol, meas.local_dim(), doc.schmidt_dim, 0.0, &options)
        .map_err(|e| Failure::run("verify", e))?;
    let oracle = randomized_witness_oracle(&m_c, doc.p1, doc.schmidt_dim, a.samples, a.seed).map_err(|e| Failure::run("verify", e))?;
    let p2_recomputed = rho.expectation(&m_u);
    let passed = report.status == WitnessStatus::Feasible
        && report.residual.is_some_and(|r| r <= 1e-6)
        && oracle.max_overlap <= doc.p1 + a.tol
        && (p2_recomputed - doc.p2).abs() <= 1e-9;
    let out = VerifyReport {
        schema_version: SCHEMA_VERSION,
        passed,
        witness_status: report.status,
        p1: doc.p1,
        certified_p: report.certified_p,
        lower_bound: report.lower_bound,
        residual: report.residual,
        p2_stored: doc.p2,
        p2_recomputed,
        oracle,
    };
    write_json(&out, a.out.as_deref())?;
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct SimulateReport {
    schema_version: u32,
    seed: u64,
    #[serde(flatten)]
    outcome: CertificationOutcome,
}

fn cmd_simulate(a: SimulateArgs) -> Result<ExitCode, Failure> {
    let (doc, target) = load_certificate(&a.cert)?;
    let rho = match a.target.spec()? {
        Some(spec) => spec.build()?,
        None => target,
    };
    let meas = doc.settings.build()?;
    let policy = doc.policy()?;
    let outcome = simulate_rounds_with(&rho, &meas, &policy, doc.p1, a.rounds, a.seed, a.significance)
        .map_err(|e| Failure::run("simulate", e))?;
    write_json(&SimulateReport { schema_version: SCHEMA_VERSION, seed: a.seed, outcome }, a.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_pvalue(a: PvalueArgs) -> Result<ExitCode, Failure> {
    if a.v.is_none() && a.p2.is_none() {
        return Err(InputError::new("v", "give --v for a p-value or --p2 for the expected bound").into());
    }
    let mut doc = json!({"schema_version": SCHEMA_VERSION, "n": a.n, "p1": a.p1});
    if let Some(v) = a.v {
        let p = p_value(v, a.n, a.p1).map_err(|e| InputError::new("v", e.to_string()))?;
        doc["v"] = json!(v);
        doc["p_value"] = json!(p);
    }
    if let Some(p2) = a.p2 {
        let bound = expected_pvalue_bound(a.p1, p2, a.n).map_err(|e| InputError::new("p2", e.to_string()))?;
        doc["p2"] = json!(p2);
        doc["expected_pvalue_bound"] = json!(bound);
    }
    write_json(&doc, None)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode, Failure> {
    let options = solver_options()?;
    let meas = a.settings.build();
    let records = run_benchmark(a.states, &meas, a.settings.label(), a.schmidt_dim, a.seed, &options)
        .map_err(|e| InputError::new("states", e.to_string()))?;
    let result = match &a.out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| Failure::run("output", format!("{}: {e}", p.display())))?;
            write_csv(&records, f)
        }
        None => write_csv(&records, io::stdout()),
    };
    result.map_err(|e| Failure::run("output", e))?;
    let failed = records.iter().filter(|r| r.certificate.is_none()).count();
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_export(a: ExportArgs) -> Result<ExitCode, Failure> {
    if let Some(name) = a.settings {
        write_json(&MeasurementDoc::from_set(&name.build()), a.out.as_deref())?;
    } else {
        let spec = a.target.spec()?.ok_or_else(|| InputError::new("family", "give --family or --settings"))?;
        write_json(&StateDoc::from_state(&spec.build()?), a.out.as_deref())?;
    }
    Ok(ExitCode::SUCCESS)
}
