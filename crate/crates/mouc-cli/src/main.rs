//! `mouc` — generate unit-commitment instances, compute Pareto frontiers,
//! and merge runs into comparison reports.
//!
//! Exit codes: 0 success (including time-capped fronts), 1 usage error,
//! 2 infeasible instance or solver failure, 3 I/O failure.

use clap::{Parser, Subcommand, ValueEnum};
use mouc::instance::{generate_instance, load_instance, GenConfig};
use mouc::model::build_model;
use mouc::moo::{run_budgeted, AwsParams, Method, Mode, MooError, SweepConfig, SweepResult};
use mouc::pareto::{filter_nondominated, hypervolume_2d, reference_point};
use mouc::relax::SelectorSharing;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "mouc", version, about = "Biobjective unit-commitment frontier toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random instance file.
    Gen {
        #[arg(long, default_value_t = 20)]
        thermal: usize,
        #[arg(long, default_value_t = 10)]
        hydro: usize,
        #[arg(long, default_value_t = 24)]
        periods: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a Pareto frontier for one instance.
    Front {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: MethodFlag,
        #[arg(long, value_enum, default_value_t = ModeFlag::Quadcon)]
        mode: ModeFlag,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        /// Weight count (uniform method only).
        #[arg(long)]
        pairs: Option<usize>,
        /// ε grid step (eps methods only).
        #[arg(long)]
        step: Option<f64>,
        /// Wall-clock cap in milliseconds across all subproblems.
        #[arg(long)]
        time_cap: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge front CSVs from one instance into a comparison table.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodFlag {
    Uniform,
    Aws,
    /// ε-constraint on cost.
    Eps1,
    /// ε-constraint on emissions.
    Eps2,
}

impl MethodFlag {
    fn name(self) -> &'static str {
        match self {
            MethodFlag::Uniform => "uniform",
            MethodFlag::Aws => "aws",
            MethodFlag::Eps1 => "eps1",
            MethodFlag::Eps2 => "eps2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Quadcon,
    Mc,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Solve(String),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solve(_) => 2,
            CliError::Io(_, _) => 3,
        }
    }
}

impl From<MooError> for CliError {
    fn from(e: MooError) -> Self {
        CliError::Solve(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e| CliError::Io(format!("writing {}", path.display()), e);
    let file_name = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name, std::process::id()));
    std::fs::write(&tmp, bytes).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Io(format!("reading {}", path.display()), e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Serialize)]
struct RunManifest {
    command_line: Vec<String>,
    tool_version: String,
    seed: Option<u64>,
    instance_hash: Option<String>,
    method: Option<String>,
    mode: Option<String>,
    parameters: serde_json::Value,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = PathBuf::from(format!("{}.manifest.json", out.display()));
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&path, &bytes)
}

fn workers() -> usize {
    std::env::var("MOUC_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().collect();
    match cli.cmd {
        Cmd::Gen { thermal, hydro, periods, seed, out } => {
            let started = now_ms();
            let inst = generate_instance(GenConfig { thermal, hydro, periods, seed });
            let bytes = inst.to_bytes();
            write_atomic(&out, &bytes)?;
            write_manifest(
                &out,
                &RunManifest {
                    command_line: argv,
                    tool_version: env!("CARGO_PKG_VERSION").into(),
                    seed: Some(seed),
                    instance_hash: Some(sha256_hex(&bytes)),
                    method: None,
                    mode: None,
                    parameters: serde_json::json!({
                        "thermal": thermal, "hydro": hydro, "periods": periods,
                    }),
                    started_unix_ms: started,
                    finished_unix_ms: now_ms(),
                },
            )
        }
        Cmd::Front { instance, method, mode, layers, pairs, step, time_cap, out } => {
            cmd_front(argv, instance, method, mode, layers, pairs, step, time_cap, out)
        }
        Cmd::Report { inputs, out } => cmd_report(argv, &inputs, &out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_front(
    argv: Vec<String>,
    instance: PathBuf,
    method: MethodFlag,
    mode: ModeFlag,
    layers: usize,
    pairs: Option<usize>,
    step: Option<f64>,
    time_cap: Option<u64>,
    out: PathBuf,
) -> Result<(), CliError> {
    // Flag-combination validation before any solving.
    match method {
        MethodFlag::Uniform => {
            if step.is_some() {
                return Err(CliError::Usage("--step applies only to eps methods".into()));
            }
        }
        MethodFlag::Eps1 | MethodFlag::Eps2 => {
            if pairs.is_some() {
                return Err(CliError::Usage("--pairs applies only to --method uniform".into()));
            }
        }
        MethodFlag::Aws => {
            if step.is_some() || pairs.is_some() {
                return Err(CliError::Usage(
                    "--step/--pairs do not apply to --method aws".into(),
                ));
            }
        }
    }
    if layers == 0 {
        return Err(CliError::Usage("--layers must be >= 1".into()));
    }
    let step_v = step.unwrap_or(0.1);
    if !(step_v > 0.0 && step_v <= 1.0) {
        return Err(CliError::Usage("--step must lie in (0, 1]".into()));
    }
    let pairs_v = pairs.unwrap_or(10);
    if matches!(method, MethodFlag::Uniform) && pairs_v < 2 {
        return Err(CliError::Usage("--pairs must be >= 2".into()));
    }

    let started = now_ms();
    let bytes = read_file(&instance)?;
    let inst = load_instance(&bytes).map_err(|e| CliError::Solve(e.to_string()))?;
    let model = build_model(&inst);

    let moo_mode = match mode {
        ModeFlag::Quadcon => Mode::QuadCon,
        ModeFlag::Mc => Mode::McCormick { layers, sharing: SelectorSharing::Independent },
    };
    let cfg = SweepConfig {
        mode: moo_mode,
        time_cap: time_cap.map(Duration::from_millis),
        step: step_v,
        bounds: None,
        workers: workers(),
        ..Default::default()
    };
    let m = match method {
        MethodFlag::Uniform => Method::Uniform { pairs: pairs_v },
        MethodFlag::Aws => Method::Aws(AwsParams::default()),
        MethodFlag::Eps1 => Method::Epsilon { constrained: 1 },
        MethodFlag::Eps2 => Method::Epsilon { constrained: 2 },
    };
    let result = run_budgeted(&model, m, &cfg)?;

    write_atomic(&out, front_csv(method.name(), &result).as_bytes())?;
    let relaxation = match mode {
        ModeFlag::Quadcon => "quadcon".to_string(),
        ModeFlag::Mc => format!("mc{}", layers),
    };
    let hv_path = PathBuf::from(format!("{}.hv.csv", out.display()));
    write_atomic(&hv_path, hv_csv(model.layout.n, method.name(), &relaxation, &result).as_bytes())?;
    write_manifest(
        &out,
        &RunManifest {
            command_line: argv,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            instance_hash: Some(sha256_hex(&bytes)),
            method: Some(method.name().into()),
            mode: Some(relaxation),
            parameters: serde_json::json!({
                "layers": layers, "pairs": pairs_v, "step": step_v,
                "time_cap_ms": time_cap,
            }),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
    )
}

fn front_csv(method: &str, result: &SweepResult) -> String {
    let mut csv = String::from("method,parameter,f1,f2,solve_ms,status\n");
    for e in &result.log {
        let (f1, f2) = match e.objectives {
            Some(f) => (f[0].to_string(), f[1].to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:?}",
            method, e.parameter, f1, f2, e.solve_ms, e.status
        );
    }
    if result.log.is_empty() {
        // Nothing ran (e.g. the cap expired during anchor solves): keep the
        // terminal status visible in the output.
        let _ = writeln!(csv, "{},,,,0,{:?}", method, result.status);
    }
    csv
}

fn hv_csv(n: usize, method: &str, relaxation: &str, result: &SweepResult) -> String {
    let mut csv = String::from("n,method,relaxation,points,hv,ref1,ref2\n");
    let points = result.front.objectives();
    if points.is_empty() {
        let _ = writeln!(csv, "{},{},{},0,0,,", n, method, relaxation);
    } else {
        let r = reference_point(&points, 1.2);
        let (hv, _) = hypervolume_2d(&points, &[r[0], r[1]]);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            n,
            method,
            relaxation,
            points.len(),
            hv,
            r[0],
            r[1]
        );
    }
    csv
}

struct FrontRow {
    f1: Option<f64>,
    f2: Option<f64>,
    solve_ms: u128,
}

struct FrontFile {
    label: String,
    instance_hash: String,
    rows: Vec<FrontRow>,
}

fn parse_front_csv(path: &Path) -> Result<FrontFile, CliError> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
    let bad = |msg: &str| CliError::Usage(format!("{}: {}", path.display(), msg));
    let mut lines = text.lines();
    if lines.next() != Some("method,parameter,f1,f2,solve_ms,status") {
        return Err(bad("not a front CSV from this tool"));
    }
    let mut rows = Vec::new();
    let mut method = String::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad("malformed row"));
        }
        method = fields[0].to_string();
        let num = |s: &str| -> Option<f64> { s.parse().ok() };
        rows.push(FrontRow {
            f1: num(fields[2]),
            f2: num(fields[3]),
            solve_ms: fields[4].parse().unwrap_or(0),
        });
    }

    let manifest_path = PathBuf::from(format!("{}.manifest.json", path.display()));
    let manifest: serde_json::Value = serde_json::from_slice(&read_file(&manifest_path)?)
        .map_err(|_| bad("manifest unreadable"))?;
    let instance_hash = manifest["instance_hash"]
        .as_str()
        .ok_or_else(|| bad("manifest missing instance hash"))?
        .to_string();
    let mode = manifest["mode"].as_str().unwrap_or("?");
    Ok(FrontFile { label: format!("{}-{}", method, mode), instance_hash, rows })
}

fn cmd_report(argv: Vec<String>, inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let started = now_ms();
    let files: Vec<FrontFile> =
        inputs.iter().map(|p| parse_front_csv(p)).collect::<Result<_, _>>()?;
    let hash = files[0].instance_hash.clone();
    if files.iter().any(|f| f.instance_hash != hash) {
        return Err(CliError::Usage(
            "inputs come from different instances (hash mismatch)".into(),
        ));
    }

    // Shared reference point across every solved point of every input.
    let union: Vec<Vec<f64>> = files
        .iter()
        .flat_map(|f| f.rows.iter())
        .filter_map(|r| Some(vec![r.f1?, r.f2?]))
        .collect();
    if union.is_empty() {
        return Err(CliError::Solve("no solved points in any input".into()));
    }
    let r = reference_point(&union, 1.2);

    let mut table = String::from("method,points,hv,total_ms,ref1,ref2\n");
    let mut scatter = String::from("f1,f2,method\n");
    for f in &files {
        let pts: Vec<Vec<f64>> = f
            .rows
            .iter()
            .filter_map(|row| Some(vec![row.f1?, row.f2?]))
            .collect();
        let nd = filter_nondominated(&pts);
        let (hv, _) = hypervolume_2d(&nd, &[r[0], r[1]]);
        let total_ms: u128 = f.rows.iter().map(|row| row.solve_ms).sum();
        let _ = writeln!(table, "{},{},{},{},{},{}", f.label, nd.len(), hv, total_ms, r[0], r[1]);
        for p in &nd {
            let _ = writeln!(scatter, "{},{},{}", p[0], p[1], f.label);
        }
    }
    write_atomic(out, table.as_bytes())?;
    let scatter_path = PathBuf::from(format!("{}.scatter.csv", out.display()));
    write_atomic(&scatter_path, scatter.as_bytes())?;
    write_manifest(
        out,
        &RunManifest {
            command_line: argv,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: None,
            instance_hash: Some(hash),
            method: Some("report".into()),
            mode: None,
            parameters: serde_json::json!({
                "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            }),
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        },
    )
}
